// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/retrieval/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>

#include "wadcmsn/error.hpp"
#include "wadcmsn/nn/kernels.hpp"
#include "wadcmsn/text_io.hpp"

namespace wadcmsn {

std::string to_string(DistanceMetric m) { return m == DistanceMetric::euclidean ? "euclidean" : "cosine"; }

DistanceMetric parse_metric(const std::string& text) {
  if (text == "euclidean") return DistanceMetric::euclidean;
  if (text == "cosine") return DistanceMetric::cosine;
  throw ConfigError("unknown distance metric '" + text + "' (expected euclidean or cosine)");
}

std::string to_string(MapMode m) { return m == MapMode::class_mean ? "class" : "query"; }

MapMode parse_map_mode(const std::string& text) {
  if (text == "class") return MapMode::class_mean;
  if (text == "query") return MapMode::query_mean;
  throw ConfigError("unknown mAP mode '" + text + "' (expected class or query)");
}

void RetrievalIndex::validate() const {
  if (ids.size() != classes.size() || codes.rows() != ids.size()) {
    throw ShapeError("retrieval index: codes, ids and classes are not aligned");
  }
}

namespace {

void require_modality(const std::vector<FeatureRecord>& records, Modality m, const char* what) {
  for (const auto& r : records) {
    if (r.modality != m) {
      throw ValidationError(std::string(what) + ": record '" + r.id + "' is a " + to_string(r.modality));
    }
  }
}

Matrix encode(const Mlp& encoder, const std::vector<FeatureRecord>& records) {
  if (records.empty()) return Matrix(0, encoder.output_dim());
  const Matrix features = feature_matrix(records);
  require_shape(features, records.size(), encoder.input_dim(), "retrieval features");
  return encoder.predict(features);
}

// Gallery positions sorted by (distance, id), with the distances.
std::vector<std::size_t> ranked_order(std::span<const Real> query, const RetrievalIndex& index,
                                      DistanceMetric metric, std::vector<Real>& dist) {
  if (query.size() != index.codes.cols()) throw ShapeError("query code dimension differs from gallery");
  if (metric == DistanceMetric::euclidean) {
    dist = kernels::squared_distances(query, index.codes);
    for (auto& d : dist) d = std::sqrt(d);
  } else {
    dist.resize(index.size());
    for (std::size_t r = 0; r < index.size(); ++r) dist[r] = distance(query, index.codes.row(r), metric);
  }
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    if (index.ids[a] != index.ids[b]) return index.ids[a] < index.ids[b];
    return a < b;
  });
  return order;
}

}  // namespace

RetrievalIndex build_index(const Networks& nets, const std::vector<FeatureRecord>& images) {
  require_modality(images, Modality::image, "gallery");
  RetrievalIndex index;
  index.codes = encode(nets.image_encoder, images);
  for (const auto& r : images) {
    index.ids.push_back(r.id);
    index.classes.push_back(r.class_name);
  }
  return index;
}

Matrix encode_queries(const Networks& nets, const std::vector<FeatureRecord>& sketches) {
  require_modality(sketches, Modality::sketch, "queries");
  return encode(nets.sketch_encoder, sketches);
}

Real distance(std::span<const Real> a, std::span<const Real> b, DistanceMetric metric) {
  if (a.size() != b.size()) throw ShapeError("distance: dimension mismatch");
  if (metric == DistanceMetric::euclidean) {
    Real s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Real d = a[i] - b[i];
      s += d * d;
    }
    return std::sqrt(s);
  }
  Real dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return Real{1};
  return Real{1} - dot / (std::sqrt(na) * std::sqrt(nb));
}

RankedRetrieval rank(std::span<const Real> query_code, const std::string& query_id,
                     const std::string& query_class, const RetrievalIndex& index, std::size_t k,
                     DistanceMetric metric) {
  index.validate();
  if (index.size() == 0) throw ValidationError("cannot retrieve from an empty gallery");
  std::vector<Real> dist;
  const auto order = ranked_order(query_code, index, metric, dist);
  RankedRetrieval out;
  out.query_id = query_id;
  out.query_class = query_class;
  out.total_relevant = static_cast<std::size_t>(
      std::count(index.classes.begin(), index.classes.end(), query_class));
  const std::size_t keep = k == 0 ? order.size() : std::min(k, order.size());
  out.items.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t g = order[i];
    out.items.push_back({index.ids[g], index.classes[g], dist[g], index.classes[g] == query_class});
  }
  return out;
}

RankedRetrieval retrieve(const Networks& nets, const RetrievalIndex& index,
                         const FeatureRecord& sketch, std::size_t k, DistanceMetric metric) {
  const Matrix code = encode_queries(nets, {sketch});
  return rank(code.row(0), sketch.id, sketch.class_name, index, k, metric);
}

Real average_precision(std::span<const bool> relevance, std::size_t total_relevant, std::size_t n) {
  if (n > relevance.size()) throw ValidationError("AP cutoff exceeds the ranked list length");
  if (total_relevant == 0) return 0;
  std::size_t hits = 0;
  Real sum = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!relevance[s]) continue;
    ++hits;
    sum += static_cast<Real>(hits) / static_cast<Real>(s + 1);
  }
  return sum / static_cast<Real>(total_relevant);
}

namespace {

// Contiguous bool storage (std::vector<bool> cannot back a span).
struct Flags {
  explicit Flags(std::size_t n) : data(std::make_unique<bool[]>(n)), size(n) {}
  std::span<const bool> view() const { return {data.get(), size}; }
  std::unique_ptr<bool[]> data;
  std::size_t size;
};

Flags relevance_of(const RankedRetrieval& ranked) {
  Flags rel(ranked.items.size());
  for (std::size_t i = 0; i < rel.size; ++i) rel.data[i] = ranked.items[i].relevant;
  return rel;
}

}  // namespace

Real average_precision(const RankedRetrieval& ranked, std::size_t n) {
  const auto rel = relevance_of(ranked);
  return average_precision(rel.view(), ranked.total_relevant, n == 0 ? rel.size : n);
}

Real precision_at_k(std::span<const bool> relevance, std::size_t k) {
  if (k == 0) throw ValidationError("precision@k needs k >= 1");
  const std::size_t top = std::min(k, relevance.size());
  const auto hits = std::count(relevance.begin(), relevance.begin() + static_cast<std::ptrdiff_t>(top), true);
  return static_cast<Real>(hits) / static_cast<Real>(k);
}

Real precision_at_k(const RankedRetrieval& ranked, std::size_t k) {
  const auto rel = relevance_of(ranked);
  return precision_at_k(rel.view(), k);
}

Real mean_ap(const std::vector<QueryAp>& queries, MapMode mode) {
  if (queries.empty()) throw ValidationError("mean AP over an empty query set");
  if (mode == MapMode::query_mean) {
    Real sum = 0;
    for (const auto& q : queries) sum += q.ap;
    return sum / static_cast<Real>(queries.size());
  }
  std::map<std::string, std::pair<Real, std::size_t>> per_class;
  for (const auto& q : queries) {
    auto& [sum, count] = per_class[q.query_class];
    sum += q.ap;
    ++count;
  }
  Real total = 0;
  for (const auto& [name, sc] : per_class) total += sc.first / static_cast<Real>(sc.second);
  return total / static_cast<Real>(per_class.size());
}

Real wasserstein_1d(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) {
    throw ValidationError("wasserstein_1d needs equal sample counts, got " + std::to_string(a.size()) +
                          " and " + std::to_string(b.size()));
  }
  if (a.empty()) throw ValidationError("wasserstein_1d needs at least one sample");
  std::vector<Real> sa(a.begin(), a.end());
  std::vector<Real> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  Real sum = 0;
  for (std::size_t i = 0; i < sa.size(); ++i) sum += std::abs(sa[i] - sb[i]);
  return sum / static_cast<Real>(sa.size());
}

Real code_domain_gap(const Matrix& sketch_codes, const Matrix& image_codes) {
  require_same_shape(sketch_codes, image_codes, "code_domain_gap");
  if (sketch_codes.cols() == 0) return 0;
  std::vector<Real> a(sketch_codes.rows());
  std::vector<Real> b(image_codes.rows());
  Real total = 0;
  for (std::size_t c = 0; c < sketch_codes.cols(); ++c) {
    for (std::size_t r = 0; r < sketch_codes.rows(); ++r) {
      a[r] = sketch_codes(r, c);
      b[r] = image_codes(r, c);
    }
    total += wasserstein_1d(a, b);
  }
  return total / static_cast<Real>(sketch_codes.cols());
}

Real random_ranking_ap(std::size_t gallery, std::size_t relevant) {
  if (relevant == 0 || gallery == 0) return 0;
  if (gallery == 1) return 1;
  // E[rel(s) * hits(s)] = R/G + (s-1) R(R-1) / (G(G-1)); divide by s and R, sum.
  const double g = static_cast<double>(gallery);
  const double r = static_cast<double>(relevant);
  double harmonic = 0;
  for (std::size_t s = 1; s <= gallery; ++s) harmonic += 1.0 / static_cast<double>(s);
  return static_cast<Real>(harmonic / g + (r - 1.0) / (g * (g - 1.0)) * (g - harmonic));
}

EvalResult evaluate(const Networks& nets, const std::vector<FeatureRecord>& queries,
                    const std::vector<FeatureRecord>& gallery, const EvalOptions& options) {
  const RetrievalIndex index = build_index(nets, gallery);
  const Matrix codes = encode_queries(nets, queries);
  return evaluate_codes(codes, queries, index, options);
}

EvalResult evaluate_codes(const Matrix& query_codes, const std::vector<FeatureRecord>& queries,
                          const RetrievalIndex& index, const EvalOptions& options) {
  index.validate();
  if (queries.empty()) throw ValidationError("evaluation needs at least one query");
  if (index.size() == 0) throw ValidationError("evaluation needs a non-empty gallery");
  require_shape(query_codes, queries.size(), index.codes.cols(), "query codes");
  if (options.precision_k == 0) throw ValidationError("precision@k needs k >= 1");
  if (options.ap_cutoff > index.size()) throw ValidationError("AP cutoff exceeds the gallery size");

  std::map<std::string, std::size_t> class_count;
  for (const auto& c : index.classes) ++class_count[c];

  EvalResult result;
  result.gallery_size = index.size();
  result.queries.resize(queries.size());
  const std::ptrdiff_t nq = static_cast<std::ptrdiff_t>(queries.size());
  const std::size_t cutoff = options.ap_cutoff == 0 ? index.size() : options.ap_cutoff;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t q = 0; q < nq; ++q) {
    const auto& rec = queries[static_cast<std::size_t>(q)];
    std::vector<Real> dist;
    const auto order = ranked_order(query_codes.row(static_cast<std::size_t>(q)), index, options.metric, dist);
    Flags rel(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) rel.data[i] = index.classes[order[i]] == rec.class_name;
    const auto it = class_count.find(rec.class_name);
    const std::size_t total = it == class_count.end() ? 0 : it->second;
    auto& out = result.queries[static_cast<std::size_t>(q)];
    out.query_id = rec.id;
    out.query_class = rec.class_name;
    out.ap = average_precision(rel.view(), total, cutoff);
    out.precision = precision_at_k(rel.view(), options.precision_k);
    out.no_relevant = total == 0;
  }

  std::vector<QueryAp> aps;
  std::vector<QueryAp> chance;
  Real prec = 0;
  std::map<std::string, std::pair<Real, std::size_t>> per_class;
  for (const auto& q : result.queries) {
    aps.push_back({q.query_class, q.ap});
    const auto it = class_count.find(q.query_class);
    chance.push_back({q.query_class, random_ranking_ap(index.size(), it == class_count.end() ? 0 : it->second)});
    prec += q.precision;
    if (q.no_relevant) ++result.no_relevant_queries;
    auto& [sum, count] = per_class[q.query_class];
    sum += q.ap;
    ++count;
  }
  for (const auto& [name, sc] : per_class) result.class_ap[name] = sc.first / static_cast<Real>(sc.second);
  result.map = mean_ap(aps, options.map_mode);
  result.chance_map = mean_ap(chance, options.map_mode);
  result.precision_at_k = prec / static_cast<Real>(result.queries.size());
  return result;
}

nlohmann::json eval_report(const EvalResult& result, const EvalOptions& options,
                           const nlohmann::json& config) {
  nlohmann::json j;
  j["map"] = result.map;
  j["map_mode"] = to_string(options.map_mode);
  j["prec_at_k"] = result.precision_at_k;
  j["k"] = options.precision_k;
  j["metric"] = to_string(options.metric);
  j["ap_cutoff"] = options.ap_cutoff;
  j["chance_map"] = result.chance_map;
  j["query_count"] = result.queries.size();
  j["gallery_size"] = result.gallery_size;
  j["queries_without_relevant"] = result.no_relevant_queries;
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [name, ap] : result.class_ap) per_class[name] = ap;
  j["class_ap"] = std::move(per_class);
  j["config"] = config;
  return j;
}

void write_rankings_csv(const std::filesystem::path& path, const std::vector<RankedRetrieval>& ranked) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "query_id,rank,gallery_id,distance,relevant\n";
  std::string line;
  for (const auto& r : ranked) {
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      line = r.query_id + ',' + std::to_string(i + 1) + ',' + r.items[i].gallery_id + ',';
      text_io::append_real(line, r.items[i].distance);
      line += r.items[i].relevant ? ",1\n" : ",0\n";
      out << line;
    }
  }
}

void write_codes_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                     const std::vector<std::string>& classes, const std::string& modality,
                     const Matrix& codes, bool append) {
  if (ids.size() != classes.size() || ids.size() != codes.rows()) {
    throw ShapeError("code dump: ids, classes and codes are not aligned");
  }
  std::ofstream out(path, append ? std::ios::binary | std::ios::app : std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  if (!append) {
    out << "id,class,modality";
    for (std::size_t c = 0; c < codes.cols(); ++c) out << ",c" << c + 1;
    out << '\n';
  }
  std::string line;
  for (std::size_t r = 0; r < codes.rows(); ++r) {
    line = ids[r] + ',' + classes[r] + ',' + modality;
    for (Real v : codes.row(r)) {
      line.push_back(',');
      text_io::append_real(line, v);
    }
    line.push_back('\n');
    out << line;
  }
}

}  // namespace wadcmsn
