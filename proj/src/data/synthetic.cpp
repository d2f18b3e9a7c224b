// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/data/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>

#include "wadcmsn/error.hpp"

namespace wadcmsn {

void SyntheticSpec::validate() const {
  if (n_classes < 2) throw ConfigError("synthetic spec needs at least 2 classes");
  if (n_seen == 0 || n_seen >= n_classes) {
    throw ConfigError("synthetic spec needs 0 < n_seen < n_classes");
  }
  if (sketches_per_class == 0 || images_per_class == 0) {
    throw ConfigError("synthetic spec needs at least one sample per class and modality");
  }
  if (feature_dim == 0 || text_dim == 0 || latent_dim == 0) {
    throw ConfigError("synthetic dimensions must be positive");
  }
  if (!(cluster_spread >= 0) || !(text_spread >= 0) || !std::isfinite(cluster_spread) ||
      !std::isfinite(text_spread)) {
    throw ConfigError("synthetic spreads must be finite and non-negative");
  }
  if (text_sources != 1 && text_sources != 2) throw ConfigError("text_sources must be 1 or 2");
}

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Real scale, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = static_cast<Real>(n(rng)) * scale;
  return m;
}

// out = map * center + spread * N(0, I)
std::vector<Real> project(const Matrix& map, std::span<const Real> center, Real spread,
                          std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Real> out(map.rows());
  for (std::size_t i = 0; i < map.rows(); ++i) {
    Real acc = 0;
    for (std::size_t j = 0; j < map.cols(); ++j) acc += map(i, j) * center[j];
    out[i] = acc + spread * static_cast<Real>(n(rng));
  }
  return out;
}

std::string class_name(std::size_t k, std::size_t n) {
  const int width = n <= 100 ? 2 : static_cast<int>(std::to_string(n - 1).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "class%0*zu", width, k);
  return buf;
}

// Centroid-linkage agglomeration. Leaves are 0..n-1; each merge creates the
// next id. Returns the parent of every node (root has none).
std::vector<std::optional<std::size_t>> agglomerate(const Matrix& centers) {
  const std::size_t n = centers.rows();
  const std::size_t dim = centers.cols();
  std::vector<std::optional<std::size_t>> parent(2 * n - 1);
  std::vector<std::vector<Real>> centroid;
  std::vector<std::size_t> size;
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < n; ++k) {
    centroid.emplace_back(centers.row(k).begin(), centers.row(k).end());
    size.push_back(1);
    active.push_back(k);
  }
  while (active.size() > 1) {
    std::size_t best_a = 0;
    std::size_t best_b = 1;
    Real best = std::numeric_limits<Real>::infinity();
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t b = a + 1; b < active.size(); ++b) {
        Real d = 0;
        for (std::size_t j = 0; j < dim; ++j) {
          const Real diff = centroid[active[a]][j] - centroid[active[b]][j];
          d += diff * diff;
        }
        if (d < best) {
          best = d;
          best_a = a;
          best_b = b;
        }
      }
    }
    const std::size_t ia = active[best_a];
    const std::size_t ib = active[best_b];
    const std::size_t merged = centroid.size();
    std::vector<Real> c(dim);
    const Real wa = static_cast<Real>(size[ia]);
    const Real wb = static_cast<Real>(size[ib]);
    for (std::size_t j = 0; j < dim; ++j) c[j] = (wa * centroid[ia][j] + wb * centroid[ib][j]) / (wa + wb);
    centroid.push_back(std::move(c));
    size.push_back(size[ia] + size[ib]);
    parent[ia] = merged;
    parent[ib] = merged;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_b));
    active[best_a] = merged;
  }
  return parent;
}

Taxonomy build_taxonomy(const Matrix& centers, const std::vector<std::string>& names,
                        std::size_t max_depth) {
  const std::size_t n = centers.rows();
  auto parent = agglomerate(centers);
  const std::size_t total = parent.size();
  // Parents always have larger ids than children, so depths resolve top-down.
  std::vector<std::size_t> depth(total, 0);
  for (std::size_t i = total; i-- > 0;) {
    if (parent[i]) depth[i] = depth[*parent[i]] + 1;
  }
  std::vector<bool> keep(total, true);
  if (max_depth > 0) {
    for (std::size_t i = n; i < total; ++i) {
      if (parent[i] && depth[i] >= max_depth) keep[i] = false;
    }
  }
  std::vector<TaxonomyNode> nodes;
  for (std::size_t i = 0; i < total; ++i) {
    if (!keep[i]) continue;
    TaxonomyNode node;
    node.id = static_cast<std::int64_t>(i);
    node.name = i < n ? names[i] : (parent[i] ? "group" + std::to_string(i) : std::string("root"));
    node.count = i < n ? 1 : 0;
    std::optional<std::size_t> p = parent[i];
    while (p && !keep[*p]) p = parent[*p];
    if (p) node.parent = static_cast<std::int64_t>(*p);
    nodes.push_back(std::move(node));
  }
  return Taxonomy(std::move(nodes));
}

TextEmbeddingTable make_text(const Matrix& map, const Matrix& centers,
                             const std::vector<std::string>& names, Real spread,
                             std::mt19937_64& rng) {
  std::map<std::string, std::vector<Real>> vectors;
  for (std::size_t k = 0; k < centers.rows(); ++k) {
    vectors[names[k]] = project(map, centers.row(k), spread, rng);
  }
  return TextEmbeddingTable(std::move(vectors));
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 transform_rng(spec.modality_transform_seed);
  const Real scale = Real{1} / std::sqrt(static_cast<Real>(spec.latent_dim));
  const Matrix a_sk = gaussian_matrix(spec.feature_dim, spec.latent_dim, scale, transform_rng);
  const Matrix a_im = gaussian_matrix(spec.feature_dim, spec.latent_dim, scale, transform_rng);
  const Matrix b = gaussian_matrix(spec.text_dim, spec.latent_dim, scale, transform_rng);
  const Matrix b2 = gaussian_matrix(spec.text_dim, spec.latent_dim, scale, transform_rng);

  std::mt19937_64 rng(seed);
  Matrix centers = gaussian_matrix(spec.n_classes, spec.latent_dim, Real{1}, rng);

  std::vector<std::string> names;
  for (std::size_t k = 0; k < spec.n_classes; ++k) names.push_back(class_name(k, spec.n_classes));

  std::vector<FeatureRecord> records;
  records.reserve(spec.n_classes * (spec.sketches_per_class + spec.images_per_class));
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    const Split split = k < spec.n_seen ? Split::train : Split::test;
    for (std::size_t i = 0; i < spec.sketches_per_class; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "sk_%s_%03zu", names[k].c_str(), i);
      records.push_back({id, names[k], Modality::sketch, split,
                         project(a_sk, centers.row(k), spec.cluster_spread, rng)});
    }
    for (std::size_t i = 0; i < spec.images_per_class; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "im_%s_%03zu", names[k].c_str(), i);
      records.push_back({id, names[k], Modality::image, split,
                         project(a_im, centers.row(k), spec.cluster_spread, rng)});
    }
  }

  TextEmbeddingTable text = make_text(b, centers, names, spec.text_spread, rng);
  std::optional<TextEmbeddingTable> text_b;
  if (spec.text_sources == 2) text_b = make_text(b2, centers, names, spec.text_spread, rng);

  std::vector<std::string> unseen(names.begin() + static_cast<std::ptrdiff_t>(spec.n_seen), names.end());
  return SyntheticData{names,
                       std::move(unseen),
                       std::move(records),
                       build_taxonomy(centers, names, spec.taxonomy_depth),
                       std::move(text),
                       std::move(text_b),
                       std::move(centers)};
}

SyntheticFiles write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SyntheticFiles files{dir / "features.csv", dir / "taxonomy.json", dir / "embeddings.txt", std::nullopt};
  save_features(files.features, data.records);
  data.taxonomy.save(files.taxonomy);
  data.text.save(files.text, true);
  if (data.text_b) {
    files.text_b = dir / "embeddings_b.txt";
    data.text_b->save(*files.text_b, false);
  }
  return files;
}

}  // namespace wadcmsn
