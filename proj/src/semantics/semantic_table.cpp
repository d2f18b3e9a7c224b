// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/semantics/semantic_table.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "wadcmsn/error.hpp"
#include "wadcmsn/nn/rmsprop.hpp"
#include "wadcmsn/text_io.hpp"

namespace wadcmsn {

TextEmbeddingTable::TextEmbeddingTable(std::map<std::string, std::vector<Real>> vectors)
    : vectors_(std::move(vectors)) {
  bool first = true;
  for (const auto& [name, v] : vectors_) {
    if (first) {
      dim_ = v.size();
      first = false;
    } else if (v.size() != dim_) {
      throw ValidationError("text embedding for '" + name + "' has dimension " +
                            std::to_string(v.size()) + ", expected " + std::to_string(dim_));
    }
    for (Real x : v) {
      if (!std::isfinite(x)) throw ValidationError("text embedding for '" + name + "' is not finite");
    }
  }
  if (!vectors_.empty() && dim_ == 0) throw ValidationError("text embeddings have dimension 0");
}

TextEmbeddingTable TextEmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open text embedding file " + path.string());
  struct Row {
    std::string context;
    std::vector<std::string> tokens;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = text_io::split_whitespace(text_io::trim(line));
    if (tokens.empty()) continue;
    rows.push_back({path.string() + ":" + std::to_string(line_no), {tokens.begin(), tokens.end()}});
  }
  // A `count dim` header is two integers whose dim matches the next row's
  // width (or a lone `0 dim` line). Otherwise the first row is data.
  std::size_t first = 0;
  if (!rows.empty() && rows[0].tokens.size() == 2) {
    try {
      const auto count = text_io::parse_integer(rows[0].tokens[0], rows[0].context);
      const auto dim = text_io::parse_integer(rows[0].tokens[1], rows[0].context);
      const bool fits = rows.size() > 1 ? rows[1].tokens.size() == static_cast<std::size_t>(dim) + 1 : count == 0;
      if (fits) first = 1;
    } catch (const ParseError&) {
    }
  }
  std::map<std::string, std::vector<Real>> vectors;
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& [context, tokens] = rows[r];
    if (tokens.size() < 2) throw ParseError(context + ": expected a name followed by values");
    std::vector<Real> v;
    v.reserve(tokens.size() - 1);
    for (std::size_t i = 1; i < tokens.size(); ++i) v.push_back(text_io::parse_real(tokens[i], context));
    if (!vectors.emplace(tokens[0], std::move(v)).second) {
      throw ParseError(context + ": duplicate entry '" + tokens[0] + "'");
    }
  }
  return TextEmbeddingTable(std::move(vectors));
}

void TextEmbeddingTable::save(const std::filesystem::path& path, bool count_header) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write text embedding file " + path.string());
  if (count_header) out << vectors_.size() << ' ' << dim_ << '\n';
  std::string line;
  for (const auto& [name, v] : vectors_) {
    line = name;
    for (Real x : v) {
      line.push_back(' ');
      text_io::append_real(line, x);
    }
    line.push_back('\n');
    out << line;
  }
}

const std::vector<Real>& TextEmbeddingTable::at(const std::string& name) const {
  const auto it = vectors_.find(name);
  if (it == vectors_.end()) throw LookupError("no text embedding for class '" + name + "'");
  return it->second;
}

std::vector<Real> build_class_embedding(const std::string& class_name, const TextEmbeddingTable& text,
                                        const Taxonomy& tax, HierarchyMeasure measure,
                                        const std::vector<std::string>& seen_classes) {
  const auto& word = text.at(class_name);
  std::vector<Real> out(word.begin(), word.end());
  out.reserve(word.size() + seen_classes.size());
  for (const auto& seen : seen_classes) {
    out.push_back(static_cast<Real>(hierarchy_similarity(tax, measure, class_name, seen)));
  }
  return out;
}

namespace {

struct CombinerPass {
  Real loss = 0;
  MlpGrads encoder;
  MlpGrads decoder;
};

CombinerPass combiner_pass(const Combiner& c, const Matrix& x, Real l1_penalty, bool want_grads) {
  Tape enc_tape;
  Tape dec_tape;
  const Matrix codes = c.encoder.forward(x, enc_tape);
  const Matrix recon = c.decoder.forward(codes, dec_tape);
  const std::size_t n = x.rows();
  const Real inv_n = Real{1} / static_cast<Real>(n);

  CombinerPass pass;
  Matrix grad_recon(recon.rows(), recon.cols());
  Real sq = 0;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const Real d = recon.data()[i] - x.data()[i];
    sq += d * d;
    grad_recon.data()[i] = Real{2} * d * inv_n;
  }
  Real l1 = 0;
  for (Real v : codes.values()) l1 += std::abs(v);
  pass.loss = (sq + l1_penalty * l1) * inv_n;
  if (!want_grads) return pass;

  auto dec = c.decoder.backward(dec_tape, grad_recon, true);
  Matrix grad_codes = std::move(dec.input_grad);
  if (l1_penalty > 0) {
    for (std::size_t i = 0; i < codes.size(); ++i) {
      const Real v = codes.data()[i];
      const Real sign = v > 0 ? Real{1} : (v < 0 ? Real{-1} : Real{0});
      grad_codes.data()[i] += l1_penalty * sign * inv_n;
    }
  }
  auto enc = c.encoder.backward(enc_tape, grad_codes, false);
  pass.encoder = std::move(enc.grads);
  pass.decoder = std::move(dec.grads);
  return pass;
}

void require_fit_input(const Matrix& embeddings) {
  if (embeddings.rows() < 2) {
    throw ValidationError("combiner needs at least 2 classes, got " +
                          std::to_string(embeddings.rows()));
  }
  if (!embeddings.all_finite()) throw ValidationError("combiner input contains non-finite values");
  const auto first = embeddings.row(0);
  bool all_equal = true;
  for (std::size_t r = 1; r < embeddings.rows() && all_equal; ++r) {
    const auto row = embeddings.row(r);
    all_equal = std::equal(row.begin(), row.end(), first.begin());
  }
  if (all_equal) throw ValidationError("combiner input is degenerate: all class embeddings are equal");
}

}  // namespace

Real Combiner::loss(const Matrix& embeddings, Real l1_penalty) const {
  return combiner_pass(*this, embeddings, l1_penalty, false).loss;
}

Combiner initial_combiner(std::size_t input_dim, const CombinerConfig& config) {
  if (input_dim == 0 || config.code_dim == 0) throw ValidationError("combiner dimensions must be positive");
  std::mt19937_64 rng(config.seed);
  Combiner c;
  c.encoder = Mlp::glorot({{input_dim, config.code_dim}, {config.code_activation}}, rng);
  c.decoder = Mlp::glorot({{config.code_dim, input_dim}, {Activation::identity()}}, rng);
  return c;
}

void train_combiner(Combiner& combiner, const Matrix& embeddings, const CombinerConfig& config) {
  require_fit_input(embeddings);
  require_shape(embeddings, embeddings.rows(), combiner.encoder.input_dim(), "combiner input");
  if (config.l1_penalty < 0) throw ValidationError("combiner l1 penalty must be >= 0");
  RmsPropConfig opt;
  opt.learning_rate = config.learning_rate;
  auto enc_state = RmsPropState::for_net(opt, combiner.encoder);
  auto dec_state = RmsPropState::for_net(opt, combiner.decoder);
  combiner.loss_history.reserve(combiner.loss_history.size() + config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    auto pass = combiner_pass(combiner, embeddings, config.l1_penalty, true);
    if (!std::isfinite(pass.loss)) {
      throw NumericError("combiner reconstruction loss is not finite at epoch " + std::to_string(epoch));
    }
    combiner.loss_history.push_back(pass.loss);
    rmsprop_step(combiner.encoder, pass.encoder, enc_state);
    rmsprop_step(combiner.decoder, pass.decoder, dec_state);
  }
}

Combiner fit_combiner(const Matrix& embeddings, const CombinerConfig& config) {
  require_fit_input(embeddings);
  Combiner c = initial_combiner(embeddings.cols(), config);
  train_combiner(c, embeddings, config);
  return c;
}

SemanticTable::SemanticTable(std::size_t code_dim, SemanticProvenance provenance)
    : code_dim_(code_dim), provenance_(std::move(provenance)) {
  if (code_dim_ == 0) throw ValidationError("semantic code dimension must be positive");
}

void SemanticTable::set(const std::string& name, std::vector<Real> code) {
  if (code.size() != code_dim_) {
    throw ShapeError("semantic code for '" + name + "' has length " + std::to_string(code.size()) +
                     ", expected " + std::to_string(code_dim_));
  }
  for (Real v : code) {
    if (!std::isfinite(v)) throw NumericError("semantic code for '" + name + "' is not finite");
  }
  codes_[name] = std::move(code);
}

const std::vector<Real>& SemanticTable::at(const std::string& name) const {
  const auto it = codes_.find(name);
  if (it == codes_.end()) throw LookupError("no semantic code for class '" + name + "'");
  return it->second;
}

SemanticTable SemanticTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open semantic table " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    SemanticProvenance prov;
    if (j.contains("provenance")) {
      const auto& p = j.at("provenance");
      prov.text_source = p.value("text_source", std::string{});
      prov.measure = parse_measure(p.value("measure", std::string{"path"}));
      prov.seen_classes = p.value("seen_classes", std::vector<std::string>{});
    }
    SemanticTable table(j.at("code_dim").get<std::size_t>(), std::move(prov));
    for (const auto& item : j.at("classes")) {
      std::vector<Real> code;
      for (const auto& v : item.at("code")) code.push_back(v.get<Real>());
      table.set(item.at("name").get<std::string>(), std::move(code));
    }
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("semantic table " + path.string() + ": " + e.what());
  }
}

void SemanticTable::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["code_dim"] = code_dim_;
  j["provenance"] = {{"text_source", provenance_.text_source},
                     {"measure", to_string(provenance_.measure)},
                     {"seen_classes", provenance_.seen_classes}};
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& [name, code] : codes_) classes.push_back({{"name", name}, {"code", code}});
  j["classes"] = std::move(classes);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write semantic table " + path.string());
  out << j.dump(1) << '\n';
}

SemanticBuild build_semantic_table(const std::vector<std::string>& all_classes,
                                   const std::vector<std::string>& seen_classes,
                                   const TextEmbeddingTable& text, const std::string& text_source,
                                   const Taxonomy& tax, HierarchyMeasure measure,
                                   const CombinerConfig& config) {
  std::vector<std::string> missing;
  for (const auto& name : all_classes) {
    if (!text.contains(name)) missing.push_back(name + " (text)");
    if (!tax.contains(name)) missing.push_back(name + " (taxonomy)");
  }
  if (!missing.empty()) {
    std::string msg = "classes not covered:";
    for (const auto& m : missing) msg += " " + m;
    throw LookupError(msg);
  }
  const std::set<std::string> known(all_classes.begin(), all_classes.end());
  for (const auto& s : seen_classes) {
    if (!known.count(s)) throw ValidationError("seen class '" + s + "' is not among the classes to embed");
  }

  const std::size_t dim = text.dim() + seen_classes.size();
  Matrix all(all_classes.size(), dim);
  std::map<std::string, std::size_t> row_of;
  for (std::size_t r = 0; r < all_classes.size(); ++r) {
    const auto e = build_class_embedding(all_classes[r], text, tax, measure, seen_classes);
    std::copy(e.begin(), e.end(), all.row(r).begin());
    row_of[all_classes[r]] = r;
  }
  std::vector<std::size_t> seen_rows;
  for (const auto& s : seen_classes) seen_rows.push_back(row_of.at(s));

  SemanticBuild build;
  build.seen_embeddings = all.gather_rows(seen_rows);
  build.combiner = fit_combiner(build.seen_embeddings, config);
  const Matrix codes = build.combiner.encode(all);
  build.table = SemanticTable(config.code_dim, {text_source, measure, seen_classes});
  for (std::size_t r = 0; r < all_classes.size(); ++r) {
    const auto row = codes.row(r);
    build.table.set(all_classes[r], std::vector<Real>(row.begin(), row.end()));
  }
  return build;
}

}  // namespace wadcmsn
