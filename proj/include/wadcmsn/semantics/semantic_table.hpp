// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wadcmsn/nn/matrix.hpp"
#include "wadcmsn/nn/mlp.hpp"
#include "wadcmsn/semantics/taxonomy.hpp"

namespace wadcmsn {

// Word vectors keyed by class name, all of one dimension.
//
// Text format: one entry per line, `name v1 v2 ... vD`, space separated. A
// leading `count dim` header line (word2vec text style) is skipped when dim
// matches the width of the rows that follow.
class TextEmbeddingTable {
 public:
  TextEmbeddingTable() = default;
  explicit TextEmbeddingTable(std::map<std::string, std::vector<Real>> vectors);

  static TextEmbeddingTable load(const std::filesystem::path& path);
  // With `count_header` the first line is `count dim`.
  void save(const std::filesystem::path& path, bool count_header = false) const;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  bool contains(const std::string& name) const { return vectors_.count(name) > 0; }
  const std::vector<Real>& at(const std::string& name) const;
  const std::map<std::string, std::vector<Real>>& entries() const noexcept { return vectors_; }

 private:
  std::map<std::string, std::vector<Real>> vectors_;
  std::size_t dim_ = 0;
};

// Text vector followed by the similarity of `class_name` to every seen class.
std::vector<Real> build_class_embedding(const std::string& class_name, const TextEmbeddingTable& text,
                                        const Taxonomy& tax, HierarchyMeasure measure,
                                        const std::vector<std::string>& seen_classes);

struct CombinerConfig {
  std::size_t code_dim = 64;
  std::size_t epochs = 3000;
  Real learning_rate = Real{1e-3};
  Real l1_penalty = 0;  // sparsity on codes; off by default
  Activation code_activation = Activation::tanh();
  std::uint64_t seed = 0;
};

// Single-hidden-layer auto-encoder: embedding -> code -> embedding.
struct Combiner {
  Mlp encoder;
  Mlp decoder;
  std::vector<Real> loss_history;  // per epoch, before that epoch's update

  Matrix encode(const Matrix& embeddings) const { return encoder.predict(embeddings); }
  // Mean over rows of the squared reconstruction error (plus the L1 code
  // penalty when `l1_penalty` > 0).
  Real loss(const Matrix& embeddings, Real l1_penalty = 0) const;
};

Combiner initial_combiner(std::size_t input_dim, const CombinerConfig& config);
// Full-batch RMSprop on the reconstruction loss; appends to loss_history.
void train_combiner(Combiner& combiner, const Matrix& embeddings, const CombinerConfig& config);
// initial_combiner + train_combiner. Requires >= 2 rows that are not all equal.
Combiner fit_combiner(const Matrix& embeddings, const CombinerConfig& config);

struct SemanticProvenance {
  std::string text_source;
  HierarchyMeasure measure = HierarchyMeasure::path;
  std::vector<std::string> seen_classes;
};

// Per-class semantic codes.
//
// File format (JSON): {"code_dim": M, "provenance": {...}, "classes":
// [{"name": str, "code": [M numbers]}, ...]}.
class SemanticTable {
 public:
  SemanticTable() = default;
  SemanticTable(std::size_t code_dim, SemanticProvenance provenance);

  void set(const std::string& name, std::vector<Real> code);
  const std::vector<Real>& at(const std::string& name) const;
  bool contains(const std::string& name) const { return codes_.count(name) > 0; }
  std::size_t code_dim() const noexcept { return code_dim_; }
  std::size_t size() const noexcept { return codes_.size(); }
  const std::map<std::string, std::vector<Real>>& codes() const noexcept { return codes_; }
  const SemanticProvenance& provenance() const noexcept { return provenance_; }

  static SemanticTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const SemanticTable& a, const SemanticTable& b) {
    return a.code_dim_ == b.code_dim_ && a.codes_ == b.codes_;
  }

 private:
  std::size_t code_dim_ = 0;
  SemanticProvenance provenance_;
  std::map<std::string, std::vector<Real>> codes_;
};

struct SemanticBuild {
  SemanticTable table;
  Combiner combiner;
  Matrix seen_embeddings;
};

// Embeds every class in `all_classes`, fits the combiner on the seen classes
// only, then encodes all classes with the fitted encoder.
SemanticBuild build_semantic_table(const std::vector<std::string>& all_classes,
                                   const std::vector<std::string>& seen_classes,
                                   const TextEmbeddingTable& text, const std::string& text_source,
                                   const Taxonomy& tax, HierarchyMeasure measure,
                                   const CombinerConfig& config);

}  // namespace wadcmsn
