// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wadcmsn/data/features.hpp"
#include "wadcmsn/semantics/semantic_table.hpp"
#include "wadcmsn/semantics/taxonomy.hpp"

namespace wadcmsn {

// Parameters of the synthetic zero-shot fixture.
//
// Each class k has a latent center mu_k ~ N(0, I). Sketch features are
// A_sk mu_k + noise, image features A_im mu_k + noise, word vectors
// B mu_k + noise, where A_sk, A_im and B are fixed random linear maps drawn from
// `modality_transform_seed`. The taxonomy is an agglomerative (centroid
// linkage) binary tree over the centers.
struct SyntheticSpec {
  std::size_t n_classes = 14;
  std::size_t n_seen = 10;
  std::size_t sketches_per_class = 40;
  std::size_t images_per_class = 40;
  std::size_t feature_dim = 512;
  std::size_t text_dim = 300;
  std::size_t latent_dim = 8;
  Real cluster_spread = Real{0.3};  // per-coordinate noise std of features
  Real text_spread = Real{0.1};     // per-coordinate noise std of word vectors
  std::uint64_t modality_transform_seed = 7;
  // Maximum leaf depth of the taxonomy; deeper internal nodes are dissolved
  // into their parents. 0 keeps the full binary tree.
  std::size_t taxonomy_depth = 0;
  // 2 also produces a second word-vector table from an independent map.
  std::size_t text_sources = 1;

  // Throws ConfigError on invalid combinations.
  void validate() const;
};

struct SyntheticData {
  std::vector<std::string> classes;         // class names, label order
  std::vector<std::string> unseen_classes;  // the last n_classes - n_seen
  std::vector<FeatureRecord> records;       // split field set from seen/unseen
  Taxonomy taxonomy;
  TextEmbeddingTable text;
  std::optional<TextEmbeddingTable> text_b;
  Matrix centers;  // n_classes x latent_dim
};

SyntheticData gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

struct SyntheticFiles {
  std::filesystem::path features;
  std::filesystem::path taxonomy;
  std::filesystem::path text;
  std::optional<std::filesystem::path> text_b;
};

// Writes features.csv, taxonomy.json, embeddings.txt (with a `count dim`
// header) and, when present, embeddings_b.txt (no header) into `dir`.
SyntheticFiles write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace wadcmsn
