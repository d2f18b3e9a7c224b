// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "wadcmsn/data/synthetic.hpp"
#include "wadcmsn/retrieval/retrieval.hpp"
#include "wadcmsn/semantics/semantic_table.hpp"
#include "wadcmsn/trainer/trainer.hpp"

namespace wadcmsn {

// File locations. Empty entries resolve to a default name inside `out`.
struct RunPaths {
  std::filesystem::path out = ".";
  std::filesystem::path features;      // features.csv
  std::filesystem::path taxonomy;      // taxonomy.json
  std::filesystem::path embeddings;    // embeddings.txt (text source "a")
  std::filesystem::path embeddings_b;  // embeddings_b.txt (text source "b")
  std::filesystem::path semantic;      // semantic.json
  std::filesystem::path checkpoint;    // checkpoint.bin
  std::filesystem::path log;           // train_log.json
  std::filesystem::path report;        // report.json
  std::filesystem::path rankings;      // rankings.csv
  std::filesystem::path codes;         // codes.csv
  std::filesystem::path retrievals;    // retrievals.csv

  // Copy with every empty path filled in.
  RunPaths resolved() const;
};

struct EmbedOptions {
  HierarchyMeasure measure = HierarchyMeasure::path;
  std::string text_source = "a";  // "a" or "b"
  bool grid = false;              // all text source x measure combinations
  CombinerConfig combiner;
};

struct EvalConfig {
  EvalOptions options;
  bool dump_rankings = false;
  bool dump_codes = false;
};

struct RetrieveConfig {
  std::vector<std::string> queries;
  std::size_t k = 10;
};

// Each switch zeroes one loss weight; nothing else changes.
struct Ablation {
  bool no_wd = false;   // sketch/image critic games
  bool no_cyc = false;
  bool no_cls = false;
  bool no_iml = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  RunPaths paths;
  SyntheticSpec synthetic;
  EmbedOptions embed;
  TrainConfig train;
  bool validate = false;  // per-epoch mAP on the test split during training
  EvalConfig eval;
  RetrieveConfig retrieve;
  Ablation ablation;

  // Strict parse: unknown keys, wrong types and bad enum values throw
  // ConfigError. Missing keys keep their defaults.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // Seeds and ablation switches pushed into the per-stage configs.
  TrainConfig effective_train() const;
  CombinerConfig effective_combiner() const;
};

}  // namespace wadcmsn
