// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "wadcmsn/nn/matrix.hpp"

namespace wadcmsn {

enum class Modality { sketch, image };
enum class Split { train, test };

std::string to_string(Modality m);
std::string to_string(Split s);
Modality parse_modality(const std::string& text);
Split parse_split(const std::string& text);

struct FeatureRecord {
  std::string id;
  std::string class_name;
  Modality modality = Modality::sketch;
  Split split = Split::train;
  std::vector<Real> feature;

  friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

// Feature file format: a `dim=D` header line, then one CSV row per record:
// `id,class,modality,split,f1,...,fD`. Values are written in shortest
// round-trip form, so save followed by load is bit-exact. Ids and class names
// must not contain commas or line breaks.
//
// An empty file (no header) loads as an empty list.
std::vector<FeatureRecord> load_features(const std::filesystem::path& path);
// `dim` is only consulted when `records` is empty.
void save_features(const std::filesystem::path& path, const std::vector<FeatureRecord>& records,
                   std::size_t dim = 512);

// Stacks the features of `records` into a matrix, one row per record.
Matrix feature_matrix(const std::vector<FeatureRecord>& records);
std::vector<FeatureRecord> filter_modality(const std::vector<FeatureRecord>& records, Modality m);

// Records partitioned by class membership: seen classes train, unseen test.
struct ZeroShotSplit {
  std::vector<std::string> seen_classes;    // sorted
  std::vector<std::string> unseen_classes;  // sorted
  std::vector<FeatureRecord> train;
  std::vector<FeatureRecord> test;

  // Throws ValidationError if the class sets overlap or a record sits on the
  // wrong side.
  void validate() const;
};

// The `split` field of the input records is ignored; membership in
// `unseen_classes` decides. Unknown unseen classes are a ValidationError.
ZeroShotSplit make_split(const std::vector<FeatureRecord>& records,
                         const std::set<std::string>& unseen_classes);

// Uses the records' own split field: classes of test records are unseen.
ZeroShotSplit split_from_records(const std::vector<FeatureRecord>& records);

}  // namespace wadcmsn
