// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/data/features.hpp"

#include <cmath>
#include <fstream>

#include "wadcmsn/error.hpp"
#include "wadcmsn/text_io.hpp"

namespace wadcmsn {

std::string to_string(Modality m) { return m == Modality::sketch ? "sketch" : "image"; }
std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Modality parse_modality(const std::string& text) {
  if (text == "sketch") return Modality::sketch;
  if (text == "image") return Modality::image;
  throw ParseError("unknown modality '" + text + "'");
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw ParseError("unknown split '" + text + "'");
}

std::vector<FeatureRecord> load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open feature file " + path.string());
  std::vector<FeatureRecord> records;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text_io::trim(line);
    if (body.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (!have_header) {
      if (body.substr(0, 4) != "dim=") throw ParseError(where + ": expected a 'dim=D' header");
      const long long d = text_io::parse_integer(body.substr(4), where);
      if (d < 0) throw ParseError(where + ": negative dimension");
      dim = static_cast<std::size_t>(d);
      have_header = true;
      continue;
    }
    const auto fields = text_io::split(body, ',');
    if (fields.size() < 4) throw ParseError(where + ": expected id,class,modality,split,features");
    if (fields.size() - 4 != dim) {
      throw ValidationError(where + ": row has " + std::to_string(fields.size() - 4) +
                            " features, header says " + std::to_string(dim));
    }
    FeatureRecord r;
    r.id = std::string(fields[0]);
    r.class_name = std::string(fields[1]);
    if (r.id.empty() || r.class_name.empty()) throw ParseError(where + ": empty id or class");
    try {
      r.modality = parse_modality(std::string(fields[2]));
      r.split = parse_split(std::string(fields[3]));
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    r.feature.reserve(dim);
    for (std::size_t i = 4; i < fields.size(); ++i) {
      const Real v = text_io::parse_real(fields[i], where);
      if (!std::isfinite(v)) throw ValidationError(where + ": non-finite feature value");
      r.feature.push_back(v);
    }
    records.push_back(std::move(r));
  }
  return records;
}

void save_features(const std::filesystem::path& path, const std::vector<FeatureRecord>& records,
                   std::size_t dim) {
  if (!records.empty()) dim = records.front().feature.size();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write feature file " + path.string());
  out << "dim=" << dim << '\n';
  std::string line;
  for (const auto& r : records) {
    if (r.feature.size() != dim) {
      throw ValidationError("record '" + r.id + "' has " + std::to_string(r.feature.size()) +
                            " features, expected " + std::to_string(dim));
    }
    for (const auto& text : {r.id, r.class_name}) {
      if (text.find_first_of(",\r\n") != std::string::npos) {
        throw ValidationError("id or class '" + text + "' contains a comma or line break");
      }
    }
    line = r.id + ',' + r.class_name + ',' + to_string(r.modality) + ',' + to_string(r.split);
    for (Real v : r.feature) {
      line.push_back(',');
      text_io::append_real(line, v);
    }
    line.push_back('\n');
    out << line;
  }
}

Matrix feature_matrix(const std::vector<FeatureRecord>& records) {
  if (records.empty()) return {};
  const std::size_t dim = records.front().feature.size();
  Matrix m(records.size(), dim);
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (records[r].feature.size() != dim) {
      throw ShapeError("record '" + records[r].id + "' has feature length " +
                       std::to_string(records[r].feature.size()) + ", expected " +
                       std::to_string(dim));
    }
    std::copy(records[r].feature.begin(), records[r].feature.end(), m.row(r).begin());
  }
  return m;
}

std::vector<FeatureRecord> filter_modality(const std::vector<FeatureRecord>& records, Modality m) {
  std::vector<FeatureRecord> out;
  for (const auto& r : records) {
    if (r.modality == m) out.push_back(r);
  }
  return out;
}

void ZeroShotSplit::validate() const {
  const std::set<std::string> seen(seen_classes.begin(), seen_classes.end());
  const std::set<std::string> unseen(unseen_classes.begin(), unseen_classes.end());
  for (const auto& c : unseen) {
    if (seen.count(c)) throw ValidationError("class '" + c + "' is both seen and unseen");
  }
  for (const auto& r : train) {
    if (!seen.count(r.class_name)) {
      throw ValidationError("train record '" + r.id + "' has non-seen class '" + r.class_name + "'");
    }
  }
  for (const auto& r : test) {
    if (!unseen.count(r.class_name)) {
      throw ValidationError("test record '" + r.id + "' has non-unseen class '" + r.class_name + "'");
    }
  }
}

ZeroShotSplit make_split(const std::vector<FeatureRecord>& records,
                         const std::set<std::string>& unseen_classes) {
  std::set<std::string> observed;
  for (const auto& r : records) observed.insert(r.class_name);
  for (const auto& c : unseen_classes) {
    if (!observed.count(c)) throw ValidationError("unseen class '" + c + "' has no records");
  }
  ZeroShotSplit split;
  for (const auto& c : observed) {
    (unseen_classes.count(c) ? split.unseen_classes : split.seen_classes).push_back(c);
  }
  for (const auto& r : records) {
    (unseen_classes.count(r.class_name) ? split.test : split.train).push_back(r);
  }
  split.validate();
  return split;
}

ZeroShotSplit split_from_records(const std::vector<FeatureRecord>& records) {
  std::set<std::string> unseen;
  for (const auto& r : records) {
    if (r.split == Split::test) unseen.insert(r.class_name);
  }
  for (const auto& r : records) {
    if (r.split == Split::train && unseen.count(r.class_name)) {
      throw ValidationError("class '" + r.class_name + "' has both train and test records");
    }
  }
  return make_split(records, unseen);
}

}  // namespace wadcmsn
