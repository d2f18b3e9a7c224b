// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace wadcmsn {

struct TaxonomyNode {
  std::int64_t id = 0;
  std::string name;
  std::optional<std::int64_t> parent;  // empty for the root
  std::uint64_t count = 0;             // own count; descendants are added on load

  friend bool operator==(const TaxonomyNode&, const TaxonomyNode&) = default;
};

// Single-rooted class hierarchy with occurrence counts for information content.
//
// File format (JSON): an array of {"id": int, "name": str, "parent": int|null,
// "count": int}, or an object with that array under "nodes".
class Taxonomy {
 public:
  explicit Taxonomy(std::vector<TaxonomyNode> nodes);

  static Taxonomy from_json(const nlohmann::json& j);
  static Taxonomy load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;

  const std::vector<TaxonomyNode>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t root() const noexcept { return root_; }

  // Index of the unique node named `name`; LookupError if absent or ambiguous.
  std::size_t resolve(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::optional<std::size_t> parent(std::size_t node) const { return parent_[node]; }
  std::size_t depth(std::size_t node) const { return depth_[node]; }
  std::uint64_t effective_count(std::size_t node) const { return effective_count_[node]; }
  const std::vector<std::size_t>& children(std::size_t node) const { return children_[node]; }

  std::size_t lowest_common_subsumer(std::size_t a, std::size_t b) const;
  std::size_t hops(std::size_t a, std::size_t b) const;
  // -log(count(node) / count(root)); ValidationError on zero effective count.
  double information_content(std::size_t node) const;

 private:
  std::vector<TaxonomyNode> nodes_;
  std::size_t root_ = 0;
  std::vector<std::optional<std::size_t>> parent_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> depth_;
  std::vector<std::uint64_t> effective_count_;
  std::unordered_multimap<std::string, std::size_t> by_name_;
};

enum class HierarchyMeasure { path, jiang_conrath };

std::string to_string(HierarchyMeasure m);
HierarchyMeasure parse_measure(const std::string& text);

// 1 / (1 + shortest hop count between the two classes).
double path_similarity(const Taxonomy& tax, const std::string& a, const std::string& b);

// 1 / (1 + IC(a) + IC(b) - 2 IC(lcs(a, b))).
double jiang_conrath_similarity(const Taxonomy& tax, const std::string& a, const std::string& b);

double hierarchy_similarity(const Taxonomy& tax, HierarchyMeasure measure, const std::string& a,
                            const std::string& b);

}  // namespace wadcmsn
