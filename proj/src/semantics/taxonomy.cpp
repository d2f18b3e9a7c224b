// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/semantics/taxonomy.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "wadcmsn/error.hpp"

namespace wadcmsn {

Taxonomy::Taxonomy(std::vector<TaxonomyNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ValidationError("taxonomy has no nodes");
  const std::size_t n = nodes_.size();
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    if (!index.emplace(nodes_[i].id, i).second) {
      throw ValidationError("taxonomy: duplicate node id " + std::to_string(nodes_[i].id));
    }
  }
  parent_.assign(n, std::nullopt);
  children_.assign(n, {});
  std::size_t roots = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = nodes_[i];
    if (!node.parent) {
      ++roots;
      root_ = i;
      continue;
    }
    const auto it = index.find(*node.parent);
    if (it == index.end()) {
      throw ValidationError("taxonomy: node " + std::to_string(node.id) + " names missing parent " +
                            std::to_string(*node.parent));
    }
    parent_[i] = it->second;
    children_[it->second].push_back(i);
  }
  if (roots != 1) {
    throw ValidationError("taxonomy must have exactly one root, found " + std::to_string(roots));
  }

  // Breadth-first from the root; anything unreached sits on a parent cycle.
  depth_.assign(n, 0);
  std::vector<std::size_t> order{root_};
  order.reserve(n);
  for (std::size_t k = 0; k < order.size(); ++k) {
    for (std::size_t c : children_[order[k]]) {
      depth_[c] = depth_[order[k]] + 1;
      order.push_back(c);
    }
  }
  if (order.size() != n) throw ValidationError("taxonomy parent links contain a cycle");

  effective_count_.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) effective_count_[i] = nodes_[i].count;
  for (std::size_t k = order.size(); k-- > 1;) {
    const std::size_t node = order[k];
    effective_count_[*parent_[node]] += effective_count_[node];
  }

  for (std::size_t i = 0; i < n; ++i) by_name_.emplace(nodes_[i].name, i);
}

Taxonomy Taxonomy::from_json(const nlohmann::json& j) {
  const nlohmann::json* list = &j;
  if (j.is_object()) {
    if (!j.contains("nodes")) throw ParseError("taxonomy JSON object lacks a \"nodes\" array");
    list = &j.at("nodes");
  }
  if (!list->is_array()) throw ParseError("taxonomy JSON must be an array of nodes");
  std::vector<TaxonomyNode> nodes;
  nodes.reserve(list->size());
  std::size_t position = 0;
  for (const auto& item : *list) {
    try {
      TaxonomyNode node;
      node.id = item.at("id").get<std::int64_t>();
      node.name = item.at("name").get<std::string>();
      const auto& parent = item.at("parent");
      if (!parent.is_null()) node.parent = parent.get<std::int64_t>();
      const auto count = item.value("count", std::int64_t{0});
      if (count < 0) throw ParseError("negative count");
      node.count = static_cast<std::uint64_t>(count);
      nodes.push_back(std::move(node));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("taxonomy node " + std::to_string(position) + ": " + e.what());
    }
    ++position;
  }
  return Taxonomy(std::move(nodes));
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open taxonomy file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("taxonomy file " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json Taxonomy::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& node : nodes_) {
    nlohmann::json item;
    item["id"] = node.id;
    item["name"] = node.name;
    item["parent"] = node.parent ? nlohmann::json(*node.parent) : nlohmann::json(nullptr);
    item["count"] = node.count;
    arr.push_back(std::move(item));
  }
  return arr;
}

void Taxonomy::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write taxonomy file " + path.string());
  out << to_json().dump(1) << '\n';
}

std::size_t Taxonomy::resolve(const std::string& name) const {
  const auto range = by_name_.equal_range(name);
  if (range.first == range.second) throw LookupError("class '" + name + "' not found in taxonomy");
  if (std::next(range.first) != range.second) {
    throw LookupError("class '" + name + "' names more than one taxonomy node");
  }
  return range.first->second;
}

bool Taxonomy::contains(const std::string& name) const { return by_name_.count(name) == 1; }

std::size_t Taxonomy::lowest_common_subsumer(std::size_t a, std::size_t b) const {
  while (depth_[a] > depth_[b]) a = *parent_[a];
  while (depth_[b] > depth_[a]) b = *parent_[b];
  while (a != b) {
    a = *parent_[a];
    b = *parent_[b];
  }
  return a;
}

std::size_t Taxonomy::hops(std::size_t a, std::size_t b) const {
  const std::size_t l = lowest_common_subsumer(a, b);
  return depth_[a] + depth_[b] - 2 * depth_[l];
}

double Taxonomy::information_content(std::size_t node) const {
  const std::uint64_t c = effective_count_[node];
  const std::uint64_t total = effective_count_[root_];
  if (c == 0 || total == 0) {
    throw ValidationError("taxonomy node '" + nodes_[node].name +
                          "' has zero effective count; information content undefined");
  }
  return -std::log(static_cast<double>(c) / static_cast<double>(total));
}

std::string to_string(HierarchyMeasure m) {
  return m == HierarchyMeasure::path ? "path" : "jc";
}

HierarchyMeasure parse_measure(const std::string& text) {
  if (text == "path") return HierarchyMeasure::path;
  if (text == "jc" || text == "jiang-conrath" || text == "jiang_conrath") {
    return HierarchyMeasure::jiang_conrath;
  }
  throw ConfigError("unknown hierarchy measure '" + text + "' (expected path or jc)");
}

double path_similarity(const Taxonomy& tax, const std::string& a, const std::string& b) {
  const std::size_t hops = tax.hops(tax.resolve(a), tax.resolve(b));
  return 1.0 / (1.0 + static_cast<double>(hops));
}

double jiang_conrath_similarity(const Taxonomy& tax, const std::string& a, const std::string& b) {
  const std::size_t na = tax.resolve(a);
  const std::size_t nb = tax.resolve(b);
  const std::size_t l = tax.lowest_common_subsumer(na, nb);
  double d = tax.information_content(na) + tax.information_content(nb) -
             2.0 * tax.information_content(l);
  // Rounding can leave a tiny negative distance for a == b style cases.
  if (d < 0) d = 0;
  return 1.0 / (1.0 + d);
}

double hierarchy_similarity(const Taxonomy& tax, HierarchyMeasure measure, const std::string& a,
                            const std::string& b) {
  return measure == HierarchyMeasure::path ? path_similarity(tax, a, b)
                                           : jiang_conrath_similarity(tax, a, b);
}

}  // namespace wadcmsn
