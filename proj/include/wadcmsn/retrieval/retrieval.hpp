// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wadcmsn/data/features.hpp"
#include "wadcmsn/losses/networks.hpp"
#include "wadcmsn/nn/matrix.hpp"

namespace wadcmsn {

enum class DistanceMetric { euclidean, cosine };
std::string to_string(DistanceMetric m);
DistanceMetric parse_metric(const std::string& text);

enum class MapMode { class_mean, query_mean };
std::string to_string(MapMode m);
MapMode parse_map_mode(const std::string& text);

// Gallery codes with their ids and classes, row-aligned.
struct RetrievalIndex {
  Matrix codes;
  std::vector<std::string> ids;
  std::vector<std::string> classes;

  std::size_t size() const noexcept { return ids.size(); }
  void validate() const;
};

// codes = image_encoder(features). Records must be images.
RetrievalIndex build_index(const Networks& nets, const std::vector<FeatureRecord>& images);
// sketch_encoder(features), one row per record. Records must be sketches.
Matrix encode_queries(const Networks& nets, const std::vector<FeatureRecord>& sketches);

struct RankedItem {
  std::string gallery_id;
  std::string gallery_class;
  Real distance = 0;
  bool relevant = false;

  friend bool operator==(const RankedItem&, const RankedItem&) = default;
};

struct RankedRetrieval {
  std::string query_id;
  std::string query_class;
  std::vector<RankedItem> items;    // distance non-decreasing, ties by gallery id
  std::size_t total_relevant = 0;   // over the whole gallery, not just `items`
};

Real distance(std::span<const Real> a, std::span<const Real> b, DistanceMetric metric);

// Ranks the gallery against one query code. k = 0 keeps the full list.
RankedRetrieval rank(std::span<const Real> query_code, const std::string& query_id,
                     const std::string& query_class, const RetrievalIndex& index, std::size_t k = 0,
                     DistanceMetric metric = DistanceMetric::euclidean);

RankedRetrieval retrieve(const Networks& nets, const RetrievalIndex& index,
                         const FeatureRecord& sketch, std::size_t k = 0,
                         DistanceMetric metric = DistanceMetric::euclidean);

// sum_{s<=n} P(s) * rel(s) / R. R = 0 gives 0. Requires n <= relevance.size().
Real average_precision(std::span<const bool> relevance, std::size_t total_relevant, std::size_t n);
// n = 0 means the full ranked list.
Real average_precision(const RankedRetrieval& ranked, std::size_t n = 0);

// (#relevant in the top min(k, length)) / k. Requires k >= 1.
Real precision_at_k(std::span<const bool> relevance, std::size_t k);
Real precision_at_k(const RankedRetrieval& ranked, std::size_t k = 100);

struct QueryAp {
  std::string query_class;
  Real ap = 0;
};

// class_mean: mean over classes of the mean AP of that class's queries.
// query_mean: mean over all queries. Empty input is a ValidationError.
Real mean_ap(const std::vector<QueryAp>& queries, MapMode mode = MapMode::class_mean);

// Exact W1 between two equal-size 1-D empirical distributions:
// mean |a_(i) - b_(i)| over order statistics. Inputs need not be sorted.
Real wasserstein_1d(std::span<const Real> a, std::span<const Real> b);

// Mean over code coordinates of wasserstein_1d between the sketch and image
// codes' marginals. Rows must match.
Real code_domain_gap(const Matrix& sketch_codes, const Matrix& image_codes);

// Expected AP of a uniformly random ranking of `gallery` items with
// `relevant` of them relevant, AP normalised by the relevant count.
Real random_ranking_ap(std::size_t gallery, std::size_t relevant);

struct EvalOptions {
  DistanceMetric metric = DistanceMetric::euclidean;
  MapMode map_mode = MapMode::class_mean;
  std::size_t precision_k = 100;
  std::size_t ap_cutoff = 0;  // 0 = full gallery
};

struct QueryResult {
  std::string query_id;
  std::string query_class;
  Real ap = 0;
  Real precision = 0;
  bool no_relevant = false;
};

struct EvalResult {
  Real map = 0;
  Real precision_at_k = 0;  // mean over queries
  Real chance_map = 0;      // same aggregation of random_ranking_ap
  std::map<std::string, Real> class_ap;
  std::vector<QueryResult> queries;
  std::size_t no_relevant_queries = 0;
  std::size_t gallery_size = 0;
};

// Ranks every query against the full gallery; parallel across queries.
EvalResult evaluate(const Networks& nets, const std::vector<FeatureRecord>& queries,
                    const std::vector<FeatureRecord>& gallery, const EvalOptions& options = {});
EvalResult evaluate_codes(const Matrix& query_codes, const std::vector<FeatureRecord>& queries,
                          const RetrievalIndex& index, const EvalOptions& options = {});

// JSON report: map, prec_at_k, per-class AP, query counts, chance level and
// the caller's `config` echo.
nlohmann::json eval_report(const EvalResult& result, const EvalOptions& options,
                           const nlohmann::json& config);

// CSV with header query_id,rank,gallery_id,distance,relevant (rank from 1).
void write_rankings_csv(const std::filesystem::path& path, const std::vector<RankedRetrieval>& ranked);
// CSV with header id,class,modality,c1..cM.
void write_codes_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                     const std::vector<std::string>& classes, const std::string& modality,
                     const Matrix& codes, bool append = false);

}  // namespace wadcmsn
