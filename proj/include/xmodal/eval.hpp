#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "xmodal/cmmp.hpp"
#include "xmodal/numkernel.hpp"

namespace xmodal {

// Fraction of samples correctly labeled under the best one-to-one matching
// of predicted clusters to classes (Hungarian algorithm).
double clustering_accuracy(std::span<const int> pred, std::span<const int> truth);

// Mutual information normalized by sqrt(H(pred)·H(truth)).
double nmi(std::span<const int> pred, std::span<const int> truth);

// Minimum-cost perfect assignment on a square cost matrix; returns the
// column assigned to each row.
std::vector<Index> hungarian_min_cost(const Matrix& cost);

// Interpolated precision averaged over the recall levels 0, 0.1, ..., 1.0.
// Throws UndefinedAP when no item is relevant.
double average_precision_11pt(std::span<const std::uint8_t> relevance);

struct RetrievalRanking {
  Index query_index = 0;
  std::vector<Index> ranked_gallery;  // best first, a permutation of the gallery
  std::vector<std::uint8_t> relevance;
};

struct MapResult {
  double map = 0.0;
  std::vector<double> per_query_ap;       // scored queries, in input order
  std::vector<Index> skipped_queries;     // no relevant gallery item
};

// Mean of the 11-point APs over queries with at least one relevant item.
MapResult mean_average_precision(std::span<const RetrievalRanking> rankings);

// Majority vote over the K nearest gallery items (distance ties to the lower
// gallery index, vote ties to the smaller class id). Embeddings are
// column-per-sample.
double knn_recognition_rate(const Matrix& gallery_emb, std::span<const int> gallery_labels,
                            const Matrix& query_emb, std::span<const int> query_labels, Index k,
                            DistanceMetric metric);

enum class QuerySide { A, B };

// Projects queries with the query side's subspace and the gallery with the
// other one, then ranks the gallery by ascending distance.
std::vector<RetrievalRanking> cross_modal_retrieve(const ProjectionPair& proj, const Matrix& query_x,
                                                   std::span<const int> query_labels,
                                                   const Matrix& gallery_x,
                                                   std::span<const int> gallery_labels,
                                                   QuerySide query_side, DistanceMetric metric);

// Ranks gallery columns by ascending distance for each query column.
std::vector<RetrievalRanking> rank_by_distance(const Matrix& query_emb, std::span<const int> query_labels,
                                               const Matrix& gallery_emb,
                                               std::span<const int> gallery_labels,
                                               DistanceMetric metric);

struct EvalReport {
  std::optional<double> accuracy;
  std::optional<double> nmi;
  std::optional<double> map;
  std::optional<double> recognition_rate;
  std::vector<double> per_query_ap;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const;
};

// Mean and sample standard deviation (0 for a single value).
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(std::span<const double> values);

}  // namespace xmodal
