#include "xmodal/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace xmodal {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorKind::ShapeError, std::string(what) + ": label sequences differ in length (" +
                                           std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

// Dense ids 0..k-1 in order of sorted distinct values.
std::vector<Index> densify(std::span<const int> labels, Index* count) {
  std::vector<int> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<Index> out;
  out.reserve(labels.size());
  for (int l : labels) {
    out.push_back(std::lower_bound(distinct.begin(), distinct.end(), l) - distinct.begin());
  }
  *count = static_cast<Index>(distinct.size());
  return out;
}

}  // namespace

std::vector<Index> hungarian_min_cost(const Matrix& cost) {
  const Index n = cost.rows();
  if (cost.cols() != n) throw Error(ErrorKind::ShapeError, "hungarian: cost matrix must be square");
  // Shortest augmenting path with row/column potentials; 1-based internally.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<Index> match(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (Index row = 1; row <= n; ++row) {
    match[0] = row;
    Index col0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
    do {
      used[static_cast<std::size_t>(col0)] = true;
      const Index row0 = match[static_cast<std::size_t>(col0)];
      double delta = inf;
      Index col1 = 0;
      for (Index j = 1; j <= n; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) continue;
        const double cur = cost(row0 - 1, j - 1) - u[static_cast<std::size_t>(row0)] - v[sj];
        if (cur < minv[sj]) {
          minv[sj] = cur;
          way[sj] = col0;
        }
        if (minv[sj] < delta) {
          delta = minv[sj];
          col1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) {
          u[static_cast<std::size_t>(match[sj])] += delta;
          v[sj] -= delta;
        } else {
          minv[sj] -= delta;
        }
      }
      col0 = col1;
    } while (match[static_cast<std::size_t>(col0)] != 0);
    do {
      const Index col1 = way[static_cast<std::size_t>(col0)];
      match[static_cast<std::size_t>(col0)] = match[static_cast<std::size_t>(col1)];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<Index> assignment(static_cast<std::size_t>(n), 0);
  for (Index j = 1; j <= n; ++j) assignment[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return assignment;
}

double clustering_accuracy(std::span<const int> pred, std::span<const int> truth) {
  require_same_length(pred.size(), truth.size(), "clustering_accuracy");
  if (pred.empty()) throw Error(ErrorKind::EmptyEvaluation, "clustering_accuracy: no samples");
  Index kp = 0, kt = 0;
  const auto p = densify(pred, &kp);
  const auto t = densify(truth, &kt);
  const Index k = std::max(kp, kt);
  Matrix cost = Matrix::Zero(k, k);
  for (std::size_t i = 0; i < p.size(); ++i) cost(p[i], t[i]) -= 1.0;
  const auto assignment = hungarian_min_cost(cost);
  double matched = 0.0;
  for (Index r = 0; r < k; ++r) matched -= cost(r, assignment[static_cast<std::size_t>(r)]);
  return matched / static_cast<double>(pred.size());
}

double nmi(std::span<const int> pred, std::span<const int> truth) {
  require_same_length(pred.size(), truth.size(), "nmi");
  if (pred.empty()) throw Error(ErrorKind::EmptyEvaluation, "nmi: no samples");
  Index kp = 0, kt = 0;
  const auto p = densify(pred, &kp);
  const auto t = densify(truth, &kt);
  const auto n = static_cast<double>(pred.size());
  Matrix joint = Matrix::Zero(kp, kt);
  for (std::size_t i = 0; i < p.size(); ++i) joint(p[i], t[i]) += 1.0;
  const Vector rows = joint.rowwise().sum();
  const Vector cols = joint.colwise().sum().transpose();

  auto entropy = [n](const Vector& counts) {
    double h = 0.0;
    for (Index i = 0; i < counts.size(); ++i) {
      if (counts(i) > 0.0) h -= counts(i) / n * std::log(counts(i) / n);
    }
    return h;
  };
  const double hp = entropy(rows);
  const double ht = entropy(cols);
  if (hp <= 0.0 || ht <= 0.0) return (hp <= 0.0 && ht <= 0.0) ? 1.0 : 0.0;

  double mi = 0.0;
  for (Index a = 0; a < kp; ++a) {
    for (Index b = 0; b < kt; ++b) {
      const double nab = joint(a, b);
      if (nab > 0.0) mi += nab / n * std::log(nab * n / (rows(a) * cols(b)));
    }
  }
  return std::clamp(mi / std::sqrt(hp * ht), 0.0, 1.0);
}

double average_precision_11pt(std::span<const std::uint8_t> relevance) {
  const auto total = static_cast<std::size_t>(std::count_if(relevance.begin(), relevance.end(),
                                                            [](std::uint8_t r) { return r != 0; }));
  if (total == 0) throw Error(ErrorKind::UndefinedAP, "average precision: no relevant item");

  // best[j] = max precision over cut-offs whose recall reaches j/10, using
  // the exact integer test 10·hits ≥ j·total.
  std::array<double, 11> best{};
  std::size_t hits = 0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    if (relevance[k]) ++hits;
    const double precision = static_cast<double>(hits) / static_cast<double>(k + 1);
    for (std::size_t j = 0; j <= 10; ++j) {
      if (10 * hits >= j * total) best[j] = std::max(best[j], precision);
    }
  }
  double sum = 0.0;
  for (double b : best) sum += b;
  return sum / 11.0;
}

MapResult mean_average_precision(std::span<const RetrievalRanking> rankings) {
  MapResult result;
  double sum = 0.0;
  for (const auto& r : rankings) {
    const bool any = std::any_of(r.relevance.begin(), r.relevance.end(), [](std::uint8_t x) { return x != 0; });
    if (!any) {
      result.skipped_queries.push_back(r.query_index);
      continue;
    }
    const double ap = average_precision_11pt(r.relevance);
    result.per_query_ap.push_back(ap);
    sum += ap;
  }
  if (result.per_query_ap.empty()) {
    throw Error(ErrorKind::EmptyEvaluation, "mean average precision: no query has a relevant item");
  }
  result.map = sum / static_cast<double>(result.per_query_ap.size());
  return result;
}

namespace {

std::vector<Index> order_by_distance(const Matrix& dist, Index query) {
  std::vector<Index> order(static_cast<std::size_t>(dist.cols()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return dist(query, a) < dist(query, b); });
  return order;
}

}  // namespace

double knn_recognition_rate(const Matrix& gallery_emb, std::span<const int> gallery_labels,
                            const Matrix& query_emb, std::span<const int> query_labels, Index k,
                            DistanceMetric metric) {
  require_same_length(static_cast<std::size_t>(gallery_emb.cols()), gallery_labels.size(), "knn gallery");
  require_same_length(static_cast<std::size_t>(query_emb.cols()), query_labels.size(), "knn queries");
  if (k < 1 || k > gallery_emb.cols()) {
    throw Error(ErrorKind::InvalidK, "K = " + std::to_string(k) + " outside [1, " +
                                         std::to_string(gallery_emb.cols()) + "]");
  }
  if (query_emb.cols() == 0) throw Error(ErrorKind::EmptyEvaluation, "knn: no queries");
  const Matrix dist = pairwise_distances(query_emb, gallery_emb, metric);
  Index correct = 0;
  for (Index q = 0; q < query_emb.cols(); ++q) {
    const auto order = order_by_distance(dist, q);
    std::map<int, Index> votes;
    for (Index r = 0; r < k; ++r) ++votes[gallery_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])]];
    int winner = votes.begin()->first;
    Index best = votes.begin()->second;
    for (const auto& [label, count] : votes) {
      if (count > best) {  // ascending label order keeps ties on the smaller id
        best = count;
        winner = label;
      }
    }
    if (winner == query_labels[static_cast<std::size_t>(q)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(query_emb.cols());
}

std::vector<RetrievalRanking> rank_by_distance(const Matrix& query_emb, std::span<const int> query_labels,
                                               const Matrix& gallery_emb,
                                               std::span<const int> gallery_labels,
                                               DistanceMetric metric) {
  require_same_length(static_cast<std::size_t>(gallery_emb.cols()), gallery_labels.size(), "retrieval gallery");
  require_same_length(static_cast<std::size_t>(query_emb.cols()), query_labels.size(), "retrieval queries");
  const Matrix dist = pairwise_distances(query_emb, gallery_emb, metric);
  std::vector<RetrievalRanking> out;
  out.reserve(static_cast<std::size_t>(query_emb.cols()));
  for (Index q = 0; q < query_emb.cols(); ++q) {
    RetrievalRanking r;
    r.query_index = q;
    r.ranked_gallery = order_by_distance(dist, q);
    r.relevance.reserve(r.ranked_gallery.size());
    for (Index g : r.ranked_gallery) {
      r.relevance.push_back(gallery_labels[static_cast<std::size_t>(g)] == query_labels[static_cast<std::size_t>(q)]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RetrievalRanking> cross_modal_retrieve(const ProjectionPair& proj, const Matrix& query_x,
                                                   std::span<const int> query_labels,
                                                   const Matrix& gallery_x,
                                                   std::span<const int> gallery_labels,
                                                   QuerySide query_side, DistanceMetric metric) {
  const bool from_a = query_side == QuerySide::A;
  const Matrix q = project(from_a ? proj.u_a : proj.u_b, query_x);
  const Matrix g = project(from_a ? proj.u_b : proj.u_a, gallery_x);
  return rank_by_distance(q, query_labels, g, gallery_labels, metric);
}

nlohmann::ordered_json EvalReport::to_json() const {
  auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["accuracy"] = opt(accuracy);
  j["nmi"] = opt(nmi);
  j["map"] = opt(map);
  j["recognition_rate"] = opt(recognition_rate);
  j["per_query_ap"] = per_query_ap;
  j["config"] = config;
  for (const auto& [key, value] : extra.items()) j[key] = value;
  return j;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace xmodal
