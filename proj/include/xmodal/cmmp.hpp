#pragma once

#include <optional>
#include <span>
#include <vector>

#include "xmodal/csc.hpp"
#include "xmodal/dataset.hpp"
#include "xmodal/numkernel.hpp"

namespace xmodal {

// n × c 0/1 class indicator, one 1 per row.
Matrix indicator_matrix(std::span<const int> labels, int c);

// Symmetric nonnegative semantic graph with zero diagonal, stored densely
// together with its edge list (i < j, w_ij > 0).
class SemanticGraph {
 public:
  struct Edge {
    Index i;
    Index j;
    double w;
  };

  explicit SemanticGraph(const Matrix& w);

  const Matrix& weights() const { return w_; }
  const std::vector<Edge>& edges() const { return edges_; }
  Index size() const { return w_.rows(); }

 private:
  Matrix w_;
  std::vector<Edge> edges_;
};

enum class GraphMode { Unsupervised, Supervised };

// Consensus affinity of a CSC run on the training modalities.
SemanticGraph semantic_graph_weights(const PairedDataset& ds, const CscParams& csc_params);
// w_ij = 1 iff samples i and j share a label (i ≠ j).
SemanticGraph supervised_graph(std::span<const int> labels);

// Pair term of the matching objective.
enum class PairPenalty {
  L21,               // λ2 ‖X_AᵀU_A − X_BᵀU_B‖_21
  SquaredFrobenius,  // λ2 ‖X_AᵀU_A − X_BᵀU_B‖_F²
};

struct CmmpParams {
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  double epsilon = 1e-8;
  int max_iters = 100;
  double tol = 1e-7;
  // Once the objective has settled, iteration continues until the
  // stationarity residual also drops to this level (0 disables the check).
  double residual_tol = 1e-6;
  PairPenalty pair_penalty = PairPenalty::L21;
  GraphMode graph_mode = GraphMode::Unsupervised;
  bool normalize = true;

  void validate() const;
};

struct ProjectionPair {
  Matrix u_a;  // d_A × c
  Matrix u_b;  // d_B × c
};

// Half-quadratic auxiliary state for fixed projections.
struct HQState {
  std::vector<double> p_a;  // one weight per graph edge
  std::vector<double> p_b;
  Vector q;                 // one weight per pair
  Matrix l_a;               // D − W with W_ij = w_ij p_ij
  Matrix l_b;
};

// p_ij = 1 / max(‖Uᵀ(x_i − x_j)‖, ε) over the graph's edges.
std::vector<double> hq_update_p(const Matrix& u, const Matrix& x, const SemanticGraph& graph,
                                double epsilon);
// q_i = 1 / max(‖U_Aᵀx_i^A − U_Bᵀx_i^B‖, ε).
Vector hq_update_q(const Matrix& u_a, const Matrix& u_b, const Matrix& x_a, const Matrix& x_b,
                   double epsilon);
Matrix weighted_laplacian(const SemanticGraph& graph, std::span<const double> p);
HQState hq_update(const ProjectionPair& proj, const Matrix& x_a, const Matrix& x_b,
                  const SemanticGraph& graph, double epsilon);

struct UpdateInfo {
  bool ridge_added = false;
};

// One Gauss-Seidel pass of the two linear systems: U_A is solved with the
// incoming U_B, then U_B with the fresh U_A.
ProjectionPair update_projections(const Matrix& x_a, const Matrix& x_b, const Matrix& y,
                                  const HQState& state, const ProjectionPair& current,
                                  const CmmpParams& params, UpdateInfo* info = nullptr);

// Exact matching objective
//   Σ_I ‖X_IᵀU_I − Y‖_F² + λ1 Σ_I Σ_{i<j} w_ij ‖U_Iᵀ(x_i − x_j)‖ + λ2 · pair term.
double cmmp_objective(const ProjectionPair& proj, const Matrix& x_a, const Matrix& x_b,
                      const Matrix& y, const SemanticGraph& graph, const CmmpParams& params);

// Same objective with every norm t replaced by t for t ≥ ε and (t²/ε + ε)/2
// below it. This is what the half-quadratic iteration decreases monotonically.
double cmmp_smoothed_objective(const ProjectionPair& proj, const Matrix& x_a, const Matrix& x_b,
                               const Matrix& y, const SemanticGraph& graph,
                               const CmmpParams& params);

// Distance between (U_A, U_B) and the right-hand sides of the optimality
// conditions rebuilt at (U_A, U_B); max over the two modalities.
double stationarity_residual(const ProjectionPair& proj, const Matrix& x_a, const Matrix& x_b,
                             const Matrix& y, const SemanticGraph& graph, const CmmpParams& params);

// Decoupled least-squares start (λ1 = λ2 = 0).
ProjectionPair least_squares_projections(const Matrix& x_a, const Matrix& x_b, const Matrix& y,
                                         UpdateInfo* info = nullptr);

struct CmmpFit {
  ProjectionPair projections;
  std::vector<double> objective_trace;  // exact objective, entry 0 at the start
  std::vector<double> smoothed_trace;
  double stationarity = 0.0;
  int iterations = 0;
  bool converged = false;
  bool ridge_added = false;
};

// Iterates from `init` on prepared inputs (already normalized, graph built).
CmmpFit cmmp_iterate(const Matrix& x_a, const Matrix& x_b, const Matrix& y,
                     const SemanticGraph& graph, const CmmpParams& params,
                     std::optional<ProjectionPair> init = std::nullopt);

struct CmmpModel {
  CmmpFit fit;
  SemanticGraph graph;
  int classes = 0;
};

// Full training pipeline: normalize, build the semantic graph, iterate.
// Uses the first two modalities and ds.labels.
CmmpModel cmmp_fit(const PairedDataset& ds, const CmmpParams& params, const CscParams& graph_params,
                   std::optional<ProjectionPair> init = std::nullopt);

// Uᵀ X.
Matrix project(const Matrix& u, const Matrix& x);

}  // namespace xmodal
