#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "xmodal/dataset.hpp"
#include "xmodal/numkernel.hpp"

namespace xmodal {

// How the n constrained column systems of one sweep are solved.
enum class ColumnSolver {
  // Factor w·XᵀX + (λ1+λ3)I once and correct each column for the zero
  // diagonal constraint with a rank-one term.
  Downdate,
  // Solve each (n-1)×(n-1) system on its own. Reference path.
  Direct,
};

struct CscParams {
  double lambda1 = 0.1;  // ‖Z_I‖_F² weight, must be > 0
  double lambda3 = 1.0;  // ‖Z_I − Z‖_F² weight (twice the pairwise weight)
  // One weight per modality; empty means 1/m for every modality.
  std::vector<double> modality_weights;
  int max_outer_iters = 100;
  double tol = 1e-6;
  std::optional<Index> knn_restrict;
  ColumnSolver solver = ColumnSolver::Downdate;

  std::vector<double> resolved_weights(Index num_modalities) const;
  void validate(Index num_modalities) const;
};

struct CscState {
  std::vector<Matrix> z_list;  // per-modality self-representation, zero diagonal
  Matrix z;                    // consensus graph
  std::vector<double> objective_trace;  // entry 0 is the all-zero start
  int iterations = 0;
  bool converged = false;
};

// Column i of Z_I with entry i removed, from the closed form
//   (w·X̄ᵀX̄ + (λ1+λ3) I)⁻¹ (w·X̄ᵀx_i + λ3·z*_i)
// where X̄ is X without column i. i is zero-based.
Vector csc_column_update(Index i, const Matrix& x, const Vector& z_star_i, double weight,
                         double lambda1, double lambda3);

// Entrywise mean of the per-modality representations.
Matrix consensus_update(std::span<const Matrix> z_list);

// One sweep over all columns of Z_I given the consensus Z.
Matrix csc_update_representation(const Matrix& x, const Matrix& consensus, double weight,
                                 const CscParams& params,
                                 const std::vector<std::vector<Index>>* neighborhoods = nullptr);

CscState csc_fit(const PairedDataset& ds, const CscParams& params);

double csc_objective(std::span<const Matrix> modalities, std::span<const Matrix> z_list,
                     const Matrix& consensus, const CscParams& params);
double csc_objective(const PairedDataset& ds, const CscState& state, const CscParams& params);

// A = (|Zᵀ| + |Z|) / 2.
Matrix affinity_from_representation(const Matrix& z);

// Normalized spectral clustering (Ncut relaxation) with a seeded k-means.
// Returns ids in 1..c.
std::vector<int> spectral_cluster(const Matrix& affinity, int c, std::uint64_t seed);

// Deterministic k-means on the rows of `points`: farthest-point seeding from
// a seeded first pick, lowest-index tie-breaks, empty clusters re-seeded with
// the farthest point. Returns zero-based assignments.
std::vector<int> kmeans_rows(const Matrix& points, int k, std::uint64_t seed, int max_iters = 100);

// Least-squares-regression subspace clustering on the weight-scaled vertical
// concatenation of all modalities (weights from params, λ3 unused).
Matrix lsr_concat_baseline(const PairedDataset& ds, double lambda, const CscParams& params);

// Single-modality least-squares-regression representation.
Matrix lsr_representation(const Matrix& x, double lambda);

// exp(−‖x_i − x_j‖² / (2σ²)) with σ the mean pairwise Euclidean distance.
Matrix gaussian_affinity(const Matrix& x);

// Indices of the k nearest columns of each column (self excluded) in the
// concatenation of all modalities.
std::vector<std::vector<Index>> nearest_neighborhoods(const PairedDataset& ds, Index k);

}  // namespace xmodal
