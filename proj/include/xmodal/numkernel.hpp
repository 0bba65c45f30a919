#pragma once

#include <Eigen/Dense>

#include <string_view>

#include "xmodal/error.hpp"

namespace xmodal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class DistanceMetric { L2, L1, Cosine, ChiSquare };

std::string_view to_string(DistanceMetric metric);
// Accepts "l2", "l1", "cosine", "chisq" (and "chisquare").
DistanceMetric parse_metric(std::string_view name);

// Throws NonFinite if any entry is NaN or Inf, ShapeError if empty.
void require_finite(const Matrix& m, std::string_view what);

// Solves A·X = B by direct factorization. Symmetric positive definite inputs
// go through Cholesky after symmetric diagonal scaling, everything else
// through partial-pivot LU. Throws SingularSystemError when the reciprocal
// condition estimate (of the scaled matrix on the Cholesky path) < 1e-12.
Matrix solve_linear(const Matrix& a, const Matrix& b);

inline constexpr double kSingularRcond = 1e-12;

struct EigenPairs {
  Vector values;   // ascending
  Matrix vectors;  // one orthonormal eigenvector per column
};

// k smallest eigenpairs of a symmetric matrix (symmetry tolerance 1e-10,
// relative to the largest entry).
EigenPairs sym_eig_smallest(const Matrix& s, Index k);

// Sum over rows of the row-wise Euclidean norms.
double l21_norm(const Matrix& m);
double frobenius_norm(const Matrix& m);

inline constexpr double kChiSquareEps = 1e-12;

// Entry (i, j) is the distance between column i of x and column j of y.
// Cosine distance is 1 - cosine similarity; a zero column is at distance 1
// from any nonzero column and 0 from another zero column.
Matrix pairwise_distances(const Matrix& x, const Matrix& y, DistanceMetric metric);

}  // namespace xmodal
