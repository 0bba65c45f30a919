#include "xmodal/numkernel.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace xmodal {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::AsymmetricInput: return "AsymmetricInput";
    case ErrorKind::InvalidForMetric: return "InvalidForMetric";
    case ErrorKind::MalformedInput: return "MalformedInput";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::DegenerateProblem: return "DegenerateProblem";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::InvalidClusterCount: return "InvalidClusterCount";
    case ErrorKind::DegenerateKernel: return "DegenerateKernel";
    case ErrorKind::LabelError: return "LabelError";
    case ErrorKind::UndefinedAP: return "UndefinedAP";
    case ErrorKind::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::Usage: return "Usage";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

std::string_view to_string(DistanceMetric metric) {
  switch (metric) {
    case DistanceMetric::L2: return "l2";
    case DistanceMetric::L1: return "l1";
    case DistanceMetric::Cosine: return "cosine";
    case DistanceMetric::ChiSquare: return "chisq";
  }
  return "unknown";
}

DistanceMetric parse_metric(std::string_view name) {
  if (name == "l2") return DistanceMetric::L2;
  if (name == "l1") return DistanceMetric::L1;
  if (name == "cosine") return DistanceMetric::Cosine;
  if (name == "chisq" || name == "chisquare") return DistanceMetric::ChiSquare;
  throw Error(ErrorKind::Usage, "unknown distance metric '" + std::string(name) + "'");
}

void require_finite(const Matrix& m, std::string_view what) {
  if (m.rows() < 1 || m.cols() < 1) {
    throw Error(ErrorKind::ShapeError, std::string(what) + ": empty matrix");
  }
  if (!m.allFinite()) {
    throw Error(ErrorKind::NonFinite, std::string(what) + ": non-finite entry");
  }
}

namespace {

bool is_symmetric(const Matrix& a, double rel_tol) {
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

[[noreturn]] void throw_singular(double rcond) {
  std::ostringstream msg;
  msg << "linear system is singular to working precision (rcond estimate " << rcond << ")";
  throw SingularSystemError(rcond, msg.str());
}

}  // namespace

Matrix solve_linear(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorKind::ShapeError, "solve_linear: coefficient matrix is not square");
  }
  if (b.rows() != a.rows()) {
    throw Error(ErrorKind::ShapeError, "solve_linear: right-hand side row count mismatch");
  }
  if (is_symmetric(a, 1e-14) && (a.diagonal().array() > 0.0).all()) {
    // Symmetric diagonal (Jacobi) scaling first: reweighted systems can carry
    // a few very large diagonal entries that say nothing about singularity.
    const Vector scale = a.diagonal().cwiseSqrt().cwiseInverse();
    const Matrix scaled = scale.asDiagonal() * a * scale.asDiagonal();
    Eigen::LLT<Matrix> llt(scaled);
    if (llt.info() == Eigen::Success) {
      const double rcond = llt.rcond();
      if (!(rcond >= kSingularRcond)) throw_singular(rcond);
      return scale.asDiagonal() * llt.solve(scale.asDiagonal() * b);
    }
  }
  Eigen::PartialPivLU<Matrix> lu(a);
  const double rcond = lu.rcond();
  if (!(rcond >= kSingularRcond)) throw_singular(rcond);
  return lu.solve(b);
}

EigenPairs sym_eig_smallest(const Matrix& s, Index k) {
  if (s.rows() != s.cols()) {
    throw Error(ErrorKind::ShapeError, "sym_eig_smallest: matrix is not square");
  }
  if (k < 1 || k > s.rows()) {
    throw Error(ErrorKind::ShapeError, "sym_eig_smallest: k out of range");
  }
  if (!is_symmetric(s, 1e-10)) {
    throw Error(ErrorKind::AsymmetricInput, "sym_eig_smallest: input is not symmetric");
  }
  // Eigen only reads the lower triangle; symmetrize so both halves count.
  const Matrix sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::DegenerateProblem, "sym_eig_smallest: eigensolver did not converge");
  }
  return {solver.eigenvalues().head(k), solver.eigenvectors().leftCols(k)};
}

double l21_norm(const Matrix& m) { return m.rowwise().norm().sum(); }

double frobenius_norm(const Matrix& m) { return m.norm(); }

Matrix pairwise_distances(const Matrix& x, const Matrix& y, DistanceMetric metric) {
  if (x.rows() != y.rows()) {
    throw Error(ErrorKind::ShapeError, "pairwise_distances: feature dimensions differ");
  }
  if (metric == DistanceMetric::ChiSquare && (x.minCoeff() < 0.0 || y.minCoeff() < 0.0)) {
    throw Error(ErrorKind::InvalidForMetric, "chi-square distance requires nonnegative inputs");
  }
  const Index n = x.cols();
  const Index m = y.cols();
  Matrix d(n, m);
  switch (metric) {
    case DistanceMetric::L2:
      for (Index j = 0; j < m; ++j)
        for (Index i = 0; i < n; ++i) d(i, j) = (x.col(i) - y.col(j)).norm();
      break;
    case DistanceMetric::L1:
      for (Index j = 0; j < m; ++j)
        for (Index i = 0; i < n; ++i) d(i, j) = (x.col(i) - y.col(j)).lpNorm<1>();
      break;
    case DistanceMetric::Cosine: {
      const Vector xn = x.colwise().norm().transpose();
      const Vector yn = y.colwise().norm().transpose();
      for (Index j = 0; j < m; ++j) {
        for (Index i = 0; i < n; ++i) {
          if (xn(i) == 0.0 && yn(j) == 0.0) {
            d(i, j) = 0.0;
          } else if (xn(i) == 0.0 || yn(j) == 0.0) {
            d(i, j) = 1.0;
          } else {
            d(i, j) = 1.0 - x.col(i).dot(y.col(j)) / (xn(i) * yn(j));
          }
        }
      }
      break;
    }
    case DistanceMetric::ChiSquare:
      for (Index j = 0; j < m; ++j) {
        for (Index i = 0; i < n; ++i) {
          const auto diff = (x.col(i) - y.col(j)).array();
          const auto sum = (x.col(i) + y.col(j)).array() + kChiSquareEps;
          d(i, j) = (diff.square() / sum).sum();
        }
      }
      break;
  }
  return d;
}

}  // namespace xmodal
