#include "xmodal/csc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace xmodal {

std::vector<double> CscParams::resolved_weights(Index num_modalities) const {
  if (modality_weights.empty()) {
    return std::vector<double>(static_cast<std::size_t>(num_modalities),
                               1.0 / static_cast<double>(num_modalities));
  }
  return modality_weights;
}

void CscParams::validate(Index num_modalities) const {
  if (!(lambda1 > 0.0)) throw Error(ErrorKind::Usage, "csc: lambda1 must be > 0");
  if (!(lambda3 >= 0.0)) throw Error(ErrorKind::Usage, "csc: lambda3 must be >= 0");
  if (!modality_weights.empty()) {
    if (static_cast<Index>(modality_weights.size()) != num_modalities) {
      throw Error(ErrorKind::Usage, "csc: need one modality weight per modality");
    }
    for (double w : modality_weights) {
      if (!(w >= 0.0)) throw Error(ErrorKind::Usage, "csc: modality weights must be nonnegative");
    }
  }
  if (max_outer_iters < 1) throw Error(ErrorKind::Usage, "csc: max_outer_iters must be >= 1");
  if (!(tol >= 0.0)) throw Error(ErrorKind::Usage, "csc: tol must be >= 0");
  if (knn_restrict && *knn_restrict < 1) throw Error(ErrorKind::Usage, "csc: knn_restrict must be >= 1");
}

namespace {

Matrix drop_column(const Matrix& x, Index i) {
  Matrix out(x.rows(), x.cols() - 1);
  out.leftCols(i) = x.leftCols(i);
  out.rightCols(x.cols() - 1 - i) = x.rightCols(x.cols() - 1 - i);
  return out;
}

Vector drop_entry(const Eigen::Ref<const Vector>& v, Index i) {
  Vector out(v.size() - 1);
  out.head(i) = v.head(i);
  out.tail(v.size() - 1 - i) = v.tail(v.size() - 1 - i);
  return out;
}

Matrix restricted_sweep(const Matrix& x, const Matrix& consensus, double weight, double lambda1,
                        double lambda3, const std::vector<std::vector<Index>>& neighborhoods) {
  const Index n = x.cols();
  Matrix z = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const auto& nbrs = neighborhoods[static_cast<std::size_t>(i)];
    const auto k = static_cast<Index>(nbrs.size());
    Matrix xs(x.rows(), k);
    Vector zs(k);
    for (Index a = 0; a < k; ++a) {
      xs.col(a) = x.col(nbrs[static_cast<std::size_t>(a)]);
      zs(a) = consensus(nbrs[static_cast<std::size_t>(a)], i);
    }
    Matrix g = weight * xs.transpose() * xs;
    g.diagonal().array() += lambda1 + lambda3;
    const Vector rhs = weight * xs.transpose() * x.col(i) + lambda3 * zs;
    const Vector sol = solve_linear(g, rhs);
    for (Index a = 0; a < k; ++a) z(nbrs[static_cast<std::size_t>(a)], i) = sol(a);
  }
  return z;
}

// With H = (w·XᵀX + (λ1+λ3)I)⁻¹, the minimizer under the constraint z_ii = 0
// is H·r − (H·r)_i / H_ii · H·e_i, where r only matters off entry i.
// H and H·w·XᵀX do not change between sweeps.
struct SweepOperator {
  Matrix h;
  Matrix h_gram;
};

SweepOperator make_sweep_operator(const Matrix& x, double weight, double lambda1, double lambda3) {
  const Matrix gram = weight * x.transpose() * x;
  Matrix g = gram;
  g.diagonal().array() += lambda1 + lambda3;
  SweepOperator op;
  op.h = solve_linear(g, Matrix::Identity(x.cols(), x.cols()));
  op.h_gram = op.h * gram;
  return op;
}

Matrix downdate_sweep(const SweepOperator& op, const Matrix& consensus, double lambda3) {
  Matrix p = op.h_gram;
  p.noalias() += lambda3 * op.h * consensus;
  const Vector scale = p.diagonal().cwiseQuotient(op.h.diagonal());
  p.noalias() -= op.h * scale.asDiagonal();
  p.diagonal().setZero();
  return p;
}

}  // namespace

Vector csc_column_update(Index i, const Matrix& x, const Vector& z_star_i, double weight,
                         double lambda1, double lambda3) {
  const Index n = x.cols();
  if (n < 2) throw Error(ErrorKind::DegenerateProblem, "csc: need at least two samples");
  if (i < 0 || i >= n) throw Error(ErrorKind::ShapeError, "csc: column index out of range");
  if (z_star_i.size() != n - 1) {
    throw Error(ErrorKind::ShapeError, "csc: consensus column must have n-1 entries");
  }
  const Matrix xbar = drop_column(x, i);
  Matrix g = weight * xbar.transpose() * xbar;
  g.diagonal().array() += lambda1 + lambda3;
  const Vector rhs = weight * xbar.transpose() * x.col(i) + lambda3 * z_star_i;
  return solve_linear(g, rhs);
}

Matrix consensus_update(std::span<const Matrix> z_list) {
  if (z_list.empty()) throw Error(ErrorKind::ShapeError, "consensus: no representations");
  Matrix sum = z_list.front();
  for (std::size_t m = 1; m < z_list.size(); ++m) {
    if (z_list[m].rows() != sum.rows() || z_list[m].cols() != sum.cols()) {
      throw Error(ErrorKind::ShapeError, "consensus: representation shapes differ");
    }
    sum += z_list[m];
  }
  return sum / static_cast<double>(z_list.size());
}

Matrix csc_update_representation(const Matrix& x, const Matrix& consensus, double weight,
                                 const CscParams& params,
                                 const std::vector<std::vector<Index>>* neighborhoods) {
  const Index n = x.cols();
  if (n < 2) throw Error(ErrorKind::DegenerateProblem, "csc: need at least two samples");
  if (consensus.rows() != n || consensus.cols() != n) {
    throw Error(ErrorKind::ShapeError, "csc: consensus graph must be n × n");
  }
  const double lambda1 = params.lambda1;
  const double lambda3 = params.lambda3;
  if (neighborhoods) return restricted_sweep(x, consensus, weight, lambda1, lambda3, *neighborhoods);

  if (params.solver == ColumnSolver::Direct) {
    Matrix z = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
      const Vector zi = csc_column_update(i, x, drop_entry(consensus.col(i), i), weight, lambda1, lambda3);
      z.col(i).head(i) = zi.head(i);
      z.col(i).tail(n - 1 - i) = zi.tail(n - 1 - i);
    }
    return z;
  }

  return downdate_sweep(make_sweep_operator(x, weight, lambda1, lambda3), consensus, lambda3);
}

double csc_objective(std::span<const Matrix> modalities, std::span<const Matrix> z_list,
                     const Matrix& consensus, const CscParams& params) {
  if (modalities.size() != z_list.size()) {
    throw Error(ErrorKind::ShapeError, "csc_objective: one representation per modality required");
  }
  const auto weights = params.resolved_weights(static_cast<Index>(modalities.size()));
  double total = 0.0;
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    const Matrix& x = modalities[m];
    const Matrix& z = z_list[m];
    total += weights[m] * (x - x * z).squaredNorm() + params.lambda1 * z.squaredNorm() +
             params.lambda3 * (z - consensus).squaredNorm();
  }
  return total;
}

double csc_objective(const PairedDataset& ds, const CscState& state, const CscParams& params) {
  return csc_objective(ds.modalities, state.z_list, state.z, params);
}

std::vector<std::vector<Index>> nearest_neighborhoods(const PairedDataset& ds, Index k) {
  const Index n = ds.size();
  if (k < 1 || k > n - 1) throw Error(ErrorKind::Usage, "knn neighborhood size must lie in [1, n-1]");
  Index rows = 0;
  for (const auto& x : ds.modalities) rows += x.rows();
  Matrix stacked(rows, n);
  Index offset = 0;
  for (const auto& x : ds.modalities) {
    stacked.middleRows(offset, x.rows()) = x;
    offset += x.rows();
  }
  const Matrix dist = pairwise_distances(stacked, stacked, DistanceMetric::L2);
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    std::vector<Index> others;
    for (Index j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    std::stable_sort(others.begin(), others.end(),
                     [&](Index a, Index b) { return dist(a, i) < dist(b, i); });
    others.resize(static_cast<std::size_t>(k));
    std::sort(others.begin(), others.end());
    out[static_cast<std::size_t>(i)] = std::move(others);
  }
  return out;
}

CscState csc_fit(const PairedDataset& ds, const CscParams& params) {
  ds.validate();
  const Index n = ds.size();
  const Index m = ds.num_modalities();
  if (n < 2) throw Error(ErrorKind::DegenerateProblem, "csc: need at least two samples");
  params.validate(m);
  const auto weights = params.resolved_weights(m);

  std::vector<std::vector<Index>> neighborhoods;
  if (params.knn_restrict) neighborhoods = nearest_neighborhoods(ds, *params.knn_restrict);
  const auto* nbrs = params.knn_restrict ? &neighborhoods : nullptr;

  CscState state;
  state.z_list.assign(static_cast<std::size_t>(m), Matrix::Zero(n, n));
  state.z = Matrix::Zero(n, n);
  state.objective_trace.push_back(csc_objective(ds, state, params));

  std::vector<SweepOperator> ops;
  if (!nbrs && params.solver == ColumnSolver::Downdate) {
    for (Index v = 0; v < m; ++v) {
      const auto idx = static_cast<std::size_t>(v);
      ops.push_back(make_sweep_operator(ds.modalities[idx], weights[idx], params.lambda1, params.lambda3));
    }
  }

  for (int it = 1; it <= params.max_outer_iters; ++it) {
    for (Index v = 0; v < m; ++v) {
      const auto idx = static_cast<std::size_t>(v);
      state.z_list[idx] = ops.empty()
                              ? csc_update_representation(ds.modalities[idx], state.z, weights[idx], params, nbrs)
                              : downdate_sweep(ops[idx], state.z, params.lambda3);
    }
    state.z = consensus_update(state.z_list);
    const double prev = state.objective_trace.back();
    const double cur = csc_objective(ds, state, params);
    state.objective_trace.push_back(cur);
    state.iterations = it;
    const double denom = std::max(std::abs(prev), std::numeric_limits<double>::min());
    if (std::abs(prev - cur) / denom < params.tol) {
      state.converged = true;
      break;
    }
  }
  return state;
}

Matrix affinity_from_representation(const Matrix& z) {
  if (z.rows() != z.cols()) throw Error(ErrorKind::ShapeError, "affinity: representation must be square");
  return 0.5 * (z.cwiseAbs() + z.transpose().cwiseAbs());
}

std::vector<int> kmeans_rows(const Matrix& points, int k, std::uint64_t seed, int max_iters) {
  const Index n = points.rows();
  if (k < 1 || k > n) throw Error(ErrorKind::InvalidClusterCount, "k-means: k must lie in [1, n]");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> first(0, n - 1);
  Matrix centers(k, points.cols());
  centers.row(0) = points.row(first(rng));
  Vector nearest = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    Index far = 0;
    nearest.maxCoeff(&far);  // first maximal index
    centers.row(c) = points.row(far);
    nearest = nearest.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  Vector own_dist(n);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      const double d = (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      own_dist(i) = d;
      if (assign[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed && it > 0) break;

    Matrix sums = Matrix::Zero(k, points.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        Index far = 0;
        own_dist.maxCoeff(&far);
        centers.row(c) = points.row(far);
        own_dist(far) = 0.0;
      }
    }
  }
  return assign;
}

std::vector<int> spectral_cluster(const Matrix& affinity, int c, std::uint64_t seed) {
  const Index n = affinity.rows();
  if (affinity.cols() != n) throw Error(ErrorKind::ShapeError, "spectral: affinity must be square");
  if (c < 1 || c > n) {
    throw Error(ErrorKind::InvalidClusterCount,
                "cluster count " + std::to_string(c) + " outside [1, " + std::to_string(n) + "]");
  }
  if (affinity.minCoeff() < 0.0) {
    throw Error(ErrorKind::DegenerateProblem, "spectral: affinity has negative entries");
  }
  const Vector degree = affinity.rowwise().sum();
  Vector inv_sqrt(n);
  for (Index i = 0; i < n; ++i) inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;
  Matrix laplacian = -(inv_sqrt.asDiagonal() * affinity * inv_sqrt.asDiagonal());
  laplacian.diagonal().array() += 1.0;
  laplacian = 0.5 * (laplacian + laplacian.transpose());

  Matrix embedding = sym_eig_smallest(laplacian, c).vectors;
  for (Index i = 0; i < n; ++i) {
    const double norm = embedding.row(i).norm();
    if (norm > 0.0) embedding.row(i) /= norm;
  }
  auto labels = kmeans_rows(embedding, c, seed);
  for (auto& l : labels) ++l;
  return labels;
}

Matrix lsr_representation(const Matrix& x, double lambda) {
  CscParams params;
  params.lambda1 = lambda;
  params.lambda3 = 0.0;
  params.validate(1);
  return csc_update_representation(x, Matrix::Zero(x.cols(), x.cols()), 1.0, params);
}

Matrix lsr_concat_baseline(const PairedDataset& ds, double lambda, const CscParams& params) {
  ds.validate();
  const Index m = ds.num_modalities();
  const auto weights = params.resolved_weights(m);
  Index rows = 0;
  for (const auto& x : ds.modalities) rows += x.rows();
  Matrix stacked(rows, ds.size());
  Index offset = 0;
  for (Index v = 0; v < m; ++v) {
    const auto& x = ds.modalities[static_cast<std::size_t>(v)];
    stacked.middleRows(offset, x.rows()) = std::sqrt(weights[static_cast<std::size_t>(v)]) * x;
    offset += x.rows();
  }
  return lsr_representation(stacked, lambda);
}

Matrix gaussian_affinity(const Matrix& x) {
  const Index n = x.cols();
  if (n < 2) throw Error(ErrorKind::DegenerateProblem, "gaussian affinity: need at least two points");
  const Matrix dist = pairwise_distances(x, x, DistanceMetric::L2);
  double sum = 0.0;
  for (Index j = 1; j < n; ++j)
    for (Index i = 0; i < j; ++i) sum += dist(i, j);
  const double sigma = sum / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
  if (!(sigma > 0.0)) throw Error(ErrorKind::DegenerateKernel, "gaussian affinity: all points coincide");
  Matrix a = (-dist.array().square() / (2.0 * sigma * sigma)).exp().matrix();
  a.diagonal().setZero();
  return a;
}

}  // namespace xmodal
