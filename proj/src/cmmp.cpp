#include "xmodal/cmmp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace xmodal {

Matrix indicator_matrix(std::span<const int> labels, int c) {
  if (c < 1) throw Error(ErrorKind::LabelError, "indicator: class count must be >= 1");
  Matrix y = Matrix::Zero(static_cast<Index>(labels.size()), c);
  std::vector<bool> present(static_cast<std::size_t>(c), false);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 1 || l > c) {
      throw Error(ErrorKind::LabelError, "label " + std::to_string(l) + " at sample " +
                                             std::to_string(i + 1) + " outside 1.." + std::to_string(c));
    }
    y(static_cast<Index>(i), l - 1) = 1.0;
    present[static_cast<std::size_t>(l - 1)] = true;
  }
  for (int l = 0; l < c; ++l) {
    if (!present[static_cast<std::size_t>(l)]) {
      throw Error(ErrorKind::LabelError, "class " + std::to_string(l + 1) + " has no samples");
    }
  }
  return y;
}

SemanticGraph::SemanticGraph(const Matrix& w) {
  if (w.rows() != w.cols()) throw Error(ErrorKind::ShapeError, "semantic graph must be square");
  require_finite(w, "semantic graph");
  if (w.minCoeff() < 0.0) throw Error(ErrorKind::DegenerateProblem, "semantic graph has negative weights");
  const double scale = std::max(1.0, w.maxCoeff());
  if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorKind::AsymmetricInput, "semantic graph is not symmetric");
  }
  w_ = 0.5 * (w + w.transpose());
  w_.diagonal().setZero();
  for (Index j = 1; j < w_.cols(); ++j)
    for (Index i = 0; i < j; ++i)
      if (w_(i, j) > 0.0) edges_.push_back({i, j, w_(i, j)});
}

SemanticGraph semantic_graph_weights(const PairedDataset& ds, const CscParams& csc_params) {
  const CscState state = csc_fit(ds, csc_params);
  return SemanticGraph(affinity_from_representation(state.z));
}

SemanticGraph supervised_graph(std::span<const int> labels) {
  const auto n = static_cast<Index>(labels.size());
  Matrix w = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i)
      if (i != j && labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) w(i, j) = 1.0;
  return SemanticGraph(w);
}

void CmmpParams::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw Error(ErrorKind::Usage, "cmmp: lambdas must be >= 0");
  if (!(epsilon > 0.0)) throw Error(ErrorKind::Usage, "cmmp: epsilon must be > 0");
  if (max_iters < 1) throw Error(ErrorKind::Usage, "cmmp: max_iters must be >= 1");
  if (!(tol >= 0.0)) throw Error(ErrorKind::Usage, "cmmp: tol must be >= 0");
  if (!(residual_tol >= 0.0)) throw Error(ErrorKind::Usage, "cmmp: residual_tol must be >= 0");
}

std::vector<double> hq_update_p(const Matrix& u, const Matrix& x, const SemanticGraph& graph,
                                double epsilon) {
  if (u.rows() != x.rows()) throw Error(ErrorKind::ShapeError, "hq_update_p: U and X dimensions differ");
  const Matrix proj = u.transpose() * x;
  std::vector<double> p;
  p.reserve(graph.edges().size());
  for (const auto& e : graph.edges()) {
    p.push_back(1.0 / std::max((proj.col(e.i) - proj.col(e.j)).norm(), epsilon));
  }
  return p;
}

Vector hq_update_q(const Matrix& u_a, const Matrix& u_b, const Matrix& x_a, const Matrix& x_b,
                   double epsilon) {
  if (x_a.cols() != x_b.cols()) throw Error(ErrorKind::ShapeError, "hq_update_q: sample counts differ");
  const Matrix diff = u_a.transpose() * x_a - u_b.transpose() * x_b;
  Vector q(diff.cols());
  for (Index i = 0; i < diff.cols(); ++i) q(i) = 1.0 / std::max(diff.col(i).norm(), epsilon);
  return q;
}

Matrix weighted_laplacian(const SemanticGraph& graph, std::span<const double> p) {
  if (p.size() != graph.edges().size()) throw Error(ErrorKind::ShapeError, "laplacian: one weight per edge");
  const Index n = graph.size();
  Matrix l = Matrix::Zero(n, n);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto& e = graph.edges()[k];
    const double w = e.w * p[k];
    l(e.i, e.j) -= w;
    l(e.j, e.i) -= w;
    l(e.i, e.i) += w;
    l(e.j, e.j) += w;
  }
  return l;
}

HQState hq_update(const ProjectionPair& proj, const Matrix& x_a, const Matrix& x_b,
                  const SemanticGraph& graph, double epsilon) {
  HQState s;
  s.p_a = hq_update_p(proj.u_a, x_a, graph, epsilon);
  s.p_b = hq_update_p(proj.u_b, x_b, graph, epsilon);
  s.q = hq_update_q(proj.u_a, proj.u_b, x_a, x_b, epsilon);
  s.l_a = weighted_laplacian(graph, s.p_a);
  s.l_b = weighted_laplacian(graph, s.p_b);
  return s;
}

namespace {

constexpr double kRidge = 1e-10;

// Diagonal pair weights b_i entering X(I + λ1/2·L + B)Xᵀ. The quadratic
// surrogate of t at t0 is (t²/t0 + t0)/2, hence the halved coefficients;
// dividing the whole stationarity condition by 2 puts the data term at I.
Vector pair_coefficients(const HQState& state, const CmmpParams& params, Index n) {
  if (params.pair_penalty == PairPenalty::SquaredFrobenius) return Vector::Constant(n, params.lambda2);
  return 0.5 * params.lambda2 * state.q;
}

Matrix solve_block(const Matrix& x, const Matrix& laplacian, const Vector& pair, const Matrix& y,
                   const Matrix& partner_proj, const CmmpParams& params, UpdateInfo* info) {
  // partner_proj is X_JᵀU_J (n × c) for the other modality J.
  const Index d = x.rows();
  const Index n = x.cols();
  Matrix lhs = x * x.transpose();
  if (params.lambda1 != 0.0) lhs.noalias() += 0.5 * params.lambda1 * (x * laplacian) * x.transpose();
  lhs.noalias() += x * pair.asDiagonal() * x.transpose();
  if (d >= n) {
    lhs.diagonal().array() += kRidge;
    if (info) info->ridge_added = true;
  }
  const Matrix target = y + pair.asDiagonal() * partner_proj;
  return solve_linear(lhs, x * target);
}

double smoothed_norm(double t, double eps) { return t >= eps ? t : 0.5 * (t * t / eps + eps); }

double objective_impl(const ProjectionPair& proj, const Matrix& x_a, const Matrix& x_b,
                      const Matrix& y, const SemanticGraph& graph, const CmmpParams& params,
                      bool smoothed) {
  const Matrix pa = x_a.transpose() * proj.u_a;  // n × c
  const Matrix pb = x_b.transpose() * proj.u_b;
  if (pa.rows() != y.rows() || pa.cols() != y.cols() || pb.rows() != y.rows() || pb.cols() != y.cols()) {
    throw Error(ErrorKind::ShapeError, "cmmp objective: projections do not match Y");
  }
  const double eps = params.epsilon;
  auto norm = [&](double t) { return smoothed ? smoothed_norm(t, eps) : t; };

  double total = (pa - y).squaredNorm() + (pb - y).squaredNorm();
  if (params.lambda1 != 0.0) {
    double graph_term = 0.0;
    for (const auto& e : graph.edges()) {
      graph_term += e.w * (norm((pa.row(e.i) - pa.row(e.j)).norm()) + norm((pb.row(e.i) - pb.row(e.j)).norm()));
    }
    total += params.lambda1 * graph_term;
  }
  if (params.lambda2 != 0.0) {
    const Matrix r = pa - pb;
    double pair_term = 0.0;
    if (params.pair_penalty == PairPenalty::SquaredFrobenius) {
      pair_term = r.squaredNorm();
    } else {
      for (Index i = 0; i < r.rows(); ++i) pair_term += norm(r.row(i).norm());
    }
    total += params.lambda2 * pair_term;
  }
  return total;
}

void check_shapes(const Matrix& x_a, const Matrix& x_b, const Matrix& y, const SemanticGraph& graph) {
  if (x_a.cols() != x_b.cols() || x_a.cols() != y.rows() || graph.size() != y.rows()) {
    throw Error(ErrorKind::ShapeError, "cmmp: sample counts of X_A, X_B, Y and the graph differ");
  }
}

}  // namespace

ProjectionPair update_projections(const Matrix& x_a, const Matrix& x_b, const Matrix& y,
                                  const HQState& state, const ProjectionPair& current,
                                  const CmmpParams& params, UpdateInfo* info) {
  const Vector pair = pair_coefficients(state, params, y.rows());
  ProjectionPair next;
  next.u_a = solve_block(x_a, state.l_a, pair, y, x_b.transpose() * current.u_b, params, info);
  next.u_b = solve_block(x_b, state.l_b, pair, y, x_a.transpose() * next.u_a, params, info);
  return next;
}

double cmmp_objective(const ProjectionPair& proj, const Matrix& x_a, const Matrix& x_b,
                      const Matrix& y, const SemanticGraph& graph, const CmmpParams& params) {
  return objective_impl(proj, x_a, x_b, y, graph, params, false);
}

double cmmp_smoothed_objective(const ProjectionPair& proj, const Matrix& x_a, const Matrix& x_b,
                               const Matrix& y, const SemanticGraph& graph,
                               const CmmpParams& params) {
  return objective_impl(proj, x_a, x_b, y, graph, params, true);
}

double stationarity_residual(const ProjectionPair& proj, const Matrix& x_a, const Matrix& x_b,
                             const Matrix& y, const SemanticGraph& graph, const CmmpParams& params) {
  check_shapes(x_a, x_b, y, graph);
  const HQState state = hq_update(proj, x_a, x_b, graph, params.epsilon);
  const Vector pair = pair_coefficients(state, params, y.rows());
  const Matrix rhs_a = solve_block(x_a, state.l_a, pair, y, x_b.transpose() * proj.u_b, params, nullptr);
  const Matrix rhs_b = solve_block(x_b, state.l_b, pair, y, x_a.transpose() * proj.u_a, params, nullptr);
  return std::max((proj.u_a - rhs_a).norm(), (proj.u_b - rhs_b).norm());
}

ProjectionPair least_squares_projections(const Matrix& x_a, const Matrix& x_b, const Matrix& y,
                                         UpdateInfo* info) {
  CmmpParams plain;
  plain.lambda1 = 0.0;
  plain.lambda2 = 0.0;
  const Vector none = Vector::Zero(y.rows());
  const Matrix unused;
  ProjectionPair out;
  out.u_a = solve_block(x_a, unused, none, y, Matrix::Zero(y.rows(), y.cols()), plain, info);
  out.u_b = solve_block(x_b, unused, none, y, Matrix::Zero(y.rows(), y.cols()), plain, info);
  return out;
}

CmmpFit cmmp_iterate(const Matrix& x_a, const Matrix& x_b, const Matrix& y,
                     const SemanticGraph& graph, const CmmpParams& params,
                     std::optional<ProjectionPair> init) {
  params.validate();
  check_shapes(x_a, x_b, y, graph);
  CmmpFit fit;
  UpdateInfo info;
  if (init) {
    if (init->u_a.rows() != x_a.rows() || init->u_b.rows() != x_b.rows() ||
        init->u_a.cols() != y.cols() || init->u_b.cols() != y.cols()) {
      throw Error(ErrorKind::ShapeError, "cmmp: initial projections have the wrong shape");
    }
    fit.projections = *init;
  } else {
    fit.projections = least_squares_projections(x_a, x_b, y, &info);
  }

  auto record = [&] {
    fit.objective_trace.push_back(cmmp_objective(fit.projections, x_a, x_b, y, graph, params));
    fit.smoothed_trace.push_back(cmmp_smoothed_objective(fit.projections, x_a, x_b, y, graph, params));
  };
  record();

  for (int it = 1; it <= params.max_iters; ++it) {
    const HQState state = hq_update(fit.projections, x_a, x_b, graph, params.epsilon);
    fit.projections = update_projections(x_a, x_b, y, state, fit.projections, params, &info);
    record();
    fit.iterations = it;
    const double prev = fit.smoothed_trace[fit.smoothed_trace.size() - 2];
    const double cur = fit.smoothed_trace.back();
    const double denom = std::max(std::abs(prev), std::numeric_limits<double>::min());
    if (std::abs(prev - cur) / denom < params.tol) {
      if (params.residual_tol > 0.0) {
        fit.stationarity = stationarity_residual(fit.projections, x_a, x_b, y, graph, params);
        if (fit.stationarity > params.residual_tol) continue;
      }
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged || params.residual_tol == 0.0) {
    fit.stationarity = stationarity_residual(fit.projections, x_a, x_b, y, graph, params);
  }
  fit.ridge_added = info.ridge_added;
  return fit;
}

CmmpModel cmmp_fit(const PairedDataset& ds, const CmmpParams& params, const CscParams& graph_params,
                   std::optional<ProjectionPair> init) {
  params.validate();
  ds.validate();
  if (ds.num_modalities() < 2) throw Error(ErrorKind::ShapeError, "cmmp: need two modalities");
  if (!ds.labels) throw Error(ErrorKind::LabelError, "cmmp: training labels are required");

  PairedDataset pair;
  pair.modalities = {ds.modalities[0], ds.modalities[1]};
  pair.labels = ds.labels;
  if (params.normalize) pair = unit_normalize(pair);

  const int c = ds.num_classes();
  const Matrix y = indicator_matrix(*pair.labels, c);
  SemanticGraph graph = params.graph_mode == GraphMode::Supervised
                            ? supervised_graph(*pair.labels)
                            : semantic_graph_weights(pair, graph_params);
  CmmpFit fit = cmmp_iterate(pair.modalities[0], pair.modalities[1], y, graph, params, std::move(init));
  return CmmpModel{std::move(fit), std::move(graph), c};
}

Matrix project(const Matrix& u, const Matrix& x) {
  if (u.rows() != x.rows()) {
    throw Error(ErrorKind::ShapeError, "project: subspace has " + std::to_string(u.rows()) +
                                           " rows but data has dimension " + std::to_string(x.rows()));
  }
  return u.transpose() * x;
}

}  // namespace xmodal
