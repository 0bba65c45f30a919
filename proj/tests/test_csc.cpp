#include "doctest.h"

#include <random>

#include "oracles.hpp"
#include "xmodal/csc.hpp"
#include "xmodal/eval.hpp"

using namespace xmodal;

namespace {

PairedDataset random_pair(std::mt19937_64& rng, int n, int da = 6, int db = 8) {
  PairedDataset ds;
  ds.modalities = {oracle::random_matrix(da, n, rng), oracle::random_matrix(db, n, rng)};
  return ds;
}

Vector without(const Vector& v, Index i) {
  Vector out(v.size() - 1);
  for (Index k = 0, t = 0; k < v.size(); ++k)
    if (k != i) out[t++] = v[k];
  return out;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("column update: scalar example") {
  Matrix x(1, 2);
  x << 1, 2;
  const Vector z = csc_column_update(0, x, Vector::Zero(1), 1.0, 1.0, 0.0);
  CHECK(z[0] == doctest::Approx(0.4).epsilon(1e-14));
  // Grid search over (1 - 2z)² + z².
  double best = 0, best_f = 1e300;
  for (int k = -2000; k <= 2000; ++k) {
    const double t = k * 1e-3;
    const double f = (1 - 2 * t) * (1 - 2 * t) + t * t;
    if (f < best_f) {
      best_f = f;
      best = t;
    }
  }
  CHECK(z[0] == doctest::Approx(best).epsilon(1e-3));
}

TEST_CASE("column update: matches the stacked least-squares oracle") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> size(2, 10), dim(1, 6);
  std::uniform_real_distribution<double> lam(0.01, 3.0);
  for (int t = 0; t < 50; ++t) {
    const int n = size(rng);
    const Matrix x = oracle::random_matrix(dim(rng), n, rng);
    const int i = std::uniform_int_distribution<int>(0, n - 1)(rng);
    const Vector zs = oracle::random_matrix(n - 1, 1, rng);
    const double w = lam(rng), l1 = lam(rng), l3 = lam(rng);
    const Vector got = csc_column_update(i, x, zs, w, l1, l3);
    const Vector ref = oracle::column_minimizer(x, i, zs, w, l1, l3);
    CHECK((got - ref).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("column update: finite-difference gradient vanishes") {
  std::mt19937_64 rng(8);
  const Matrix x = oracle::random_matrix(3, 5, rng);
  for (int i = 0; i < 5; ++i) {
    const Vector zs = oracle::random_matrix(4, 1, rng);
    const Vector z = csc_column_update(i, x, zs, 0.5, 0.2, 0.7);
    const auto f = [&](const Vector& v) { return oracle::column_objective(x, i, v, zs, 0.5, 0.2, 0.7); };
    CHECK(oracle::fd_gradient(f, z).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("column update: large lambda3 pulls toward the consensus column") {
  std::mt19937_64 rng(4);
  const Matrix x = oracle::random_matrix(4, 6, rng);
  const Vector zs = oracle::random_matrix(5, 1, rng);
  double prev = 1e300;
  for (double l3 : {0.1, 1.0, 10.0, 100.0, 1e4, 1e6}) {
    const double gap = (csc_column_update(2, x, zs, 1.0, 0.1, l3) - zs).norm();
    CHECK(gap <= prev);
    prev = gap;
  }
  CHECK(prev <= 1e-4);
}

TEST_CASE("column update: degenerate and invalid inputs") {
  CHECK(kind_of([] { csc_column_update(0, Matrix::Ones(2, 1), Vector(0), 1, 1, 0); }) ==
        ErrorKind::DegenerateProblem);
  CHECK_THROWS_AS(csc_column_update(3, Matrix::Ones(2, 3), Vector::Zero(2), 1, 1, 0), Error);
  CHECK_THROWS_AS(csc_column_update(0, Matrix::Ones(2, 3), Vector::Zero(3), 1, 1, 0), Error);
}

TEST_CASE("consensus update") {
  Matrix za(2, 2), zb(2, 2), want(2, 2);
  za << 0, 1, 0, 0;
  zb << 0, 0, 1, 0;
  want << 0, 0.5, 0.5, 0;
  std::vector<Matrix> two{za, zb};
  CHECK(consensus_update(two) == want);
  std::vector<Matrix> same{za, za};
  CHECK(consensus_update(same) == za);
  std::vector<Matrix> three{za, za, za};
  CHECK(consensus_update(three).isApprox(za));
  std::vector<Matrix> bad{za, Matrix::Zero(3, 3)};
  CHECK(kind_of([&] { consensus_update(bad); }) == ErrorKind::ShapeError);
}

TEST_CASE("sweep: downdate and direct paths agree, column order is irrelevant") {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 5; ++t) {
    const Matrix x = oracle::random_matrix(5, 9, rng);
    Matrix cons = oracle::random_matrix(9, 9, rng);
    cons.diagonal().setZero();
    CscParams p;
    p.lambda1 = 0.3;
    p.lambda3 = 0.8;
    p.solver = ColumnSolver::Downdate;
    const Matrix fast = csc_update_representation(x, cons, 0.5, p);
    p.solver = ColumnSolver::Direct;
    const Matrix slow = csc_update_representation(x, cons, 0.5, p);
    CHECK((fast - slow).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(fast.diagonal().cwiseAbs().maxCoeff() == 0.0);

    // Columns computed one at a time, in reverse order.
    Matrix manual = Matrix::Zero(9, 9);
    for (Index i = 8; i >= 0; --i) {
      const Vector col = csc_column_update(i, x, without(cons.col(i), i), 0.5, 0.3, 0.8);
      for (Index k = 0, s = 0; k < 9; ++k)
        if (k != i) manual(k, i) = col[s++];
    }
    CHECK((manual - fast).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("csc_fit: monotone trace and zero diagonals") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 5; ++t) {
    const PairedDataset ds = random_pair(rng, 15);
    CscParams p;
    p.tol = 1e-10;
    const CscState s = csc_fit(ds, p);
    for (std::size_t k = 1; k < s.objective_trace.size(); ++k) {
      CHECK(s.objective_trace[k] <= s.objective_trace[k - 1] + 1e-10 * std::abs(s.objective_trace[k - 1]));
    }
    CHECK(s.z.diagonal().cwiseAbs().maxCoeff() == 0.0);
    for (const auto& z : s.z_list) CHECK(z.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK((s.z - consensus_update(s.z_list)).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(csc_objective(ds, s, p) == doctest::Approx(s.objective_trace.back()).epsilon(1e-12));
  }
}

TEST_CASE("csc_fit: lambda3 = 0 decouples the modalities") {
  std::mt19937_64 rng(17);
  const PairedDataset ds = random_pair(rng, 8);
  CscParams p;
  p.lambda3 = 0.0;
  p.lambda1 = 0.4;
  const CscState s = csc_fit(ds, p);
  for (std::size_t v = 0; v < 2; ++v) {
    for (Index i = 0; i < 8; ++i) {
      const Vector col = csc_column_update(i, ds.modalities[v], Vector::Zero(7), 0.5, 0.4, 0.0);
      CHECK((without(s.z_list[v].col(i), i) - col).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("csc_fit: identical modalities give identical representations") {
  std::mt19937_64 rng(19);
  const Matrix x = oracle::random_matrix(6, 12, rng);
  PairedDataset ds;
  ds.modalities = {x, x};
  const CscState s = csc_fit(ds, CscParams{});
  CHECK((s.z_list[0] - s.z_list[1]).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((s.z_list[0] - s.z).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("csc_fit: modality disagreement shrinks as lambda3 grows") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 3; ++t) {
    const PairedDataset ds = random_pair(rng, 12);
    double prev = 1e300;
    for (double l3 : {0.1, 1.0, 10.0}) {
      CscParams p;
      p.lambda3 = l3;
      p.tol = 1e-12;
      p.max_outer_iters = 500;
      const CscState s = csc_fit(ds, p);
      const double gap = (s.z_list[0] - s.z_list[1]).norm();
      CHECK(gap <= prev + 1e-9);
      prev = gap;
    }
  }
}

TEST_CASE("csc objective: special values and term-by-term recomputation") {
  std::mt19937_64 rng(29);
  const PairedDataset ds = random_pair(rng, 6);
  CscParams p;
  std::vector<Matrix> zero(2, Matrix::Zero(6, 6));
  CHECK(csc_objective(ds.modalities, zero, Matrix::Zero(6, 6), p) ==
        doctest::Approx(0.5 * ds.modalities[0].squaredNorm() + 0.5 * ds.modalities[1].squaredNorm()));

  // Duplicate columns represent each other exactly.
  Vector v(3);
  v << 1, -2, 0.5;
  Matrix x(3, 2);
  x << v, v;
  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  std::vector<Matrix> xs{x, 2 * x};
  std::vector<Matrix> zs{swap, swap};
  CHECK(csc_objective(xs, zs, swap, p) == doctest::Approx(p.lambda1 * 2 * swap.squaredNorm()));

  std::vector<Matrix> zr{oracle::random_matrix(6, 6, rng), oracle::random_matrix(6, 6, rng)};
  const Matrix zc = oracle::random_matrix(6, 6, rng);
  p.modality_weights = {0.3, 1.7};
  double ref = 0.0;
  for (int m = 0; m < 2; ++m) {
    const Matrix& xm = ds.modalities[m];
    for (int j = 0; j < 6; ++j) {
      for (int r = 0; r < xm.rows(); ++r) {
        double fit = xm(r, j);
        for (int k = 0; k < 6; ++k) fit -= xm(r, k) * zr[m](k, j);
        ref += p.modality_weights[m] * fit * fit;
      }
      for (int k = 0; k < 6; ++k) {
        ref += p.lambda1 * zr[m](k, j) * zr[m](k, j);
        ref += p.lambda3 * std::pow(zr[m](k, j) - zc(k, j), 2);
      }
    }
  }
  CHECK(csc_objective(ds.modalities, zr, zc, p) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("csc: pairwise-penalty form equals the consensus form at the mean") {
  std::mt19937_64 rng(37);
  const PairedDataset ds = random_pair(rng, 7);
  for (int t = 0; t < 20; ++t) {
    std::vector<Matrix> zs{oracle::random_matrix(7, 7, rng), oracle::random_matrix(7, 7, rng)};
    const double lambda2 = 0.25 + t * 0.1;
    CscParams p;
    p.lambda3 = 2 * lambda2;
    double pairwise = lambda2 * (zs[0] - zs[1]).squaredNorm();
    for (int m = 0; m < 2; ++m) {
      pairwise += 0.5 * (ds.modalities[m] - ds.modalities[m] * zs[m]).squaredNorm() +
                  p.lambda1 * zs[m].squaredNorm();
    }
    const Matrix mean = consensus_update(zs);
    const double consensus = csc_objective(ds.modalities, zs, mean, p);
    CHECK(std::abs(consensus - pairwise) <= 1e-10 * std::max(1.0, std::abs(pairwise)));
    const Matrix other = mean + 1e-3 * oracle::random_matrix(7, 7, rng);
    CHECK(csc_objective(ds.modalities, zs, other, p) > consensus);
  }
}

TEST_CASE("affinity from representation") {
  Matrix z(2, 2), want(2, 2);
  z << 0, 0.5, -0.5, 0;
  want << 0, 0.5, 0.5, 0;
  CHECK(affinity_from_representation(z) == want);
  CHECK(affinity_from_representation(want) == want);
  std::mt19937_64 rng(41);
  const Matrix r = oracle::random_matrix(9, 9, rng);
  const Matrix a = affinity_from_representation(r);
  CHECK(a == a.transpose());
  CHECK(a.minCoeff() >= 0.0);
  CHECK_THROWS_AS(affinity_from_representation(Matrix::Ones(2, 3)), Error);
}

TEST_CASE("spectral clustering: disconnected cliques") {
  Matrix a = Matrix::Zero(7, 7);
  a.topLeftCorner(4, 4).setOnes();
  a.bottomRightCorner(3, 3).setOnes();
  a.diagonal().setZero();
  const auto labels = spectral_cluster(a, 2, 1);
  // Connected components: {0..3}, {4..6}.
  for (int i = 1; i < 4; ++i) CHECK(labels[i] == labels[0]);
  for (int i = 5; i < 7; ++i) CHECK(labels[i] == labels[4]);
  CHECK(labels[0] != labels[4]);
  CHECK(spectral_cluster(a, 2, 1) == labels);
  CHECK(clustering_accuracy(spectral_cluster(3.7 * a, 2, 5), labels) == 1.0);

  const auto one = spectral_cluster(Matrix::Ones(5, 5), 1, 0);
  CHECK(std::all_of(one.begin(), one.end(), [](int l) { return l == 1; }));

  CHECK(kind_of([&] { spectral_cluster(a, 8, 0); }) == ErrorKind::InvalidClusterCount);
  CHECK(kind_of([&] { spectral_cluster(a, 0, 0); }) == ErrorKind::InvalidClusterCount);
}

TEST_CASE("spectral clustering: isolated vertex and scale invariance on noisy blocks") {
  std::mt19937_64 rng(43);
  Matrix a = Matrix::Zero(10, 10);
  std::uniform_real_distribution<double> u(0.5, 1.0), small(0.0, 0.05);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < i; ++j) a(i, j) = a(j, i) = ((i < 5) == (j < 5)) ? u(rng) : small(rng);
  const auto base = spectral_cluster(a, 2, 3);
  for (double s : {1e-3, 0.5, 42.0}) CHECK(clustering_accuracy(spectral_cluster(s * a, 2, 3), base) == 1.0);

  Matrix iso = Matrix::Zero(11, 11);
  iso.topLeftCorner(10, 10) = a;
  const auto labels = spectral_cluster(iso, 2, 3);
  CHECK(labels.size() == 11);
  CHECK((labels[10] == 1 || labels[10] == 2));
}

TEST_CASE("k-means on rows: clean clusters and determinism") {
  Matrix pts(6, 2);
  pts << 0, 0, 0.1, 0, 0, 0.1, 5, 5, 5.1, 5, 5, 5.1;
  const auto a = kmeans_rows(pts, 2, 9);
  CHECK(a[0] == a[1]);
  CHECK(a[1] == a[2]);
  CHECK(a[3] == a[4]);
  CHECK(a[0] != a[3]);
  CHECK(kmeans_rows(pts, 2, 9) == a);
}

TEST_CASE("lsr baselines") {
  std::mt19937_64 rng(47);
  const PairedDataset ds = random_pair(rng, 9);

  PairedDataset single;
  single.modalities = {ds.modalities[0]};
  CscParams p;
  p.lambda1 = 0.3;
  p.lambda3 = 0.0;
  const CscState s = csc_fit(single, p);
  CHECK((lsr_concat_baseline(single, 0.3, p) - s.z).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((lsr_representation(ds.modalities[0], 0.3) - s.z).cwiseAbs().maxCoeff() <= 1e-10);

  CscParams w;
  w.modality_weights = {1.0, 0.0};
  CHECK((lsr_concat_baseline(ds, 0.3, w) - lsr_representation(ds.modalities[0], 0.3)).cwiseAbs().maxCoeff() <=
        1e-10);

  const Matrix z = lsr_concat_baseline(ds, 0.3, CscParams{});
  Matrix stacked(14, 9);
  stacked << std::sqrt(0.5) * ds.modalities[0], std::sqrt(0.5) * ds.modalities[1];
  for (int i = 0; i < 9; ++i) {
    const Vector col = without(z.col(i), i);
    const auto f = [&](const Vector& v) { return oracle::column_objective(stacked, i, v, col, 1.0, 0.3, 0.0); };
    CHECK(oracle::fd_gradient(f, col).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("gaussian affinity") {
  Matrix two(1, 2);
  two << 0, 3;
  const Matrix a = gaussian_affinity(two);
  CHECK(a(0, 1) == doctest::Approx(std::exp(-0.5)));
  CHECK(a(0, 0) == 0.0);

  Matrix three(2, 3);
  three << 0, 3, 0, 0, 0, 4;  // distances 3, 4, 5; σ = 4
  const Matrix b = gaussian_affinity(three);
  CHECK(b(0, 1) == doctest::Approx(std::exp(-9.0 / 32.0)));
  CHECK(b(0, 2) == doctest::Approx(std::exp(-16.0 / 32.0)));
  CHECK(b(1, 2) == doctest::Approx(std::exp(-25.0 / 32.0)));
  CHECK(b == b.transpose());
  CHECK(b.maxCoeff() <= 1.0);

  CHECK(kind_of([] { gaussian_affinity(Matrix::Ones(2, 4)); }) == ErrorKind::DegenerateKernel);
}

TEST_CASE("knn restriction zeros coefficients outside the neighborhood") {
  std::mt19937_64 rng(53);
  const PairedDataset ds = random_pair(rng, 10);
  const auto nb = nearest_neighborhoods(ds, 3);
  CscParams p;
  p.knn_restrict = 3;
  const CscState s = csc_fit(ds, p);
  for (Index i = 0; i < 10; ++i) {
    CHECK(nb[i].size() == 3);
    for (Index k = 0; k < 10; ++k) {
      if (std::find(nb[i].begin(), nb[i].end(), k) == nb[i].end()) {
        CHECK(s.z_list[0](k, i) == 0.0);
        CHECK(s.z_list[1](k, i) == 0.0);
      }
    }
  }
  for (std::size_t k = 1; k < s.objective_trace.size(); ++k) {
    CHECK(s.objective_trace[k] <= s.objective_trace[k - 1] * (1 + 1e-10));
  }
}

TEST_CASE("csc params validation") {
  std::mt19937_64 rng(59);
  const PairedDataset ds = random_pair(rng, 5);
  CscParams p;
  p.lambda1 = 0.0;
  CHECK_THROWS_AS(csc_fit(ds, p), Error);
  p = CscParams{};
  p.modality_weights = {1.0};
  CHECK_THROWS_AS(csc_fit(ds, p), Error);
  PairedDataset tiny;
  tiny.modalities = {Matrix::Ones(2, 1), Matrix::Ones(2, 1)};
  CHECK(kind_of([&] { csc_fit(tiny, CscParams{}); }) == ErrorKind::DegenerateProblem);
}
