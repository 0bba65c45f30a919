#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "xmodal/dataset.hpp"

using namespace xmodal;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name, const std::string& body) {
  const fs::path dir = fs::path(XMODAL_TEST_TMP) / "dataset";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary) << body;
  return p;
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

PairedDataset tagged(int n_per_class, int classes) {
  // Column i carries value i in both modalities so pairing is checkable.
  const int n = n_per_class * classes;
  PairedDataset ds;
  Matrix a(2, n), b(3, n);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    a.col(i).setConstant(i);
    b.col(i).setConstant(i + 0.5);
    labels[i] = 1 + i % classes;
  }
  ds.modalities = {a, b};
  ds.labels = labels;
  ds.names = {"a", "b"};
  return ds;
}

}  // namespace

TEST_CASE("load_modality_csv transposes to column-per-sample") {
  const Matrix x = load_modality_csv(scratch("two.csv", "1,2\n3,4\n"));
  REQUIRE(x.rows() == 2);
  REQUIRE(x.cols() == 2);
  CHECK(x(0, 0) == 1);
  CHECK(x(1, 0) == 2);
  CHECK(x(0, 1) == 3);
  CHECK(x(1, 1) == 4);

  const Matrix h = load_modality_csv(scratch("head.csv", "f1,f2,f3\n1,2,3\n"), true);
  CHECK(h.rows() == 3);
  CHECK(h.cols() == 1);
  const Matrix crlf = load_modality_csv(scratch("crlf.csv", "1.5,-2e-3\r\n\r\n7,8\r\n"));
  CHECK(crlf.cols() == 2);
  CHECK(crlf(1, 0) == doctest::Approx(-2e-3));
}

TEST_CASE("load_modality_csv errors") {
  CHECK(kind_of([] { load_modality_csv(scratch("empty.csv", "")); }) == ErrorKind::MalformedInput);
  try {
    load_modality_csv(scratch("ragged.csv", "1,2\n3\n"));
    FAIL("expected MalformedInput");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MalformedInput);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  try {
    load_modality_csv(scratch("text.csv", "1,2\n3,abc\n"));
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ParseError);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    CHECK(std::string(e.what()).find("column 2") != std::string::npos);
  }
  CHECK(kind_of([] { load_modality_csv(scratch("nan.csv", "1,nan\n")); }) == ErrorKind::ParseError);
  CHECK(kind_of([] { load_modality_csv("/nonexistent/file.csv"); }) == ErrorKind::Io);
}

TEST_CASE("labels csv round trip and validation") {
  const fs::path p = fs::path(XMODAL_TEST_TMP) / "dataset" / "labels_rt.csv";
  write_labels_csv(p, {1, 2, 2, 3});
  CHECK(load_labels_csv(p) == std::vector<int>{1, 2, 2, 3});

  PairedDataset ds;
  ds.modalities = {Matrix::Ones(2, 3)};
  ds.labels = std::vector<int>{1, 3, 3};  // class 2 unused
  CHECK(kind_of([&] { ds.validate(); }) == ErrorKind::LabelError);
  ds.labels = std::vector<int>{1, 2};
  CHECK_THROWS_AS(ds.validate(), Error);
  ds.labels = std::vector<int>{1, 2, 2};
  ds.modalities.push_back(Matrix::Ones(4, 2));
  CHECK(kind_of([&] { ds.validate(); }) == ErrorKind::ShapeError);
}

TEST_CASE("matrix csv writes the shortest round-trip form") {
  Matrix m(2, 2);
  m << 0.1, -0.0, 1e-300, 1.0 / 3.0;
  const fs::path p = fs::path(XMODAL_TEST_TMP) / "dataset" / "m.csv";
  write_matrix_csv(p, m);
  const Matrix back = load_matrix_csv(p);
  CHECK(back == m);
  std::ifstream in(p);
  std::string first;
  std::getline(in, first);
  CHECK(first == "0.1,0");
  CHECK(format_double(2.0) == "2");
}

TEST_CASE("unit_normalize_columns") {
  Matrix x(2, 3);
  x << 3, 0, 1, 4, 0, 0;
  const auto r = unit_normalize_columns(x);
  CHECK(r.x(0, 0) == doctest::Approx(0.6));
  CHECK(r.x(1, 0) == doctest::Approx(0.8));
  CHECK(r.x.col(1).isZero());
  CHECK(r.zero_columns == std::vector<Index>{1});
  CHECK(r.x.col(2) == x.col(2));

  std::mt19937_64 rng(2);
  const Matrix y = oracle::random_matrix(5, 9, rng);
  const auto once = unit_normalize_columns(y);
  for (int j = 0; j < 9; ++j) CHECK(once.x.col(j).norm() == doctest::Approx(1.0).epsilon(1e-12));
  const auto twice = unit_normalize_columns(once.x);
  CHECK((twice.x - once.x).cwiseAbs().maxCoeff() <= 1e-15);

  PairedDataset ds;
  ds.modalities = {x, y.leftCols(3)};
  std::vector<std::string> warnings;
  const PairedDataset nd = unit_normalize(ds, &warnings);
  CHECK(warnings.size() == 1);
  CHECK(nd.size() == 3);
}

TEST_CASE("stratified_subsample keeps pairing and is seeded") {
  const PairedDataset ds = tagged(5, 3);
  const PairedDataset s = stratified_subsample(ds, 2, 42);
  CHECK(s.size() == 6);
  CHECK(s.modalities[0].cols() == s.modalities[1].cols());
  std::map<int, int> per_class;
  for (Index i = 0; i < s.size(); ++i) {
    const double tag = s.modalities[0](0, i);
    CHECK(s.modalities[1](0, i) == tag + 0.5);  // same column in both modalities
    CHECK((*s.labels)[i] == (*ds.labels)[static_cast<std::size_t>(tag)]);
    ++per_class[(*s.labels)[i]];
  }
  for (const auto& [c, cnt] : per_class) CHECK(cnt == 2);

  const PairedDataset again = stratified_subsample(ds, 2, 42);
  CHECK(again.modalities[0] == s.modalities[0]);
  CHECK(*again.labels == *s.labels);

  const PairedDataset full = stratified_subsample(ds, 5, 9);
  std::set<double> tags;
  for (Index i = 0; i < full.size(); ++i) tags.insert(full.modalities[0](0, i));
  CHECK(tags.size() == 15);

  try {
    stratified_subsample(ds, 6, 1);
    FAIL("expected InsufficientSamples");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientSamples);
    CHECK(std::string(e.what()).find("class 1") != std::string::npos);
  }
  PairedDataset unlabeled = ds;
  unlabeled.labels.reset();
  CHECK_THROWS_AS(stratified_subsample(unlabeled, 1, 1), Error);
}

TEST_CASE("synthetic generator: noiseless clusters span subspace_dim") {
  SynthConfig cfg;
  cfg.clusters = 3;
  cfg.points_per_cluster = 12;
  cfg.ambient_dims = {10, 15, 8};
  cfg.subspace_dim = 3;
  cfg.noise_sigma = 0.0;
  const SyntheticData d = generate_synthetic_paired(cfg, 4);
  CHECK(d.train.num_modalities() == 3);
  CHECK(d.train.size() == 36);
  CHECK(d.test.size() == 0);
  for (const Matrix& x : d.train.modalities) {
    for (int k = 1; k <= 3; ++k) {
      std::vector<Index> cols;
      for (Index i = 0; i < d.train.size(); ++i)
        if ((*d.train.labels)[i] == k) cols.push_back(i);
      Matrix block(x.rows(), static_cast<Index>(cols.size()));
      for (std::size_t t = 0; t < cols.size(); ++t) block.col(t) = x.col(cols[t]);
      Eigen::FullPivLU<Matrix> lu(block);
      lu.setThreshold(1e-10);
      CHECK(lu.rank() == 3);
    }
  }
}

TEST_CASE("synthetic generator: determinism, corruption count, held-out set") {
  SynthConfig cfg;
  cfg.clusters = 4;
  cfg.points_per_cluster = 25;
  cfg.outlier_pair_fraction = 0.1;
  cfg.test_points_per_cluster = 5;
  const SyntheticData a = generate_synthetic_paired(cfg, 99);
  const SyntheticData b = generate_synthetic_paired(cfg, 99);
  CHECK(a.train.modalities[0] == b.train.modalities[0]);
  CHECK(a.train.modalities[1] == b.train.modalities[1]);
  CHECK(a.corrupted == b.corrupted);
  CHECK(a.corrupted.size() == 10);
  CHECK(std::is_sorted(a.corrupted.begin(), a.corrupted.end()));
  CHECK(a.test.size() == 20);
  CHECK(a.test.modalities[1].rows() == 30);

  const SyntheticData c = generate_synthetic_paired(cfg, 100);
  CHECK(!(c.train.modalities[0] == a.train.modalities[0]));

  // Corruption touches modality 2 only: modality 1 is identical with and
  // without it.
  SynthConfig clean = cfg;
  clean.outlier_pair_fraction = 0.0;
  const SyntheticData d = generate_synthetic_paired(clean, 99);
  CHECK(d.train.modalities[0] == a.train.modalities[0]);
  Index changed = 0;
  for (Index i = 0; i < d.train.size(); ++i)
    if (!(d.train.modalities[1].col(i) == a.train.modalities[1].col(i))) ++changed;
  CHECK(changed == 10);
}

TEST_CASE("synthetic config validation") {
  SynthConfig cfg;
  cfg.subspace_dim = 20;  // not below ambient dim 20
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = SynthConfig{};
  cfg.noise_sigma = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = SynthConfig{};
  cfg.outlier_pair_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = SynthConfig{};
  cfg.ambient_dims = {10};
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("select_columns applies one selection everywhere") {
  const PairedDataset ds = tagged(3, 2);
  const PairedDataset s = select_columns(ds, {4, 0});
  CHECK(s.modalities[0](0, 0) == 4);
  CHECK(s.modalities[1](0, 1) == 0.5);
  CHECK(*s.labels == std::vector<int>{1, 1});
}
