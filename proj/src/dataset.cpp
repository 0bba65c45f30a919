#include "xmodal/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace xmodal {

int PairedDataset::num_classes() const {
  if (!labels || labels->empty()) return 0;
  return *std::max_element(labels->begin(), labels->end());
}

void PairedDataset::validate() const {
  if (modalities.empty()) throw Error(ErrorKind::ShapeError, "dataset has no modalities");
  const Index n = modalities.front().cols();
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    require_finite(modalities[m], "modality " + std::to_string(m + 1));
    if (modalities[m].cols() != n) {
      throw Error(ErrorKind::ShapeError, "modality " + std::to_string(m + 1) + " has " +
                                             std::to_string(modalities[m].cols()) +
                                             " samples, expected " + std::to_string(n));
    }
  }
  if (labels) {
    if (static_cast<Index>(labels->size()) != n) {
      throw Error(ErrorKind::ShapeError, "label count " + std::to_string(labels->size()) +
                                             " does not match sample count " + std::to_string(n));
    }
    const int c = num_classes();
    std::vector<bool> seen(static_cast<std::size_t>(std::max(c, 0)) + 1, false);
    for (int l : *labels) {
      if (l < 1) throw Error(ErrorKind::LabelError, "label " + std::to_string(l) + " is < 1");
      seen[static_cast<std::size_t>(l)] = true;
    }
    for (int l = 1; l <= c; ++l) {
      if (!seen[static_cast<std::size_t>(l)]) {
        throw Error(ErrorKind::LabelError, "class " + std::to_string(l) + " has no samples");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::vector<double>> read_rows(const std::filesystem::path& path, bool skip_header) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_skipped = !skip_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!header_skipped) {
      header_skipped = true;
      continue;
    }
    std::vector<double> row;
    std::string_view rest(line);
    std::size_t col = 0;
    while (true) {
      ++col;
      const auto comma = rest.find(',');
      const std::string_view cell = trim(rest.substr(0, comma));
      double value = 0.0;
      const auto* end = cell.data() + cell.size();
      const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
      if (cell.empty() || ec != std::errc() || ptr != end) {
        throw Error(ErrorKind::ParseError, path.string() + ": non-numeric cell '" +
                                               std::string(cell) + "' at row " +
                                               std::to_string(line_no) + ", column " +
                                               std::to_string(col));
      }
      if (!std::isfinite(value)) {
        throw Error(ErrorKind::ParseError, path.string() + ": non-finite value at row " +
                                               std::to_string(line_no) + ", column " +
                                               std::to_string(col));
      }
      row.push_back(value);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorKind::MalformedInput,
                  path.string() + ": ragged row " + std::to_string(line_no) + " has " +
                      std::to_string(row.size()) + " fields, expected " +
                      std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::MalformedInput, path.string() + ": no data rows");
  return rows;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

Matrix load_matrix_csv(const std::filesystem::path& path, bool skip_header) {
  const auto rows = read_rows(path, skip_header);
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

Matrix load_modality_csv(const std::filesystem::path& path, bool skip_header) {
  return load_matrix_csv(path, skip_header).transpose();
}

std::vector<int> load_labels_csv(const std::filesystem::path& path, bool skip_header) {
  const Matrix m = load_matrix_csv(path, skip_header);
  if (m.cols() != 1) {
    throw Error(ErrorKind::MalformedInput, path.string() + ": label file must have one column");
  }
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) {
    const double v = m(r, 0);
    if (v != std::floor(v) || v < 1.0) {
      throw Error(ErrorKind::LabelError, path.string() + ": row " + std::to_string(r + 1) +
                                             " is not a positive integer class id");
    }
    labels.push_back(static_cast<int>(v));
  }
  return labels;
}

std::string format_double(double value) {
  if (value == 0.0) return "0";  // folds -0
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  auto out = open_for_write(path);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

void write_modality_csv(const std::filesystem::path& path, const Matrix& x) {
  write_matrix_csv(path, x.transpose());
}

void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& labels) {
  auto out = open_for_write(path);
  for (int l : labels) out << l << '\n';
}

// ---------------------------------------------------------------------------
// Normalization and subsampling

NormalizedMatrix unit_normalize_columns(const Matrix& x) {
  NormalizedMatrix result{x, {}};
  for (Index j = 0; j < x.cols(); ++j) {
    const double norm = x.col(j).norm();
    if (norm == 0.0) {
      result.zero_columns.push_back(j);
    } else {
      result.x.col(j) /= norm;
    }
  }
  return result;
}

PairedDataset unit_normalize(const PairedDataset& ds, std::vector<std::string>* warnings) {
  PairedDataset out = ds;
  for (std::size_t m = 0; m < ds.modalities.size(); ++m) {
    auto normalized = unit_normalize_columns(ds.modalities[m]);
    if (warnings) {
      for (Index j : normalized.zero_columns) {
        warnings->push_back("modality " + std::to_string(m + 1) + ": sample " +
                            std::to_string(j + 1) + " is a zero vector");
      }
    }
    out.modalities[m] = std::move(normalized.x);
  }
  return out;
}

PairedDataset select_columns(const PairedDataset& ds, const std::vector<Index>& columns) {
  PairedDataset out;
  out.names = ds.names;
  for (const auto& x : ds.modalities) {
    Matrix sub(x.rows(), static_cast<Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) sub.col(static_cast<Index>(k)) = x.col(columns[k]);
    out.modalities.push_back(std::move(sub));
  }
  if (ds.labels) {
    std::vector<int> labels;
    labels.reserve(columns.size());
    for (Index c : columns) labels.push_back((*ds.labels)[static_cast<std::size_t>(c)]);
    out.labels = std::move(labels);
  }
  return out;
}

PairedDataset stratified_subsample(const PairedDataset& ds, Index per_class, std::uint64_t seed) {
  if (!ds.labels) throw Error(ErrorKind::LabelError, "stratified_subsample requires labels");
  if (per_class < 1) throw Error(ErrorKind::Usage, "per_class must be >= 1");
  const int c = ds.num_classes();
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(c) + 1);
  for (std::size_t i = 0; i < ds.labels->size(); ++i) {
    by_class[static_cast<std::size_t>((*ds.labels)[i])].push_back(static_cast<Index>(i));
  }
  std::mt19937_64 rng(seed);
  std::vector<Index> chosen;
  for (int l = 1; l <= c; ++l) {
    auto& members = by_class[static_cast<std::size_t>(l)];
    if (static_cast<Index>(members.size()) < per_class) {
      throw Error(ErrorKind::InsufficientSamples,
                  "class " + std::to_string(l) + " has " + std::to_string(members.size()) +
                      " samples, " + std::to_string(per_class) + " requested");
    }
    std::shuffle(members.begin(), members.end(), rng);
    chosen.insert(chosen.end(), members.begin(), members.begin() + per_class);
  }
  return select_columns(ds, chosen);
}

// ---------------------------------------------------------------------------
// Synthetic data

void SynthConfig::validate() const {
  if (ambient_dims.size() < 2) throw Error(ErrorKind::Usage, "synthetic data needs at least 2 modalities");
  if (clusters < 1) throw Error(ErrorKind::Usage, "clusters must be >= 1");
  if (points_per_cluster < 1) throw Error(ErrorKind::Usage, "points_per_cluster must be >= 1");
  if (subspace_dim < 1) throw Error(ErrorKind::Usage, "subspace_dim must be >= 1");
  for (Index d : ambient_dims) {
    if (subspace_dim >= d) {
      throw Error(ErrorKind::Usage, "subspace_dim must be smaller than every ambient dimension");
    }
  }
  if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::Usage, "noise_sigma must be >= 0");
  if (!(outlier_pair_fraction >= 0.0 && outlier_pair_fraction < 1.0)) {
    throw Error(ErrorKind::Usage, "outlier_pair_fraction must lie in [0, 1)");
  }
  if (!(center_scale >= 0.0)) throw Error(ErrorKind::Usage, "center_scale must be >= 0");
  if (test_points_per_cluster < 0) throw Error(ErrorKind::Usage, "test_points_per_cluster must be >= 0");
}

namespace {

struct ClusterModel {
  Matrix basis;  // d × s, orthonormal columns
  Vector center;
};

Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

Vector sample_point(const ClusterModel& model, const Vector& coeff, double sigma,
                    std::mt19937_64& rng) {
  Vector x = model.basis * coeff + model.center;
  if (sigma > 0.0) x += sigma * gaussian(x.size(), 1, rng);
  return x;
}

}  // namespace

SyntheticData generate_synthetic_paired(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const std::size_t m = cfg.ambient_dims.size();
  const auto c = static_cast<std::size_t>(cfg.clusters);

  // models[modality][cluster]
  std::vector<std::vector<ClusterModel>> models(m);
  for (std::size_t v = 0; v < m; ++v) {
    const Index d = cfg.ambient_dims[v];
    for (std::size_t k = 0; k < c; ++k) {
      const Matrix g = gaussian(d, cfg.subspace_dim, rng);
      Eigen::HouseholderQR<Matrix> qr(g);
      Matrix basis = qr.householderQ() * Matrix::Identity(d, cfg.subspace_dim);
      Vector center = Vector::Zero(d);
      if (cfg.center_scale > 0.0) {
        center = gaussian(d, 1, rng);
        center *= cfg.center_scale / center.norm();
      }
      models[v].push_back({std::move(basis), std::move(center)});
    }
  }

  auto draw_block = [&](Index per_cluster) {
    const Index n = per_cluster * cfg.clusters;
    PairedDataset ds;
    for (std::size_t v = 0; v < m; ++v) {
      ds.modalities.emplace_back(cfg.ambient_dims[v], n);
      ds.names.push_back("modality_" + std::to_string(v + 1));
    }
    std::vector<int> labels;
    Index col = 0;
    for (std::size_t k = 0; k < c; ++k) {
      for (Index p = 0; p < per_cluster; ++p, ++col) {
        const Vector coeff = gaussian(cfg.subspace_dim, 1, rng);
        for (std::size_t v = 0; v < m; ++v) {
          ds.modalities[v].col(col) = sample_point(models[v][k], coeff, cfg.noise_sigma, rng);
        }
        labels.push_back(static_cast<int>(k) + 1);
      }
    }
    ds.labels = std::move(labels);
    return ds;
  };

  SyntheticData out;
  out.train = draw_block(cfg.points_per_cluster);

  const Index n = out.train.size();
  const auto n_corrupt = static_cast<Index>(std::llround(cfg.outlier_pair_fraction * static_cast<double>(n)));
  if (n_corrupt > 0) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), rng);
    out.corrupted.assign(order.begin(), order.begin() + n_corrupt);
    std::sort(out.corrupted.begin(), out.corrupted.end());
    for (Index i : out.corrupted) {
      const auto k = static_cast<std::size_t>((*out.train.labels)[static_cast<std::size_t>(i)] - 1);
      std::size_t other = k;
      if (c > 1) {
        std::uniform_int_distribution<std::size_t> pick(0, c - 2);
        other = pick(rng);
        if (other >= k) ++other;
      }
      const Vector coeff = gaussian(cfg.subspace_dim, 1, rng);
      for (std::size_t v = 1; v < m; ++v) {
        out.train.modalities[v].col(i) = sample_point(models[v][other], coeff, cfg.noise_sigma, rng);
      }
    }
  }

  if (cfg.test_points_per_cluster > 0) out.test = draw_block(cfg.test_points_per_cluster);
  return out;
}

}  // namespace xmodal
