#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xmodal/numkernel.hpp"

namespace xmodal {

// Feature matrices are d × n, one column per sample. Column i of every
// modality describes the same document (the pairwise constraint).
struct PairedDataset {
  std::vector<Matrix> modalities;
  std::optional<std::vector<int>> labels;  // class ids 1..c
  std::vector<std::string> names;

  Index size() const { return modalities.empty() ? 0 : modalities.front().cols(); }
  Index num_modalities() const { return static_cast<Index>(modalities.size()); }
  // Largest label id; 0 when unlabeled.
  int num_classes() const;
  // Throws ShapeError / LabelError when an invariant is broken.
  void validate() const;
};

// Reads a sample-per-row CSV and returns the d × n column-per-sample matrix.
Matrix load_modality_csv(const std::filesystem::path& path, bool skip_header = false);
// Reads a plain row-major numeric CSV without transposing.
Matrix load_matrix_csv(const std::filesystem::path& path, bool skip_header = false);
std::vector<int> load_labels_csv(const std::filesystem::path& path, bool skip_header = false);

// Writers use the shortest round-trip decimal form, so output is
// byte-stable for identical inputs.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
void write_modality_csv(const std::filesystem::path& path, const Matrix& x);
void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& labels);
std::string format_double(double value);

struct NormalizedMatrix {
  Matrix x;
  std::vector<Index> zero_columns;  // left as zero, reported as warnings
};

NormalizedMatrix unit_normalize_columns(const Matrix& x);
// Normalizes every modality. One warning line per zero column is appended
// to `warnings` when given.
PairedDataset unit_normalize(const PairedDataset& ds, std::vector<std::string>* warnings = nullptr);

// Picks exactly per_class samples of every class with one shared column
// selection for all modalities. Deterministic for a fixed seed.
PairedDataset stratified_subsample(const PairedDataset& ds, Index per_class, std::uint64_t seed);

// Same column selection applied to every modality and the labels.
PairedDataset select_columns(const PairedDataset& ds, const std::vector<Index>& columns);

struct SynthConfig {
  int clusters = 3;
  Index points_per_cluster = 50;
  std::vector<Index> ambient_dims = {20, 30};  // one entry per modality
  Index subspace_dim = 4;
  double noise_sigma = 0.05;
  double outlier_pair_fraction = 0.0;
  // Scale of a random per-cluster offset; 0 keeps every cluster a linear
  // subspace through the origin.
  double center_scale = 0.0;
  // Clean held-out pairs per cluster drawn from the same subspaces.
  Index test_points_per_cluster = 0;

  void validate() const;
};

struct SyntheticData {
  PairedDataset train;
  PairedDataset test;              // empty when test_points_per_cluster == 0
  std::vector<Index> corrupted;    // training columns whose pairs were redrawn
};

SyntheticData generate_synthetic_paired(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace xmodal
