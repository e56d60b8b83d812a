#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uda/matrix.hpp"

namespace uda {

/// Feature vectors (n x d) with optional class labels.
struct FeatureDataset {
  Matrix features;
  std::optional<std::vector<std::size_t>> labels;
  std::size_t num_classes = 0;
  std::string name;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }
  bool labeled() const noexcept { return labels.has_value(); }
  bool operator==(const FeatureDataset&) const = default;

  /// Throws ValidationError if the invariants (n, d >= 1; labels < num_classes;
  /// one label per row) do not hold.
  void validate() const;
};

/// Label-free view of a dataset. This is the only form in which target data
/// reaches the training loop; it has no path back to the labels.
class UnlabeledView {
 public:
  explicit UnlabeledView(const FeatureDataset& ds) noexcept : features_(&ds.features) {}
  explicit UnlabeledView(const FeatureDataset&&) = delete;

  const Matrix& features() const noexcept { return *features_; }
  std::size_t size() const noexcept { return features_->rows(); }
  std::size_t dim() const noexcept { return features_->cols(); }

 private:
  const Matrix* features_;
};

/// Source/target pair. Target labels are present for evaluation only; the
/// trainer accepts the target as an UnlabeledView.
struct DomainPair {
  FeatureDataset source;
  FeatureDataset source_test;
  FeatureDataset target;
};

/// x' = scale · R(rotation) · x + translation. The rotation acts in the plane
/// of the first two coordinates about the origin; an empty translation means
/// zero.
struct ShiftSpec {
  double rotation = 0.0;
  std::vector<double> translation;
  double scale = 1.0;
  bool label_preserving = true;

  bool is_identity() const noexcept;
};

Matrix apply_shift(const Matrix& points, const ShiftSpec& shift);

/// Mean of class k: radius 3 on a circle in the first two coordinates at angle
/// 2πk/num_classes; zero elsewhere.
Matrix gaussian_class_means(std::size_t num_classes, std::size_t dim);

/// Unit-covariance Gaussian clusters around gaussian_class_means. Target is an
/// independent draw from the same generator, transformed by `shift`.
DomainPair gen_gaussian_shift(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                              const ShiftSpec& shift, std::uint64_t seed);

/// Two interleaved half circles centered on the origin, 2 classes. Target is an
/// independent draw rotated by `rotation` radians about the origin.
DomainPair gen_two_moons_shift(std::size_t per_class, double noise_std, double rotation,
                               std::uint64_t seed);

/// Reads `f0,...,f{d-1}[,label]`. Labels are kept iff `labeled` and the file
/// has a label column; a label of -1 marks an unlabeled row and is rejected
/// when `labeled` is set.
FeatureDataset load_csv(const std::filesystem::path& path, bool labeled);

/// Writes the CSV format read by load_csv, values with 17 significant digits.
/// Unlabeled datasets get no label column.
void save_csv(const FeatureDataset& ds, const std::filesystem::path& path);

/// Row-index batches for one epoch: a permutation keyed by (seed, epoch), cut
/// into batch_size chunks; a trailing chunk of fewer than 2 rows is dropped.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t num_rows, std::size_t batch_size,
                                                 std::uint64_t seed, std::size_t epoch);

inline std::vector<std::vector<std::size_t>> batch_iter(const FeatureDataset& ds,
                                                        std::size_t batch_size, std::uint64_t seed,
                                                        std::size_t epoch) {
  return batch_iter(ds.size(), batch_size, seed, epoch);
}

inline std::vector<std::vector<std::size_t>> batch_iter(UnlabeledView ds, std::size_t batch_size,
                                                        std::uint64_t seed, std::size_t epoch) {
  return batch_iter(ds.size(), batch_size, seed, epoch);
}

}  // namespace uda
