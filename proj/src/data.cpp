#include "uda/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "uda/errors.hpp"
#include "uda/rng.hpp"

namespace uda {

void FeatureDataset::validate() const {
  if (features.rows() == 0 || features.cols() == 0) {
    throw ValidationError("dataset '" + name + "' is empty " + features.shape_string());
  }
  if (!labels) return;
  if (labels->size() != features.rows()) {
    throw ValidationError("dataset '" + name + "' has " + std::to_string(labels->size()) +
                          " labels for " + std::to_string(features.rows()) + " rows");
  }
  for (std::size_t i = 0; i < labels->size(); ++i) {
    if ((*labels)[i] >= num_classes) {
      throw ValidationError("dataset '" + name + "' row " + std::to_string(i) + " label " +
                            std::to_string((*labels)[i]) + " >= num_classes " +
                            std::to_string(num_classes));
    }
  }
}

bool ShiftSpec::is_identity() const noexcept {
  return rotation == 0.0 && scale == 1.0 &&
         std::ranges::all_of(translation, [](double t) { return t == 0.0; });
}

Matrix apply_shift(const Matrix& points, const ShiftSpec& shift) {
  if (!shift.translation.empty() && shift.translation.size() != points.cols()) {
    throw DimensionError("apply_shift: translation has " + std::to_string(shift.translation.size()) +
                         " entries for " + std::to_string(points.cols()) + "-dimensional points");
  }
  if (!(shift.scale > 0.0)) throw ValidationError("apply_shift: scale must be positive");
  if (shift.rotation != 0.0 && points.cols() < 2) {
    throw DimensionError("apply_shift: rotation needs at least 2 dimensions");
  }
  if (shift.is_identity()) return points;
  Matrix out = points;
  const double c = std::cos(shift.rotation);
  const double s = std::sin(shift.rotation);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    if (shift.rotation != 0.0) {
      const double x = r[0];
      const double y = r[1];
      r[0] = c * x - s * y;
      r[1] = s * x + c * y;
    }
    for (std::size_t j = 0; j < r.size(); ++j) {
      r[j] *= shift.scale;
      if (!shift.translation.empty()) r[j] += shift.translation[j];
    }
  }
  return out;
}

Matrix gaussian_class_means(std::size_t num_classes, std::size_t dim) {
  constexpr double radius = 3.0;
  Matrix means(num_classes, dim);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(num_classes);
    means(k, 0) = radius * std::cos(angle);
    means(k, 1) = radius * std::sin(angle);
  }
  return means;
}

namespace {

FeatureDataset sample_gaussian_clusters(const Matrix& means, std::size_t per_class, Rng rng,
                                        std::string name) {
  const std::size_t num_classes = means.rows();
  const std::size_t dim = means.cols();
  FeatureDataset ds;
  ds.features = Matrix(num_classes * per_class, dim);
  ds.labels.emplace();
  ds.num_classes = num_classes;
  ds.name = std::move(name);
  std::size_t row = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      for (std::size_t j = 0; j < dim; ++j) ds.features(row, j) = means(k, j) + rng.normal();
      ds.labels->push_back(k);
    }
  }
  return ds;
}

FeatureDataset sample_two_moons(std::size_t per_class, double noise_std, Rng rng, std::string name) {
  FeatureDataset ds;
  ds.features = Matrix(2 * per_class, 2);
  ds.labels.emplace();
  ds.num_classes = 2;
  ds.name = std::move(name);
  // Upper moon centered at (0, 0), lower moon at (1, 0.5); shift so the pair is
  // centered on the origin.
  constexpr double cx = 0.5;
  constexpr double cy = 0.25;
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t row = k * per_class + i;
      const double t = rng.uniform(0.0, std::numbers::pi);
      double x = std::cos(t);
      double y = std::sin(t);
      if (k == 1) {
        x = 1.0 - x;
        y = 0.5 - y;
      }
      ds.features(row, 0) = x - cx + noise_std * rng.normal();
      ds.features(row, 1) = y - cy + noise_std * rng.normal();
      ds.labels->push_back(k);
    }
  }
  return ds;
}

}  // namespace

DomainPair gen_gaussian_shift(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                              const ShiftSpec& shift, std::uint64_t seed) {
  if (per_class < 2) throw ValidationError("gen_gaussian_shift: per_class must be >= 2");
  if (dim < 2) throw ValidationError("gen_gaussian_shift: dim must be >= 2");
  if (num_classes < 2) throw ValidationError("gen_gaussian_shift: need at least 2 classes");
  const Rng root(seed);
  const Matrix means = gaussian_class_means(num_classes, dim);
  DomainPair pair;
  pair.source = sample_gaussian_clusters(means, per_class, root.split(0), "gauss-source");
  pair.target = sample_gaussian_clusters(means, per_class, root.split(1), "gauss-target");
  pair.target.features = apply_shift(pair.target.features, shift);
  pair.source_test = sample_gaussian_clusters(means, per_class, root.split(2), "gauss-source-test");
  return pair;
}

DomainPair gen_two_moons_shift(std::size_t per_class, double noise_std, double rotation,
                               std::uint64_t seed) {
  if (per_class < 2) throw ValidationError("gen_two_moons_shift: per_class must be >= 2");
  if (noise_std < 0.0) throw ValidationError("gen_two_moons_shift: negative noise");
  const Rng root(seed);
  DomainPair pair;
  pair.source = sample_two_moons(per_class, noise_std, root.split(0), "moons-source");
  pair.target = sample_two_moons(per_class, noise_std, root.split(1), "moons-target");
  ShiftSpec shift;
  shift.rotation = rotation;
  pair.target.features = apply_shift(pair.target.features, shift);
  pair.source_test = sample_two_moons(per_class, noise_std, root.split(2), "moons-source-test");
  return pair;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                       : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string cell_location(std::size_t line, std::size_t column) {
  return "line " + std::to_string(line) + ", column " + std::to_string(column + 1);
}

}  // namespace

FeatureDataset load_csv(const std::filesystem::path& path, bool labeled) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header row");
  const auto header = split_commas(trim(line));
  std::size_t dim = header.size();
  bool has_label = false;
  if (!header.empty() && trim(header.back()) == "label") {
    has_label = true;
    --dim;
  }
  if (dim == 0) throw FormatError(path.string() + ": header has no feature columns");
  for (std::size_t j = 0; j < dim; ++j) {
    if (trim(header[j]) != "f" + std::to_string(j)) {
      throw FormatError(path.string() + ": header column " + std::to_string(j + 1) + " is '" +
                        std::string(header[j]) + "', expected 'f" + std::to_string(j) + "'");
    }
  }

  const bool keep_labels = labeled && has_label;
  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t max_label = 0;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim(line);
    if (text.empty()) continue;
    const auto cells = split_commas(text);
    if (cells.size() != header.size()) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(header.size()));
    }
    for (std::size_t j = 0; j < dim; ++j) {
      const std::string_view cell = trim(cells[j]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() ||
          !std::isfinite(v)) {
        throw ParseError(path.string() + ": " + cell_location(line_no, j) + ": '" +
                         std::string(cell) + "' is not a finite number");
      }
      values.push_back(v);
    }
    if (has_label) {
      const std::string_view cell = trim(cells[dim]);
      long long label = 0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() || label < -1) {
        throw ParseError(path.string() + ": " + cell_location(line_no, dim) + ": '" +
                         std::string(cell) + "' is not a class index or -1");
      }
      if (keep_labels) {
        if (label == -1) {
          throw ValidationError(path.string() + ": line " + std::to_string(line_no) +
                                " has label -1 (unlabeled) but labels were requested");
        }
        labels.push_back(static_cast<std::size_t>(label));
        max_label = std::max(max_label, static_cast<std::size_t>(label));
      }
    }
    ++rows;
  }
  if (rows == 0) throw FormatError(path.string() + ": no data rows");

  FeatureDataset ds;
  ds.features = Matrix(rows, dim, std::move(values));
  ds.name = path.stem().string();
  if (keep_labels) {
    ds.labels = std::move(labels);
    ds.num_classes = max_label + 1;
  }
  return ds;
}

void save_csv(const FeatureDataset& ds, const std::filesystem::path& path) {
  std::string out;
  for (std::size_t j = 0; j < ds.dim(); ++j) {
    if (j) out += ',';
    out += 'f' + std::to_string(j);
  }
  if (ds.labeled()) out += ",label";
  out += '\n';
  char buf[40];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      if (j) out += ',';
      std::snprintf(buf, sizeof buf, "%.17g", ds.features(i, j));
      out += buf;
    }
    if (ds.labeled()) out += ',' + std::to_string((*ds.labels)[i]);
    out += '\n';
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw Error("cannot open " + tmp.string() + " for writing");
    file << out;
    if (!file) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t num_rows, std::size_t batch_size,
                                                 std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw ValidationError("batch_iter: batch_size must be >= 1");
  std::vector<std::size_t> order(num_rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(seed).split(epoch);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < num_rows; start += batch_size) {
    const std::size_t end = std::min(num_rows, start + batch_size);
    if (end - start < 2) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace uda
