#include "uda/losses.hpp"

#include <algorithm>
#include <cmath>

#include "uda/errors.hpp"

namespace uda {

std::string_view to_string(TransferLossKind kind) noexcept {
  switch (kind) {
    case TransferLossKind::kNone: return "none";
    case TransferLossKind::kCoral: return "coral";
    case TransferLossKind::kMmd: return "mmd";
    case TransferLossKind::kCdan: return "cdan";
    case TransferLossKind::kCdanE: return "cdan_e";
  }
  return "unknown";
}

TransferLossKind parse_transfer_loss_kind(std::string_view text) {
  if (text == "none") return TransferLossKind::kNone;
  if (text == "coral") return TransferLossKind::kCoral;
  if (text == "mmd" || text == "ddc") return TransferLossKind::kMmd;
  if (text == "cdan") return TransferLossKind::kCdan;
  if (text == "cdan_e" || text == "cdan-e" || text == "cdan+e") return TransferLossKind::kCdanE;
  throw ValidationError("unknown method '" + std::string(text) +
                        "' (expected none, coral, mmd, cdan, cdan_e)");
}

bool is_adversarial(TransferLossKind kind) noexcept {
  return kind == TransferLossKind::kCdan || kind == TransferLossKind::kCdanE;
}

std::string_view to_string(LambdaSchedule::Kind kind) noexcept {
  return kind == LambdaSchedule::Kind::kConstant ? "constant" : "inverse-epoch";
}

LambdaSchedule::Kind parse_lambda_schedule_kind(std::string_view text) {
  if (text == "constant") return LambdaSchedule::Kind::kConstant;
  if (text == "inverse-epoch") return LambdaSchedule::Kind::kInverseEpoch;
  throw ValidationError("unknown lambda schedule '" + std::string(text) +
                        "' (expected constant or inverse-epoch)");
}

double lambda_value(const LambdaSchedule& schedule, std::size_t epoch) {
  if (epoch == 0) throw ValidationError("lambda_value: epochs are counted from 1");
  if (schedule.base < 0.0) throw ValidationError("lambda_value: negative base");
  switch (schedule.kind) {
    case LambdaSchedule::Kind::kConstant: return schedule.base;
    case LambdaSchedule::Kind::kInverseEpoch: return schedule.base / static_cast<double>(epoch);
  }
  return schedule.base;
}

namespace {

void require_batch_rows(const Matrix& batch, std::size_t min_rows, const char* what) {
  if (batch.rows() < min_rows) {
    throw DegenerateBatchError(std::string(what) + ": batch has " + std::to_string(batch.rows()) +
                               " rows, need at least " + std::to_string(min_rows));
  }
}

void require_same_cols(const Matrix& a, const Matrix& b, const char* what) {
  if (a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": feature dimension mismatch " + a.shape_string() +
                         " vs " + b.shape_string());
  }
}

Matrix centered(const Matrix& batch) {
  Matrix out = batch;
  Matrix mean = column_means(batch);
  mean *= -1.0;
  add_row_vector(out, mean);
  return out;
}

}  // namespace

Matrix covariance(const Matrix& batch) {
  require_batch_rows(batch, 2, "covariance");
  const double n = static_cast<double>(batch.rows());
  Matrix gram = matmul_tn(batch, batch);
  const Matrix ones_d = column_sums(batch);
  Matrix outer = matmul_tn(ones_d, ones_d);
  outer *= 1.0 / n;
  gram -= outer;
  gram *= 1.0 / (n - 1.0);
  return gram;
}

GradPair coral_loss(const Matrix& source, const Matrix& target) {
  require_same_cols(source, target, "coral_loss");
  require_batch_rows(source, 2, "coral_loss (source)");
  require_batch_rows(target, 2, "coral_loss (target)");
  const double d = static_cast<double>(source.cols());
  const Matrix diff = covariance(source) - covariance(target);

  GradPair out;
  out.value = frobenius_norm_sq(diff) / (4.0 * d * d);

  // dL/dC_S = diff / (2 d²); dC_S/dD pulls back through the centered batch:
  // dL/dD_S = D̄_S · diff / (d² (n_S − 1)), and the negative for the target.
  Matrix grad_source = matmul(centered(source), diff);
  grad_source *= 1.0 / (d * d * (static_cast<double>(source.rows()) - 1.0));
  Matrix grad_target = matmul(centered(target), diff);
  grad_target *= -1.0 / (d * d * (static_cast<double>(target.rows()) - 1.0));
  out.grads.push_back(std::move(grad_source));
  out.grads.push_back(std::move(grad_target));
  return out;
}

namespace {

// Row-broadcast of `row` scaled by `scale`, shape (rows x row.cols()).
Matrix broadcast_rows(const Matrix& row, std::size_t rows, double scale) {
  Matrix out(rows, row.cols());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < row.cols(); ++j) out(i, j) = row(0, j) * scale;
  return out;
}

}  // namespace

GradPair mmd_linear(const Matrix& source, const Matrix& target) {
  require_same_cols(source, target, "mmd_linear");
  require_batch_rows(source, 1, "mmd_linear (source)");
  require_batch_rows(target, 1, "mmd_linear (target)");
  const Matrix delta = column_means(source) - column_means(target);
  const double distance = frobenius_norm(delta);
  GradPair out;
  out.value = distance;
  const double inv = distance > 0.0 ? 1.0 / distance : 0.0;
  out.grads.push_back(broadcast_rows(delta, source.rows(), inv / static_cast<double>(source.rows())));
  out.grads.push_back(
      broadcast_rows(delta, target.rows(), -inv / static_cast<double>(target.rows())));
  return out;
}

GradPair mmd_squared(const Matrix& source, const Matrix& target) {
  require_same_cols(source, target, "mmd_squared");
  require_batch_rows(source, 1, "mmd_squared (source)");
  require_batch_rows(target, 1, "mmd_squared (target)");
  const Matrix delta = column_means(source) - column_means(target);
  GradPair out;
  out.value = frobenius_norm_sq(delta);
  out.grads.push_back(broadcast_rows(delta, source.rows(), 2.0 / static_cast<double>(source.rows())));
  out.grads.push_back(
      broadcast_rows(delta, target.rows(), -2.0 / static_cast<double>(target.rows())));
  return out;
}

std::vector<double> entropy(const Matrix& predictions) {
  std::vector<double> out;
  out.reserve(predictions.rows());
  for (std::size_t i = 0; i < predictions.rows(); ++i) {
    auto row = predictions.row(i);
    double total = 0.0;
    double h = 0.0;
    for (double p : row) {
      if (p < 0.0 || !std::isfinite(p)) {
        throw ValidationError("entropy: row " + std::to_string(i) +
                              " has a negative or non-finite probability");
      }
      total += p;
      if (p > 0.0) h -= p * std::log(p);
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ValidationError("entropy: row " + std::to_string(i) + " sums to " +
                            std::to_string(total) + ", not 1");
    }
    out.push_back(h);
  }
  return out;
}

double entropy_weight(double h) { return 1.0 + std::exp(-h); }

std::vector<double> entropy_weights(const Matrix& predictions) {
  std::vector<double> w = entropy(predictions);
  for (double& v : w) v = entropy_weight(v);
  return w;
}

Matrix multilinear_map(const Matrix& f, const Matrix& g) {
  if (f.rows() != g.rows()) {
    throw DimensionError("multilinear_map: row mismatch " + f.shape_string() + " vs " +
                         g.shape_string());
  }
  Matrix out(f.rows(), f.cols() * g.cols());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    auto fr = f.row(i);
    auto gr = g.row(i);
    auto o = out.row(i);
    for (std::size_t a = 0; a < fr.size(); ++a)
      for (std::size_t b = 0; b < gr.size(); ++b) o[a * gr.size() + b] = fr[a] * gr[b];
  }
  return out;
}

MultilinearGrads multilinear_map_backward(const Matrix& f, const Matrix& g, const Matrix& grad_out) {
  if (f.rows() != g.rows() || grad_out.rows() != f.rows() ||
      grad_out.cols() != f.cols() * g.cols()) {
    throw DimensionError("multilinear_map_backward: incompatible shapes " + f.shape_string() +
                         ", " + g.shape_string() + ", " + grad_out.shape_string());
  }
  MultilinearGrads out{Matrix(f.rows(), f.cols()), Matrix(g.rows(), g.cols())};
  for (std::size_t i = 0; i < f.rows(); ++i) {
    auto fr = f.row(i);
    auto gr = g.row(i);
    auto go = grad_out.row(i);
    auto df = out.f.row(i);
    auto dg = out.g.row(i);
    for (std::size_t a = 0; a < fr.size(); ++a) {
      for (std::size_t b = 0; b < gr.size(); ++b) {
        const double v = go[a * gr.size() + b];
        df[a] += v * gr[b];
        dg[b] += v * fr[a];
      }
    }
  }
  return out;
}

GradPair adversarial_loss(const Matrix& d_source, const Matrix& d_target,
                          std::span<const double> weights_source,
                          std::span<const double> weights_target) {
  if (d_source.cols() != 1 || d_target.cols() != 1) {
    throw DimensionError("adversarial_loss: discriminator outputs must be single columns, got " +
                         d_source.shape_string() + " and " + d_target.shape_string());
  }
  if (weights_source.size() != d_source.rows() || weights_target.size() != d_target.rows()) {
    throw DimensionError("adversarial_loss: weight counts (" +
                         std::to_string(weights_source.size()) + ", " +
                         std::to_string(weights_target.size()) + ") do not match batch sizes (" +
                         std::to_string(d_source.rows()) + ", " + std::to_string(d_target.rows()) +
                         ")");
  }
  const std::size_t total_rows = d_source.rows() + d_target.rows();
  if (total_rows == 0) throw DegenerateBatchError("adversarial_loss: empty batches");
  const double inv_n = 1.0 / static_cast<double>(total_rows);
  constexpr double lo = kLogEpsilon;
  constexpr double hi = 1.0 - kLogEpsilon;

  GradPair out;
  Matrix grad_source(d_source.rows(), 1);
  Matrix grad_target(d_target.rows(), 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < d_source.rows(); ++i) {
    const double raw = d_source(i, 0);
    const double p = std::clamp(raw, lo, hi);
    acc -= weights_source[i] * std::log(p);
    if (raw > lo && raw < hi) grad_source(i, 0) = -weights_source[i] * inv_n / p;
  }
  for (std::size_t j = 0; j < d_target.rows(); ++j) {
    const double raw = d_target(j, 0);
    const double p = std::clamp(raw, lo, hi);
    acc -= weights_target[j] * std::log(1.0 - p);
    if (raw > lo && raw < hi) grad_target(j, 0) = weights_target[j] * inv_n / (1.0 - p);
  }
  out.value = acc * inv_n;
  out.grads.push_back(std::move(grad_source));
  out.grads.push_back(std::move(grad_target));
  return out;
}

double total_loss(double cls, double transfer, double lambda) {
  if (lambda < 0.0) throw ValidationError("total_loss: lambda must be non-negative");
  return cls + lambda * transfer;
}

}  // namespace uda
