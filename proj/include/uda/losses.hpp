#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uda/matrix.hpp"
#include "uda/numeric.hpp"

namespace uda {

/// Transfer objective selector.
enum class TransferLossKind { kNone, kCoral, kMmd, kCdan, kCdanE };

std::string_view to_string(TransferLossKind kind) noexcept;
/// Accepts the canonical tags plus the aliases "ddc", "cdan-e" and "cdan+e".
TransferLossKind parse_transfer_loss_kind(std::string_view text);
bool is_adversarial(TransferLossKind kind) noexcept;

/// Weight on the transfer term as a function of the (1-based) epoch.
struct LambdaSchedule {
  enum class Kind { kConstant, kInverseEpoch };
  Kind kind = Kind::kConstant;
  double base = 1.0;
};

std::string_view to_string(LambdaSchedule::Kind kind) noexcept;
LambdaSchedule::Kind parse_lambda_schedule_kind(std::string_view text);

/// constant -> base; inverse-epoch -> base / epoch. Epoch 0 is rejected.
double lambda_value(const LambdaSchedule& schedule, std::size_t epoch);

/// Unbiased feature covariance (Dᵀ D − (1ᵀD)ᵀ(1ᵀD)/n) / (n − 1).
/// Requires at least two rows.
Matrix covariance(const Matrix& batch);

/// ‖C_S − C_T‖²_F / (4 d²) with gradients w.r.t. both batches.
GradPair coral_loss(const Matrix& source, const Matrix& target);

/// Euclidean norm of the difference of row means. At exactly zero distance
/// the (sub)gradient returned is zero.
GradPair mmd_linear(const Matrix& source, const Matrix& target);

/// Squared linear MMD, the smooth form used by the trainer.
GradPair mmd_squared(const Matrix& source, const Matrix& target);

/// Shannon entropy of each probability row, with 0 log 0 = 0.
std::vector<double> entropy(const Matrix& predictions);

/// 1 + exp(-h); in (1, 2] for h >= 0.
double entropy_weight(double h);

std::vector<double> entropy_weights(const Matrix& predictions);

/// Row-wise flattened outer product f_i ⊗ g_i; column index is a * g.cols() + b.
Matrix multilinear_map(const Matrix& f, const Matrix& g);

/// Gradients w.r.t. f and g given a gradient w.r.t. multilinear_map(f, g).
struct MultilinearGrads {
  Matrix f;
  Matrix g;
};
MultilinearGrads multilinear_map_backward(const Matrix& f, const Matrix& g, const Matrix& grad_out);

/// Weighted domain-discrimination loss over the concatenated batch:
///   −(Σ_s w·log D + Σ_t w·log(1 − D)) / (n_s + n_t)
/// Source is the positive domain. D is clamped to [eps, 1 − eps]. Weights are
/// constants; grads[0] and grads[1] are w.r.t. the source and target
/// discriminator outputs (n x 1 columns).
GradPair adversarial_loss(const Matrix& d_source, const Matrix& d_target,
                          std::span<const double> weights_source,
                          std::span<const double> weights_target);

/// cls + λ·transfer.
double total_loss(double cls, double transfer, double lambda);

}  // namespace uda
