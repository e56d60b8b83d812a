#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "uda/matrix.hpp"

namespace uda {

/// Guard added inside logarithms so that -log(0) stays finite.
inline constexpr double kLogEpsilon = 1e-12;

/// A scalar loss value together with its gradient w.r.t. each differentiable
/// input, in argument order. grads[i] has the shape of input i.
struct GradPair {
  double value = 0.0;
  std::vector<Matrix> grads;
};

/// Row-wise softmax with max subtraction. Throws ValidationError when empty.
Matrix softmax_rows(const Matrix& logits);

/// Pulls a gradient w.r.t. softmax outputs back to the logits:
/// dz_j = p_j (dp_j - sum_k dp_k p_k), row by row.
Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs);

/// Mean over rows of -log(probs[row][label] + eps); gradient w.r.t. probs.
GradPair cross_entropy(const Matrix& probs, std::span<const std::size_t> labels);

using ScalarFn = std::function<double(const Matrix&)>;

/// Central-difference gradient estimate of f at x with step h.
Matrix fd_gradient(const ScalarFn& f, const Matrix& x, double h = 1e-4);

/// Largest entrywise disagreement between an analytic and a numeric gradient,
/// measured relative to the larger of the two gradients' max-abs entries.
struct GradientDiscrepancy {
  double max_relative_error = 0.0;
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

GradientDiscrepancy compare_gradients(const Matrix& analytic, const Matrix& numeric);

}  // namespace uda
