#include "uda/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "uda/errors.hpp"

namespace uda {

Matrix softmax_rows(const Matrix& logits) {
  if (logits.empty()) throw ValidationError("softmax_rows: empty logits");
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in = logits.row(i);
    auto o = out.row(i);
    const double peak = *std::ranges::max_element(in);
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - peak);
      total += o[j];
    }
    for (double& v : o) v /= total;
  }
  return out;
}

Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
  require_same_shape(probs, grad_probs, "softmax_backward");
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto p = probs.row(i);
    auto g = grad_probs.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) dot += p[j] * g[j];
    auto o = out.row(i);
    for (std::size_t j = 0; j < p.size(); ++j) o[j] = p[j] * (g[j] - dot);
  }
  return out;
}

GradPair cross_entropy(const Matrix& probs, std::span<const std::size_t> labels) {
  if (probs.rows() != labels.size()) {
    throw DimensionError("cross_entropy: " + std::to_string(probs.rows()) + " prediction rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  if (probs.rows() == 0) throw ValidationError("cross_entropy: empty batch");
  const double inv_n = 1.0 / static_cast<double>(probs.rows());
  GradPair out;
  Matrix grad(probs.rows(), probs.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const std::size_t y = labels[i];
    if (y >= probs.cols()) {
      throw IndexError("cross_entropy: label " + std::to_string(y) + " at row " +
                       std::to_string(i) + " out of range for " + std::to_string(probs.cols()) +
                       " classes");
    }
    const double p = probs(i, y) + kLogEpsilon;
    total -= std::log(p);
    grad(i, y) = -inv_n / p;
  }
  out.value = total * inv_n;
  out.grads.push_back(std::move(grad));
  return out;
}

Matrix fd_gradient(const ScalarFn& f, const Matrix& x, double h) {
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  auto p = probe.data();
  auto g = grad.data();
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double original = p[k];
    p[k] = original + h;
    const double plus = f(probe);
    p[k] = original - h;
    const double minus = f(probe);
    p[k] = original;
    g[k] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

GradientDiscrepancy compare_gradients(const Matrix& analytic, const Matrix& numeric) {
  require_same_shape(analytic, numeric, "compare_gradients");
  GradientDiscrepancy worst;
  const double scale =
      std::max({max_abs(analytic), max_abs(numeric), std::numeric_limits<double>::min()});
  for (std::size_t i = 0; i < analytic.rows(); ++i) {
    for (std::size_t j = 0; j < analytic.cols(); ++j) {
      const double err = std::abs(analytic(i, j) - numeric(i, j)) / scale;
      if (err > worst.max_relative_error || (i == 0 && j == 0)) {
        worst = {err, i, j, analytic(i, j), numeric(i, j)};
      }
    }
  }
  return worst;
}

}  // namespace uda
