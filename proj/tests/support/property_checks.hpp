#pragma once

// Randomized invariant checks shared by the unit suite and the acceptance
// binary. Each returns an empty string on success, or a description of the
// first counterexample.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "uda/losses.hpp"
#include "uda/numeric.hpp"
#include "uda/rng.hpp"

namespace uda::testing {

struct PropertyCheck {
  std::string name;
  std::function<std::string(Rng&)> one_case;
};

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

inline std::size_t random_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

inline Matrix permute_rows(const Matrix& m, Rng& rng) {
  std::vector<std::size_t> order(m.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  return gather_rows(m, order);
}

template <typename... Parts>
std::string describe(const Parts&... parts) {
  std::ostringstream os;
  os.precision(17);
  (os << ... << parts);
  return os.str();
}

inline std::vector<PropertyCheck> property_checks() {
  std::vector<PropertyCheck> checks;

  checks.push_back({"matmul associativity (1e-9 rel)", [](Rng& rng) -> std::string {
    const std::size_t a = random_size(rng, 1, 6), b = random_size(rng, 1, 6),
                      c = random_size(rng, 1, 6), d = random_size(rng, 1, 6);
    const Matrix x = random_matrix(rng, a, b), y = random_matrix(rng, b, c),
                 z = random_matrix(rng, c, d);
    const Matrix left = matmul(matmul(x, y), z);
    const Matrix right = matmul(x, matmul(y, z));
    const double err = frobenius_norm(left - right) / std::max(frobenius_norm(left), 1e-300);
    if (err > 1e-9) return describe("relative error ", err);
    return {};
  }});

  checks.push_back({"softmax rows sum to 1 and ignore row shifts", [](Rng& rng) -> std::string {
    const std::size_t n = random_size(rng, 1, 6), c = random_size(rng, 1, 8);
    Matrix logits = random_matrix(rng, n, c, 5.0);
    const Matrix p = softmax_rows(logits);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (double v : p.row(i)) {
        if (v < 0.0) return describe("negative probability ", v);
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-12) return describe("row ", i, " sums to ", s);
      const double shift = rng.uniform(-50.0, 50.0);
      for (double& v : logits.row(i)) v += shift;
    }
    const Matrix q = softmax_rows(logits);
    if (max_abs(p - q) > 1e-12) return describe("shift changed output by ", max_abs(p - q));
    return {};
  }});

  checks.push_back({"cross entropy positive, zero (up to eps) only on a certain label", [](Rng& rng) -> std::string {
    const std::size_t n = random_size(rng, 1, 6), c = random_size(rng, 2, 6);
    const Matrix p = softmax_rows(random_matrix(rng, n, c, 3.0));
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(rng.below(c));
    const double v = cross_entropy(p, labels).value;
    if (!(v > 0.0)) return describe("non-positive loss ", v, " for non-degenerate probabilities");
    Matrix onehot(n, c);
    for (std::size_t i = 0; i < n; ++i) onehot(i, labels[i]) = 1.0;
    const double z = cross_entropy(onehot, labels).value;
    // −log(1 + eps) sits just below zero.
    if (std::abs(z) > 1e-11) return describe("certain prediction gives ", z);
    return {};
  }});

  checks.push_back({"covariance matches brute-force oracle", [](Rng& rng) -> std::string {
    const Matrix x = random_matrix(rng, random_size(rng, 2, 9), random_size(rng, 1, 5), 2.0);
    const Matrix c = covariance(x);
    const Matrix o = brute_force_covariance(x);
    if (max_abs(c - o) > 1e-10 * std::max(1.0, max_abs(o))) return describe("max diff ", max_abs(c - o));
    if (c != transpose(c)) return "covariance not symmetric";
    return {};
  }});

  checks.push_back({"coral symmetric, non-negative, matches oracle", [](Rng& rng) -> std::string {
    const std::size_t d = random_size(rng, 1, 5);
    const Matrix s = random_matrix(rng, random_size(rng, 2, 9), d);
    const Matrix t = random_matrix(rng, random_size(rng, 2, 9), d, 1.5);
    const double st = coral_loss(s, t).value;
    const double ts = coral_loss(t, s).value;
    if (st != ts) return describe("coral(S,T)=", st, " coral(T,S)=", ts);
    if (st < 0.0) return describe("negative coral ", st);
    if (relative_difference(st, brute_force_coral(s, t)) > 1e-9) return "disagrees with oracle";
    if (coral_loss(s, s).value != 0.0) return "coral(S,S) != 0";
    return {};
  }});

  checks.push_back({"coral invariant under row permutation", [](Rng& rng) -> std::string {
    const std::size_t d = random_size(rng, 1, 5);
    const Matrix s = random_matrix(rng, random_size(rng, 2, 9), d);
    const Matrix t = random_matrix(rng, random_size(rng, 2, 9), d, 0.7);
    const double base = coral_loss(s, t).value;
    const double perm = coral_loss(permute_rows(s, rng), permute_rows(t, rng)).value;
    if (relative_difference(base, perm) > 1e-10) return describe(base, " vs ", perm);
    return {};
  }});

  checks.push_back({"coral scales by c^4", [](Rng& rng) -> std::string {
    const std::size_t d = random_size(rng, 1, 5);
    const Matrix s = random_matrix(rng, random_size(rng, 2, 9), d);
    const Matrix t = random_matrix(rng, random_size(rng, 2, 9), d, 1.3);
    const double c = rng.uniform(-3.0, 3.0);
    const double base = coral_loss(s, t).value;
    const double scaled = coral_loss(s * c, t * c).value;
    if (relative_difference(scaled, std::pow(c, 4) * base) > 1e-9) {
      return describe("c=", c, ": ", scaled, " vs ", std::pow(c, 4) * base);
    }
    return {};
  }});

  checks.push_back({"mmd symmetric, non-negative, translation invariant, |c| scaling", [](Rng& rng) -> std::string {
    const std::size_t d = random_size(rng, 1, 5);
    const Matrix x = random_matrix(rng, random_size(rng, 1, 9), d);
    Matrix y = random_matrix(rng, random_size(rng, 1, 9), d);
    y += Matrix(y.rows(), d, rng.uniform(-1.0, 1.0));
    const double xy = mmd_linear(x, y).value;
    if (xy != mmd_linear(y, x).value) return "asymmetric";
    if (xy < 0.0) return "negative";
    Matrix v(1, d);
    for (double& e : v.data()) e = rng.uniform(-10.0, 10.0);
    Matrix xs = x, ys = y;
    add_row_vector(xs, v);
    add_row_vector(ys, v);
    const double shifted = mmd_linear(xs, ys).value;
    if (std::abs(shifted - xy) > 1e-9 * std::max(1.0, xy)) return describe("translation: ", xy, " vs ", shifted);
    const double c = rng.uniform(-4.0, 4.0);
    const double scaled = mmd_linear(x * c, y * c).value;
    if (relative_difference(scaled, std::abs(c) * xy) > 1e-10) return describe("scaling by ", c);
    return {};
  }});

  checks.push_back({"entropy in [0, ln C], weight in (1, 2]", [](Rng& rng) -> std::string {
    const std::size_t n = random_size(rng, 1, 6), c = random_size(rng, 1, 8);
    Matrix p = softmax_rows(random_matrix(rng, n, c, rng.uniform(0.0, 30.0)));
    if (rng.below(4) == 0) {
      p = Matrix(n, c);
      for (std::size_t i = 0; i < n; ++i) p(i, rng.below(c)) = 1.0;
    }
    const double cap = std::log(static_cast<double>(c));
    for (double h : entropy(p)) {
      if (h < 0.0 || h > cap + 1e-12) return describe("entropy ", h, " outside [0, ", cap, "]");
      const double w = entropy_weight(h);
      if (w <= 1.0 || w > 2.0) return describe("weight ", w);
    }
    return {};
  }});

  checks.push_back({"outer-product norm identity", [](Rng& rng) -> std::string {
    const std::size_t n = random_size(rng, 1, 5);
    const Matrix f = random_matrix(rng, n, random_size(rng, 1, 8));
    const Matrix g = softmax_rows(random_matrix(rng, n, random_size(rng, 1, 6)));
    const Matrix h = multilinear_map(f, g);
    for (std::size_t i = 0; i < n; ++i) {
      double hn = 0.0, fn = 0.0, gn = 0.0;
      for (double v : h.row(i)) hn += v * v;
      for (double v : f.row(i)) fn += v * v;
      for (double v : g.row(i)) gn += v * v;
      if (relative_difference(std::sqrt(hn), std::sqrt(fn) * std::sqrt(gn)) > 1e-12) {
        return describe("row ", i, ": ", std::sqrt(hn), " vs ", std::sqrt(fn * gn));
      }
    }
    return {};
  }});

  checks.push_back({"adversarial loss linear in weights; unit weights give the CDAN form", [](Rng& rng) -> std::string {
    const std::size_t ns = random_size(rng, 1, 6), nt = random_size(rng, 1, 6);
    Matrix ds(ns, 1), dt(nt, 1);
    for (double& v : ds.data()) v = rng.uniform(0.01, 0.99);
    for (double& v : dt.data()) v = rng.uniform(0.01, 0.99);
    const std::vector<double> one_s(ns, 1.0), one_t(nt, 1.0), two_s(ns, 2.0), two_t(nt, 2.0);
    const double unit = adversarial_loss(ds, dt, one_s, one_t).value;
    double manual = 0.0;
    for (double v : ds.data()) manual -= std::log(v);
    for (double v : dt.data()) manual -= std::log(1.0 - v);
    manual /= static_cast<double>(ns + nt);
    if (relative_difference(unit, manual) > 1e-12) return describe(unit, " vs ", manual);
    if (adversarial_loss(ds, dt, two_s, two_t).value != 2.0 * unit) return "weights 2 do not double the loss";
    if (unit < 0.0) return "negative";
    return {};
  }});

  return checks;
}

/// Runs `cases` instances of a check; returns "" or the first failure.
inline std::string run_property(const PropertyCheck& check, std::uint64_t seed, int cases) {
  Rng rng(seed);
  for (int k = 0; k < cases; ++k) {
    const std::string failure = check.one_case(rng);
    if (!failure.empty()) return "case " + std::to_string(k) + ": " + failure;
  }
  return {};
}

}  // namespace uda::testing
