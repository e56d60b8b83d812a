#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "support/oracles.hpp"
#include "uda/errors.hpp"
#include "uda/losses.hpp"
#include "uda/numeric.hpp"
#include "uda/rng.hpp"

namespace uda {
namespace {

TEST(Softmax, EqualLogitsGiveHalves) {
  EXPECT_EQ(softmax_rows(Matrix{{0, 0}}), (Matrix{{0.5, 0.5}}));
}

TEST(Softmax, LargeLogitIsStable) {
  const Matrix p = softmax_rows(Matrix{{1000, 0}});
  EXPECT_TRUE(all_finite(p));
  EXPECT_NEAR(p(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(p(0, 1), 0.0, 1e-12);
}

TEST(Softmax, LogTwoOffset) {
  const Matrix p = softmax_rows(Matrix{{std::log(2.0), 0}});
  EXPECT_NEAR(p(0, 0), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(p(0, 1), 1.0 / 3.0, 1e-12);
}

TEST(Softmax, EmptyInputRejected) {
  EXPECT_THROW(softmax_rows(Matrix(0, 3)), ValidationError);
}

TEST(CrossEntropy, HandValues) {
  const std::vector<std::size_t> zero{0};
  const std::vector<std::size_t> one{1};
  EXPECT_NEAR(cross_entropy(Matrix{{1, 0}}, zero).value, 0.0, 1e-11);
  // The log floor shifts each term by about eps/p.
  EXPECT_NEAR(cross_entropy(Matrix{{0.5, 0.5}}, zero).value, std::log(2.0), 1e-11);
  EXPECT_NEAR(cross_entropy(Matrix{{0.25, 0.75}}, one).value, -std::log(0.75), 1e-11);
}

TEST(CrossEntropy, ZeroProbabilityStaysFinite) {
  const std::vector<std::size_t> one{1};
  const double v = cross_entropy(Matrix{{1, 0}}, one).value;
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, -std::log(kLogEpsilon), 1e-9);
}

TEST(CrossEntropy, LabelOutOfRange) {
  const std::vector<std::size_t> labels{2};
  EXPECT_THROW(cross_entropy(Matrix{{0.5, 0.5}}, labels), IndexError);
  const std::vector<std::size_t> too_many{0, 1};
  EXPECT_THROW(cross_entropy(Matrix{{0.5, 0.5}}, too_many), DimensionError);
}

TEST(FiniteDifference, Square) {
  const Matrix g = fd_gradient([](const Matrix& x) { return x(0, 0) * x(0, 0); }, Matrix{{3}});
  EXPECT_NEAR(g(0, 0), 6.0, 1e-8);
}

TEST(FiniteDifference, SumGivesOnes) {
  const Matrix g = fd_gradient([](const Matrix& x) { return sum(x); }, Matrix{{1, -2}, {0.5, 9}});
  for (double v : g.data()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(FiniteDifference, MatchesCoralGradient) {
  Rng rng(7);
  Matrix s(4, 3), t(4, 3);
  for (double& v : s.data()) v = rng.normal();
  for (double& v : t.data()) v = rng.normal(0.0, 2.0);
  const GradPair analytic = coral_loss(s, t);
  const Matrix fs = fd_gradient([&](const Matrix& x) { return coral_loss(x, t).value; }, s);
  const Matrix ft = fd_gradient([&](const Matrix& x) { return coral_loss(s, x).value; }, t);
  EXPECT_LT(compare_gradients(analytic.grads[0], fs).max_relative_error, 1e-6);
  EXPECT_LT(compare_gradients(analytic.grads[1], ft).max_relative_error, 1e-6);
}

TEST(CompareGradients, ReportsWorstEntry) {
  const GradientDiscrepancy d = compare_gradients(Matrix{{1, 2}, {3, 4}}, Matrix{{1, 2}, {3, 5}});
  EXPECT_EQ(d.worst_row, 1u);
  EXPECT_EQ(d.worst_col, 1u);
  EXPECT_NEAR(d.max_relative_error, 1.0 / 5.0, 1e-15);
  EXPECT_EQ(compare_gradients(Matrix(2, 2), Matrix(2, 2)).max_relative_error, 0.0);
}

TEST(SoftmaxBackward, MatchesFiniteDifference) {
  Rng rng(3);
  Matrix z(3, 4), w(3, 4);
  for (double& v : z.data()) v = rng.normal();
  for (double& v : w.data()) v = rng.normal();
  const auto f = [&](const Matrix& x) { return sum(hadamard(softmax_rows(x), w)); };
  const Matrix analytic = softmax_backward(softmax_rows(z), w);
  EXPECT_LT(compare_gradients(analytic, fd_gradient(f, z)).max_relative_error, 1e-7);
}

}  // namespace
}  // namespace uda
