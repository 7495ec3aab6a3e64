#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "statemix/autodiff/gradcheck.hpp"
#include "statemix/autodiff/tape.hpp"

namespace statemix::ad {
namespace {

Matrix vec(std::initializer_list<double> xs) {
  Matrix m(static_cast<Index>(xs.size()), 1);
  Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

TEST(StopGradient, PreservesPrimal) {
  Tape tape;
  const Var x = tape.variable(vec({1.5, -2.0, 3.25}));
  const Var y = stop_gradient(x);
  EXPECT_EQ(y.value(), x.value());
  EXPECT_FALSE(y.requires_grad());
}

TEST(StopGradient, FreezesOneFactorOfProduct) {
  Tape tape;
  const Var x = tape.variable(vec({2.0}));
  const Var y = sum(stop_gradient(x) * x);
  EXPECT_DOUBLE_EQ(backward(y).wrt(x)(0, 0), 2.0);  // x, not 2x
}

TEST(StopGradient, WeightTransformHasUnitPrimalAndScoreGradient) {
  const double w0 = 0.37;
  Tape tape;
  const Var w = tape.variable(vec({w0}));
  const Var f = sum(w / stop_gradient(w));
  EXPECT_EQ(f.scalar(), 1.0);
  // Oracle: with the denominator frozen at w0, f(w) = w / w0; central differences.
  const double h = 1e-5;
  const double fd = ((w0 + h) / w0 - (w0 - h) / w0) / (2 * h);
  EXPECT_NEAR(backward(f).wrt(w)(0, 0), fd, 1e-9);
  EXPECT_NEAR(fd, 1.0 / w0, 1e-9);
}

TEST(StopGradient, LeavesOtherEdgesUntouched) {
  Tape tape;
  const Var x = tape.variable(vec({0.3, -1.2, 0.7}));
  const Var base = sum(sin(x) * x);
  const Var with_frozen = base + sum(exp(stop_gradient(x)));
  const Matrix g0 = backward(base).wrt(x);
  const Matrix g1 = backward(with_frozen).wrt(x);
  EXPECT_EQ(g0, g1);
}

TEST(LogSumExp, Examples) {
  Tape tape;
  EXPECT_NEAR(logsumexp(tape.constant(vec({0.0, 0.0}))).scalar(), std::numbers::ln2, 1e-15);
  EXPECT_EQ(logsumexp(tape.constant(vec({-4.25}))).scalar(), -4.25);
  const double big = logsumexp(tape.constant(vec({1000.0, 1000.0}))).scalar();
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 1000.0 + std::numbers::ln2, 1e-12);
}

TEST(LogSumExp, EmptyInputIsRejected) {
  Tape tape;
  EXPECT_THROW(logsumexp(tape.constant(Matrix(0, 1))), std::invalid_argument);
}

TEST(LogSumExp, AllNegativeInfinityStaysFinitePath) {
  Tape tape;
  const double inf = std::numeric_limits<double>::infinity();
  const Var x = tape.variable(vec({-inf, -inf}));
  const Var y = logsumexp(x);
  EXPECT_EQ(y.scalar(), -inf);
  EXPECT_EQ(backward(y).wrt(x), Matrix::Zero(2, 1));
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  const Var x = tape.variable(vec({1, 2, 3, 4}));
  EXPECT_EQ(backward(sum(x)).wrt(x), Matrix::Ones(4, 1));
}

TEST(Backward, LogSumExpGivesSoftmax) {
  Tape tape;
  const Matrix x0 = vec({0.1, -2.0, 1.3});
  const Var x = tape.variable(x0);
  const Matrix g = backward(logsumexp(x)).wrt(x);
  const Eigen::ArrayXd e = x0.array().exp();
  const Eigen::ArrayXd expected = e / e.sum();
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(g(i, 0), expected(i), 1e-15);
}

TEST(Backward, RejectsNonScalarRoot) {
  Tape tape;
  const Var x = tape.variable(vec({1, 2}));
  EXPECT_THROW(backward(x), std::invalid_argument);
}

TEST(Backward, UnusedLeavesGetZero) {
  Tape tape;
  const Var x = tape.variable(vec({1, 2}));
  const Var unused = tape.variable(Matrix::Ones(2, 3));
  const Gradients g = backward(sum(x));
  EXPECT_FALSE(g.reached(unused));
  EXPECT_EQ(g.wrt(unused), Matrix::Zero(2, 3));
}

TEST(Backward, ConstantsAreNeverDifferentiated) {
  Tape tape;
  const Var c = tape.constant(vec({1, 2}));
  const Var x = tape.variable(vec({3, 4}));
  const Gradients g = backward(sum(c * x));
  EXPECT_FALSE(g.reached(c));
  EXPECT_EQ(g.wrt(x), vec({1, 2}));
}

TEST(Relu, DerivativeAtKinkIsZero) {
  Tape tape;
  const Var x = tape.variable(vec({-1.0, 0.0, 2.0}));
  EXPECT_EQ(backward(sum(relu(x))).wrt(x), vec({0.0, 0.0, 1.0}));
}

TEST(Gather, RepeatedIndicesScatterAdd) {
  Tape tape;
  const Var x = tape.variable(Matrix::Identity(2, 3));
  const Var y = gather_cols(x, {1, 1, 1, 0});
  EXPECT_EQ(y.cols(), 4);
  const Matrix g = backward(sum(y)).wrt(x);
  EXPECT_EQ(g, (Matrix(2, 3) << 1, 3, 0, 1, 3, 0).finished());
}

TEST(Shapes, MismatchThrows) {
  Tape tape;
  const Var a = tape.variable(Matrix::Ones(2, 2));
  const Var b = tape.variable(Matrix::Ones(3, 2));
  EXPECT_THROW(a + b, std::invalid_argument);
  EXPECT_THROW(matmul(a, b), std::invalid_argument);
  EXPECT_THROW(gather_cols(a, {2}), std::out_of_range);
}

TEST(FiniteDifferences, EveryPrimitive) {
  Rng rng{42};
  for (const auto& r : check_primitives(rng)) {
    EXPECT_TRUE(r.passed()) << r.name << " rel err " << r.max_rel_error;
  }
}

TEST(FiniteDifferences, HundredRandomCompositeGraphs) {
  const auto results = check_random_graphs(2024, 100, 8);
  ASSERT_EQ(results.size(), 100u);
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed()) << r.name << " rel err " << r.max_rel_error;
  }
}

TEST(Determinism, ReplayIsBitwiseIdentical) {
  const GraphFn fn = random_graph(77, 8);
  Rng rng{5};
  const std::vector<Matrix> inputs = {Matrix::Random(4, 3), Matrix::Random(4, 3), Matrix::Random(3, 3)};
  const auto g1 = analytic_gradient(fn, inputs);
  const auto g2 = analytic_gradient(fn, inputs);
  EXPECT_EQ(evaluate(fn, inputs), evaluate(fn, inputs));
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(g1[i], g2[i]);
}

}  // namespace
}  // namespace statemix::ad
