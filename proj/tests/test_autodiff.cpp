#include <gtest/gtest.h>

#include "kraw/autodiff.hpp"
#include "testing.hpp"

namespace kraw::ad {
namespace {

class GradientCheck : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientCheck, TwentySeeds) {
  const auto cases = kraw::testing::gradient_cases();
  const auto& c = cases.at(GetParam());
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = c.run(seed);
    EXPECT_LE(r.max_rel_error, 1e-4) << c.name << " seed " << seed << ": " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(Ops, GradientCheck,
                         ::testing::Range<std::size_t>(0, kraw::testing::gradient_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           return kraw::testing::gradient_cases()[info.param].name;
                         });

TEST(Sigmoid, AtZero) {
  Tape tape;
  const Var x = tape.leaf(Matrix::scalar(0.0));
  const Var y = sigmoid(x);
  EXPECT_EQ(y.value().item(), 0.5);
  tape.backward(y);
  EXPECT_EQ(x.grad().item(), 0.25);
}

TEST(Sigmoid, SaturatesWithoutOverflow) {
  Tape tape;
  const Var y = sigmoid(tape.leaf(Matrix{{-800.0, 800.0}}));
  EXPECT_EQ(y.value()(0, 0), 0.0);
  EXPECT_EQ(y.value()(0, 1), 1.0);
}

TEST(LayerNorm, ConstantRowGivesZeros) {
  Tape tape;
  const Var x = tape.constant(Matrix{{3.0, 3.0, 3.0, 3.0}});
  const Var y = layernorm(x, tape.constant(Matrix(1, 4, 1.0)), tape.constant(Matrix(1, 4)));
  EXPECT_EQ(y.value(), Matrix(1, 4));
}

TEST(LayerNorm, RowStatistics) {
  Tape tape;
  std::mt19937_64 rng(2);
  const Var y = layernorm(tape.constant(kraw::testing::random_matrix(5, 6, rng, -3, 3)),
                          tape.constant(Matrix(1, 6, 1.0)), tape.constant(Matrix(1, 6)), 0.0);
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0, var = 0;
    for (double v : y.value().row(r)) mean += v / 6;
    for (double v : y.value().row(r)) var += (v - mean) * (v - mean) / 6;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-12);
  }
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  const Var x = tape.leaf(Matrix(3, 2, 0.7));
  tape.backward(sum(x));
  EXPECT_EQ(x.grad(), Matrix(3, 2, 1.0));
}

TEST(Backward, UnusedLeafHasZeroGradient) {
  Tape tape;
  const Var x = tape.leaf(Matrix(2, 2, 1.0));
  const Var unused = tape.leaf(Matrix(3, 1, 5.0));
  tape.backward(sum(x));
  EXPECT_EQ(unused.grad(), Matrix(3, 1));
}

TEST(Backward, LeafsAccumulateAcrossUses) {
  Tape tape;
  const Var x = tape.leaf(Matrix{{2.0}});
  tape.backward(sum(add(x, add(x, x))));
  EXPECT_EQ(x.grad().item(), 3.0);
}

TEST(Backward, TwiceIsAnError) {
  Tape tape;
  const Var loss = sum(tape.leaf(Matrix(1, 1, 1.0)));
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), std::logic_error);
  tape.reset();
  const Var again = sum(tape.leaf(Matrix(1, 1, 1.0)));
  EXPECT_NO_THROW(tape.backward(again));
}

TEST(Backward, RequiresScalarLoss) {
  Tape tape;
  EXPECT_THROW(tape.backward(tape.leaf(Matrix(2, 1))), std::invalid_argument);
}

TEST(Backward, ConstantsHaveNoGradient) {
  Tape tape;
  const Var c = tape.constant(Matrix(1, 1, 2.0));
  tape.backward(sum(c));
  EXPECT_THROW(c.grad(), std::logic_error);
}

TEST(Dropout, EvalIsIdentityAndTrainingIsReproducible) {
  std::mt19937_64 rng(4);
  const Matrix m = kraw::testing::random_matrix(6, 5, rng);
  Tape tape;
  Rng r1(9), r2(9);
  EXPECT_EQ(dropout(tape.constant(m), 0.5, r1, false).value(), m);
  const Matrix a = dropout(tape.constant(m), 0.5, r1, true).value();
  r2.seed(9);
  const Matrix b = dropout(tape.constant(m), 0.5, r2, true).value();
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double v = a.values()[i];
    EXPECT_TRUE(v == 0.0 || v == 2.0 * m.values()[i]);
  }
}

TEST(NonFinite, IsDetected) {
  Tape tape;
  const Var big = tape.constant(Matrix(1, 1, 1e200));
  EXPECT_THROW(matmul(big, big), NonFiniteError);
  EXPECT_THROW(tape.leaf(Matrix(1, 1, std::nan(""))), NonFiniteError);
}

TEST(ShapeErrors, AreReported) {
  Tape tape;
  EXPECT_THROW(add(tape.constant(Matrix(2, 2)), tape.constant(Matrix(2, 3))),
               std::invalid_argument);
  EXPECT_THROW(matmul(tape.constant(Matrix(2, 2)), tape.constant(Matrix(3, 2))),
               std::invalid_argument);
  EXPECT_THROW(scale(tape.constant(Matrix(2, 2)), tape.constant(Matrix(2, 1))),
               std::invalid_argument);
}

TEST(Scale, GradientOfScalarIsInnerProduct) {
  std::mt19937_64 rng(8);
  const Matrix x = kraw::testing::random_matrix(3, 4, rng);
  const Matrix w = kraw::testing::random_matrix(3, 4, rng);
  Tape tape;
  const Var s = tape.leaf(Matrix::scalar(1.7));
  tape.backward(weighted_sum(scale(tape.constant(x), s), w));
  EXPECT_NEAR(s.grad().item(), dot(w, x), 1e-14);
}

}  // namespace
}  // namespace kraw::ad
