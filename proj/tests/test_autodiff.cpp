#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace venom;
using venom::testing::random_tensor;

namespace {

// Weighted sum so every output coordinate gets a distinct upstream gradient.
ad::Var weighted(ad::Tape& tape, ad::Var y, const Tensor& w) { return tape.sum(y * tape.constant(w)); }

Tensor away_from_zero(Tensor t) {
  for (double& v : t.values()) v = (v < 0 ? -1.0 : 1.0) * (0.05 + std::abs(v));
  return t;
}

}  // namespace

TEST(Forward, IdentityNetwork) {
  ParameterSet ps;
  ps.add("l0.weight", Tensor({2, 2}, {1, 0, 0, 1}));
  ps.add("l0.bias", Tensor({2}, 0.0));
  Mlp net({2, 2}, Activation::kRelu, ps);
  EXPECT_EQ(net.evaluate(Tensor({1, 2}, {1.0, 2.0})), Tensor({1, 2}, {1.0, 2.0}));
}

TEST(Forward, SingleLinearLayer) {
  ParameterSet ps;
  ps.add("l0.weight", Tensor({2, 2}, {2, 0, 0, 3}));
  ps.add("l0.bias", Tensor({2}, 1.0));
  Mlp net({2, 2}, Activation::kTanh, ps);
  EXPECT_EQ(net.evaluate(Tensor({1, 2}, {1.0, 1.0})), Tensor({1, 2}, {3.0, 4.0}));
}

TEST(Forward, MatchesStraightLineEvaluation) {
  Rng rng(11);
  for (Activation act : {Activation::kRelu, Activation::kTanh}) {
    Mlp net({7, 5, 4, 3}, act, rng);
    const Tensor x = random_tensor({2, 7}, rng);
    const Tensor y = net.evaluate(x);
    // Plain loops, no Eigen.
    std::vector<double> h(x.values().begin(), x.values().end());
    std::size_t in = 7;
    const std::vector<std::size_t> widths{7, 5, 4, 3};
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const Tensor& W = net.params().get("l" + std::to_string(l) + ".weight");
      const Tensor& b = net.params().get("l" + std::to_string(l) + ".bias");
      const std::size_t out = widths[l + 1];
      std::vector<double> next(2 * out);
      for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t j = 0; j < out; ++j) {
          double acc = b[j];
          for (std::size_t i = 0; i < in; ++i) acc += h[r * in + i] * W[i * out + j];
          if (l + 2 < widths.size()) acc = act == Activation::kRelu ? std::max(acc, 0.0) : std::tanh(acc);
          next[r * out + j] = acc;
        }
      h = std::move(next);
      in = out;
    }
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(y[i], h[i], 1e-12 * std::max(1.0, std::abs(h[i])));
  }
}

TEST(Forward, ShapeMismatchIsContractViolation) {
  Rng rng(1);
  Mlp net({4, 3}, Activation::kRelu, rng);
  EXPECT_THROW(net.evaluate(Tensor({1, 5})), ContractViolation);
}

TEST(Forward, NonFiniteParameterIsNumericError) {
  Rng rng(1);
  Mlp net({4, 3}, Activation::kRelu, rng);
  net.params().get("l0.weight")[2] = std::nan("");
  EXPECT_THROW(net.evaluate(Tensor({1, 4})), NumericError);
}

TEST(Forward, Deterministic) {
  Rng rng(3);
  Mlp net({16, 8, 4}, Activation::kTanh, rng);
  const Tensor x = random_tensor({3, 16}, rng);
  EXPECT_EQ(net.evaluate(x), net.evaluate(x));
}

TEST(Backward, SquareAtThree) {
  ad::Tape tape;
  ad::Var x = tape.variable(Tensor::scalar(3.0));
  tape.backward(tape.sum(tape.square(x)));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 6.0);
}

TEST(Backward, LinearSoftmaxClosedForm) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor W = random_tensor({4, 3}, rng);
    const Tensor x = random_tensor({1, 4}, rng);
    const std::size_t k = static_cast<std::size_t>(trial % 3);
    ad::Tape tape;
    ad::Var xv = tape.variable(x);
    ad::Var lp = tape.log_softmax(tape.matmul(xv, tape.constant(W)));
    Tensor pick({1, 3}, 0.0);
    pick[k] = 1.0;
    tape.backward(tape.sum(lp * tape.constant(pick)));
    // (onehot(k) - p)^T W^T, computed by hand
    double logits[3] = {0, 0, 0}, z = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t i = 0; i < 4; ++i) logits[j] += x[i] * W[i * 3 + j];
      z += std::exp(logits[j]);
    }
    for (std::size_t i = 0; i < 4; ++i) {
      double expect = 0;
      for (std::size_t j = 0; j < 3; ++j) expect += ((j == k ? 1.0 : 0.0) - std::exp(logits[j]) / z) * W[i * 3 + j];
      EXPECT_NEAR(tape.grad(xv)[i], expect, 1e-12);
    }
  }
}

TEST(Backward, NonScalarOutputRejected) {
  ad::Tape tape;
  ad::Var x = tape.variable(Tensor({3}, 1.0));
  EXPECT_THROW(tape.backward(tape.square(x)), ContractViolation);
}

TEST(Backward, DetachedGraphGivesEmptyReport) {
  ad::Tape tape;
  ad::Var c = tape.constant(Tensor({2}, 2.0));
  const auto report = tape.backward(tape.sum(tape.square(c)));
  EXPECT_TRUE(report.empty());
  EXPECT_FALSE(tape.has_grad(c));
  EXPECT_THROW(tape.grad(c), ContractViolation);
}

TEST(Backward, NonParticipatingLeafUntouched) {
  ad::Tape tape;
  ad::Var x = tape.variable(Tensor({2}, 1.0));
  ad::Var unused = tape.variable(Tensor({2}, 5.0));
  const auto report = tape.backward(tape.sum(x));
  EXPECT_EQ(report.leaves, std::vector<std::size_t>{x.id});
  EXPECT_FALSE(tape.has_grad(unused));
  EXPECT_EQ(tape.value(unused), Tensor({2}, 5.0));
}

TEST(Backward, LinearityOverSums) {
  Rng rng(8);
  const Tensor x0 = random_tensor({5}, rng);
  const Tensor a = random_tensor({5}, rng), b = random_tensor({5}, rng);
  auto grad_of = [&](bool use_a, bool use_b) {
    ad::Tape tape;
    ad::Var x = tape.variable(x0);
    ad::Var ya = weighted(tape, tape.tanh(x), a);
    ad::Var yb = weighted(tape, tape.square(x), b);
    ad::Var y = use_a && use_b ? ya + yb : (use_a ? ya : yb);
    tape.backward(y);
    return tape.grad(x);
  };
  const Tensor both = grad_of(true, true), ga = grad_of(true, false), gb = grad_of(false, true);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(both[i], ga[i] + gb[i], 1e-15);
}

// Finite-difference agreement for each primitive over 20 random instances.
class PrimitiveGradient : public ::testing::TestWithParam<const char*> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferences) {
  const std::string op = GetParam();
  Rng rng(stream_key({99, std::hash<std::string>{}(op)}));
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t r = 1 + rng.index(3), c = 2 + rng.index(4);
    const Tensor other = random_tensor({r, c}, rng);
    const Tensor W = random_tensor({c, 3}, rng);
    const Tensor bias = random_tensor({3}, rng);
    const Tensor wout = random_tensor({r, op == "matmul" || op == "affine" ? 3 : c}, rng);
    const Tensor wrow = random_tensor({2, c}, rng);
    Tensor x = random_tensor({r, c}, rng);
    if (op == "relu") x = away_from_zero(std::move(x));

    venom::ScalarFn fn = [&](ad::Tape& t, ad::Var v) -> ad::Var {
      if (op == "add") return weighted(t, v + t.constant(other), wout);
      if (op == "mul") return weighted(t, v * t.constant(other), wout);
      if (op == "matmul") return weighted(t, t.matmul(v, t.constant(W)), wout);
      if (op == "affine") return weighted(t, t.affine(v, t.constant(W), t.constant(bias)), wout);
      if (op == "relu") return weighted(t, t.relu(v), wout);
      if (op == "tanh") return weighted(t, t.tanh(v), wout);
      if (op == "log_softmax") return weighted(t, t.log_softmax(v), wout);
      if (op == "sum") return t.sum(t.tanh(v));
      if (op == "mean") return t.mean(t.tanh(v));
      if (op == "square") return weighted(t, t.square(v), wout);
      if (op == "gather_row") return weighted(t, t.gather_row(v, {r - 1, 0}), wrow);
      throw std::logic_error("unknown op");
    };
    const auto rep = finite_diff_check(fn, x, 1e-4);
    EXPECT_TRUE(rep.passed) << op << " trial " << trial << " err " << rep.max_rel_error;
  }
}

void check_weight_operand(const std::string& op) {
  Rng rng(4);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({2}, rng);
  const Tensor wout = random_tensor({3, 2}, rng);
  venom::ScalarFn fn = [&](ad::Tape& t, ad::Var w) {
    ad::Var y = op == "matmul" ? t.matmul(t.constant(x), w) : t.affine(t.constant(x), w, t.constant(b));
    return weighted(t, y, wout);
  };
  EXPECT_TRUE(finite_diff_check(fn, random_tensor({4, 2}, rng), 1e-4).passed);
  if (op == "affine") {
    const Tensor w = random_tensor({4, 2}, rng);
    venom::ScalarFn fb = [&](ad::Tape& t, ad::Var bv) {
      return weighted(t, t.affine(t.constant(x), t.constant(w), bv), wout);
    };
    EXPECT_TRUE(finite_diff_check(fb, b, 1e-4).passed);
  }
}

TEST(WeightOperand, MatmulRightOperand) { check_weight_operand("matmul"); }
TEST(WeightOperand, AffineWeightAndBias) { check_weight_operand("affine"); }

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient,
                         ::testing::Values("add", "mul", "matmul", "affine", "relu", "tanh", "log_softmax", "sum",
                                           "mean", "square", "gather_row"));

TEST(FiniteDiff, RandomMlpScalarOutput) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Mlp net({6, 5, 4}, trial % 2 ? Activation::kTanh : Activation::kRelu, rng);
    const Tensor x = away_from_zero(random_tensor({2, 6}, rng));
    venom::ScalarFn fn = [&](ad::Tape& t, ad::Var v) {
      auto p = bind_parameters(t, net.params(), false);
      return t.sum(t.log_softmax(net.forward(t, p, v)));
    };
    const auto rep = finite_diff_check(fn, x, 1e-4);
    EXPECT_TRUE(rep.passed) << "trial " << trial << " err " << rep.max_rel_error;
  }
}

TEST(FiniteDiff, LinearLayerPasses) {
  Rng rng(2);
  const Tensor W = random_tensor({3, 2}, rng), b = random_tensor({2}, rng);
  venom::ScalarFn fn = [&](ad::Tape& t, ad::Var v) { return t.sum(t.affine(v, t.constant(W), t.constant(b))); };
  EXPECT_TRUE(finite_diff_check(fn, random_tensor({1, 3}, rng), 1e-4).passed);
}

TEST(FiniteDiff, CorruptedBackwardRuleFails) {
  Rng rng(2);
  const Tensor W = random_tensor({3, 2}, rng);
  venom::ScalarFn fn = [&](ad::Tape& t, ad::Var v) { return t.sum(t.tanh(t.matmul(v, t.constant(W)))); };
  const auto rep = finite_diff_check(fn, random_tensor({1, 3}, rng), 1e-4, 1e-5,
                                     [](ad::Tape& t) { t.inject_backward_fault(ad::Op::kTanh, 1.5); });
  EXPECT_FALSE(rep.passed);
  EXPECT_GT(rep.max_rel_error, 0.1);
  EXPECT_LT(rep.worst_index, 3u);
  EXPECT_NE(rep.worst_analytic, rep.worst_numeric);
}

TEST(FiniteDiff, ZeroNetworkPassesWithZeroError) {
  ParameterSet ps;
  ps.add("l0.weight", Tensor({3, 3}, 0.0));
  ps.add("l0.bias", Tensor({3}, 0.0));
  ps.add("l1.weight", Tensor({3, 2}, 0.0));
  ps.add("l1.bias", Tensor({2}, 0.0));
  Mlp net({3, 3, 2}, Activation::kTanh, ps);
  venom::ScalarFn fn = [&](ad::Tape& t, ad::Var v) {
    auto p = bind_parameters(t, net.params(), false);
    return t.sum(net.forward(t, p, v));
  };
  const auto rep = finite_diff_check(fn, Tensor({1, 3}, {0.3, -0.2, 0.9}), 1e-4);
  EXPECT_TRUE(rep.passed);
  EXPECT_LE(rep.max_rel_error, 1e-12);
}

TEST(FiniteDiff, NonPositiveToleranceRejected) {
  venom::ScalarFn fn = [](ad::Tape& t, ad::Var v) { return t.sum(v); };
  EXPECT_THROW(finite_diff_check(fn, Tensor({1}, 1.0), 0.0), ContractViolation);
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  ParameterSet ps;
  ps.add("w", Tensor({2}, {1.0, -2.0}));
  AdamState adam(ps, 0.1);
  adam.step(ps, {Tensor({2}, {1.0, 1.0})});
  const Tensor after_first = ps.get("w");
  const double m_before = adam.first_moments()[0][0];
  adam.step(ps, {Tensor({2}, 0.0)});
  EXPECT_LT(std::abs(adam.first_moments()[0][0]), std::abs(m_before));
  EXPECT_EQ(adam.steps(), 2u);
  // The decayed first moment still moves the parameter, but a fresh state
  // with only zero gradients must not.
  ParameterSet fresh;
  fresh.add("w", Tensor({2}, {1.0, -2.0}));
  AdamState idle(fresh, 0.1);
  for (int i = 0; i < 5; ++i) idle.step(fresh, {Tensor({2}, 0.0)});
  EXPECT_EQ(fresh.get("w"), Tensor({2}, {1.0, -2.0}));
  (void)after_first;
}

TEST(Adam, DegenerateBetasGiveSignedStep) {
  ParameterSet ps;
  ps.add("w", Tensor({3}, 0.0));
  const double lr = 0.01, floor = 1e-8;
  AdamState adam(ps, lr, 0.0, 0.0, floor);
  const Tensor g({3}, {2.0, -0.5, 1e-3});
  adam.step(ps, {g});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(ps.get("w")[i], -lr * g[i] / (std::abs(g[i]) + floor));
}

TEST(Adam, QuadraticBowlConverges) {
  ParameterSet ps;
  ps.add("x", Tensor::scalar(5.0));
  AdamState adam(ps, 0.1);
  // Scalar re-simulation of the bias-corrected update.
  double x = 5.0, m = 0.0, v = 0.0;
  bool crossed = false;
  double prev = 5.0;
  for (int step = 1; step <= 100; ++step) {
    adam.step(ps, {Tensor::scalar(2.0 * ps.get("x")[0])});
    const double g = 2.0 * x;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.1 * (m / (1.0 - std::pow(0.9, step))) / (std::sqrt(v / (1.0 - std::pow(0.999, step))) + 1e-8);
    EXPECT_NEAR(ps.get("x")[0], x, 1e-12);
    // Monotone until momentum carries it across the minimum.
    crossed = crossed || x < 0.0;
    if (!crossed) EXPECT_LT(std::abs(x), prev) << "step " << step;
    prev = std::abs(x);
  }
  EXPECT_LT(std::abs(ps.get("x")[0]), 1.0);
}

TEST(Adam, ShapeMismatchRejected) {
  ParameterSet ps;
  ps.add("w", Tensor({2}, 0.0));
  AdamState adam(ps, 0.1);
  EXPECT_THROW(adam.step(ps, {Tensor({3}, 0.0)}), ContractViolation);
  EXPECT_THROW(AdamState(ps, 0.0), ContractViolation);
}
