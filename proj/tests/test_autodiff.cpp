#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "ditto/autodiff.hpp"
#include "ditto/errors.hpp"
#include "test_support.hpp"

using namespace ditto;
using ditto::test_util::random_tensor;

namespace {

constexpr int kInstances = 50;
constexpr double kTol = 1e-4;

// Weighted sum with fixed random weights, so every output entry gets a
// distinct upstream gradient.
Var probe_sum(Tape& t, Var y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, t.constant(random_tensor(y.value().rows(), y.value().cols(), rng))));
}

void check_op(const std::string& label, const std::function<void(Rng&, ParamStore&)>& setup,
              const std::function<Var(Tape&, ParamStore&)>& forward, double tol = kTol) {
  for (int i = 0; i < kInstances; ++i) {
    Rng rng(1000 + i);
    ParamStore ps;
    setup(rng, ps);
    const auto res = finite_diff_check(
        [&](Tape& t, ParamStore& p) { return probe_sum(t, forward(t, p), 77 + i); }, ps);
    ASSERT_LT(res.max_rel_error, tol) << label << " instance " << i << " worst " << res.worst_param << "["
                                      << res.worst_index << "] analytic " << res.analytic << " numeric "
                                      << res.numeric;
  }
}

std::size_t dim(Rng& rng, std::size_t lo = 1, std::size_t hi = 5) { return lo + rng.below(hi - lo + 1); }

// Away from relu's kink so central differences are well defined.
Tensor away_from_zero(Tensor t) {
  for (auto& v : t.data()) {
    if (std::abs(v) < 0.05) v = v < 0 ? -0.05 - std::abs(v) : 0.05 + v;
  }
  return t;
}

}  // namespace

TEST(GradCheck, Matmul) {
  check_op("matmul",
           [](Rng& r, ParamStore& p) {
             const auto m = dim(r), k = dim(r), n = dim(r);
             p.add("a", random_tensor(m, k, r));
             p.add("b", random_tensor(k, n, r));
           },
           [](Tape& t, ParamStore& p) { return matmul(t.param(p.at("a")), t.param(p.at("b"))); });
}

TEST(GradCheck, AffineAndRowBias) {
  check_op("affine",
           [](Rng& r, ParamStore& p) {
             const auto m = dim(r), d = dim(r), h = dim(r);
             p.add("x", random_tensor(m, d, r));
             p.add("w", random_tensor(d, h, r));
             p.add("b", random_tensor(1, h, r));
           },
           [](Tape& t, ParamStore& p) {
             return affine(t.param(p.at("x")), t.param(p.at("w")), t.param(p.at("b")));
           });
  check_op("add_row_bias",
           [](Rng& r, ParamStore& p) {
             const auto m = dim(r), h = dim(r);
             p.add("x", random_tensor(m, h, r));
             p.add("b", random_tensor(1, h, r));
           },
           [](Tape& t, ParamStore& p) { return add_row_bias(t.param(p.at("x")), t.param(p.at("b"))); });
}

TEST(GradCheck, ElementwiseOps) {
  auto two = [](Rng& r, ParamStore& p) {
    const auto m = dim(r), n = dim(r);
    p.add("a", random_tensor(m, n, r));
    p.add("b", random_tensor(m, n, r));
  };
  check_op("add", two, [](Tape& t, ParamStore& p) { return add(t.param(p.at("a")), t.param(p.at("b"))); });
  check_op("mul", two, [](Tape& t, ParamStore& p) { return mul(t.param(p.at("a")), t.param(p.at("b"))); });
  check_op("scale", two, [](Tape& t, ParamStore& p) { return scale(t.param(p.at("a")), -1.7); });
  check_op("tanh", two, [](Tape& t, ParamStore& p) { return tanh(t.param(p.at("a"))); });
  check_op("sigmoid", two, [](Tape& t, ParamStore& p) { return sigmoid(scale(t.param(p.at("a")), 3.0)); });
  check_op(
      "relu",
      [](Rng& r, ParamStore& p) { p.add("a", away_from_zero(random_tensor(dim(r), dim(r), r))); },
      [](Tape& t, ParamStore& p) { return relu(t.param(p.at("a"))); });
  check_op("sum", two, [](Tape& t, ParamStore& p) { return sum(t.param(p.at("a"))); });
}

TEST(GradCheck, GradReverse) {
  // The forward pass is the identity, so central differences see the plain
  // graph; the analytic gradient must be -lambda times the plain one.
  for (double lambda : {0.6, 1.0, 2.5}) {
    for (int i = 0; i < kInstances; ++i) {
      Rng rng(1000 + i);
      ParamStore ps;
      ps.add("a", random_tensor(dim(rng), dim(rng), rng));
      const auto plain = finite_diff_check(
          [&](Tape& t, ParamStore& p) { return probe_sum(t, tanh(t.param(p.at("a"))), 77 + i); }, ps);
      ASSERT_LT(plain.max_rel_error, kTol);
      const Tensor g = ps.at("a").grad;
      finite_diff_check(
          [&](Tape& t, ParamStore& p) { return probe_sum(t, grad_reverse(tanh(t.param(p.at("a"))), lambda), 77 + i); },
          ps);
      for (std::size_t k = 0; k < g.size(); ++k) {
        ASSERT_NEAR(ps.at("a").grad[k], -lambda * g[k], 1e-12 * std::max(1.0, std::abs(g[k])));
      }
    }
  }
}

TEST(GradCheck, Losses) {
  for (int i = 0; i < kInstances; ++i) {
    Rng rng(500 + i);
    const std::size_t m = dim(rng, 1, 6), c = dim(rng, 2, 5);
    std::vector<int> labels(m), bin(m);
    for (auto& l : labels) l = static_cast<int>(rng.below(c));
    for (auto& b : bin) b = static_cast<int>(rng.below(2));
    ParamStore ps;
    ps.add("logits", random_tensor(m, c, rng, 2.0));
    ps.add("z", random_tensor(m, 1, rng, 2.0));
    const auto ce = finite_diff_check(
        [&](Tape& t, ParamStore& p) { return softmax_cross_entropy(t.param(p.at("logits")), labels); }, ps);
    ASSERT_LT(ce.max_rel_error, kTol);
    const auto bce = finite_diff_check(
        [&](Tape& t, ParamStore& p) { return binary_cross_entropy(sigmoid(t.param(p.at("z"))), bin); }, ps);
    ASSERT_LT(bce.max_rel_error, kTol);
  }
}

TEST(GradCheck, TwoLayerMlpPipeline) {
  for (int i = 0; i < kInstances; ++i) {
    Rng rng(900 + i);
    const std::size_t m = dim(rng, 2, 8), d = dim(rng, 1, 4), h = dim(rng, 2, 6), c = dim(rng, 2, 4);
    ParamStore ps;
    ps.add("W1", random_tensor(d, h, rng));
    ps.add("b1", random_tensor(1, h, rng, 0.1));
    ps.add("W2", random_tensor(h, c, rng));
    ps.add("b2", random_tensor(1, c, rng, 0.1));
    const Tensor x = random_tensor(m, d, rng);
    std::vector<int> y(m);
    for (auto& l : y) l = static_cast<int>(rng.below(c));
    const auto res = finite_diff_check(
        [&](Tape& t, ParamStore& p) {
          Var hdn = tanh(affine(t.constant(x), t.param(p.at("W1")), t.param(p.at("b1"))));
          return softmax_cross_entropy(affine(hdn, t.param(p.at("W2")), t.param(p.at("b2"))), y);
        },
        ps);
    ASSERT_LT(res.max_rel_error, kTol) << "instance " << i;
  }
}

TEST(Ops, ForwardHandCases) {
  Tape t;
  EXPECT_EQ(affine(t.constant({{1, 1}}), t.constant({{0, 0}, {0, 0}}), t.constant({{2, 3}})).value(),
            (Tensor{{2, 3}}));
  EXPECT_EQ(affine(t.constant({{1, 0}}), t.constant({{1, 2}, {3, 4}}), t.constant({{0, 0}})).value(),
            (Tensor{{1, 2}}));
  EXPECT_EQ(tanh(t.constant({{0.0}})).value()[0], 0.0);
  EXPECT_EQ(relu(t.constant({{-1.0}})).value()[0], 0.0);
}

TEST(Ops, ReluPassesGradientForPositiveInput) {
  Tape t;
  Var x = t.leaf({{2.0, -3.0}});
  Var loss = sum(mul(relu(x), t.constant({{5.0, 7.0}})));
  t.backward(loss);
  EXPECT_EQ(x.grad(), (Tensor{{5.0, 0.0}}));
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLn3) {
  Tape t;
  const std::vector<int> y{0, 2};
  Var loss = softmax_cross_entropy(t.constant(Tensor(2, 3, 0.7)), y);
  EXPECT_NEAR(loss.value()[0], std::log(3.0), 1e-15);
}

TEST(SoftmaxCrossEntropy, LargeMarginGoesToZero) {
  Tape t;
  const std::vector<int> y{1};
  Var loss = softmax_cross_entropy(t.constant({{-500.0, 500.0, 0.0}}), y);
  EXPECT_LT(loss.value()[0], 1e-200);
  EXPECT_TRUE(std::isfinite(loss.value()[0]));
}

TEST(SoftmaxCrossEntropy, MatchesLogSumExpOracle) {
  for (int i = 0; i < 20; ++i) {
    Rng rng(40 + i);
    const Tensor z = random_tensor(5, 3, rng, 3.0);
    std::vector<int> y(5);
    for (auto& l : y) l = static_cast<int>(rng.below(3));

    // Oracle: loss_i = log(sum_j exp(z_ij)) - z_{i,y_i}, grad = (softmax - onehot)/m.
    double expected = 0.0;
    Tensor expected_grad(5, 3);
    for (std::size_t r = 0; r < 5; ++r) {
      double lse = 0.0;
      for (std::size_t c = 0; c < 3; ++c) lse += std::exp(z(r, c));
      lse = std::log(lse);
      expected += (lse - z(r, y[r])) / 5.0;
      for (std::size_t c = 0; c < 3; ++c) {
        expected_grad(r, c) = (std::exp(z(r, c) - lse) - (static_cast<int>(c) == y[r] ? 1.0 : 0.0)) / 5.0;
      }
    }
    Tape t;
    Var logits = t.leaf(z);
    Var loss = softmax_cross_entropy(logits, y);
    t.backward(loss);
    EXPECT_NEAR(loss.value()[0], expected, 1e-10);
    for (std::size_t k = 0; k < 15; ++k) EXPECT_NEAR(logits.grad()[k], expected_grad[k], 1e-10);
  }
}

TEST(SoftmaxCrossEntropy, ShiftInvariantPerRow) {
  Rng rng(3);
  const Tensor z = random_tensor(4, 5, rng);
  Tensor shifted = z;
  for (std::size_t r = 0; r < 4; ++r) {
    const double c = rng.uniform(-50, 50);
    for (auto& v : shifted.row(r)) v += c;
  }
  const std::vector<int> y{0, 4, 2, 1};
  Tape t;
  EXPECT_NEAR(softmax_cross_entropy(t.constant(z), y).value()[0],
              softmax_cross_entropy(t.constant(shifted), y).value()[0], 1e-10);
}

TEST(SoftmaxCrossEntropy, RejectsBadLabels) {
  Tape t;
  const std::vector<int> bad{3};
  EXPECT_THROW(softmax_cross_entropy(t.constant(Tensor(1, 3)), bad), LabelError);
  const std::vector<int> wrong_len{0, 1};
  EXPECT_THROW(softmax_cross_entropy(t.constant(Tensor(1, 3)), wrong_len), ShapeError);
}

TEST(BinaryCrossEntropy, KnownValues) {
  Tape t;
  const std::vector<int> y{1, 0, 1};
  EXPECT_NEAR(binary_cross_entropy(t.constant(Tensor(3, 1, 0.5)), y).value()[0], std::log(2.0), 1e-15);
  Var exact = binary_cross_entropy(t.constant({{1.0}, {0.0}, {1.0}}), y);
  EXPECT_NEAR(exact.value()[0], -std::log(1.0 - kBceClamp), 1e-15);
  EXPECT_LT(exact.value()[0], 1e-6);
}

TEST(BinaryCrossEntropy, MatchesDirectFormula) {
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const std::size_t m = 1 + rng.below(10);
    Tensor p(m, 1);
    std::vector<int> y(m);
    double expected = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      p[r] = rng.uniform(0.01, 0.99);
      y[r] = static_cast<int>(rng.below(2));
      expected -= (y[r] ? std::log(p[r]) : std::log(1.0 - p[r])) / static_cast<double>(m);
    }
    Tape t;
    EXPECT_NEAR(binary_cross_entropy(t.constant(p), y).value()[0], expected, 1e-12);
  }
}

TEST(BinaryCrossEntropy, RejectsNonBinaryTargets) {
  Tape t;
  const std::vector<int> y{2};
  EXPECT_THROW(binary_cross_entropy(t.constant({{0.5}}), y), LabelError);
}

TEST(GradReverse, IdentityForward) {
  Tape t;
  const Tensor x{{1, 2}};
  Var out = grad_reverse(t.leaf(x), 1.0);
  EXPECT_EQ(out.value(), x);
}

TEST(GradReverse, ZeroLambdaAnnihilates) {
  Tape t;
  Var x = t.leaf({{1.5, -2.0, 3.0}});
  t.backward(sum(mul(grad_reverse(x, 0.0), t.constant({{4.0, 5.0, 6.0}}))));
  for (double g : x.grad().data()) EXPECT_EQ(g, 0.0);
}

TEST(GradReverse, SquareReceivesMinusTwoX) {
  Tape t;
  const Tensor v{{1.5, -2.0, 0.25}};
  Var x = t.leaf(v);
  Var r = grad_reverse(x, 1.0);
  t.backward(sum(mul(r, r)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x.grad()[i], -2.0 * v[i]);
}

TEST(GradReverse, NegativeLambdaRejected) {
  Tape t;
  EXPECT_THROW(grad_reverse(t.leaf({{1.0}}), -0.5), ParamError);
}

TEST(Backward, SumOfParameterHasUnitGradient) {
  ParamStore ps;
  Parameter& p = ps.add("w", Tensor{{1, 2}, {3, 4}});
  Parameter& q = ps.add("unused", Tensor{{1}});
  Tape t;
  t.param(q);
  t.backward(sum(t.param(p)));
  EXPECT_EQ(p.grad, Tensor(2, 2, 1.0));
  EXPECT_EQ(q.grad, Tensor(1, 1, 0.0));
}

TEST(Backward, RepeatedSweepsAreIdenticalAndAccumulate) {
  Rng rng(2);
  ParamStore ps;
  Parameter& w = ps.add("w", random_tensor(3, 2, rng));
  Tape t;
  Var loss = sum(tanh(matmul(t.constant(random_tensor(4, 3, rng)), t.param(w))));
  t.backward(loss);
  const Tensor first = w.grad;
  ps.zero_grad();
  t.backward(loss);
  EXPECT_EQ(w.grad, first);
  t.backward(loss);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(w.grad[i], 2.0 * first[i]);
}

TEST(Backward, TopologicalOrderAndGuards) {
  Tape t;
  Var a = t.leaf({{1.0}});
  Var b = tanh(a);
  EXPECT_LT(a.id, b.id);
  EXPECT_THROW(t.backward(t.leaf(Tensor(1, 2))), ShapeError);
  EXPECT_THROW(t.push(Tensor(1, 1), {99}, nullptr), StateError);
  Tape infer(false);
  Var c = sum(infer.leaf({{1.0}}));
  EXPECT_THROW(infer.backward(c), StateError);
  Tape other;
  EXPECT_THROW(other.backward(b), StateError);
  EXPECT_THROW(t.backward(scale(t.leaf({{1.0}}), std::nan(""))), NumericError);
}

TEST(FiniteDiff, QuadraticAndConstant) {
  ParamStore ps;
  ps.add("w", Tensor{{3.0}});
  auto quad = finite_diff_check([](Tape& t, ParamStore& p) {
    Var w = t.param(p.at("w"));
    return mul(w, w);
  }, ps);
  EXPECT_NEAR(quad.analytic, 6.0, 1e-12);
  EXPECT_LT(quad.max_rel_error, 1e-8);
  auto constant = finite_diff_check([](Tape& t, ParamStore& p) {
    t.param(p.at("w"));
    return t.constant({{4.0}});
  }, ps);
  EXPECT_EQ(constant.max_rel_error, 0.0);
  EXPECT_THROW(finite_diff_check([](Tape& t, ParamStore&) { return t.constant({{1.0}}); }, ps, 0.0), ParamError);
}

TEST(FiniteDiff, DetectsAWrongGradient) {
  // An op whose backward is deliberately off by a factor of two.
  ParamStore ps;
  ps.add("w", Tensor{{0.7}});
  auto res = finite_diff_check([](Tape& t, ParamStore& p) {
    Var w = t.param(p.at("w"));
    return t.push(Tensor{{w.value()[0] * w.value()[0]}}, {w.id}, [ix = w.id](Tape& tp, std::size_t self) {
      tp.grad_mut(ix)[0] += 4.0 * tp.value(ix)[0] * tp.grad(self)[0];
    });
  }, ps);
  EXPECT_GT(res.max_rel_error, 0.5);
}
