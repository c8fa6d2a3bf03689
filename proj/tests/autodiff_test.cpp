#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pearl/autodiff.hpp"
#include "pearl/gradcheck.hpp"
#include "pearl/optim.hpp"
#include "test_util.hpp"

namespace pearl {
namespace {

using testing::random_tensor;

TEST(MatMul, IdentityIsNeutral) {
  ad::Graph g;
  Tensor a = Tensor::matrix({{1.5, -2.0}, {0.25, 4.0}});
  auto out = ad::matmul(g.constant(Tensor::identity(2)), g.constant(a));
  EXPECT_EQ(out.value(), a);
}

TEST(MatMul, HandCheckedProduct) {
  ad::Graph g;
  auto out = ad::matmul(g.constant(Tensor::matrix({{1, 2}, {3, 4}})),
                        g.constant(Tensor::matrix({{5, 6}, {7, 8}})));
  EXPECT_EQ(out.value(), Tensor::matrix({{19, 22}, {43, 50}}));
}

TEST(MatMul, MatchesTripleLoop) {
  std::mt19937_64 rng(11);
  Tensor a = random_tensor({7, 5}, rng);
  Tensor b = random_tensor({5, 3}, rng);
  ad::Graph g;
  const Tensor& c = ad::matmul(g.constant(a), g.constant(b)).value();
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), s, 1e-12);
    }
}

TEST(MatMul, ShapeMismatchNamesBothShapes) {
  ad::Graph g;
  try {
    ad::matmul(g.constant(Tensor(Shape{2, 3})), g.constant(Tensor(Shape{2, 3})));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3] * [2x3]"), std::string::npos);
  }
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogClasses) {
  ad::Graph g;
  auto loss = ad::softmax_cross_entropy(g.constant(Tensor(Shape{1, 4}, 0.3)), {2});
  EXPECT_NEAR(loss.value().item(), std::log(4.0), 1e-12);
  EXPECT_NEAR(loss.value().item(), 1.38629, 1e-5);
}

TEST(SoftmaxCrossEntropy, SaturatedMargin) {
  ad::Graph g;
  Tensor logits(Shape{1, 3}, 0.0);
  logits(0, 1) = 1000.0;
  auto loss = ad::softmax_cross_entropy(g.constant(logits), {1});
  EXPECT_LT(loss.value().item(), 1e-6);
}

TEST(SoftmaxCrossEntropy, MatchesLongDoubleFormula) {
  std::mt19937_64 rng(5);
  Tensor logits = random_tensor({8, 6}, rng, -4, 4);
  std::vector<std::size_t> targets = {0, 5, 2, 3, 1, 1, 4, 0};
  ad::Graph g;
  double got = ad::softmax_cross_entropy(g.constant(logits), targets).value().item();
  long double total = 0;
  for (std::size_t r = 0; r < 8; ++r) {
    long double z = 0;
    for (std::size_t c = 0; c < 6; ++c) z += std::exp(static_cast<long double>(logits(r, c)));
    total += -(static_cast<long double>(logits(r, targets[r])) - std::log(z));
  }
  EXPECT_NEAR(got, static_cast<double>(total / 8), 1e-10);
}

TEST(SoftmaxCrossEntropy, OutOfRangeTarget) {
  ad::Graph g;
  EXPECT_THROW(ad::softmax_cross_entropy(g.constant(Tensor(Shape{1, 3})), {3}), IndexError);
}

TEST(SoftmaxCrossEntropy, NeverNegative) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    ad::Graph g;
    std::vector<std::size_t> t = {rng() % 5, rng() % 5, rng() % 5};
    auto loss = ad::softmax_cross_entropy(g.constant(random_tensor({3, 5}, rng, -20, 20)), t);
    EXPECT_GE(loss.value().item(), 0.0);
  }
}

TEST(Backward, SumOfSquares) {
  ad::Graph g;
  auto x = g.parameter(Tensor(Shape{3}, std::vector<double>{1, 2, 3}));
  g.backward(ad::sum(ad::multiply(x, x)));
  EXPECT_EQ(g.grad(x), Tensor(Shape{3}, std::vector<double>{2, 4, 6}));
}

TEST(Backward, DisconnectedParameterGetsZero) {
  ad::Graph g;
  auto x = g.parameter(Tensor(Shape{2}, 1.0));
  auto unused = g.parameter(Tensor(Shape{2, 2}, 3.0));
  g.backward(ad::sum(ad::tanh(x)));
  EXPECT_EQ(g.grad(unused), Tensor(Shape{2, 2}, 0.0));
}

TEST(Backward, NonScalarLossRejected) {
  ad::Graph g;
  auto x = g.parameter(Tensor(Shape{2}, 1.0));
  EXPECT_THROW(g.backward(ad::tanh(x)), ContractError);
}

TEST(Backward, TwoLayerMlpMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  Tensor input = random_tensor({6, 4}, rng);
  std::vector<std::size_t> targets = {0, 1, 2, 0, 1, 2};
  ad::ScalarFunction f = [&](ad::Graph& g, std::span<const ad::Var> p) {
    auto x = g.constant(input);
    auto h = ad::relu(ad::add(ad::matmul(x, p[0]), p[1]));
    return ad::softmax_cross_entropy(ad::add(ad::matmul(h, p[2]), p[3]), targets);
  };
  std::vector<Tensor> params = {random_tensor({4, 5}, rng), random_tensor({5}, rng),
                                random_tensor({5, 3}, rng), random_tensor({1, 3}, rng)};
  EXPECT_LT(ad::grad_check(f, params, 1e-5), 1e-4);
}

TEST(Backward, Deterministic) {
  std::mt19937_64 rng(8);
  Tensor w = random_tensor({4, 4}, rng);
  Tensor u = random_tensor({3, 4}, rng);
  auto run = [&] {
    ad::Graph g;
    auto wv = g.parameter(w);
    auto s = ad::bilinear(g.constant(u), wv, g.constant(u));
    g.backward(ad::softmax_cross_entropy(s, {0, 1, 2}));
    return g.grad(wv);
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, LinearFunctionIsExact) {
  std::mt19937_64 rng(1);
  Tensor c = random_tensor({3, 2}, rng);
  ad::ScalarFunction f = [&](ad::Graph& g, std::span<const ad::Var> p) {
    return ad::sum(ad::multiply(p[0], g.constant(c)));
  };
  EXPECT_LT(ad::grad_check(f, {random_tensor({3, 2}, rng)}), 1e-10);
}

TEST(GradCheck, FlagsDoubledGradient) {
  std::mt19937_64 rng(2);
  ad::ScalarFunction f = [](ad::Graph&, std::span<const ad::Var> p) {
    return ad::sum(ad::tanh(p[0]));
  };
  std::vector<Tensor> x = {random_tensor({4, 3}, rng)};
  auto grads = ad::gradients(f, x);
  for (double& v : grads[0].data()) v *= 2.0;
  const double err = ad::compare_gradients(f, x, grads);
  EXPECT_NEAR(err, 1.0, 1e-6);
}

// Every op in the supported set, one at a time.
TEST(GradCheck, EveryOpOnRandomInputs) {
  std::mt19937_64 rng(17);
  using Fn = ad::ScalarFunction;
  std::vector<std::pair<std::string, Fn>> cases = {
      {"add", [](ad::Graph&, std::span<const ad::Var> p) {
         return ad::sum(ad::tanh(ad::add(p[0], p[1])));
       }},
      {"bias", [](ad::Graph&, std::span<const ad::Var> p) {
         return ad::sum(ad::tanh(ad::add(p[0], ad::slice(p[1], 0, 0, 1))));
       }},
      {"subtract", [](ad::Graph&, std::span<const ad::Var> p) {
         return ad::mean(ad::multiply(ad::subtract(p[0], p[1]), p[0]));
       }},
      {"sigmoid_exp", [](ad::Graph&, std::span<const ad::Var> p) {
         return ad::sum(ad::exp(ad::sigmoid(p[0])));
       }},
      {"log", [](ad::Graph&, std::span<const ad::Var> p) {
         return ad::sum(ad::log(ad::exp(ad::tanh(p[0]))));
       }},
      {"relu_scale", [](ad::Graph&, std::span<const ad::Var> p) {
         return ad::sum(ad::scale(ad::relu(ad::multiply(p[0], p[1])), 2.5));
       }},
      {"concat_slice_transpose", [](ad::Graph&, std::span<const ad::Var> p) {
         auto c = ad::concat({p[0], p[1]}, 1);
         auto r = ad::concat({ad::transpose(c), ad::transpose(c)}, 0);
         return ad::sum(ad::tanh(ad::slice(r, 0, 1, 6)));
       }},
      {"bilinear", [](ad::Graph&, std::span<const ad::Var> p) {
         auto w = ad::matmul(ad::transpose(p[0]), p[1]);
         return ad::softmax_cross_entropy(ad::bilinear(p[0], w, p[1]), {0, 1, 2, 3});
       }},
      {"normalize_rows", [](ad::Graph&, std::span<const ad::Var> p) {
         auto a = ad::normalize_rows(p[0]);
         auto b = ad::normalize_rows(p[1]);
         return ad::sum(ad::multiply(a, ad::tanh(b)));
       }},
  };
  for (auto& [name, fn] : cases) {
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<Tensor> x = {random_tensor({4, 3}, rng), random_tensor({4, 3}, rng)};
      EXPECT_LT(ad::grad_check(fn, x), 1e-4) << name;
    }
  }
}

TEST(Adam, ZeroGradientsAreIdentity) {
  std::mt19937_64 rng(4);
  std::vector<Tensor> params = {random_tensor({3, 3}, rng), random_tensor({5}, rng)};
  const auto before = params;
  std::vector<Tensor> grads = {Tensor(Shape{3, 3}), Tensor(Shape{5})};
  Adam adam({.learning_rate = 0.1});
  for (int i = 0; i < 25; ++i) adam.step(params, grads);
  EXPECT_EQ(params, before);
  EXPECT_EQ(adam.step_count(), 25u);
}

TEST(Adam, FirstStepMatchesHandEvaluation) {
  std::vector<Tensor> p = {Tensor::scalar(1.0)};
  std::vector<Tensor> g = {Tensor::scalar(0.5)};
  Adam adam({.learning_rate = 0.1});
  adam.step(p, g);
  // m = 0.05, v = 0.00025; mhat = 0.5, vhat = 0.25
  const double expected = 1.0 - 0.1 * 0.5 / (std::sqrt(0.25) + 1e-8);
  EXPECT_NEAR(p[0].item(), expected, 1e-12);
}

TEST(Adam, ConvergesOnQuadratic) {
  std::vector<Tensor> x = {Tensor::scalar(0.0)};
  Adam adam({.learning_rate = 0.05});
  for (int step = 0; step < 500; ++step) {
    ad::Graph g;
    auto xv = g.parameter(x[0]);
    auto d = ad::subtract(xv, g.constant(Tensor::scalar(3.0)));
    g.backward(ad::sum(ad::multiply(d, d)));
    std::vector<Tensor> grads = {g.grad(xv)};
    adam.step(x, grads);
  }
  EXPECT_LT(std::abs(x[0].item() - 3.0), 1e-3);
}

TEST(Adam, ShapeMismatch) {
  std::vector<Tensor> p = {Tensor(Shape{2})};
  std::vector<Tensor> g = {Tensor(Shape{3})};
  Adam adam;
  EXPECT_THROW(adam.step(p, g), DimensionError);
}

}  // namespace
}  // namespace pearl
