// Copyright 2026 The NMOE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "nmoe/diffcore/adam.hpp"
#include "nmoe/diffcore/graph.hpp"
#include "nmoe/diffcore/jet.hpp"
#include "support/gradcheck.hpp"

namespace nmoe::diff {
namespace {

using ::nmoe::testing::check_gradients;
using ::nmoe::testing::make_random_composite;
using ::nmoe::testing::random_tensor;

TEST(Forward, Square) {
  Graph g;
  Var x = g.leaf("x", Tensor::scalar(3.0));
  EXPECT_DOUBLE_EQ(square(x).value().item(), 9.0);
}

TEST(Forward, SoftmaxOfZerosIsUniform) {
  Graph g;
  Var x = g.constant(Tensor::row({0.0, 0.0}));
  const Tensor y = softmax(x).value();
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Forward, SolveWithIdentity) {
  Graph g;
  Var a = g.constant(Tensor::identity(3));
  Var y = g.constant(Tensor::column({1.0, -2.0, 0.5}));
  EXPECT_EQ(solve(a, y).value(), Tensor::column({1.0, -2.0, 0.5}));
}

TEST(Forward, SolveDiagonal) {
  Graph g;
  Var a = g.constant(Tensor::from_rows({{2.0, 0.0}, {0.0, 4.0}}));
  Var y = g.constant(Tensor::column({2.0, 4.0}));
  const Tensor x = solve(a, y).value();
  EXPECT_DOUBLE_EQ(x[0], 1.0);
  EXPECT_DOUBLE_EQ(x[1], 1.0);
}

TEST(Forward, SoftmaxDoesNotOverflow) {
  Graph g;
  const Tensor y = softmax(g.constant(Tensor::row({1000.0, 0.0}))).value();
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_GE(y[1], 0.0);
  EXPECT_LT(y[1], 1e-300);
  EXPECT_TRUE(y.all_finite());
}

TEST(Forward, ReplayRebindsLeavesDeterministically) {
  Graph g;
  Var x = g.leaf("x", Tensor::scalar(3.0));
  Var w = g.leaf("w", Tensor::row({0.3, -0.7}));
  Var y = sum(softmax(mul(w, x)));
  Var z = add(square(x), y);
  g.mark_output("z", z);
  auto out = g.forward({{"x", Tensor::scalar(2.0)}});
  EXPECT_DOUBLE_EQ(out.at("z").item(), 5.0);
  auto again = g.forward({{"x", Tensor::scalar(2.0)}});
  EXPECT_EQ(out.at("z"), again.at("z"));
}

TEST(Forward, ShapeMismatchNamesNode) {
  Graph g;
  Var a = g.leaf("a", Tensor(2, 3));
  Var b = g.leaf("b", Tensor(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("node 2 (matmul)"), std::string::npos)
        << e.what();
  }
}

TEST(Forward, ReplayShapeMismatchRejected) {
  Graph g;
  Var a = g.leaf("a", Tensor(2, 2, 1.0));
  g.mark_output("s", sum(a));
  EXPECT_THROW(g.forward({{"a", Tensor(3, 2)}}), ShapeError);
}

TEST(Forward, SingularSolveRejected) {
  Graph g;
  Var a = g.constant(Tensor::from_rows({{1.0, 2.0}, {2.0, 4.0}}));
  Var y = g.constant(Tensor::column({1.0, 1.0}));
  EXPECT_THROW(solve(a, y), SingularMatrixError);
}

TEST(Backward, SquareGradient) {
  Graph g;
  Var x = g.leaf("x", Tensor::scalar(3.0));
  const Gradients grads = g.backward(square(x));
  EXPECT_DOUBLE_EQ(grads[x].item(), 6.0);
}

TEST(Backward, SumOfSoftmaxHasZeroGradient) {
  Graph g;
  std::mt19937_64 rng(3);
  Var w = g.leaf("w", random_tensor(rng, 3, 4));
  Var x = g.constant(random_tensor(rng, 4, 2));
  const Tensor grad = g.backward(sum(softmax(transpose(matmul(w, x)))))[w];
  for (double v : grad.data()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Backward, NonParticipatingLeafGetsZeros) {
  Graph g;
  Var x = g.leaf("x", Tensor::scalar(2.0));
  Var unused = g.leaf("unused", Tensor(2, 3, 1.0));
  const Gradients grads = g.backward(square(x));
  EXPECT_EQ(grads[unused], Tensor(2, 3));
}

TEST(Backward, NonScalarOutputRejected) {
  Graph g;
  Var x = g.leaf("x", Tensor(2, 1, 1.0));
  EXPECT_THROW(g.backward(square(x)), ShapeError);
}

TEST(Backward, MatmulMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const auto res = check_gradients(
      [](Graph& g, const std::vector<Var>& p) {
        return sum(mul(matmul(p[0], p[1]),
                       g.constant(Tensor::from_rows(
                           {{1.0, -2.0}, {0.5, 0.3}, {-1.0, 2.0}}))));
      },
      {random_tensor(rng, 3, 4), random_tensor(rng, 4, 2)});
  EXPECT_TRUE(res.passed) << res.worst;
}

TEST(Backward, FiveParameterCompositeMatchesFiniteDifferences) {
  // matmul, solve, sin, cos, softmax and tanh over five scalar parameters.
  std::mt19937_64 rng(5);
  const auto res = check_gradients(
      [](Graph& g, const std::vector<Var>& p) {
        Var row = concat({p[0], p[1], p[2]}, 1);               // 1x3
        Var col = concat({p[3], p[4]}, 0);                      // 2x1
        Var m = matmul(col, row);                               // 2x3
        Var a = add(matmul(m, transpose(m)),
                    g.constant(Tensor::identity(2)));           // 2x2 SPD
        Var x = solve(a, add(sin(col), cos(col)));
        Var s = softmax(transpose(tanh(x)));
        return sum(mul(s, g.constant(Tensor::row({1.0, 3.0}))));
      },
      {random_tensor(rng, 1, 1), random_tensor(rng, 1, 1),
       random_tensor(rng, 1, 1), random_tensor(rng, 1, 1),
       random_tensor(rng, 1, 1)});
  EXPECT_TRUE(res.passed) << res.worst;
}

class PrimitiveGradient
    : public ::testing::TestWithParam<nmoe::testing::Primitive> {};

TEST_P(PrimitiveGradient, RandomCompositesMatchFiniteDifferences) {
  std::mt19937_64 rng(100 + static_cast<int>(GetParam()));
  for (int trial = 0; trial < 20; ++trial) {
    const auto rc = make_random_composite(GetParam(), rng);
    const auto res = check_gradients(rc.fn, rc.params);
    EXPECT_TRUE(res.passed) << "trial " << trial << ": " << res.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllPrimitives, PrimitiveGradient,
    ::testing::ValuesIn(nmoe::testing::all_primitives()),
    [](const auto& info) {
      return std::string(nmoe::testing::primitive_name(info.param));
    });

TEST(Properties, SoftmaxRowsOnSimplex) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const Tensor y = kernels::softmax_rows(random_tensor(rng, 5, 4, -30, 30));
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) {
        EXPECT_GE(y(r, c), 0.0);
        total += y(r, c);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Properties, SolveRecoversKnownSolution) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + t % 8;
    Tensor a = random_tensor(rng, n, n);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += static_cast<double>(n);
    const Tensor x = random_tensor(rng, n, 1);
    const Tensor got =
        kernels::lu_solve(kernels::lu_factor(a), kernels::matmul(a, x));
    double err = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      err = std::max(err, std::abs(got[i] - x[i]));
      norm = std::max(norm, std::abs(x[i]));
    }
    EXPECT_LT(err / norm, 1e-10);
  }
}

TEST(Properties, ForwardBackwardAreBitwiseDeterministic) {
  std::mt19937_64 rng(9);
  const auto rc = make_random_composite(nmoe::testing::Primitive::kSolve, rng);
  auto run = [&] {
    Graph g;
    std::vector<Var> leaves;
    for (std::size_t i = 0; i < rc.params.size(); ++i) {
      leaves.push_back(g.leaf("p" + std::to_string(i), rc.params[i]));
    }
    Var out = rc.fn(g, leaves);
    auto grads = g.backward(out).by_name();
    return std::make_pair(out.value(), grads);
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor w = Tensor::row({1.0, -2.0});
  AdamState state;
  for (int i = 0; i < 10; ++i) {
    adam_step({{"w", &w}}, {{"w", Tensor(1, 2)}}, state);
  }
  EXPECT_EQ(w, Tensor::row({1.0, -2.0}));
}

TEST(Adam, ConstantGradientMovesAgainstIt) {
  Tensor w = Tensor::row({0.0, 0.0});
  AdamState state;
  for (int i = 0; i < 100; ++i) {
    adam_step({{"w", &w}}, {{"w", Tensor::row({2.0, -0.5})}}, state);
  }
  EXPECT_LT(w[0], 0.0);
  EXPECT_GT(w[1], 0.0);
}

TEST(Adam, QuadraticBowlNormDecreasesAfterWarmup) {
  Tensor w = Tensor::row({0.8, -0.6, 0.3});
  AdamState state;
  AdamConfig cfg;
  cfg.lr = 1e-2;
  std::vector<double> norms;
  for (int i = 0; i < 60; ++i) {
    Graph g;
    Var wv = g.leaf("w", w);
    auto grads = g.backward(sum(square(wv))).by_name();
    adam_step({{"w", &w}}, grads, state, cfg);
    double n = 0.0;
    for (double v : w.data()) n += v * v;
    norms.push_back(std::sqrt(n));
  }
  for (std::size_t i = 5; i < norms.size(); ++i) {
    EXPECT_LT(norms[i], norms[i - 1]) << "step " << i;
  }
}

TEST(Adam, NanGradientRejected) {
  Tensor w = Tensor::row({1.0});
  AdamState state;
  EXPECT_THROW(
      adam_step({{"w", &w}},
                {{"w", Tensor::row({std::numeric_limits<double>::quiet_NaN()})}},
                state),
      NonFiniteError);
  EXPECT_EQ(w, Tensor::row({1.0}));
}

TEST(Jet, ProductRuleAndTranscendentals) {
  using J = Jet<2>;
  const J x = J::variable(0.7, 0);
  const J y = J::variable(-1.3, 1);
  const J f = sin(x) * y + exp(x) / (y * y) + sqrt(x * x + 1.0);
  EXPECT_NEAR(f.d[0],
              std::cos(0.7) * -1.3 + std::exp(0.7) / (1.69) +
                  0.7 / std::sqrt(0.49 + 1.0),
              1e-14);
  EXPECT_NEAR(f.d[1], std::sin(0.7) - 2.0 * std::exp(0.7) / (-1.3 * 1.69),
              1e-13);
}

}  // namespace
}  // namespace nmoe::diff
