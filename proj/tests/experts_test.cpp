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
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "nmoe/diffcore/adam.hpp"
#include "nmoe/envs/envs.hpp"
#include "nmoe/experts/experts.hpp"

namespace nmoe::experts {
namespace {

using diff::Tensor;

TEST(CartWhiteBox, FreeStepMatchesHandComputation) {
  const CartWhiteBox free(false);
  const Tensor lp = true_log_parameters(Domain::kCart);
  std::vector<double> next(2);
  free.predict(lp.data(), std::vector<double>{0.5, 1.0}, std::vector<double>{2.0},
               next);
  const double acc = 2.0 - 9.81 * std::sin(std::numbers::pi / 6);
  EXPECT_NEAR(next[0], 0.5 + 0.01, 1e-14);
  EXPECT_NEAR(next[1], 1.0 + acc * 0.01, 1e-14);
}

TEST(CartWhiteBox, ContactStepAddsSpringAndDamper) {
  const CartWhiteBox contact(true);
  const Tensor lp = true_log_parameters(Domain::kCart);
  std::vector<double> next(2);
  contact.predict(lp.data(), std::vector<double>{-0.1, -2.0},
                  std::vector<double>{0.0}, next);
  const double force = 100.0 * 0.1 + 1.0 * 2.0 - 9.81 * 0.5;
  EXPECT_NEAR(next[0], -0.1 - 0.02, 1e-14);
  EXPECT_NEAR(next[1], -2.0 + force * 0.01, 1e-12);
}

TEST(CartWhiteBox, ShapeMismatchThrows) {
  const CartWhiteBox free(false);
  const Tensor lp = true_log_parameters(Domain::kCart);
  std::vector<double> next(3);
  EXPECT_THROW(free.predict(lp.data(), std::vector<double>{0.0, 0.0},
                            std::vector<double>{0.0}, next),
               ShapeError);
}

TEST(ReacherWhiteBox, MatchesFrictionlessPlantWithTrueParameters) {
  const auto env = envs::make_env(Domain::kReacher);
  const auto wb = make_white_box(Domain::kReacher, 0);
  const Tensor lp = true_log_parameters(Domain::kReacher);
  const envs::Dataset d = envs::sample_uniform(env, 50, 3);
  const Tensor pred = wb->predict_batch(lp, d.states, d.actions);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    EXPECT_NEAR(pred[i], d.next[i], 1e-9);
  }
}

TEST(ReacherWhiteBox, FrictionMakesThePriorWrong) {
  const auto env = envs::make_env(Domain::kReacher, 0.5, 0.5);
  const auto wb = make_white_box(Domain::kReacher, 0);
  const envs::Dataset d = envs::sample_uniform(env, 50, 3);
  const Tensor pred =
      wb->predict_batch(true_log_parameters(Domain::kReacher), d.states, d.actions);
  double worst = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    worst = std::max(worst, std::abs(pred[i] - d.next[i]));
  }
  EXPECT_GT(worst, 1e-3);
}

struct JacobianCase {
  Domain domain;
  int mode;
};

class WhiteBoxJacobian : public ::testing::TestWithParam<JacobianCase> {};

TEST_P(WhiteBoxJacobian, MatchesCentralDifferences) {
  const auto [domain, mode] = GetParam();
  const auto env = envs::make_env(domain);
  const auto wb = make_white_box(domain, mode);
  std::mt19937_64 rng(11);
  const Tensor lp = perturbed_log_parameters(domain, rng);
  const envs::Dataset d = envs::sample_uniform(env, 4, 5);
  const int n = wb->state_dim(), p = wb->param_count();
  for (std::size_t r = 0; r < d.size(); ++r) {
    std::vector<double> next(n), jac(n * p), plus(n), minus(n);
    wb->predict_with_jacobian(lp.data(), d.states.row_span(r),
                              d.actions.row_span(r), next, jac);
    for (int k = 0; k < p; ++k) {
      Tensor lp_plus = lp, lp_minus = lp;
      const double h = 1e-6;
      lp_plus[k] += h;
      lp_minus[k] -= h;
      wb->predict(lp_plus.data(), d.states.row_span(r), d.actions.row_span(r), plus);
      wb->predict(lp_minus.data(), d.states.row_span(r), d.actions.row_span(r),
                  minus);
      for (int i = 0; i < n; ++i) {
        const double fd = (plus[i] - minus[i]) / (2 * h);
        EXPECT_NEAR(jac[i * p + k], fd, 1e-6 * std::max(1.0, std::abs(fd)))
            << "row " << r << " output " << i << " param " << k;
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(
    Modes, WhiteBoxJacobian,
    ::testing::Values(JacobianCase{Domain::kCart, 0}, JacobianCase{Domain::kCart, 1},
                      JacobianCase{Domain::kReacher, 0},
                      JacobianCase{Domain::kHopper, 0}, JacobianCase{Domain::kHopper, 2},
                      JacobianCase{Domain::kHopper, 3},
                      JacobianCase{Domain::kHalfCheetah, 2}));

TEST(WhiteBoxOp, GradientFlowsToParametersOnly) {
  const auto wb = make_white_box(Domain::kCart, 0);
  const Tensor lp = true_log_parameters(Domain::kCart);
  diff::Graph g;
  const diff::Var p = g.leaf("p", lp);
  const diff::Var s = g.leaf("s", Tensor(2, 2, {0.1, -1.0, -0.2, 0.5}));
  const diff::Var a = g.leaf("a", Tensor(2, 1, {1.0, -1.0}));
  const diff::Var y = white_box_node(wb, p, s, a);
  const diff::Var loss = diff::sum(diff::square(y));
  const auto grads = g.backward(loss);
  EXPECT_GT(std::abs(grads[p][0]) + std::abs(grads[p][1]), 0.0);
  for (double v : grads[s].data()) EXPECT_EQ(v, 0.0);
  for (double v : grads[a].data()) EXPECT_EQ(v, 0.0);

  const double h = 1e-6;
  for (std::size_t k = 0; k < lp.size(); ++k) {
    Tensor up = lp, dn = lp;
    up[k] += h;
    dn[k] -= h;
    auto value = [&](const Tensor& q) {
      const Tensor out = wb->predict_batch(q, s.value(), a.value());
      double acc = 0.0;
      for (double v : out.data()) acc += v * v;
      return acc;
    };
    EXPECT_NEAR(grads[p][k], (value(up) - value(dn)) / (2 * h), 1e-5);
  }
}

TEST(PerturbedParameters, StayWithinHalfOfTrueValues) {
  std::mt19937_64 rng(2);
  for (Domain d : {Domain::kCart, Domain::kReacher, Domain::kHopper,
                   Domain::kHalfCheetah}) {
    const auto truth = physical_parameters(d);
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor lp = perturbed_log_parameters(d, rng);
      ASSERT_EQ(lp.size(), truth.size());
      for (std::size_t i = 0; i < lp.size(); ++i) {
        const double ratio = std::exp(lp[i]) / truth[i].true_value;
        EXPECT_GE(ratio, 0.5);
        EXPECT_LE(ratio, 1.5);
      }
    }
  }
}

TEST(BlackBox, ZeroWeightsGiveZeroOutput) {
  std::mt19937_64 rng(0);
  BlackBoxExpert mlp = BlackBoxExpert::glorot({3, 8, 8, 2}, rng);
  for (auto& w : mlp.weights) w = Tensor(w.rows(), w.cols());
  const Tensor y = mlp.predict(Tensor(4, 3, 1.0));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(BlackBox, ParameterCountAndShapes) {
  std::mt19937_64 rng(0);
  const BlackBoxExpert mlp = BlackBoxExpert::glorot({3, 64, 64, 2}, rng);
  EXPECT_EQ(mlp.parameter_count(), 4u * 64 + 65u * 64 + 65u * 2);
  EXPECT_EQ(mlp.predict(Tensor(5, 3)).rows(), 5u);
  EXPECT_THROW(mlp.predict(Tensor(5, 4)), ShapeError);
  EXPECT_THROW(BlackBoxExpert::glorot({3}, rng), InvalidArgument);
}

TEST(BlackBox, FitsALinearMap) {
  std::mt19937_64 rng(1);
  BlackBoxExpert mlp = BlackBoxExpert::glorot({1, 16, 16, 1}, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor x(64, 1), y(64, 1);
  for (std::size_t i = 0; i < 64; ++i) {
    x[i] = u(rng);
    y[i] = 2.0 * x[i];
  }
  std::vector<diff::ParamRef> params;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    params.push_back({"m.w" + std::to_string(l), &mlp.weights[l]});
    params.push_back({"m.b" + std::to_string(l), &mlp.biases[l]});
  }
  diff::AdamState state;
  double loss = 0.0;
  for (int step = 0; step < 1500; ++step) {
    diff::Graph g;
    diff::TapeEval ev(g);
    const diff::Var out = mlp.forward(ev, "m", ev.constant(x));
    const diff::Var l = diff::mean(diff::square(diff::sub(out, g.constant(y))));
    loss = l.value().item();
    diff::adam_step(params, g.backward(l).by_name(), state, {.lr = 1e-2});
  }
  EXPECT_LT(loss, 1e-3);  // target variance is 4/3
}

TEST(DomainExperts, OnePairPerModeWithMatchingShapes) {
  for (Domain d : {Domain::kCart, Domain::kReacher, Domain::kHopper,
                   Domain::kHalfCheetah}) {
    std::mt19937_64 rng(0);
    const DomainInfo& info = domain_info(d);
    const auto pairs = build_domain_experts(d, rng);
    ASSERT_EQ(static_cast<int>(pairs.size()), info.modes()) << info.name;
    for (const auto& p : pairs) {
      EXPECT_EQ(p.white->state_dim(), info.state_dim);
      EXPECT_EQ(p.white->action_dim(), info.action_dim);
      EXPECT_EQ(p.white->param_count(),
                static_cast<int>(physical_parameters(d).size()));
      EXPECT_EQ(p.black.input_dim(), info.input_dim());
      EXPECT_EQ(p.black.output_dim(), info.state_dim);
    }
  }
  EXPECT_THROW(make_white_box(Domain::kHopper, 4), InvalidArgument);
}

}  // namespace
}  // namespace nmoe::experts
