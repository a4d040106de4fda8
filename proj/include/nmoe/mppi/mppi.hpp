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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "nmoe/diffcore/tensor.hpp"
#include "nmoe/domain.hpp"
#include "nmoe/envs/envs.hpp"
#include "nmoe/rbd/dynamics.hpp"

namespace nmoe::mppi {

using diff::Tensor;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// 1 on [lb, ub]; outside, decays linearly to 0 over `margin`. margin = 0 gives
// an indicator.
inline double tolerance(double x, double lb, double ub, double margin) {
  if (margin < 0.0) throw InvalidArgument("tolerance: margin must be >= 0");
  if (lb > ub) throw InvalidArgument("tolerance: lb > ub");
  if (x >= lb && x <= ub) return 1.0;
  if (margin == 0.0) return 0.0;
  const double dist = x < lb ? lb - x : x - ub;
  return std::max(0.0, 1.0 - dist / margin);
}

// State-only reward in [0, 1] for each domain.
struct RewardSpec {
  Domain domain = Domain::kCart;
  std::array<double, 2> reacher_target{0.4, 0.5};  // fingertip goal
  double cart_target = 0.6;                        // x_d

  double operator()(std::span<const double> s) const {
    switch (domain) {
      case Domain::kReacher: {
        const double l1 = 0.5, l2 = 0.4;  // bundled reacher link lengths
        const double x = l1 * std::cos(s[0]) + l2 * std::cos(s[0] + s[1]);
        const double z = l1 * std::sin(s[0]) + l2 * std::sin(s[0] + s[1]);
        const double dx = reacher_target[0] - x, dz = reacher_target[1] - z;
        return tolerance(dx * dx + dz * dz, 0.0, 0.03, 0.0);
      }
      case Domain::kCart:
        return tolerance(s[0], cart_target, kInf, 0.0);
      case Domain::kHopper:
        return tolerance(s[1], 0.7, kInf, 0.0) * tolerance(s[6], 2.0, kInf, 2.0);
      case Domain::kHalfCheetah:
        return tolerance(s[2], -0.35, 0.35, 0.0) *
               tolerance(s[9], 10.0, kInf, 10.0);
    }
    return 0.0;
  }
};

// Reward of a single next state.
using Reward = std::function<double(std::span<const double>)>;

// Batched dynamics: (K x d_s states, K x d_a actions) -> K x d_s next states.
using BatchModel = std::function<Tensor(const Tensor&, const Tensor&)>;

// The ground-truth plant as a batched model; diverging rows become NaN.
inline BatchModel env_model(const envs::EnvSpec& env) {
  return [env](const Tensor& s, const Tensor& a) {
    Tensor out(s.rows(), s.cols());
    for (std::size_t r = 0; r < s.rows(); ++r) {
      try {
        const auto res = envs::step(env, s.row_span(r), a.row_span(r));
        std::copy(res.next.begin(), res.next.end(), out.row_span(r).begin());
      } catch (const NonFiniteError&) {
        for (double& v : out.row_span(r)) v = std::nan("");
      }
    }
    return out;
  };
}

struct MppiConfig {
  int horizon = 30;
  int samples = 256;
  double lambda = 0.1;
  std::vector<double> sigma;  // per action dimension
  std::vector<double> action_lo, action_hi;
  // AR(1) coefficient of the noise along the horizon; 0 gives white noise.
  // The per-step marginal std stays sigma either way.
  double noise_correlation = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (horizon < 1 || samples < 1) {
      throw InvalidArgument("MPPI horizon and samples must be >= 1");
    }
    if (!(lambda > 0.0)) throw InvalidArgument("MPPI temperature must be > 0");
    if (!(noise_correlation >= 0.0 && noise_correlation < 1.0)) {
      throw InvalidArgument("MPPI noise correlation must be in [0, 1)");
    }
    if (sigma.empty() || sigma.size() != action_lo.size() ||
        sigma.size() != action_hi.size()) {
      throw InvalidArgument("MPPI noise and bounds must cover every action");
    }
    for (std::size_t i = 0; i < sigma.size(); ++i) {
      if (!(sigma[i] > 0.0)) throw InvalidArgument("MPPI noise std must be > 0");
      if (!(action_lo[i] < action_hi[i])) throw InvalidArgument("MPPI bounds lo >= hi");
    }
  }

  int action_dim() const { return static_cast<int>(sigma.size()); }
};

// Default controller settings for a domain's plant.
inline MppiConfig default_config(const envs::EnvSpec& env, std::uint64_t seed) {
  MppiConfig c;
  const bool legged =
      env.domain == Domain::kHopper || env.domain == Domain::kHalfCheetah;
  c.horizon = legged ? 20 : 30;
  c.samples = legged ? 512 : 256;
  c.lambda = 0.1;
  c.action_lo = env.action_box.lo;
  c.action_hi = env.action_box.hi;
  for (std::size_t i = 0; i < c.action_lo.size(); ++i) {
    c.sigma.push_back(0.3 * (c.action_hi[i] - c.action_lo[i]));
  }
  if (env.domain == Domain::kCart) {
    // a bounce off the wall takes about a second; shorter or uncorrelated
    // rollouts never see the sparse height reward
    c.horizon = 50;
    c.samples = 128;
    c.noise_correlation = 0.95;
  }
  c.seed = seed;
  return c;
}

// Normalized exp((R_k - max R) / lambda). Rollouts with return -inf get zero
// weight; all of them being -inf is an error.
inline std::vector<double> path_weights(std::span<const double> returns,
                                        double lambda) {
  double best = -kInf;
  for (double r : returns) {
    if (!std::isnan(r)) best = std::max(best, r);
  }
  if (!std::isfinite(best)) throw NonFiniteError("MPPI: every rollout diverged");
  std::vector<double> w(returns.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < returns.size(); ++k) {
    if (std::isnan(returns[k]) || returns[k] == -kInf) continue;
    w[k] = std::exp((returns[k] - best) / lambda);
    total += w[k];
  }
  for (double& v : w) v /= total;
  return w;
}

struct PlanResult {
  std::vector<std::vector<double>> actions;  // H x d_a
  std::vector<double> returns;               // K
  std::vector<double> weights;               // K
};

// One MPPI update of the nominal action sequence from `state`.
inline PlanResult plan(const BatchModel& model, const MppiConfig& cfg,
                       const Reward& reward, std::span<const double> state,
                       const std::vector<std::vector<double>>& nominal,
                       std::mt19937_64& rng) {
  cfg.validate();
  const int H = cfg.horizon, K = cfg.samples, da = cfg.action_dim();
  if (static_cast<int>(nominal.size()) != H) {
    throw ShapeError("MPPI nominal sequence must have horizon rows");
  }
  const std::size_t ds = state.size();
  std::normal_distribution<double> normal(0.0, 1.0);

  // perturbed, clipped action sequences: [t] -> K x da
  std::vector<Tensor> acts(H, Tensor(K, da));
  const double beta = cfg.noise_correlation;
  const double fresh = std::sqrt(1.0 - beta * beta);
  std::vector<double> eps(da);
  for (int k = 0; k < K; ++k) {
    for (int t = 0; t < H; ++t) {
      for (int i = 0; i < da; ++i) {
        const double z = normal(rng);
        eps[i] = t == 0 ? z : beta * eps[i] + fresh * z;
        const double u = nominal[t][i] + cfg.sigma[i] * eps[i];
        acts[t](k, i) = std::clamp(u, cfg.action_lo[i], cfg.action_hi[i]);
      }
    }
  }

  Tensor s(K, ds);
  for (int k = 0; k < K; ++k) std::copy(state.begin(), state.end(), s.row_span(k).begin());
  std::vector<double> returns(K, 0.0);
  std::vector<char> alive(K, 1);
  for (int t = 0; t < H; ++t) {
    Tensor next = model(s, acts[t]);
    for (int k = 0; k < K; ++k) {
      if (!alive[k]) continue;
      bool finite = true;
      for (double v : next.row_span(k)) finite = finite && std::isfinite(v);
      if (!finite) {
        alive[k] = 0;
        returns[k] = -kInf;
        // park the row on its last finite state so the batch stays finite
        std::copy(s.row_span(k).begin(), s.row_span(k).end(), next.row_span(k).begin());
        continue;
      }
      returns[k] += reward(next.row_span(k));
    }
    s = std::move(next);
  }

  PlanResult out;
  out.weights = path_weights(returns, cfg.lambda);
  out.returns = std::move(returns);
  out.actions.assign(H, std::vector<double>(da, 0.0));
  for (int t = 0; t < H; ++t) {
    for (int k = 0; k < K; ++k) {
      const double w = out.weights[k];
      if (w == 0.0) continue;
      for (int i = 0; i < da; ++i) out.actions[t][i] += w * acts[t](k, i);
    }
    for (int i = 0; i < da; ++i) {
      out.actions[t][i] =
          std::clamp(out.actions[t][i], cfg.action_lo[i], cfg.action_hi[i]);
    }
  }
  return out;
}

struct EpisodeResult {
  std::vector<envs::Transition> transitions;
  std::vector<double> rewards;
  double total_reward = 0.0;
};

// Receding-horizon control of the ground-truth plant with `model` as the
// planner's dynamics.
inline EpisodeResult run_episode(const envs::EnvSpec& env, const MppiConfig& cfg,
                                 const Reward& reward, const BatchModel& model,
                                 std::span<const double> initial, int length,
                                 std::uint64_t seed) {
  cfg.validate();
  if (length < 0) throw InvalidArgument("episode length must be >= 0");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> nominal(cfg.horizon,
                                           std::vector<double>(cfg.action_dim(), 0.0));
  EpisodeResult ep;
  std::vector<double> s(initial.begin(), initial.end());
  for (int step = 0; step < length; ++step) {
    nominal = plan(model, cfg, reward, s, nominal, rng).actions;
    const std::vector<double> a = nominal.front();
    envs::StepResult r = envs::step(env, s, a);
    const double rew = reward(r.next);
    ep.rewards.push_back(rew);
    ep.total_reward += rew;
    ep.transitions.push_back({s, a, r.next, r.mode});
    s = std::move(r.next);
    std::rotate(nominal.begin(), nominal.begin() + 1, nominal.end());
    if (nominal.size() > 1) nominal.back() = nominal[nominal.size() - 2];
  }
  return ep;
}

}  // namespace nmoe::mppi
