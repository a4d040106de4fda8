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

// Minibatch training with early stopping, test-set evaluation and the single
// training run used by every experiment.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "nmoe/diffcore/adam.hpp"
#include "nmoe/diffcore/eval.hpp"
#include "nmoe/envs/envs.hpp"
#include "nmoe/nmoe/mixture.hpp"

namespace nmoe::harness {

using diff::Tensor;
using envs::Dataset;
using mixture::ModelKind;
using mixture::NmoeModel;

// Independent stream seed derived from a base seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a over a string, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const nlohmann::json& config) {
  return fnv1a_hex(config.dump());
}

struct FitOptions {
  std::size_t batch = 64;
  long max_steps = 20000;
  int eval_every = 50;      // steps between validation evaluations
  int patience = 50;        // evaluations without improvement before stopping
  double val_fraction = 0.1;  // 0 disables early stopping
  diff::AdamConfig adam{};
  double gate_lr_scale = 30.0;  // step-size multiplier for wh and wg
};

struct FitResult {
  std::vector<double> train_loss;  // one per step
  std::vector<std::pair<long, double>> val_loss;
  long steps = 0;
  bool diverged = false;
  bool early_stopped = false;
};

namespace detail {

inline std::map<std::string, Tensor> snapshot(NmoeModel& m) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : m.trainables()) out.emplace(name, *t);
  return out;
}

inline void restore(NmoeModel& m, const std::map<std::string, Tensor>& snap) {
  for (const auto& [name, t] : m.trainables()) *t = snap.at(name);
}

inline double eager_loss(const NmoeModel& m, const Dataset& d) {
  diff::EagerEval ev;
  return m.loss(ev, d.states, d.actions, d.next).item();
}

}  // namespace detail

// Adam on the mixture loss over minibatches drawn without replacement from
// shuffled epochs. With a validation split the parameters with the best
// validation loss are kept. Divergence restores the last good parameters and
// is reported, not thrown. `state` carries optimizer moments across calls.
inline FitResult fit(NmoeModel& model, const Dataset& data, const FitOptions& opt,
                     std::mt19937_64& rng, diff::AdamState* state = nullptr) {
  if (data.size() == 0) throw InvalidArgument("fit on an empty dataset");
  if (opt.batch == 0) throw InvalidArgument("batch size must be positive");
  if (opt.val_fraction < 0.0 || opt.val_fraction >= 1.0) {
    throw InvalidArgument("validation fraction must be in [0, 1)");
  }
  diff::AdamState local;
  diff::AdamState& adam = state ? *state : local;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(opt.val_fraction * static_cast<double>(data.size())));
  if (n_val >= data.size()) n_val = 0;
  const Dataset val = n_val > 0 ? data.subset(std::span(order).first(n_val))
                                : Dataset{};
  std::vector<std::size_t> train_rows(order.begin() + n_val, order.end());
  const std::size_t batch = std::min(opt.batch, train_rows.size());

  std::vector<diff::ParamRef> params;
  for (const auto& [name, t] : model.trainables()) {
    const bool gate = name == "wh" || name.rfind("wg", 0) == 0;
    params.push_back({name, t, gate ? opt.gate_lr_scale : 1.0});
  }

  FitResult res;
  auto best = detail::snapshot(model);
  double best_val = n_val > 0 ? detail::eager_loss(model, val)
                              : std::numeric_limits<double>::infinity();
  if (n_val > 0) res.val_loss.emplace_back(0, best_val);
  int stale = 0;
  std::size_t cursor = train_rows.size();
  for (long step = 0; step < opt.max_steps; ++step) {
    if (cursor + batch > train_rows.size()) {
      std::shuffle(train_rows.begin(), train_rows.end(), rng);
      cursor = 0;
    }
    const Dataset mb =
        data.subset(std::span(train_rows).subspan(cursor, batch));
    cursor += batch;

    diff::Graph g;
    diff::TapeEval ev(g);
    double loss = 0.0;
    try {
      const diff::Var l = model.loss(ev, mb.states, mb.actions, mb.next);
      loss = l.value().item();
      if (!std::isfinite(loss)) throw NonFiniteError("non-finite loss");
      diff::adam_step(params, g.backward(l).by_name(), adam, opt.adam);
    } catch (const NonFiniteError&) {
      res.diverged = true;
      break;
    }
    res.train_loss.push_back(loss);
    res.steps = step + 1;
    ++model.steps;
    if (n_val == 0 || (step + 1) % opt.eval_every != 0) continue;
    const double v = detail::eager_loss(model, val);
    res.val_loss.emplace_back(step + 1, v);
    if (!std::isfinite(v)) {
      res.diverged = true;
      break;
    }
    if (v < best_val) {
      best_val = v;
      best = detail::snapshot(model);
      stale = 0;
    } else if (++stale >= opt.patience) {
      res.early_stopped = true;
      break;
    }
  }
  // a failing step never writes, so without validation the model already
  // holds the last good parameters
  if (n_val > 0) detail::restore(model, best);
  return res;
}

// Root mean squared next-state error over samples and state dimensions, in
// the model's normalized output units.
inline double evaluate_rmse(const NmoeModel& model, const Dataset& data) {
  if (data.size() == 0) throw InvalidArgument("evaluate_rmse on empty dataset");
  const Tensor pred = model.predict_next(data.states, data.actions);
  const Tensor& sd = model.norm.out_std;
  double acc = 0.0;
  for (std::size_t r = 0; r < pred.rows(); ++r) {
    for (std::size_t c = 0; c < pred.cols(); ++c) {
      const double e = (pred(r, c) - data.next(r, c)) / sd[c];
      acc += e * e;
    }
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

struct TrainConfig {
  Domain domain = Domain::kCart;
  ModelKind kind = ModelKind::kNmoe;
  std::size_t train_size = 1024;
  std::size_t test_size = 4096;
  FitOptions fit{};
  std::uint64_t seed = 0;
  double viscous = 0.0;  // reacher joint friction of the plant
  double coulomb = 0.0;

  void validate() const {
    if (train_size == 0 || test_size == 0) {
      throw InvalidArgument("train and test sizes must be positive");
    }
    if (fit.max_steps < 0) throw InvalidArgument("max steps must be >= 0");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"domain", domain_name(c.domain)},
          {"kind", mixture::kind_name(c.kind)},
          {"train_size", c.train_size},
          {"test_size", c.test_size},
          {"batch", c.fit.batch},
          {"max_steps", c.fit.max_steps},
          {"eval_every", c.fit.eval_every},
          {"patience", c.fit.patience},
          {"val_fraction", c.fit.val_fraction},
          {"lr", c.fit.adam.lr},
          {"seed", c.seed},
          {"viscous", c.viscous},
          {"coulomb", c.coulomb}};
}

struct RunRecord {
  TrainConfig config;
  FitResult fit;
  double initial_rmse = 0.0;
  double test_rmse = 0.0;
  mixture::ResponsibilityStats responsibility;
  double wall_seconds = 0.0;
  std::string status = "ok";
  std::string checkpoint_path;
  NmoeModel model;
};

// Training and test sets of one run. The test set depends only on the seed
// and plant, so every kind and train size of a seed sees the same tuples.
inline Dataset training_set(const TrainConfig& c) {
  return envs::sample_uniform(envs::make_env(c.domain, c.viscous, c.coulomb),
                              c.train_size, derive_seed(c.seed, 1));
}
inline Dataset test_set(const TrainConfig& c) {
  return envs::sample_uniform(envs::make_env(c.domain, c.viscous, c.coulomb),
                              c.test_size, derive_seed(c.seed, 2));
}

inline RunRecord train(const TrainConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config = config;
  const Dataset train_data = training_set(config);
  const Dataset test_data = test_set(config);
  rec.model = mixture::make_model(
      config.domain, config.kind, derive_seed(config.seed, 3),
      mixture::Normalizer::fit(train_data.states, train_data.actions,
                               train_data.next));
  rec.initial_rmse = evaluate_rmse(rec.model, test_data);
  std::mt19937_64 rng(derive_seed(config.seed, 4));
  rec.fit = fit(rec.model, train_data, config.fit, rng);
  rec.test_rmse = evaluate_rmse(rec.model, test_data);
  if (rec.fit.diverged || !std::isfinite(rec.test_rmse)) rec.status = "diverged";
  rec.responsibility = mixture::responsibility_stats(rec.model, test_data.states,
                                                     test_data.actions);
  rec.wall_seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
  return rec;
}

}  // namespace nmoe::harness
