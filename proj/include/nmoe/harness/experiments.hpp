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

// The four experiments: test error against training-set size, gate outputs
// along cart trajectories, white-box responsibility against reacher friction,
// and online model-based control.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "nmoe/harness/train.hpp"
#include "nmoe/mppi/mppi.hpp"

namespace nmoe::harness {

// ---- summary statistics

// Linear-interpolation quantile of unsorted values, q in [0, 1].
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw InvalidArgument("quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}
inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

// Observer called once per finished unit of work, for progress output.
using Progress = std::function<void(const std::string&)>;

inline void report(const Progress& p, const std::string& msg) {
  if (p) p(msg);
}

// ---- test error against training-set size

struct SweepConfig {
  std::vector<ModelKind> kinds{ModelKind::kNmoe, ModelKind::kBb, ModelKind::kMbb,
                               ModelKind::kMwb};
  std::vector<std::size_t> sizes{256, 512, 1024, 2048, 4096};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  TrainConfig base;  // domain, fit options, test size, plant friction
};

inline nlohmann::json to_json(const SweepConfig& c) {
  nlohmann::json j = to_json(c.base);
  j.erase("kind");
  j.erase("train_size");
  j.erase("seed");
  for (ModelKind k : c.kinds) j["kinds"].push_back(mixture::kind_name(k));
  j["sizes"] = c.sizes;
  j["seeds"] = c.seeds;
  return j;
}

struct SweepRow {
  ModelKind kind = ModelKind::kNmoe;
  std::size_t train_size = 0;
  std::vector<double> rmse;  // successful runs, in seed order
  int failures = 0;
  double median = 0.0, q25 = 0.0, q75 = 0.0;
};

// One row per (kind, size). A single failed seed is dropped from the
// statistics; two or more make the experiment fail.
inline std::vector<SweepRow> rmse_sweep(const SweepConfig& cfg,
                                        const Progress& progress = {}) {
  if (cfg.kinds.empty() || cfg.sizes.empty() || cfg.seeds.empty()) {
    throw InvalidArgument("sweep needs kinds, sizes and seeds");
  }
  std::vector<SweepRow> rows;
  for (ModelKind kind : cfg.kinds) {
    for (std::size_t size : cfg.sizes) {
      SweepRow row;
      row.kind = kind;
      row.train_size = size;
      for (std::uint64_t seed : cfg.seeds) {
        TrainConfig c = cfg.base;
        c.kind = kind;
        c.train_size = size;
        c.seed = seed;
        const RunRecord rec = train(c);
        if (rec.status == "ok") {
          row.rmse.push_back(rec.test_rmse);
        } else {
          ++row.failures;
        }
        report(progress, std::string(mixture::kind_name(kind)) + " n=" +
                             std::to_string(size) + " seed=" +
                             std::to_string(seed) + " rmse=" +
                             std::to_string(rec.test_rmse) + " " + rec.status);
      }
      if (row.failures >= 2 || row.rmse.empty()) {
        throw Error(std::string("sweep: ") + mixture::kind_name(kind) + " at n=" +
                    std::to_string(size) + " failed on " +
                    std::to_string(row.failures) + " seeds");
      }
      row.median = median(row.rmse);
      row.q25 = quantile(row.rmse, 0.25);
      row.q75 = quantile(row.rmse, 0.75);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline const SweepRow& find_row(const std::vector<SweepRow>& rows, ModelKind kind,
                                std::size_t size) {
  for (const auto& r : rows) {
    if (r.kind == kind && r.train_size == size) return r;
  }
  throw InvalidArgument("no sweep row for " + std::string(mixture::kind_name(kind)) +
                        " at n=" + std::to_string(size));
}

inline void write_sweep_csv(std::ostream& out, const SweepConfig& cfg,
                            const std::vector<SweepRow>& rows) {
  const std::string hash = config_hash(to_json(cfg));
  out << "domain,kind,train_size,median_rmse,q25_rmse,q75_rmse,runs,failures,"
         "config_hash\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << domain_name(cfg.base.domain) << ',' << mixture::kind_name(r.kind) << ','
        << r.train_size << ',' << r.median << ',' << r.q25 << ',' << r.q75 << ','
        << r.rmse.size() << ',' << r.failures << ',' << hash << '\n';
  }
}

// ---- mode assignment

// Permutation `perm` maximizing sum_i counts[i][perm[i]] for a square count
// matrix (rows: gate labels, columns: true modes). Exhaustive, so exact; the
// mode counts here are at most four.
inline std::vector<int> best_assignment(const std::vector<std::vector<long>>& counts) {
  const int m = static_cast<int>(counts.size());
  if (m == 0 || m > 8) throw InvalidArgument("assignment needs 1..8 modes");
  std::vector<int> perm(m), best;
  std::iota(perm.begin(), perm.end(), 0);
  long best_score = -1;
  do {
    long score = 0;
    for (int i = 0; i < m; ++i) score += counts[i][perm[i]];
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline std::vector<int> argmax_rows(const Tensor& h) {
  std::vector<int> out(h.rows());
  for (std::size_t r = 0; r < h.rows(); ++r) {
    const auto row = h.row_span(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

struct ModeAgreement {
  double fraction = 0.0;        // argmax-h matches the true mode after mapping
  std::vector<int> gate_to_mode;  // gate index -> true mode
};

inline ModeAgreement mode_agreement(const NmoeModel& model, const Dataset& data) {
  if (data.size() == 0) throw InvalidArgument("agreement on an empty dataset");
  const int m = model.modes();
  const std::vector<int> label = argmax_rows(model.predict(data.states, data.actions).h);
  std::vector<std::vector<long>> counts(m, std::vector<long>(m, 0));
  for (std::size_t r = 0; r < data.size(); ++r) ++counts[label[r]][data.modes[r]];
  ModeAgreement a;
  a.gate_to_mode = best_assignment(counts);
  long hits = 0;
  for (int i = 0; i < m; ++i) hits += counts[i][a.gate_to_mode[i]];
  a.fraction = static_cast<double>(hits) / static_cast<double>(data.size());
  return a;
}

// ---- gate outputs along cart trajectories

struct PhaseRow {
  int trajectory = 0;
  int step = 0;
  std::vector<double> state;
  std::vector<double> h;
  int true_mode = 0;
};

// Uncontrolled trajectories from random initial states in the sampling box,
// with the gate outputs at every visited state.
inline std::vector<PhaseRow> gating_phase(const NmoeModel& model, std::uint64_t seed,
                                          int trajectories = 3, int length = 300) {
  if (trajectories < 1 || length < 1) {
    throw InvalidArgument("gating phase needs trajectories and steps");
  }
  const envs::EnvSpec env = envs::make_env(model.domain);
  std::mt19937_64 rng(seed);
  std::vector<PhaseRow> rows;
  const std::vector<std::vector<double>> zero(
      length, std::vector<double>(model.action_dim(), 0.0));
  for (int t = 0; t < trajectories; ++t) {
    std::vector<double> s0(env.state_box.size());
    for (std::size_t i = 0; i < s0.size(); ++i) {
      s0[i] = std::uniform_real_distribution<double>(env.state_box.lo[i],
                                                     env.state_box.hi[i])(rng);
    }
    const Dataset d = envs::to_dataset(envs::rollout(env, s0, zero),
                                       model.state_dim(), model.action_dim());
    const Tensor h = model.predict(d.states, d.actions).h;
    for (std::size_t r = 0; r < d.size(); ++r) {
      PhaseRow row;
      row.trajectory = t;
      row.step = static_cast<int>(r);
      row.state.assign(d.states.row_span(r).begin(), d.states.row_span(r).end());
      row.h.assign(h.row_span(r).begin(), h.row_span(r).end());
      row.true_mode = d.modes[r];
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline void write_phase_csv(std::ostream& out, const NmoeModel& model,
                            std::uint64_t seed, const std::vector<PhaseRow>& rows) {
  nlohmann::json cfg{{"experiment", "gating_phase"},
                     {"domain", domain_name(model.domain)},
                     {"model_seed", model.seed},
                     {"model_steps", model.steps},
                     {"seed", seed}};
  const std::string hash = config_hash(cfg);
  out << "trajectory,step,x,xdot";
  for (int i = 0; i < model.modes(); ++i) out << ",h" << i + 1;
  out << ",true_mode,config_hash\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.trajectory << ',' << r.step << ',' << r.state[0] << ',' << r.state[1];
    for (double v : r.h) out << ',' << v;
    out << ',' << r.true_mode << ',' << hash << '\n';
  }
}

// Share of argmax-h labels of states with x below the wall and moving toward
// it that map to the contact mode.
inline double contact_quadrant_routing(const NmoeModel& model, const Dataset& data,
                                       const ModeAgreement& agreement) {
  if (model.domain != Domain::kCart) {
    throw InvalidArgument("contact quadrant routing is defined for the cart");
  }
  const double wall = envs::make_env(Domain::kCart).cart.wall_position;
  const std::vector<int> label =
      argmax_rows(model.predict(data.states, data.actions).h);
  long total = 0, hits = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (!(data.states(r, 0) < wall && data.states(r, 1) < 0.0)) continue;
    ++total;
    if (agreement.gate_to_mode[label[r]] == 0) ++hits;  // mode 0 is contact
  }
  if (total == 0) throw InvalidArgument("no contact-quadrant states in the set");
  return static_cast<double>(hits) / static_cast<double>(total);
}

// ---- white-box responsibility against reacher friction

struct FrictionLevel {
  double coulomb = 0.0;  // mu
  double viscous = 0.0;  // b
};

struct RespConfig {
  std::vector<FrictionLevel> levels{{0.0, 0.0}, {0.1, 0.1}, {0.5, 0.5}};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  TrainConfig base;  // reacher NMOE settings
};

inline nlohmann::json to_json(const RespConfig& c) {
  nlohmann::json j = to_json(c.base);
  j.erase("seed");
  j.erase("viscous");
  j.erase("coulomb");
  for (const auto& l : c.levels) j["levels"].push_back({l.coulomb, l.viscous});
  j["seeds"] = c.seeds;
  return j;
}

struct RespRow {
  FrictionLevel level;
  std::uint64_t seed = 0;
  double g_black = 0.0;
  double g_white = 0.0;
  std::string status = "ok";
};

// Mean gate shares over the test set, averaged over modes weighted by their
// mean responsibility.
inline std::array<double, 2> mean_gate_shares(const mixture::ResponsibilityStats& st) {
  std::array<double, 2> g{0.0, 0.0};
  for (std::size_t i = 0; i < st.mean_h.size(); ++i) {
    g[0] += st.mean_h[i] * st.mean_g[i][0];
    g[1] += st.mean_h[i] * st.mean_g[i][1];
  }
  return g;
}

inline std::vector<RespRow> gating_responsibility(const RespConfig& cfg,
                                                  const Progress& progress = {}) {
  std::vector<RespRow> rows;
  for (const auto& level : cfg.levels) {
    for (std::uint64_t seed : cfg.seeds) {
      TrainConfig c = cfg.base;
      c.kind = ModelKind::kNmoe;
      c.seed = seed;
      c.coulomb = level.coulomb;
      c.viscous = level.viscous;
      const RunRecord rec = train(c);
      const auto g = mean_gate_shares(rec.responsibility);
      rows.push_back({level, seed, g[0], g[1], rec.status});
      report(progress, "mu=" + std::to_string(level.coulomb) + " b=" +
                           std::to_string(level.viscous) + " seed=" +
                           std::to_string(seed) + " g_white=" + std::to_string(g[1]));
    }
  }
  return rows;
}

// Median white-box share over the seeds of each level, in level order.
inline std::vector<double> median_white_share(const RespConfig& cfg,
                                              const std::vector<RespRow>& rows) {
  std::vector<double> out;
  for (const auto& level : cfg.levels) {
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.status == "ok" && r.level.coulomb == level.coulomb &&
          r.level.viscous == level.viscous) {
        v.push_back(r.g_white);
      }
    }
    out.push_back(v.empty() ? std::nan("") : median(v));
  }
  return out;
}

inline void write_resp_csv(std::ostream& out, const RespConfig& cfg,
                           const std::vector<RespRow>& rows) {
  const std::string hash = config_hash(to_json(cfg));
  out << "mu,b,seed,mean_g1,mean_g2,status,config_hash\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.level.coulomb << ',' << r.level.viscous << ',' << r.seed << ','
        << r.g_black << ',' << r.g_white << ',' << r.status << ',' << hash << '\n';
  }
}

// ---- online model-based control

struct MbrlConfig {
  Domain domain = Domain::kCart;
  ModelKind kind = ModelKind::kNmoe;
  int episodes = 20;
  int episode_length = 300;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  FitOptions fit{.max_steps = 500, .val_fraction = 0.0};  // fixed budget
  double threshold_fraction = 0.8;
  bool stop_at_threshold = false;
};

inline nlohmann::json to_json(const MbrlConfig& c) {
  return {{"domain", domain_name(c.domain)},
          {"kind", mixture::kind_name(c.kind)},
          {"episodes", c.episodes},
          {"episode_length", c.episode_length},
          {"seeds", c.seeds},
          {"batch", c.fit.batch},
          {"steps_per_episode", c.fit.max_steps},
          {"lr", c.fit.adam.lr},
          {"threshold_fraction", c.threshold_fraction},
          {"stop_at_threshold", c.stop_at_threshold}};
}

// Start state of every episode: the cart at rest above the wall, the others at
// the centre of the sampling box.
inline std::vector<double> initial_state(const envs::EnvSpec& env) {
  if (env.domain == Domain::kCart) return {0.5, 0.0};
  std::vector<double> s(env.state_box.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = 0.5 * (env.state_box.lo[i] + env.state_box.hi[i]);
  }
  return s;
}

inline mppi::BatchModel learned_model(const NmoeModel& model) {
  return [&model](const Tensor& s, const Tensor& a) {
    return model.predict_next(s, a);
  };
}

// Episode return of the controller planning with the true plant.
inline double reference_return(Domain d, int length, std::uint64_t seed) {
  const envs::EnvSpec env = envs::make_env(d);
  const mppi::MppiConfig mc = mppi::default_config(env, derive_seed(seed, 10));
  return mppi::run_episode(env, mc, mppi::RewardSpec{d}, mppi::env_model(env),
                           initial_state(env), length, derive_seed(seed, 11))
      .total_reward;
}

struct MbrlRun {
  std::uint64_t seed = 0;
  std::vector<double> returns;  // per episode
  int episodes_to_threshold = -1;  // 1-based; -1 when never reached
  std::string status = "ok";
};

// Plan with the current model for one episode, add the transitions to the
// replay set, retrain on all of it, repeat. `threshold` is an absolute return.
inline MbrlRun mbrl_run(const MbrlConfig& cfg, std::uint64_t seed, double threshold,
                        const Progress& progress = {}) {
  const envs::EnvSpec env = envs::make_env(cfg.domain);
  std::vector<double> lo = env.state_box.lo, hi = env.state_box.hi;
  lo.insert(lo.end(), env.action_box.lo.begin(), env.action_box.lo.end());
  hi.insert(hi.end(), env.action_box.hi.begin(), env.action_box.hi.end());
  NmoeModel model = mixture::make_model(
      cfg.domain, cfg.kind, derive_seed(seed, 3),
      mixture::Normalizer::from_box(lo, hi, domain_info(cfg.domain).state_dim));
  const mppi::RewardSpec reward{cfg.domain};
  const auto start = initial_state(env);
  std::mt19937_64 rng(derive_seed(seed, 4));
  diff::AdamState adam;
  Dataset replay;
  MbrlRun run;
  run.seed = seed;
  for (int e = 0; e < cfg.episodes; ++e) {
    const mppi::MppiConfig mc = mppi::default_config(env, derive_seed(seed, 100 + e));
    mppi::EpisodeResult ep;
    try {
      ep = mppi::run_episode(env, mc, reward, learned_model(model), start,
                             cfg.episode_length, derive_seed(seed, 1000 + e));
    } catch (const NonFiniteError&) {
      run.status = "diverged";
      break;
    }
    run.returns.push_back(ep.total_reward);
    report(progress, std::string(mixture::kind_name(cfg.kind)) + " seed=" +
                         std::to_string(seed) + " episode=" + std::to_string(e + 1) +
                         " return=" + std::to_string(ep.total_reward));
    if (run.episodes_to_threshold < 0 && ep.total_reward >= threshold) {
      run.episodes_to_threshold = e + 1;
      if (cfg.stop_at_threshold) break;
    }
    replay.append(envs::to_dataset(ep.transitions, model.state_dim(),
                                   model.action_dim()));
    if (fit(model, replay, cfg.fit, rng, &adam).diverged) {
      run.status = "diverged";
      break;
    }
  }
  return run;
}

struct MbrlResult {
  std::vector<double> reference;  // ground-truth-model return per seed
  double threshold = 0.0;
  std::vector<MbrlRun> runs;
};

inline MbrlResult mbrl(const MbrlConfig& cfg, const Progress& progress = {}) {
  if (cfg.episodes < 1 || cfg.episode_length < 1 || cfg.seeds.empty()) {
    throw InvalidArgument("mbrl needs episodes, steps and seeds");
  }
  MbrlResult res;
  for (std::uint64_t seed : cfg.seeds) {
    res.reference.push_back(reference_return(cfg.domain, cfg.episode_length, seed));
  }
  const double mean_ref = std::accumulate(res.reference.begin(), res.reference.end(), 0.0) /
                          static_cast<double>(res.reference.size());
  res.threshold = cfg.threshold_fraction * mean_ref;
  report(progress, "reference return " + std::to_string(mean_ref));
  for (std::uint64_t seed : cfg.seeds) {
    res.runs.push_back(mbrl_run(cfg, seed, res.threshold, progress));
  }
  return res;
}

// Median episodes-to-threshold with runs that never got there counted as
// episodes + 1.
inline double median_episodes_to_threshold(const MbrlConfig& cfg,
                                           const MbrlResult& res) {
  std::vector<double> v;
  for (const auto& r : res.runs) {
    v.push_back(r.episodes_to_threshold > 0 ? r.episodes_to_threshold
                                            : cfg.episodes + 1);
  }
  return median(v);
}

inline void write_mbrl_csv(std::ostream& out, const MbrlConfig& cfg,
                           const MbrlResult& res) {
  const std::string hash = config_hash(to_json(cfg));
  out << "kind,seed,episode,return,reference_return,threshold,status,config_hash\n";
  out.precision(10);
  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    const auto& r = res.runs[i];
    for (std::size_t e = 0; e < r.returns.size(); ++e) {
      out << mixture::kind_name(cfg.kind) << ',' << r.seed << ',' << e + 1 << ','
          << r.returns[e] << ',' << res.reference[i] << ',' << res.threshold << ','
          << r.status << ',' << hash << '\n';
    }
  }
}

}  // namespace nmoe::harness
