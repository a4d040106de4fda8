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

// Command-line front end: data generation, training, evaluation and the four
// experiments. Progress goes to stderr, results to the --out files.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "nmoe/envs/envs.hpp"
#include "nmoe/harness/experiments.hpp"
#include "nmoe/harness/train.hpp"
#include "nmoe/nmoe/mixture.hpp"

namespace {

using namespace nmoe;
using namespace nmoe::harness;

const std::vector<std::string> kDomains{"reacher", "cart", "hopper", "halfcheetah"};
const std::vector<std::string> kKinds{"nmoe", "bb", "mbb", "mwb"};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

Progress progress_for(bool quiet) {
  if (quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

std::vector<std::uint64_t> seed_range(int n) {
  std::vector<std::uint64_t> s(n);
  for (int i = 0; i < n; ++i) s[i] = static_cast<std::uint64_t>(i);
  return s;
}

// Flags shared by every subcommand that trains.
struct FitFlags {
  long steps = 20000;
  double lr = 1e-3;
  std::size_t batch = 64;
  std::size_t test_size = 4096;

  void add(CLI::App* app, bool with_test_size = true) {
    app->add_option("--steps", steps, "max gradient steps")->capture_default_str();
    app->add_option("--lr", lr, "Adam step size")->capture_default_str();
    app->add_option("--batch", batch, "minibatch size")->capture_default_str();
    if (with_test_size) {
      app->add_option("--test-size", test_size, "test tuples")->capture_default_str();
    }
  }
  void apply(TrainConfig& c) const {
    c.fit.max_steps = steps;
    c.fit.adam.lr = lr;
    c.fit.batch = batch;
    c.test_size = test_size;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nested mixture of experts dynamics models"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "no progress output");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "sample transitions from a plant");
  std::string gen_domain, gen_out;
  std::size_t gen_n = 0;
  std::uint64_t gen_seed = 0;
  double gen_viscous = 0.0, gen_coulomb = 0.0;
  gen->add_option("--domain", gen_domain)->required()->check(CLI::IsMember(kDomains));
  gen->add_option("--n", gen_n, "tuples")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed)->required();
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--viscous", gen_viscous, "reacher joint damping b");
  gen->add_option("--coulomb", gen_coulomb, "reacher joint friction mu");

  // train
  auto* tr = app.add_subcommand("train", "train one model and save a checkpoint");
  TrainConfig tc;
  std::string tr_domain, tr_kind, tr_out, tr_log;
  FitFlags tr_fit;
  tr->add_option("--domain", tr_domain)->required()->check(CLI::IsMember(kDomains));
  tr->add_option("--kind", tr_kind)->required()->check(CLI::IsMember(kKinds));
  tr->add_option("--train-size", tc.train_size)->required()->check(CLI::PositiveNumber);
  tr->add_option("--seed", tc.seed)->required();
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--log", tr_log, "per-step loss CSV");
  tr->add_option("--viscous", tc.viscous, "reacher joint damping b");
  tr->add_option("--coulomb", tc.coulomb, "reacher joint friction mu");
  tr_fit.add(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "print test RMSE of a checkpoint");
  std::string ev_ckpt, ev_data;
  ev->add_option("--ckpt", ev_ckpt)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data)->required()->check(CLI::ExistingFile);

  // exp-rmse-sweep
  auto* sw = app.add_subcommand("exp-rmse-sweep", "test RMSE against training size");
  std::string sw_domain, sw_out;
  std::vector<std::string> sw_kinds = kKinds;
  std::vector<std::size_t> sw_sizes{256, 512, 1024, 2048, 4096};
  int sw_seeds = 5;
  FitFlags sw_fit;
  sw->add_option("--domain", sw_domain)->required()->check(CLI::IsMember(kDomains));
  sw->add_option("--out", sw_out)->required();
  sw->add_option("--kinds", sw_kinds)->check(CLI::IsMember(kKinds))->capture_default_str();
  sw->add_option("--sizes", sw_sizes)->capture_default_str();
  sw->add_option("--seeds", sw_seeds, "seeds 0..n-1")->check(CLI::PositiveNumber)
      ->capture_default_str();
  sw_fit.add(sw);

  // exp-gating-phase
  auto* ph = app.add_subcommand("exp-gating-phase",
                                "gate outputs along zero-input trajectories");
  std::string ph_ckpt, ph_out;
  std::uint64_t ph_seed = 0;
  int ph_traj = 3, ph_len = 300;
  ph->add_option("--ckpt", ph_ckpt)->required()->check(CLI::ExistingFile);
  ph->add_option("--out", ph_out)->required();
  ph->add_option("--seed", ph_seed)->capture_default_str();
  ph->add_option("--trajectories", ph_traj)->capture_default_str();
  ph->add_option("--length", ph_len)->capture_default_str();

  // exp-gating-resp
  auto* rs = app.add_subcommand("exp-gating-resp",
                                "reacher white-box share against joint friction");
  std::string rs_out;
  int rs_seeds = 5;
  FitFlags rs_fit;
  RespConfig rc;
  rc.base.domain = Domain::kReacher;
  rs->add_option("--out", rs_out)->required();
  rs->add_option("--seeds", rs_seeds, "seeds 0..n-1")->check(CLI::PositiveNumber)
      ->capture_default_str();
  rs->add_option("--train-size", rc.base.train_size)->capture_default_str();
  rs_fit.add(rs);

  // exp-mbrl
  auto* mb = app.add_subcommand("exp-mbrl", "online model-based control with MPPI");
  std::string mb_domain, mb_kind, mb_out;
  MbrlConfig mc;
  int mb_seeds = 5;
  mb->add_option("--domain", mb_domain)->required()->check(CLI::IsMember(kDomains));
  mb->add_option("--kind", mb_kind)->required()->check(CLI::IsMember(kKinds));
  mb->add_option("--episodes", mc.episodes)->required()->check(CLI::PositiveNumber);
  mb->add_option("--out", mb_out)->required();
  mb->add_option("--length", mc.episode_length, "steps per episode")
      ->check(CLI::PositiveNumber)->capture_default_str();
  mb->add_option("--seeds", mb_seeds, "seeds 0..n-1")->check(CLI::PositiveNumber)
      ->capture_default_str();
  mb->add_option("--steps-per-episode", mc.fit.max_steps)->capture_default_str();
  mb->add_flag("--stop-at-threshold", mc.stop_at_threshold,
               "end a seed once it reaches the threshold");

  CLI11_PARSE(app, argc, argv);
  const Progress progress = progress_for(quiet);

  try {
    if (*gen) {
      const auto env = envs::make_env(parse_domain(gen_domain), gen_viscous, gen_coulomb);
      auto out = open_out(gen_out);
      envs::write_dataset_csv(out, envs::sample_uniform(env, gen_n, gen_seed));
    } else if (*tr) {
      tc.domain = parse_domain(tr_domain);
      tc.kind = mixture::parse_kind(tr_kind);
      tr_fit.apply(tc);
      RunRecord rec = train(tc);
      mixture::save_checkpoint(rec.model, tr_out);
      rec.checkpoint_path = tr_out;
      if (!tr_log.empty()) {
        auto log = open_out(tr_log);
        const std::string hash = config_hash(to_json(tc));
        log << "step,train_loss,val_loss,config_hash\n";
        log.precision(10);
        std::size_t v = 0;
        for (std::size_t s = 0; s < rec.fit.train_loss.size(); ++s) {
          log << s + 1 << ',' << rec.fit.train_loss[s] << ',';
          if (v < rec.fit.val_loss.size() &&
              rec.fit.val_loss[v].first == static_cast<long>(s + 1)) {
            log << rec.fit.val_loss[v++].second;
          }
          log << ',' << hash << '\n';
        }
      }
      std::cout << "status " << rec.status << "\ninitial_rmse " << rec.initial_rmse
                << "\ntest_rmse " << rec.test_rmse << "\nsteps " << rec.fit.steps
                << "\nwall_seconds " << rec.wall_seconds << '\n';
      return rec.status == "ok" ? 0 : 3;
    } else if (*ev) {
      const NmoeModel m = mixture::load_checkpoint(ev_ckpt);
      std::ifstream in(ev_data);
      const envs::Dataset d = envs::read_dataset_csv(in);
      if (d.states.cols() != static_cast<std::size_t>(m.state_dim()) ||
          d.actions.cols() != static_cast<std::size_t>(m.action_dim())) {
        throw ShapeError("dataset dimensions do not match the " +
                         domain_name(m.domain) + " checkpoint");
      }
      std::cout.precision(10);
      std::cout << evaluate_rmse(m, d) << '\n';
    } else if (*sw) {
      SweepConfig sc;
      sc.kinds.clear();
      for (const auto& k : sw_kinds) sc.kinds.push_back(mixture::parse_kind(k));
      sc.sizes = sw_sizes;
      sc.seeds = seed_range(sw_seeds);
      sc.base.domain = parse_domain(sw_domain);
      sw_fit.apply(sc.base);
      const auto rows = rmse_sweep(sc, progress);
      auto out = open_out(sw_out);
      write_sweep_csv(out, sc, rows);
    } else if (*ph) {
      const NmoeModel m = mixture::load_checkpoint(ph_ckpt);
      const auto rows = gating_phase(m, ph_seed, ph_traj, ph_len);
      auto out = open_out(ph_out);
      write_phase_csv(out, m, ph_seed, rows);
      const envs::Dataset test = envs::sample_uniform(envs::make_env(m.domain), 4096,
                                                      derive_seed(ph_seed, 2));
      const ModeAgreement a = mode_agreement(m, test);
      std::cout << "mode_agreement " << a.fraction << '\n';
      if (m.domain == Domain::kCart) {
        std::cout << "contact_quadrant_routing "
                  << contact_quadrant_routing(m, test, a) << '\n';
      }
    } else if (*rs) {
      rc.seeds = seed_range(rs_seeds);
      rs_fit.apply(rc.base);
      const auto rows = gating_responsibility(rc, progress);
      auto out = open_out(rs_out);
      write_resp_csv(out, rc, rows);
      const auto med = median_white_share(rc, rows);
      for (std::size_t i = 0; i < med.size(); ++i) {
        std::cout << "mu=" << rc.levels[i].coulomb << " b=" << rc.levels[i].viscous
                  << " median_white_share " << med[i] << '\n';
      }
    } else if (*mb) {
      mc.domain = parse_domain(mb_domain);
      mc.kind = mixture::parse_kind(mb_kind);
      mc.seeds = seed_range(mb_seeds);
      const MbrlResult res = mbrl(mc, progress);
      auto out = open_out(mb_out);
      write_mbrl_csv(out, mc, res);
      std::cout << "threshold " << res.threshold << "\nmedian_episodes_to_threshold "
                << median_episodes_to_threshold(mc, res) << '\n';
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
