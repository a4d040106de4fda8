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

// Acceptance runner. Each check prints one PASS/FAIL line with the measured
// quantities; `acceptance NAME...` runs a subset, no arguments runs all.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nmoe/envs/envs.hpp"
#include "nmoe/experts/experts.hpp"
#include "nmoe/harness/experiments.hpp"
#include "nmoe/mppi/mppi.hpp"
#include "nmoe/nmoe/mixture.hpp"
#include "nmoe/rbd/bundled.hpp"
#include "nmoe/rbd/dynamics.hpp"
#include "support/gradcheck.hpp"

namespace {

using namespace nmoe;
using diff::Tensor;
using harness::median;
using mixture::ModelKind;
using mixture::NmoeModel;

// Collects failed expectations; the notes end up on the result line.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool passed() const { return failures_.empty(); }
  std::string summary() const {
    std::string out;
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) out += (out.empty() ? "" : "; ") + ("FAILED " + f);
    return out;
  }

 private:
  std::vector<std::string> notes_, failures_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void progress(const std::string& msg) { std::cerr << "  .. " << msg << '\n'; }

// ---- autodiff

Checks autodiff_soundness() {
  Checks c;
  int checked = 0;
  double worst = 0.0;
  for (auto p : testing::all_primitives()) {
    std::mt19937_64 rng(500 + static_cast<int>(p));
    for (int trial = 0; trial < 20; ++trial) {
      const auto rc = testing::make_random_composite(p, rng);
      const auto res = testing::check_gradients(rc.fn, rc.params, 1e-6, 1e-5);
      worst = std::max(worst, res.max_rel_error);
      ++checked;
      c.expect(res.passed, std::string(testing::primitive_name(p)) + " trial " +
                               std::to_string(trial) + ": " + res.worst);
    }
  }
  c.note(std::to_string(checked) + " composites over " +
         std::to_string(testing::all_primitives().size()) + " primitives");
  return c;
}

// ---- constrained dynamics against a dense KKT solve

Eigen::MatrixXd dense(const rbd::Mat<double>& a) {
  Eigen::MatrixXd out(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r) {
    for (int k = 0; k < a.cols(); ++k) out(r, k) = a(r, k);
  }
  return out;
}
Eigen::VectorXd dense(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd kkt_acceleration(const rbd::Model<double>& m, const std::vector<double>& q,
                                 const std::vector<double>& qd,
                                 const std::vector<double>& tau,
                                 const std::vector<int>& contacts) {
  const int n = m.dofs();
  const auto k = rbd::kinematics(m, q, qd);
  const Eigen::MatrixXd A = dense(rbd::mass_matrix(m, k));
  const auto bf = rbd::bias_forces(m, k);
  const Eigen::VectorXd rhs_q = dense(rbd::actuation(m, tau)) - dense(bf.coriolis) -
                                dense(bf.gravity);
  if (contacts.empty()) return A.fullPivLu().solve(rhs_q);
  const auto [J, jdqd] = rbd::stacked_contacts(m, k, std::span<const int>(contacts));
  const int c = J.rows();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + c, n + c);
  K.topLeftCorner(n, n) = A;
  K.topRightCorner(n, c) = -dense(J).transpose();
  K.bottomLeftCorner(c, n) = dense(J);
  Eigen::VectorXd rhs(n + c);
  rhs.head(n) = rhs_q;
  rhs.tail(c) = -dense(jdqd);
  return K.fullPivLu().solve(rhs).head(n);
}

Checks dynamics_oracle() {
  Checks c;
  double worst_gap = 0.0, worst_residual = 0.0;
  int instances = 0;
  for (Domain d : {Domain::kHopper, Domain::kHalfCheetah}) {
    const DomainInfo& info = domain_info(d);
    const auto spec = rbd::bundled_chain(info.chain);
    const auto m = rbd::instantiate(spec);
    std::mt19937_64 rng(11 + static_cast<int>(d));
    std::uniform_real_distribution<double> uq(-0.8, 0.8), uv(-1.5, 1.5), ut(-10, 10);
    for (int mode = 0; mode < info.modes(); ++mode) {
      std::vector<int> idx;
      for (const auto& name : info.mode_contacts[mode]) {
        idx.push_back(spec.contact_index(name));
      }
      for (int t = 0; t < 50; ++t, ++instances) {
        std::vector<double> q(m.dofs()), qd(m.dofs()), tau(m.actuators());
        for (auto& v : q) v = uq(rng);
        for (auto& v : qd) v = uv(rng);
        for (auto& v : tau) v = ut(rng);
        const auto qdd =
            rbd::constrained_forward_dynamics(m, q, qd, tau, std::span<const int>(idx));
        const Eigen::VectorXd want = kkt_acceleration(m, q, qd, tau, idx);
        const double gap = (dense(qdd) - want).cwiseAbs().maxCoeff() / (1 + want.norm());
        worst_gap = std::max(worst_gap, gap);
        if (!idx.empty()) {
          const auto k = rbd::kinematics(m, q, qd);
          const auto [J, jdqd] = rbd::stacked_contacts(m, k, std::span<const int>(idx));
          const double res =
              (dense(J) * dense(qdd) + dense(jdqd)).cwiseAbs().maxCoeff();
          worst_residual = std::max(worst_residual, res);
        }
      }
    }
  }
  c.note(std::to_string(instances) + " instances, max gap " + fmt("%.2e", worst_gap) +
         ", max contact acceleration " + fmt("%.2e", worst_residual));
  c.expect(worst_gap < 1e-8, "projected solve vs KKT");
  c.expect(worst_residual < 1e-8, "contact acceleration residual");
  return c;
}

// ---- energy drift

Checks energy_sanity() {
  Checks c;
  const auto m = rbd::instantiate(rbd::bundled_chain("double_pendulum"));
  rbd::ChainState<double> s{{0.6, -0.4}, {0.0, 0.0}};
  const std::vector<double> tau(m.actuators(), 0.0);
  const double e0 = rbd::total_energy(m, s.q, s.qd);
  const double dt = 1e-4;
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    s = rbd::semi_implicit_euler_step(s, rbd::free_forward_dynamics(m, s.q, s.qd, tau), dt);
    worst = std::max(worst, std::abs(rbd::total_energy(m, s.q, s.qd) - e0));
  }
  const double rel = worst / std::abs(e0);
  c.note("max |dE|/E0 over 1 s " + fmt("%.2e", rel));
  c.expect(rel < 0.02, "energy drift");
  return c;
}

// ---- structural invariants of the mixture

envs::Dataset batch(Domain d, std::size_t n, std::uint64_t seed) {
  return envs::sample_uniform(envs::make_env(d), n, seed);
}

NmoeModel model_for(Domain d, ModelKind kind, std::uint64_t seed) {
  const envs::Dataset data = batch(d, 256, 100);
  NmoeModel m = mixture::make_model(
      d, kind, seed, mixture::Normalizer::fit(data.states, data.actions, data.next));
  std::mt19937_64 rng(seed + 7);
  std::normal_distribution<double> n(0.0, 0.7);
  for (double& v : m.wh.data()) v = n(rng);
  for (auto& w : m.wg) {
    for (double& v : w.data()) v = n(rng);
  }
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, std::abs(a[i] - b[i]));
  return out;
}

Checks structural_invariants() {
  Checks c;
  const Domain all[] = {Domain::kReacher, Domain::kCart, Domain::kHopper,
                        Domain::kHalfCheetah};
  // gates on the simplex
  for (Domain d : all) {
    const NmoeModel m = model_for(d, ModelKind::kNmoe, 1);
    const envs::Dataset data = batch(d, 32, 2);
    const auto p = m.predict(data.states, data.actions);
    double worst = 0.0;
    for (std::size_t r = 0; r < data.size(); ++r) {
      double h = 0.0;
      for (int i = 0; i < m.modes(); ++i) {
        c.expect(p.h(r, i) >= 0.0 && p.g[i](r, 0) >= 0.0 && p.g[i](r, 1) >= 0.0,
                 "negative gate");
        h += p.h(r, i);
        worst = std::max(worst, std::abs(p.g[i](r, 0) + p.g[i](r, 1) - 1.0));
      }
      worst = std::max(worst, std::abs(h - 1.0));
    }
    c.expect(worst < 1e-12, "simplex on " + domain_name(d));
  }
  // single mode: the loss is the mean squared error
  {
    const NmoeModel m = model_for(Domain::kReacher, ModelKind::kBb, 2);
    const envs::Dataset d = batch(Domain::kReacher, 32, 3);
    const Tensor target = m.norm.outputs(d.next);
    const Tensor pred = m.norm.outputs(m.predict_next(d.states, d.actions));
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sq += std::pow(pred[i] - target[i], 2);
    diff::EagerEval ev;
    const double loss = m.loss(ev, d.states, d.actions, d.next).item();
    c.expect(m.modes() == 1 && std::abs(loss - sq / d.size()) < 1e-10, "M=1 loss vs MSE");
  }
  // masks: MBB ignores the physical parameters, MWB the networks
  {
    NmoeModel m = model_for(Domain::kCart, ModelKind::kMbb, 3);
    const envs::Dataset d = batch(Domain::kCart, 16, 4);
    const Tensor before = m.predict_next(d.states, d.actions);
    for (double& v : m.log_params.data()) v += 0.3;
    c.expect(m.predict_next(d.states, d.actions).vec() == before.vec(), "MBB mask");
  }
  {
    NmoeModel m = model_for(Domain::kHopper, ModelKind::kMwb, 4);
    const envs::Dataset d = batch(Domain::kHopper, 16, 4);
    const Tensor before = m.predict_next(d.states, d.actions);
    for (auto& p : m.pairs) {
      for (auto& w : p.black.weights) {
        for (double& v : w.data()) v += 0.5;
      }
    }
    c.expect(m.predict_next(d.states, d.actions).vec() == before.vec(), "MWB mask");
  }
  // relabelling the modes changes nothing
  {
    const NmoeModel m = model_for(Domain::kHopper, ModelKind::kNmoe, 5);
    NmoeModel swapped = m;
    const std::vector<int> perm{2, 0, 3, 1};
    for (int i = 0; i < 4; ++i) {
      swapped.pairs[i] = m.pairs[perm[i]];
      swapped.masks[i] = m.masks[perm[i]];
      swapped.wg[i] = m.wg[perm[i]];
      for (std::size_t k = 0; k < m.wh.cols(); ++k) swapped.wh(i, k) = m.wh(perm[i], k);
    }
    const envs::Dataset d = batch(Domain::kHopper, 16, 5);
    c.expect(max_abs_diff(m.predict_next(d.states, d.actions),
                          swapped.predict_next(d.states, d.actions)) < 1e-12,
             "mode permutation");
  }
  // checkpoints reload bitwise
  const auto path =
      (std::filesystem::temp_directory_path() / "nmoe_acceptance_ckpt.json").string();
  for (Domain d : all) {
    for (ModelKind k : {ModelKind::kNmoe, ModelKind::kBb, ModelKind::kMbb, ModelKind::kMwb}) {
      const NmoeModel m = model_for(d, k, 6);
      mixture::save_checkpoint(m, path);
      const NmoeModel back = mixture::load_checkpoint(path);
      const envs::Dataset data = batch(d, 16, 6);
      c.expect(back.predict_next(data.states, data.actions).vec() ==
                   m.predict_next(data.states, data.actions).vec(),
               "checkpoint " + domain_name(d) + " " + mixture::kind_name(k));
    }
  }
  std::filesystem::remove(path);
  c.note("simplex, M=1 loss, masks, permutation, 16 checkpoint round trips");
  return c;
}

// ---- supervised learning experiments

Checks cart_rmse_ordering() {
  Checks c;
  harness::SweepConfig sc;
  sc.kinds = {ModelKind::kNmoe, ModelKind::kBb, ModelKind::kMbb, ModelKind::kMwb};
  sc.sizes = {256, 4096};
  sc.base.domain = Domain::kCart;
  const auto rows = harness::rmse_sweep(sc, progress);
  auto med = [&](ModelKind k, std::size_t n) { return harness::find_row(rows, k, n).median; };
  const double n8 = med(ModelKind::kNmoe, 256), b8 = med(ModelKind::kBb, 256),
               m8 = med(ModelKind::kMbb, 256);
  const double n12 = med(ModelKind::kNmoe, 4096);
  const double best12 = std::min({med(ModelKind::kBb, 4096), med(ModelKind::kMbb, 4096),
                                  med(ModelKind::kMwb, 4096)});
  c.note("n=256: nmoe " + fmt("%.4g", n8) + " bb " + fmt("%.4g", b8) + " mbb " +
         fmt("%.4g", m8));
  c.note("n=4096: nmoe " + fmt("%.4g", n12) + " best baseline " + fmt("%.4g", best12));
  c.expect(n8 < b8, "NMOE < BB at 256");
  c.expect(n8 < m8, "NMOE < MBB at 256");
  c.expect(n12 <= 1.1 * best12, "NMOE <= 1.1 x best baseline at 4096");
  return c;
}

Checks hopper_model_bias() {
  Checks c;
  harness::SweepConfig sc;
  sc.kinds = {ModelKind::kNmoe, ModelKind::kMwb};
  sc.sizes = {4096};
  sc.base.domain = Domain::kHopper;
  sc.base.fit.max_steps = 5000;  // reduced; hopper experts cost ~8 ms a step
  const auto rows = harness::rmse_sweep(sc, progress);
  const double nmoe = harness::find_row(rows, ModelKind::kNmoe, 4096).median;
  const double mwb = harness::find_row(rows, ModelKind::kMwb, 4096).median;
  c.note("n=4096, 5000 steps: mwb " + fmt("%.4g", mwb) + " nmoe " + fmt("%.4g", nmoe));
  c.expect(mwb > nmoe, "MWB above NMOE");
  return c;
}

Checks cart_gating_agreement() {
  Checks c;
  harness::TrainConfig tc;
  tc.domain = Domain::kCart;
  const harness::RunRecord r = harness::train(tc);
  const envs::Dataset test = harness::test_set(tc);
  const auto a = harness::mode_agreement(r.model, test);
  const double routed = harness::contact_quadrant_routing(r.model, test, a);
  c.note("agreement " + fmt("%.4f", a.fraction) + " on " + std::to_string(test.size()) +
         " states; contact quadrant routed to contact mode " + fmt("%.4f", routed));
  c.expect(r.status == "ok", "training status " + r.status);
  c.expect(a.fraction >= 0.9, "agreement >= 0.9");
  // states right at the wall with near-zero velocity may sit on the boundary
  c.expect(routed >= 0.99, "contact quadrant routing >= 0.99");
  return c;
}

Checks reacher_responsibility() {
  Checks c;
  harness::RespConfig rc;
  rc.base.domain = Domain::kReacher;
  const auto rows = harness::gating_responsibility(rc, progress);
  const auto med = harness::median_white_share(rc, rows);
  std::string s = "median white share";
  for (double v : med) s += " " + fmt("%.4f", v);
  c.note(s);
  for (std::size_t i = 1; i < med.size(); ++i) {
    c.expect(med[i] <= med[i - 1], "non-increasing at level " + std::to_string(i));
  }
  c.expect(med[0] > 0.5, "frictionless share > 0.5");
  return c;
}

// ---- online model-based control

Checks cart_mbrl() {
  Checks c;
  harness::MbrlConfig nmoe_cfg;
  nmoe_cfg.kind = ModelKind::kNmoe;
  harness::MbrlConfig bb_cfg = nmoe_cfg;
  bb_cfg.kind = ModelKind::kBb;
  bb_cfg.stop_at_threshold = true;  // only its episode count is compared
  const auto nmoe = harness::mbrl(nmoe_cfg, progress);
  const auto bb = harness::mbrl(bb_cfg, progress);
  double final_sum = 0.0;
  for (const auto& r : nmoe.runs) {
    c.expect(r.status == "ok", "nmoe seed " + std::to_string(r.seed) + " " + r.status);
    final_sum += r.returns.empty() ? 0.0 : r.returns.back();
  }
  const double n_eps = harness::median_episodes_to_threshold(nmoe_cfg, nmoe);
  const double b_eps = harness::median_episodes_to_threshold(bb_cfg, bb);
  c.note("threshold " + fmt("%.1f", nmoe.threshold) + "; nmoe mean final return " +
         fmt("%.1f", final_sum / nmoe.runs.size()) + "; median episodes nmoe " +
         fmt("%.1f", n_eps) + " bb " + fmt("%.1f", b_eps));
  c.expect(n_eps <= nmoe_cfg.episodes, "NMOE reaches the threshold within 20 episodes");
  c.expect(n_eps <= b_eps, "NMOE needs no more episodes than BB");
  return c;
}

// ---- controller units

Checks mppi_units() {
  Checks c;
  std::mt19937_64 rng(0);
  std::normal_distribution<double> n(0.0, 3.0);
  std::vector<double> returns(100);
  for (double& v : returns) v = n(rng);
  const auto w = mppi::path_weights(returns, 0.7);
  double total = 0.0;
  for (double v : w) {
    c.expect(v >= 0.0, "negative weight");
    total += v;
  }
  c.expect(std::abs(total - 1.0) < 1e-12, "weights sum to one");

  std::vector<double> shifted = returns;
  for (double& v : shifted) v += 1234.5;
  c.expect(max_abs_diff(Tensor::row(mppi::path_weights(shifted, 0.7)), Tensor::row(w)) <
               1e-12,
           "shift invariance");

  const auto cold = mppi::path_weights(std::vector<double>{1.0, 2.0, 1.999, -5.0}, 1e-6);
  c.expect(std::abs(cold[1] - 1.0) < 1e-12, "low temperature concentration");

  // s' = s + a, reward -(s' - 0.3)^2, from s = -0.2
  const mppi::BatchModel model = [](const Tensor& s, const Tensor& a) {
    Tensor out(s.rows(), 1);
    for (std::size_t r = 0; r < s.rows(); ++r) out[r] = s[r] + a[r];
    return out;
  };
  const mppi::Reward reward = [](std::span<const double> s) {
    return -(s[0] - 0.3) * (s[0] - 0.3);
  };
  mppi::MppiConfig cfg;
  cfg.horizon = 1;
  cfg.samples = 256;
  cfg.lambda = 0.01;
  cfg.sigma = {0.3};
  cfg.action_lo = {-1.0};
  cfg.action_hi = {1.0};
  std::mt19937_64 prng(1);
  const std::vector<double> s{-0.2};
  std::vector<std::vector<double>> nominal(1, {0.0});
  for (int it = 0; it < 30; ++it) nominal = mppi::plan(model, cfg, reward, s, nominal, prng).actions;
  double best_a = 0.0, best_r = -mppi::kInf;
  for (int i = 0; i <= 2000; ++i) {
    const double a = -1.0 + i * 0.001;
    const double r = reward(std::vector<double>{s[0] + a});
    if (r > best_r) {
      best_r = r;
      best_a = a;
    }
  }
  c.note("plan " + fmt("%.4f", nominal[0][0]) + " vs grid " + fmt("%.4f", best_a));
  c.expect(std::abs(nominal[0][0] - best_a) < 0.05, "1-D convergence to the grid optimum");
  return c;
}

Checks reward_fixtures() {
  Checks c;
  using mppi::kInf;
  using mppi::tolerance;
  c.expect(tolerance(0.5, 0.0, 1.0, 2.0) == 1.0, "tolerance inside");
  c.expect(tolerance(-1.0, 0.0, 1.0, 2.0) == 0.5, "tolerance ramp below");
  c.expect(tolerance(2.0, 0.0, 1.0, 2.0) == 0.5, "tolerance ramp above");
  c.expect(tolerance(-1.5, 0.0, 1.0, 2.0) == 0.25, "tolerance quarter");
  c.expect(tolerance(3.0, 0.0, 1.0, 2.0) == 0.0, "tolerance outside");
  c.expect(tolerance(0.99, 1.0, kInf, 0.0) == 0.0 && tolerance(1.0, 1.0, kInf, 0.0) == 1.0,
           "zero margin indicator");

  const mppi::RewardSpec cart{Domain::kCart};
  c.expect(cart(std::vector<double>{0.7, 0.0}) == 1.0, "cart above target");
  c.expect(cart(std::vector<double>{0.59, 2.0}) == 0.0, "cart below target");

  const mppi::RewardSpec reacher{Domain::kReacher};
  const double q2 = std::numbers::pi / 2;
  const double q1 = std::atan2(0.5, 0.4) - std::atan2(0.4, 0.5);
  c.expect(reacher(std::vector<double>{q1, q2, 0.0, 0.0}) == 1.0, "reacher on target");
  c.expect(reacher(std::vector<double>{0.0, 0.0, 0.0, 0.0}) == 0.0, "reacher straight arm");

  const mppi::RewardSpec hopper{Domain::kHopper};
  std::vector<double> h(12, 0.0);
  h[1] = 0.8;
  h[6] = 2.5;
  c.expect(hopper(h) == 1.0, "hopper fast and upright");
  h[6] = 1.0;
  c.expect(std::abs(hopper(h) - 0.5) < 1e-15, "hopper half speed");
  h[6] = 2.5;
  h[1] = 0.6;
  c.expect(hopper(h) == 0.0, "hopper fallen");

  const mppi::RewardSpec cheetah{Domain::kHalfCheetah};
  std::vector<double> hc(18, 0.0);
  hc[2] = 0.1;
  hc[9] = 12.0;
  c.expect(cheetah(hc) == 1.0, "halfcheetah fast");
  hc[9] = 5.0;
  c.expect(std::abs(cheetah(hc) - 0.5) < 1e-15, "halfcheetah half speed");
  hc[2] = -0.5;
  c.expect(cheetah(hc) == 0.0, "halfcheetah flipped");
  c.note("tolerance and four domain rewards");
  return c;
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<Checks()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"autodiff_soundness", 60, autodiff_soundness},
      {"dynamics_oracle", 60, dynamics_oracle},
      {"energy_sanity", 60, energy_sanity},
      {"structural_invariants", 60, structural_invariants},
      {"cart_rmse_ordering", 1200, cart_rmse_ordering},
      {"hopper_model_bias", 2400, hopper_model_bias},
      {"cart_gating_agreement", 600, cart_gating_agreement},
      {"reacher_responsibility", 1200, reacher_responsibility},
      {"cart_mbrl", 1800, cart_mbrl},
      {"mppi_units", 60, mppi_units},
      {"reward_fixtures", 1, reward_fixtures},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  for (const auto& w : wanted) {
    const bool known = std::any_of(criteria().begin(), criteria().end(),
                                   [&](const Criterion& c) { return w == c.name; });
    if (!known) {
      std::cerr << "unknown check " << w << "; known:";
      for (const auto& c : criteria()) std::cerr << ' ' << c.name;
      std::cerr << '\n';
      return 2;
    }
  }
  int failed = 0;
  for (const auto& crit : criteria()) {
    if (!wanted.empty() &&
        std::find(wanted.begin(), wanted.end(), crit.name) == wanted.end()) {
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Checks c;
    try {
      c = crit.run();
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(secs < crit.budget_seconds,
             "runtime over the " + fmt("%.0f", crit.budget_seconds) + " s budget");
    const bool ok = c.passed();
    if (!ok) ++failed;
    std::cout << (ok ? "PASS " : "FAIL ") << crit.name << " (" << fmt("%.1f", secs)
              << " s): " << c.summary() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
