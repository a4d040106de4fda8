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
#include <fstream>
#include <istream>
#include <memory>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "nmoe/diffcore/tensor.hpp"
#include "nmoe/domain.hpp"
#include "nmoe/rbd/bundled.hpp"
#include "nmoe/rbd/dynamics.hpp"

namespace nmoe::envs {

using diff::Tensor;

struct Box {
  std::vector<double> lo, hi;
  std::size_t size() const { return lo.size(); }
};

// Ground-truth simulator configuration for one domain.
struct EnvSpec {
  Domain domain = Domain::kCart;
  double dt = kControlStep;
  Box state_box;
  Box action_box;

  CartPhysics cart;
  int substeps = 10;  // cart and legged chains

  // reacher joint friction: viscous b * qd and Coulomb mu * sign(qd)
  double viscous = 0.0;
  double coulomb = 0.0;

  // legged chains: penalty ground at z = 0
  double ground_stiffness = 1e4;
  double ground_damping = 100.0;
  double ground_friction = 200.0;  // tangential viscous coefficient
  double joint_damping = 0.1;      // on actuated joints

  std::shared_ptr<const rbd::ChainSpec> chain;
  std::shared_ptr<const rbd::Model<double>> model;
  std::vector<std::vector<int>> mode_contacts;  // contact indices per mode
  std::vector<int> contact_points;              // every candidate point

  int state_dim() const { return domain_info(domain).state_dim; }
  int action_dim() const { return domain_info(domain).action_dim; }

  void validate() const {
    auto check = [](const Box& b, std::size_t n, const char* what) {
      if (b.lo.size() != n || b.hi.size() != n) {
        throw InvalidArgument(std::string(what) + " bounds have wrong size");
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(b.lo[i]) || !std::isfinite(b.hi[i]) ||
            !(b.lo[i] < b.hi[i])) {
          throw InvalidArgument(std::string(what) + " bounds must be finite with lo < hi");
        }
      }
    };
    check(state_box, state_dim(), "state");
    check(action_box, action_dim(), "action");
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    if (substeps < 1) throw InvalidArgument("substeps must be >= 1");
  }
};

// Largest cart force; below m g sin(theta) so the cart cannot climb the rail
// by pushing alone.
inline double cart_force_limit(const CartPhysics& c) {
  return 0.8 * c.mass * c.gravity * std::sin(c.rail_angle);
}

inline EnvSpec make_env(Domain d, double viscous = 0.0, double coulomb = 0.0) {
  EnvSpec e;
  e.domain = d;
  const double pi = std::numbers::pi;
  switch (d) {
    case Domain::kCart: {
      const double x0 = e.cart.wall_position;
      const double u = cart_force_limit(e.cart);
      e.state_box = {{x0 - 0.5, -3.0}, {x0 + 2.0, 3.0}};
      e.action_box = {{-u}, {u}};
      return e;
    }
    case Domain::kReacher:
      e.state_box = {{-pi, -pi, -5.0, -5.0}, {pi, pi, 5.0, 5.0}};
      e.action_box = {{-1.0, -1.0}, {1.0, 1.0}};
      e.viscous = viscous;
      e.coulomb = coulomb;
      e.substeps = 1;
      break;
    case Domain::kHopper:
      // x, z, torso pitch, thigh, leg, foot
      e.state_box = {{-0.5, 0.8, -0.3, -0.5, -0.5, -0.5,
                      -2.0, -2.0, -2.0, -4.0, -4.0, -4.0},
                     {0.5, 1.1, 0.3, 0.5, 0.5, 0.5,
                      2.0, 2.0, 2.0, 4.0, 4.0, 4.0}};
      e.action_box = {{-50.0, -50.0, -50.0}, {50.0, 50.0, 50.0}};
      break;
    case Domain::kHalfCheetah: {
      std::vector<double> lo{-0.5, 0.6, -0.3}, hi{0.5, 0.95, 0.3};
      for (int i = 0; i < 6; ++i) {
        lo.push_back(-0.5);
        hi.push_back(0.5);
      }
      for (int i = 0; i < 3; ++i) {
        lo.push_back(-2.0);
        hi.push_back(2.0);
      }
      for (int i = 0; i < 6; ++i) {
        lo.push_back(-4.0);
        hi.push_back(4.0);
      }
      e.state_box = {lo, hi};
      e.action_box = {std::vector<double>(6, -60.0), std::vector<double>(6, 60.0)};
      break;
    }
  }
  const DomainInfo& info = domain_info(d);
  auto spec = std::make_shared<rbd::ChainSpec>(rbd::bundled_chain(info.chain));
  e.model = std::make_shared<rbd::Model<double>>(rbd::instantiate(*spec));
  for (const auto& names : info.mode_contacts) {
    std::vector<int> idx;
    for (const auto& n : names) idx.push_back(spec->contact_index(n));
    e.mode_contacts.push_back(idx);
  }
  for (std::size_t c = 0; c < spec->contacts.size(); ++c) {
    e.contact_points.push_back(static_cast<int>(c));
  }
  e.chain = std::move(spec);
  e.validate();
  return e;
}

// Ground-truth contact mode of a state (index into the domain's mode list).
inline int contact_mode(const EnvSpec& e, std::span<const double> s) {
  if (e.domain == Domain::kCart) return s[0] < e.cart.wall_position ? 0 : 1;
  if (e.domain == Domain::kReacher) return 0;
  const int n = e.model->dofs();
  const rbd::Vec<double> q(s.begin(), s.begin() + n);
  const auto k = rbd::kinematics(*e.model, q, rbd::Vec<double>(n, 0.0));
  std::vector<int> touching;
  for (int c : e.contact_points) {
    if (rbd::contact_position(*e.model, k, c)[1] <= 0.0) touching.push_back(c);
  }
  std::sort(touching.begin(), touching.end());
  for (std::size_t m = 0; m < e.mode_contacts.size(); ++m) {
    auto want = e.mode_contacts[m];
    std::sort(want.begin(), want.end());
    if (want == touching) return static_cast<int>(m);
  }
  throw Error("contact set matches no mode");
}

struct StepResult {
  std::vector<double> next;
  int mode;
};

namespace detail {

using rbd::operator+;
using rbd::operator-;

inline void cart_step(const EnvSpec& e, double u, double& x, double& v) {
  const CartPhysics& c = e.cart;
  const double h = e.dt / e.substeps;
  for (int i = 0; i < e.substeps; ++i) {
    double f = u - c.mass * c.gravity * std::sin(c.rail_angle);
    if (x < c.wall_position) {
      f += c.stiffness * (c.wall_position - x) - c.damping * v;
    }
    v += f / c.mass * h;
    x += v * h;
  }
}

inline void reacher_step(const EnvSpec& e, std::span<const double> a,
                         rbd::Vec<double>& q, rbd::Vec<double>& qd) {
  const auto& m = *e.model;
  rbd::Vec<double> friction(m.dofs(), 0.0);
  for (int i = 0; i < m.dofs(); ++i) {
    const double sgn = qd[i] > 0.0 ? 1.0 : (qd[i] < 0.0 ? -1.0 : 0.0);
    friction[i] = -e.viscous * qd[i] - e.coulomb * sgn;
  }
  const rbd::Vec<double> tau(a.begin(), a.end());
  const auto qdd = rbd::free_forward_dynamics(m, q, qd, tau, &friction);
  const rbd::ChainState<double> next =
      rbd::euler_step(rbd::ChainState<double>{q, qd}, qdd, e.dt);
  q = next.q;
  qd = next.qd;
}

inline void legged_step(const EnvSpec& e, std::span<const double> a,
                        rbd::Vec<double>& q, rbd::Vec<double>& qd) {
  const auto& m = *e.model;
  const int n = m.dofs();
  const rbd::Vec<double> tau(a.begin(), a.end());
  const double h = e.dt / e.substeps;
  rbd::ChainState<double> s{q, qd};
  for (int sub = 0; sub < e.substeps; ++sub) {
    const auto k = rbd::kinematics(m, s.q, s.qd);
    rbd::Vec<double> extra(n, 0.0);
    for (int j : m.actuated) extra[j] -= e.joint_damping * s.qd[j];
    for (int c : e.contact_points) {
      const auto p = rbd::contact_position(m, k, c);
      if (p[1] >= 0.0) continue;
      const rbd::Mat<double> J = rbd::contact_jacobian(m, k, c);
      double vx = 0.0, vz = 0.0;
      for (int j = 0; j < n; ++j) {
        vx += J(0, j) * s.qd[j];
        vz += J(1, j) * s.qd[j];
      }
      const double fn =
          std::max(0.0, -e.ground_stiffness * p[1] - e.ground_damping * vz);
      const double ft = -e.ground_friction * vx;
      for (int j = 0; j < n; ++j) extra[j] += J(0, j) * ft + J(1, j) * fn;
    }
    const rbd::Mat<double> A = rbd::mass_matrix(m, k);
    const auto bf = rbd::bias_forces(m, k);
    const rbd::Vec<double> rhs = rbd::actuation(m, tau) + extra - bf.coriolis - bf.gravity;
    const auto qdd = rbd::Lu<double>(A, "mass matrix").solve(rhs);
    s = rbd::semi_implicit_euler_step(s, qdd, h);
  }
  q = s.q;
  qd = s.qd;
}

}  // namespace detail

// One control step of the ground-truth plant. The action is clipped to the
// action box; the returned mode is the contact mode at the start of the step.
inline StepResult step(const EnvSpec& e, std::span<const double> state,
                       std::span<const double> action) {
  if (state.size() != static_cast<std::size_t>(e.state_dim()) ||
      action.size() != static_cast<std::size_t>(e.action_dim())) {
    throw ShapeError("step: state/action dimension mismatch for " +
                     domain_name(e.domain));
  }
  for (double v : state) {
    if (!std::isfinite(v)) throw NonFiniteError("step: non-finite state");
  }
  std::vector<double> a(action.begin(), action.end());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i])) throw NonFiniteError("step: non-finite action");
    a[i] = std::clamp(a[i], e.action_box.lo[i], e.action_box.hi[i]);
  }
  StepResult r;
  r.mode = contact_mode(e, state);
  if (e.domain == Domain::kCart) {
    double x = state[0], v = state[1];
    detail::cart_step(e, a[0], x, v);
    r.next = {x, v};
  } else {
    const std::size_t n = state.size() / 2;
    rbd::Vec<double> q(state.begin(), state.begin() + n);
    rbd::Vec<double> qd(state.begin() + n, state.end());
    if (e.domain == Domain::kReacher) {
      detail::reacher_step(e, a, q, qd);
    } else {
      detail::legged_step(e, a, q, qd);
    }
    r.next = q;
    r.next.insert(r.next.end(), qd.begin(), qd.end());
  }
  for (double v : r.next) {
    if (!std::isfinite(v)) throw NonFiniteError("step: simulation diverged");
  }
  return r;
}

// (state, action, next state) tuples with ground-truth mode labels, stored as
// row-aligned matrices.
struct Dataset {
  Tensor states, actions, next;
  std::vector<int> modes;
  std::uint64_t seed = 0;

  std::size_t size() const { return states.rows(); }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset d;
    d.seed = seed;
    d.states = Tensor(rows.size(), states.cols());
    d.actions = Tensor(rows.size(), actions.cols());
    d.next = Tensor(rows.size(), next.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy_n(states.row_span(rows[i]).begin(), states.cols(),
                  d.states.row_span(i).begin());
      std::copy_n(actions.row_span(rows[i]).begin(), actions.cols(),
                  d.actions.row_span(i).begin());
      std::copy_n(next.row_span(rows[i]).begin(), next.cols(),
                  d.next.row_span(i).begin());
      d.modes.push_back(modes[rows[i]]);
    }
    return d;
  }

  // Rows of `more` appended after this dataset's rows.
  void append(const Dataset& more) {
    if (more.size() == 0) return;
    if (size() == 0) {
      const std::uint64_t keep = seed;
      *this = more;
      seed = keep;
      return;
    }
    auto grow = [](Tensor& t, const Tensor& extra) {
      if (t.cols() != extra.cols()) throw ShapeError("dataset column mismatch");
      std::vector<double> data = t.vec();
      data.insert(data.end(), extra.vec().begin(), extra.vec().end());
      t = Tensor(t.rows() + extra.rows(), t.cols(), std::move(data));
    };
    grow(states, more.states);
    grow(actions, more.actions);
    grow(next, more.next);
    modes.insert(modes.end(), more.modes.begin(), more.modes.end());
  }
};

inline Dataset sample_uniform(const EnvSpec& e, std::size_t n,
                              std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("sample_uniform: n must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int ds = e.state_dim(), da = e.action_dim();
  Dataset d;
  d.seed = seed;
  d.states = Tensor(n, ds);
  d.actions = Tensor(n, da);
  d.next = Tensor(n, ds);
  d.modes.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (int i = 0; i < ds; ++i) {
      d.states(r, i) = e.state_box.lo[i] +
                       (e.state_box.hi[i] - e.state_box.lo[i]) * u01(rng);
    }
    for (int i = 0; i < da; ++i) {
      d.actions(r, i) = e.action_box.lo[i] +
                        (e.action_box.hi[i] - e.action_box.lo[i]) * u01(rng);
    }
    const StepResult s = step(e, d.states.row_span(r), d.actions.row_span(r));
    std::copy(s.next.begin(), s.next.end(), d.next.row_span(r).begin());
    d.modes[r] = s.mode;
  }
  return d;
}

struct Transition {
  std::vector<double> state, action, next;
  int mode;
};

inline std::vector<Transition> rollout(
    const EnvSpec& e, std::span<const double> initial,
    const std::vector<std::vector<double>>& actions) {
  std::vector<Transition> out;
  std::vector<double> s(initial.begin(), initial.end());
  for (const auto& a : actions) {
    StepResult r = step(e, s, a);
    out.push_back({s, a, r.next, r.mode});
    s = std::move(r.next);
  }
  return out;
}

inline Dataset to_dataset(const std::vector<Transition>& ts, int ds, int da) {
  Dataset d;
  d.states = Tensor(ts.size(), ds);
  d.actions = Tensor(ts.size(), da);
  d.next = Tensor(ts.size(), ds);
  for (std::size_t r = 0; r < ts.size(); ++r) {
    std::copy(ts[r].state.begin(), ts[r].state.end(), d.states.row_span(r).begin());
    std::copy(ts[r].action.begin(), ts[r].action.end(), d.actions.row_span(r).begin());
    std::copy(ts[r].next.begin(), ts[r].next.end(), d.next.row_span(r).begin());
    d.modes.push_back(ts[r].mode);
  }
  return d;
}

// ---- CSV: s0.., a0.., sp0.., mode

inline void write_dataset_csv(std::ostream& out, const Dataset& d) {
  const std::size_t ds = d.states.cols(), da = d.actions.cols();
  for (std::size_t i = 0; i < ds; ++i) out << 's' << i << ',';
  for (std::size_t i = 0; i < da; ++i) out << 'a' << i << ',';
  for (std::size_t i = 0; i < ds; ++i) out << "sp" << i << ',';
  out << "mode\n";
  out.precision(17);
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (double v : d.states.row_span(r)) out << v << ',';
    for (double v : d.actions.row_span(r)) out << v << ',';
    for (double v : d.next.row_span(r)) out << v << ',';
    out << d.modes[r] << '\n';
  }
}

inline Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("dataset CSV is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::size_t ds = 0, da = 0, dsp = 0;
  for (const auto& h : header) {
    if (h.rfind("sp", 0) == 0) ++dsp;
    else if (h.rfind("s", 0) == 0) ++ds;
    else if (h.rfind("a", 0) == 0) ++da;
    else if (h != "mode") throw ParseError("unexpected dataset column " + h);
  }
  if (ds == 0 || da == 0 || ds != dsp || header.back() != "mode" ||
      header.size() != 2 * ds + da + 1) {
    throw ParseError("dataset header must be s0.., a0.., sp0.., mode");
  }
  std::vector<double> s, a, sp;
  std::vector<int> modes;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("dataset row " + std::to_string(row) +
                         ": bad number '" + cell + "'");
      }
    }
    if (vals.size() != header.size()) {
      throw ParseError("dataset row " + std::to_string(row) + " has " +
                       std::to_string(vals.size()) + " fields, expected " +
                       std::to_string(header.size()));
    }
    s.insert(s.end(), vals.begin(), vals.begin() + ds);
    a.insert(a.end(), vals.begin() + ds, vals.begin() + ds + da);
    sp.insert(sp.end(), vals.begin() + ds + da, vals.begin() + 2 * ds + da);
    modes.push_back(static_cast<int>(vals.back()));
  }
  Dataset d;
  d.states = Tensor(row, ds, std::move(s));
  d.actions = Tensor(row, da, std::move(a));
  d.next = Tensor(row, ds, std::move(sp));
  d.modes = std::move(modes);
  return d;
}

inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_dataset_csv(out, d);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  return read_dataset_csv(in);
}

}  // namespace nmoe::envs
