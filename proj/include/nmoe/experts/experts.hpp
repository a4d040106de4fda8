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

#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nmoe/diffcore/eval.hpp"
#include "nmoe/diffcore/graph.hpp"
#include "nmoe/diffcore/jet.hpp"
#include "nmoe/domain.hpp"
#include "nmoe/rbd/bundled.hpp"
#include "nmoe/rbd/dynamics.hpp"

namespace nmoe::experts {

using diff::Tensor;

// A trainable physical constant. Experts see it through its logarithm so
// gradient steps keep it positive.
struct PhysicalParameter {
  std::string name;
  double true_value;
};

inline std::vector<PhysicalParameter> physical_parameters(Domain d) {
  const DomainInfo& info = domain_info(d);
  if (d == Domain::kCart) {
    const CartPhysics c;
    return {{"mass", c.mass},
            {"stiffness", c.stiffness},
            {"damping", c.damping},
            {"rail_angle", c.rail_angle}};
  }
  const rbd::ChainSpec spec = rbd::bundled_chain(info.chain);
  std::vector<PhysicalParameter> out;
  for (const auto& l : spec.links) out.push_back({l.name + ".mass", l.mass});
  if (d == Domain::kReacher) {
    for (const auto& l : spec.links) out.push_back({l.name + ".length", l.length});
  }
  return out;
}

// Log-parameters with every true value scaled by an independent factor
// drawn from U[0.5, 1.5].
inline Tensor perturbed_log_parameters(Domain d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> factor(0.5, 1.5);
  const auto params = physical_parameters(d);
  Tensor raw(1, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    raw[i] = std::log(params[i].true_value * factor(rng));
  }
  return raw;
}

inline Tensor true_log_parameters(Domain d) {
  const auto params = physical_parameters(d);
  Tensor raw(1, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    raw[i] = std::log(params[i].true_value);
  }
  return raw;
}

// One explicit Euler step of a mode's analytic dynamics.
class WhiteBoxExpert {
 public:
  virtual ~WhiteBoxExpert() = default;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int param_count() const = 0;
  virtual void predict(std::span<const double> log_params,
                       std::span<const double> state,
                       std::span<const double> action,
                       std::span<double> next) const = 0;
  // jacobian: state_dim x param_count, row-major, w.r.t. the log-parameters
  virtual void predict_with_jacobian(std::span<const double> log_params,
                                     std::span<const double> state,
                                     std::span<const double> action,
                                     std::span<double> next,
                                     std::span<double> jacobian) const = 0;

  Tensor predict_batch(const Tensor& log_params, const Tensor& states,
                       const Tensor& actions) const {
    check_batch(log_params, states, actions);
    Tensor out(states.rows(), state_dim());
    for (std::size_t r = 0; r < states.rows(); ++r) {
      predict(log_params.data(), states.row_span(r), actions.row_span(r),
              out.row_span(r));
    }
    return out;
  }

 protected:
  void check_batch(const Tensor& log_params, const Tensor& states,
                   const Tensor& actions) const {
    if (log_params.size() != static_cast<std::size_t>(param_count()) ||
        states.cols() != static_cast<std::size_t>(state_dim()) ||
        actions.cols() != static_cast<std::size_t>(action_dim()) ||
        states.rows() != actions.rows()) {
      throw ShapeError("white-box batch shapes " + log_params.shape_string() +
                       ", " + states.shape_string() + ", " +
                       actions.shape_string() + " do not match the expert");
    }
  }
};

// Implements both entry points from a single templated step().
template <class Derived, int P>
class WhiteBoxBase : public WhiteBoxExpert {
 public:
  int param_count() const override { return P; }

  void predict(std::span<const double> log_params,
               std::span<const double> state, std::span<const double> action,
               std::span<double> next) const override {
    check(log_params, state, action, next);
    self().template step<double>(log_params.data(), state.data(),
                                 action.data(), next.data());
  }

  void predict_with_jacobian(std::span<const double> log_params,
                             std::span<const double> state,
                             std::span<const double> action,
                             std::span<double> next,
                             std::span<double> jacobian) const override {
    check(log_params, state, action, next);
    using J = diff::Jet<P>;
    std::array<J, P> p;
    for (int k = 0; k < P; ++k) p[k] = J::variable(log_params[k], k);
    std::vector<J> out(next.size());
    self().template step<J>(p.data(), state.data(), action.data(), out.data());
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = out[i].v;
      for (int k = 0; k < P; ++k) jacobian[i * P + k] = out[i].d[k];
    }
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
  void check(std::span<const double> log_params, std::span<const double> state,
             std::span<const double> action, std::span<double> next) const {
    if (log_params.size() != static_cast<std::size_t>(P) ||
        state.size() != static_cast<std::size_t>(state_dim()) ||
        action.size() != static_cast<std::size_t>(action_dim()) ||
        next.size() != static_cast<std::size_t>(state_dim())) {
      throw ShapeError("white-box input dimensions do not match the expert");
    }
  }
};

// Cart on an inclined rail; contact mode adds the wall spring and damper.
class CartWhiteBox : public WhiteBoxBase<CartWhiteBox, 4> {
 public:
  explicit CartWhiteBox(bool contact, CartPhysics known = {})
      : contact_(contact), known_(known) {}

  int state_dim() const override { return 2; }
  int action_dim() const override { return 1; }
  bool contact() const { return contact_; }

  template <class T>
  void step(const T* log_params, const double* s, const double* a,
            T* out) const {
    using std::exp;
    using std::sin;
    const T m = exp(log_params[0]);
    const T theta = exp(log_params[3]);
    T force = a[0] - m * known_.gravity * sin(theta);
    if (contact_) {
      const T k = exp(log_params[1]);
      const T b = exp(log_params[2]);
      force = force + k * (known_.wall_position - s[0]) - b * s[1];
    }
    const double dt = kControlStep;
    out[0] = T(s[0] + s[1] * dt);
    out[1] = s[1] + force / m * dt;
  }

 private:
  bool contact_;
  CartPhysics known_;
};

// Planar chain under a fixed contact set: constrained (or free) dynamics
// followed by an explicit Euler step.
template <int P>
class ChainWhiteBox : public WhiteBoxBase<ChainWhiteBox<P>, P> {
 public:
  // mass_links / length_links: link index driven by each log-parameter, in
  // order (masses first, then lengths).
  ChainWhiteBox(rbd::ChainSpec spec, std::vector<int> contacts,
                std::vector<int> mass_links, std::vector<int> length_links)
      : spec_(std::move(spec)),
        contacts_(std::move(contacts)),
        mass_links_(std::move(mass_links)),
        length_links_(std::move(length_links)) {
    if (static_cast<int>(mass_links_.size() + length_links_.size()) != P) {
      throw InvalidArgument("chain white box parameter count mismatch");
    }
    n_ = spec_.dof_count();
  }

  int state_dim() const override { return 2 * n_; }
  int action_dim() const override { return spec_.actuator_count(); }
  const std::vector<int>& contacts() const { return contacts_; }

  template <class T>
  void step(const T* log_params, const double* s, const double* a,
            T* out) const {
    using std::exp;
    std::vector<T> masses, lengths;
    for (const auto& l : spec_.links) {
      masses.push_back(T(l.mass));
      lengths.push_back(T(l.length));
    }
    int k = 0;
    for (int li : mass_links_) masses[li] = exp(log_params[k++]);
    for (int li : length_links_) lengths[li] = exp(log_params[k++]);
    const rbd::Model<T> model = rbd::instantiate<T>(spec_, masses, lengths);
    rbd::Vec<T> q(s, s + n_), qd(s + n_, s + 2 * n_);
    rbd::Vec<T> tau(a, a + spec_.actuator_count());
    const rbd::Vec<T> qdd = rbd::constrained_forward_dynamics(
        model, q, qd, tau, std::span<const int>(contacts_));
    const double dt = kControlStep;
    for (int i = 0; i < n_; ++i) {
      out[i] = q[i] + qd[i] * dt;
      out[n_ + i] = qd[i] + qdd[i] * dt;
    }
  }

 private:
  rbd::ChainSpec spec_;
  std::vector<int> contacts_;
  std::vector<int> mass_links_;
  std::vector<int> length_links_;
  int n_ = 0;
};

// The white-box expert of one contact mode of a domain.
inline std::shared_ptr<const WhiteBoxExpert> make_white_box(Domain d,
                                                            int mode) {
  const DomainInfo& info = domain_info(d);
  if (mode < 0 || mode >= info.modes()) {
    throw InvalidArgument("mode " + std::to_string(mode) + " out of range for " +
                          info.name);
  }
  if (d == Domain::kCart) return std::make_shared<CartWhiteBox>(mode == 0);
  rbd::ChainSpec spec = rbd::bundled_chain(info.chain);
  std::vector<int> contacts;
  for (const auto& name : info.mode_contacts[mode]) {
    contacts.push_back(spec.contact_index(name));
  }
  std::vector<int> links(spec.links.size());
  for (std::size_t i = 0; i < links.size(); ++i) links[i] = static_cast<int>(i);
  switch (d) {
    case Domain::kReacher:
      return std::make_shared<ChainWhiteBox<4>>(spec, contacts, links, links);
    case Domain::kHopper:
      return std::make_shared<ChainWhiteBox<4>>(spec, contacts, links,
                                                std::vector<int>{});
    case Domain::kHalfCheetah:
      return std::make_shared<ChainWhiteBox<7>>(spec, contacts, links,
                                                std::vector<int>{});
    case Domain::kCart:
      break;
  }
  throw InvalidArgument("no white box for " + info.name);
}

// Graph node for a white-box expert over a batch: inputs are the log-parameters
// (1 x P, differentiable), states and actions (treated as data).
class WhiteBoxOp : public diff::CustomOp {
 public:
  explicit WhiteBoxOp(std::shared_ptr<const WhiteBoxExpert> expert)
      : expert_(std::move(expert)) {}

  std::string name() const override { return "white_box"; }

  Tensor forward(std::span<const Tensor* const> in) override {
    const Tensor& p = *in[0];
    const Tensor& s = *in[1];
    const Tensor& a = *in[2];
    const int d = expert_->state_dim(), np = expert_->param_count();
    if (p.size() != static_cast<std::size_t>(np) ||
        s.cols() != static_cast<std::size_t>(d) || s.rows() != a.rows()) {
      throw ShapeError("white_box inputs " + p.shape_string() + ", " +
                       s.shape_string() + ", " + a.shape_string());
    }
    Tensor out(s.rows(), d);
    jac_.assign(s.rows() * d * np, 0.0);
    for (std::size_t r = 0; r < s.rows(); ++r) {
      expert_->predict_with_jacobian(
          p.data(), s.row_span(r), a.row_span(r), out.row_span(r),
          std::span<double>(jac_.data() + r * d * np, d * np));
    }
    return out;
  }

  std::vector<Tensor> backward(std::span<const Tensor* const> in,
                               const Tensor&, const Tensor& g) override {
    const int d = expert_->state_dim(), np = expert_->param_count();
    Tensor gp(in[0]->rows(), in[0]->cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double* j = jac_.data() + r * d * np;
      for (int i = 0; i < d; ++i) {
        const double gi = g(r, i);
        for (int k = 0; k < np; ++k) gp[k] += gi * j[i * np + k];
      }
    }
    return {gp, Tensor(in[1]->rows(), in[1]->cols()),
            Tensor(in[2]->rows(), in[2]->cols())};
  }

 private:
  std::shared_ptr<const WhiteBoxExpert> expert_;
  std::vector<double> jac_;
};

inline diff::Var white_box_node(std::shared_ptr<const WhiteBoxExpert> expert,
                                diff::Var log_params, diff::Var states,
                                diff::Var actions) {
  return log_params.graph()->apply_custom(
      std::make_shared<WhiteBoxOp>(std::move(expert)),
      {log_params, states, actions});
}

// Multi-layer perceptron with tanh hidden layers and a linear head.
struct BlackBoxExpert {
  std::vector<int> widths;  // input, hidden..., output
  std::vector<Tensor> weights;  // widths[i] x widths[i + 1]
  std::vector<Tensor> biases;   // 1 x widths[i + 1]

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      n += static_cast<std::size_t>(widths[i] + 1) * widths[i + 1];
    }
    return n;
  }

  // Glorot-uniform weights, zero biases.
  static BlackBoxExpert glorot(std::vector<int> widths, std::mt19937_64& rng) {
    if (widths.size() < 2) throw InvalidArgument("MLP needs at least two widths");
    BlackBoxExpert e;
    e.widths = std::move(widths);
    for (std::size_t i = 0; i + 1 < e.widths.size(); ++i) {
      const int fi = e.widths[i], fo = e.widths[i + 1];
      const double lim = std::sqrt(6.0 / (fi + fo));
      std::uniform_real_distribution<double> u(-lim, lim);
      Tensor w(fi, fo);
      for (double& v : w.data()) v = u(rng);
      e.weights.push_back(std::move(w));
      e.biases.emplace_back(1, fo);
    }
    return e;
  }

  // x is batch x input_dim (already normalized).
  template <class Eval>
  typename Eval::Value forward(Eval& ev, const std::string& prefix,
                               typename Eval::Value x) const {
    const std::size_t layers = weights.size();
    for (std::size_t i = 0; i < layers; ++i) {
      auto w = ev.param(prefix + ".w" + std::to_string(i), weights[i]);
      auto b = ev.param(prefix + ".b" + std::to_string(i), biases[i]);
      x = Eval::add(Eval::matmul(x, w), b);
      if (i + 1 < layers) x = Eval::tanh(x);
    }
    return x;
  }

  Tensor predict(const Tensor& x) const {
    if (x.cols() != static_cast<std::size_t>(input_dim())) {
      throw ShapeError("MLP expects " + std::to_string(input_dim()) +
                       " inputs, got " + x.shape_string());
    }
    diff::EagerEval ev;
    return forward(ev, "mlp", x);
  }
};

// One (white, black) pair per contact mode, in the domain's mode order.
struct ExpertPair {
  std::shared_ptr<const WhiteBoxExpert> white;
  BlackBoxExpert black;
};

inline std::vector<int> mlp_widths(Domain d, int hidden) {
  const DomainInfo& info = domain_info(d);
  return {info.input_dim(), hidden, hidden, info.state_dim};
}

inline std::vector<ExpertPair> build_domain_experts(Domain d,
                                                    std::mt19937_64& rng) {
  const DomainInfo& info = domain_info(d);
  std::vector<ExpertPair> out;
  for (int i = 0; i < info.modes(); ++i) {
    out.push_back({make_white_box(d, i),
                   BlackBoxExpert::glorot(mlp_widths(d, info.hidden_width), rng)});
  }
  return out;
}

}  // namespace nmoe::experts
