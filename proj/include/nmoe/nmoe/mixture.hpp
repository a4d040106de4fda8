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
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "nmoe/diffcore/eval.hpp"
#include "nmoe/diffcore/graph.hpp"
#include "nmoe/domain.hpp"
#include "nmoe/experts/experts.hpp"

namespace nmoe::mixture {

using diff::Tensor;
using experts::BlackBoxExpert;
using experts::ExpertPair;

enum class ModelKind { kNmoe, kBb, kMbb, kMwb };

inline const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kNmoe: return "nmoe";
    case ModelKind::kBb: return "bb";
    case ModelKind::kMbb: return "mbb";
    case ModelKind::kMwb: return "mwb";
  }
  return "?";
}

inline ModelKind parse_kind(std::string_view s) {
  for (ModelKind k : {ModelKind::kNmoe, ModelKind::kBb, ModelKind::kMbb,
                      ModelKind::kMwb}) {
    if (s == kind_name(k)) return k;
  }
  throw InvalidArgument("unknown model kind " + std::string(s));
}

// Which experts of a cooperative pair take part. Masks bypass the pair's gate.
enum class ExpertMask { kBoth, kBlackOnly, kWhiteOnly };

inline const char* mask_name(ExpertMask m) {
  switch (m) {
    case ExpertMask::kBoth: return "both";
    case ExpertMask::kBlackOnly: return "black";
    case ExpertMask::kWhiteOnly: return "white";
  }
  return "?";
}

inline ExpertMask parse_mask(std::string_view s) {
  for (ExpertMask m :
       {ExpertMask::kBoth, ExpertMask::kBlackOnly, ExpertMask::kWhiteOnly}) {
    if (s == mask_name(m)) return m;
  }
  throw ParseError("unknown expert mask " + std::string(s));
}

// Per-dimension standardization of model inputs (state, action) and of next
// states, frozen at fit time.
struct Normalizer {
  Tensor in_mean, in_std;    // 1 x (d_s + d_a)
  Tensor out_mean, out_std;  // 1 x d_s

  static constexpr double kMinStd = 1e-6;

  static void moments(const Tensor& x, Tensor& mean, Tensor& stdev) {
    if (x.rows() == 0) throw InvalidArgument("cannot normalize an empty set");
    mean = Tensor(1, x.cols());
    stdev = Tensor(1, x.cols());
    const double n = static_cast<double>(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += x(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) mean[c] /= n;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double d = x(r, c) - mean[c];
        stdev[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < x.cols(); ++c) {
      stdev[c] = std::max(std::sqrt(stdev[c] / n), kMinStd);
    }
  }

  static Normalizer fit(const Tensor& states, const Tensor& actions,
                        const Tensor& next_states) {
    Normalizer n;
    const Tensor* parts[] = {&states, &actions};
    moments(diff::kernels::concat(parts, 1), n.in_mean, n.in_std);
    moments(next_states, n.out_mean, n.out_std);
    return n;
  }

  // Mean/std of a uniform distribution over a box, for when no data exist yet.
  static Normalizer from_box(const std::vector<double>& lo,
                             const std::vector<double>& hi, int state_dim) {
    Normalizer n;
    const std::size_t d = lo.size();
    n.in_mean = Tensor(1, d);
    n.in_std = Tensor(1, d);
    for (std::size_t i = 0; i < d; ++i) {
      n.in_mean[i] = 0.5 * (lo[i] + hi[i]);
      n.in_std[i] = std::max((hi[i] - lo[i]) / std::sqrt(12.0), kMinStd);
    }
    n.out_mean = diff::kernels::slice(n.in_mean, 0, 1, 0, state_dim);
    n.out_std = diff::kernels::slice(n.in_std, 0, 1, 0, state_dim);
    return n;
  }

  static Tensor standardize(const Tensor& x, const Tensor& mean,
                            const Tensor& stdev) {
    Tensor out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = 0; c < x.cols(); ++c) {
        out(r, c) = (x(r, c) - mean[c]) / stdev[c];
      }
    }
    return out;
  }
  static Tensor restore(const Tensor& x, const Tensor& mean,
                        const Tensor& stdev) {
    Tensor out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = 0; c < x.cols(); ++c) {
        out(r, c) = x(r, c) * stdev[c] + mean[c];
      }
    }
    return out;
  }

  Tensor inputs(const Tensor& states, const Tensor& actions) const {
    const Tensor* parts[] = {&states, &actions};
    return standardize(diff::kernels::concat(parts, 1), in_mean, in_std);
  }
  Tensor outputs(const Tensor& next) const {
    return standardize(next, out_mean, out_std);
  }
  Tensor restore_outputs(const Tensor& y) const {
    return restore(y, out_mean, out_std);
  }
};

struct Prediction {
  Tensor y;               // batch x d_s
  Tensor h;               // batch x M
  std::vector<Tensor> g;  // M of batch x 2 (black, white)
  std::vector<Tensor> o;  // M of batch x d_s
};

// Values of one forward evaluation, in normalized output units.
template <class Eval>
struct ForwardValues {
  typename Eval::Value y;
  typename Eval::Value h;
  std::vector<typename Eval::Value> g;  // empty Value where masked
  std::vector<typename Eval::Value> o;
};

struct NmoeModel {
  Domain domain = Domain::kCart;
  ModelKind kind = ModelKind::kNmoe;
  std::vector<ExpertMask> masks;
  std::vector<ExpertPair> pairs;
  Tensor log_params;      // 1 x P, shared by every mode's white box
  Tensor wh;              // M x (d_in + 1)
  std::vector<Tensor> wg;  // M of 2 x (d_in + 1)
  Normalizer norm;
  std::uint64_t seed = 0;
  long steps = 0;

  int modes() const { return static_cast<int>(pairs.size()); }
  int state_dim() const { return domain_info(domain).state_dim; }
  int action_dim() const { return domain_info(domain).action_dim; }

  bool uses_white() const {
    return std::any_of(masks.begin(), masks.end(),
                       [](ExpertMask m) { return m != ExpertMask::kBlackOnly; });
  }

  std::size_t parameter_count() const {
    std::size_t n = wh.size();
    for (int i = 0; i < modes(); ++i) {
      if (masks[i] == ExpertMask::kBoth) n += wg[i].size();
      if (masks[i] != ExpertMask::kWhiteOnly) n += pairs[i].black.parameter_count();
    }
    if (uses_white()) n += log_params.size();
    return n;
  }

  // Normalized inputs with a trailing constant column for the gate biases.
  Tensor gate_inputs(const Tensor& xn) const {
    Tensor x1(xn.rows(), xn.cols() + 1, 1.0);
    for (std::size_t r = 0; r < xn.rows(); ++r) {
      for (std::size_t c = 0; c < xn.cols(); ++c) x1(r, c) = xn(r, c);
    }
    return x1;
  }

  template <class Eval>
  ForwardValues<Eval> forward(Eval& ev, const Tensor& states,
                              const Tensor& actions) const {
    using V = typename Eval::Value;
    if (states.cols() != static_cast<std::size_t>(state_dim()) ||
        actions.cols() != static_cast<std::size_t>(action_dim()) ||
        states.rows() != actions.rows()) {
      throw ShapeError("model expects batch x " + std::to_string(state_dim()) +
                       " states and batch x " + std::to_string(action_dim()) +
                       " actions, got " + states.shape_string() + " and " +
                       actions.shape_string());
    }
    const Tensor xn_t = norm.inputs(states, actions);
    const V xn = ev.constant(xn_t);
    const V x1 = ev.constant(gate_inputs(xn_t));
    const V inv_out = ev.constant(diff::kernels::unary(
        norm.out_std, [](double s) { return 1.0 / s; }));
    const V out_mean = ev.constant(norm.out_mean);

    ForwardValues<Eval> fv;
    fv.h = Eval::softmax(Eval::matmul_nt(x1, ev.param("wh", wh)));
    V lp{};
    if (uses_white()) lp = ev.param("white", log_params);
    bool first = true;
    for (int i = 0; i < modes(); ++i) {
      const std::string tag = std::to_string(i);
      V black{}, white{}, o{}, g{};
      if (masks[i] != ExpertMask::kWhiteOnly) {
        black = pairs[i].black.forward(ev, "mlp" + tag, xn);
      }
      if (masks[i] != ExpertMask::kBlackOnly) {
        const V raw = white_output(ev, pairs[i].white, lp, states, actions);
        white = Eval::mul(Eval::sub(raw, out_mean), inv_out);
      }
      switch (masks[i]) {
        case ExpertMask::kBlackOnly: o = black; break;
        case ExpertMask::kWhiteOnly: o = white; break;
        case ExpertMask::kBoth:
          g = Eval::softmax(Eval::matmul_nt(x1, ev.param("wg" + tag, wg[i])));
          o = Eval::add(Eval::mul(Eval::columns(g, 0, 1), black),
                        Eval::mul(Eval::columns(g, 1, 2), white));
          break;
      }
      const V term = Eval::mul(Eval::columns(fv.h, i, i + 1), o);
      fv.y = first ? term : Eval::add(fv.y, term);
      first = false;
      fv.g.push_back(g);
      fv.o.push_back(o);
    }
    return fv;
  }

  // Mean over the batch of (1/M) sum_i h_i ||y_target - o_i||^2, all in
  // normalized next-state units.
  template <class Eval>
  typename Eval::Value loss(Eval& ev, const Tensor& states,
                            const Tensor& actions,
                            const Tensor& next_states) const {
    using V = typename Eval::Value;
    if (states.rows() == 0) throw InvalidArgument("loss of an empty batch");
    const ForwardValues<Eval> fv = forward(ev, states, actions);
    const V target = ev.constant(norm.outputs(next_states));
    V total{};
    for (int i = 0; i < modes(); ++i) {
      const V err = Eval::sum(Eval::square(Eval::sub(target, fv.o[i])), 1);
      const V term = Eval::mul(Eval::columns(fv.h, i, i + 1), err);
      total = i == 0 ? term : Eval::add(total, term);
    }
    return Eval::scale(Eval::sum(total, -1),
                       1.0 / (static_cast<double>(states.rows()) * modes()));
  }

  Prediction predict(const Tensor& states, const Tensor& actions) const {
    diff::EagerEval ev;
    ForwardValues<diff::EagerEval> fv = forward(ev, states, actions);
    Prediction p;
    p.y = norm.restore_outputs(fv.y);
    p.h = std::move(fv.h);
    for (int i = 0; i < modes(); ++i) {
      if (masks[i] == ExpertMask::kBoth) {
        p.g.push_back(std::move(fv.g[i]));
      } else {
        Tensor fixed(states.rows(), 2);
        for (std::size_t r = 0; r < fixed.rows(); ++r) {
          fixed(r, masks[i] == ExpertMask::kBlackOnly ? 0 : 1) = 1.0;
        }
        p.g.push_back(std::move(fixed));
      }
      p.o.push_back(norm.restore_outputs(fv.o[i]));
    }
    return p;
  }

  Tensor predict_next(const Tensor& states, const Tensor& actions) const {
    diff::EagerEval ev;
    return norm.restore_outputs(forward(ev, states, actions).y);
  }

  // Pointers to every trainable tensor under the names used by forward().
  std::map<std::string, Tensor*> trainables() {
    std::map<std::string, Tensor*> out;
    out["wh"] = &wh;
    if (uses_white()) out["white"] = &log_params;
    for (int i = 0; i < modes(); ++i) {
      const std::string tag = std::to_string(i);
      if (masks[i] == ExpertMask::kBoth) out["wg" + tag] = &wg[i];
      if (masks[i] == ExpertMask::kWhiteOnly) continue;
      auto& mlp = pairs[i].black;
      for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
        out["mlp" + tag + ".w" + std::to_string(l)] = &mlp.weights[l];
        out["mlp" + tag + ".b" + std::to_string(l)] = &mlp.biases[l];
      }
    }
    return out;
  }

 private:
  static Tensor white_output(diff::EagerEval&,
                             const std::shared_ptr<const experts::WhiteBoxExpert>& w,
                             const Tensor& lp, const Tensor& s, const Tensor& a) {
    return w->predict_batch(lp, s, a);
  }
  static diff::Var white_output(
      diff::TapeEval& ev, const std::shared_ptr<const experts::WhiteBoxExpert>& w,
      diff::Var lp, const Tensor& s, const Tensor& a) {
    return experts::white_box_node(w, lp, ev.constant(s), ev.constant(a));
  }
};

// Hidden width for a single-MLP model holding about `target` parameters.
inline int matched_hidden_width(Domain d, std::size_t target) {
  const DomainInfo& info = domain_info(d);
  const double din = info.input_dim(), ds = info.state_dim;
  // (din+1)w + (w+1)w + (w+1)ds + (din+1) gate = target
  const double b = din + 2.0 + ds;
  const double c = ds + din + 1.0 - static_cast<double>(target);
  const double w = (-b + std::sqrt(b * b - 4.0 * c)) / 2.0;
  return std::max(1, static_cast<int>(std::lround(w)));
}

// Untrained model of the given kind with zero gates and Glorot MLPs; white-box
// parameters start at their perturbed estimates.
inline NmoeModel make_model(Domain d, ModelKind kind, std::uint64_t seed,
                            Normalizer norm) {
  const DomainInfo& info = domain_info(d);
  std::mt19937_64 rng(seed);
  NmoeModel m;
  m.domain = d;
  m.kind = kind;
  m.seed = seed;
  m.norm = std::move(norm);
  m.log_params = experts::perturbed_log_parameters(d, rng);
  const std::size_t gate_in = info.input_dim() + 1;
  if (kind == ModelKind::kBb) {
    NmoeModel full = make_model(d, ModelKind::kNmoe, seed, m.norm);
    const int width = matched_hidden_width(d, full.parameter_count());
    m.pairs.push_back({experts::make_white_box(d, 0),
                       BlackBoxExpert::glorot(experts::mlp_widths(d, width), rng)});
    m.masks = {ExpertMask::kBlackOnly};
  } else {
    m.pairs = experts::build_domain_experts(d, rng);
    const ExpertMask mask = kind == ModelKind::kMbb   ? ExpertMask::kBlackOnly
                            : kind == ModelKind::kMwb ? ExpertMask::kWhiteOnly
                                                      : ExpertMask::kBoth;
    m.masks.assign(m.pairs.size(), mask);
  }
  m.wh = Tensor(m.modes(), gate_in);
  m.wg.assign(m.modes(), Tensor(2, gate_in));
  return m;
}

struct ResponsibilityStats {
  std::vector<double> mean_h;                 // M
  std::vector<std::array<double, 2>> mean_g;  // M x (black, white)
};

inline ResponsibilityStats responsibility_stats(const NmoeModel& m,
                                                const Tensor& states,
                                                const Tensor& actions) {
  if (states.rows() == 0) throw InvalidArgument("responsibility of empty set");
  const Prediction p = m.predict(states, actions);
  ResponsibilityStats st;
  const double n = static_cast<double>(states.rows());
  st.mean_h.assign(m.modes(), 0.0);
  st.mean_g.assign(m.modes(), {0.0, 0.0});
  for (std::size_t r = 0; r < states.rows(); ++r) {
    for (int i = 0; i < m.modes(); ++i) {
      st.mean_h[i] += p.h(r, i);
      st.mean_g[i][0] += p.g[i](r, 0);
      st.mean_g[i][1] += p.g[i](r, 1);
    }
  }
  for (int i = 0; i < m.modes(); ++i) {
    st.mean_h[i] /= n;
    st.mean_g[i][0] /= n;
    st.mean_g[i][1] /= n;
  }
  return st;
}

// ---- checkpoints

inline constexpr const char* kCheckpointFormat = "nmoe-checkpoint/1";

inline nlohmann::json tensor_to_json(const Tensor& t) {
  return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.vec()}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

inline nlohmann::json to_json(const NmoeModel& m) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["domain"] = domain_name(m.domain);
  j["kind"] = kind_name(m.kind);
  j["modes"] = domain_info(m.domain).mode_names;
  std::vector<std::string> masks;
  for (auto mask : m.masks) masks.push_back(mask_name(mask));
  j["masks"] = masks;
  nlohmann::json white = nlohmann::json::object();
  const auto names = experts::physical_parameters(m.domain);
  for (std::size_t i = 0; i < names.size(); ++i) {
    white[names[i].name] = m.log_params[i];
  }
  j["white_log_params"] = white;
  j["wh"] = tensor_to_json(m.wh);
  j["wg"] = nlohmann::json::array();
  for (const auto& w : m.wg) j["wg"].push_back(tensor_to_json(w));
  j["black"] = nlohmann::json::array();
  for (const auto& p : m.pairs) {
    nlohmann::json b;
    b["widths"] = p.black.widths;
    b["weights"] = nlohmann::json::array();
    b["biases"] = nlohmann::json::array();
    for (const auto& w : p.black.weights) b["weights"].push_back(tensor_to_json(w));
    for (const auto& w : p.black.biases) b["biases"].push_back(tensor_to_json(w));
    j["black"].push_back(b);
  }
  j["normalization"] = {{"in_mean", tensor_to_json(m.norm.in_mean)},
                        {"in_std", tensor_to_json(m.norm.in_std)},
                        {"out_mean", tensor_to_json(m.norm.out_mean)},
                        {"out_std", tensor_to_json(m.norm.out_std)}};
  j["training"] = {{"seed", m.seed}, {"steps", m.steps}};
  return j;
}

inline NmoeModel from_json(const nlohmann::json& j) {
  try {
    const std::string format = j.at("format").get<std::string>();
    if (format != kCheckpointFormat) {
      throw ParseError("checkpoint format " + format + " is not " +
                       kCheckpointFormat);
    }
    NmoeModel m;
    m.domain = parse_domain(j.at("domain").get<std::string>());
    m.kind = parse_kind(j.at("kind").get<std::string>());
    for (const auto& s : j.at("masks")) m.masks.push_back(parse_mask(s.get<std::string>()));
    const auto names = experts::physical_parameters(m.domain);
    m.log_params = Tensor(1, names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
      m.log_params[i] = j.at("white_log_params").at(names[i].name).get<double>();
    }
    m.wh = tensor_from_json(j.at("wh"));
    for (const auto& w : j.at("wg")) m.wg.push_back(tensor_from_json(w));
    const auto& blacks = j.at("black");
    if (blacks.size() != m.masks.size() || m.wg.size() != m.masks.size() ||
        m.wh.rows() != m.masks.size()) {
      throw ParseError("checkpoint mode counts disagree");
    }
    for (std::size_t i = 0; i < blacks.size(); ++i) {
      ExpertPair p;
      p.white = experts::make_white_box(m.domain, static_cast<int>(i));
      p.black.widths = blacks[i].at("widths").get<std::vector<int>>();
      for (const auto& w : blacks[i].at("weights")) p.black.weights.push_back(tensor_from_json(w));
      for (const auto& w : blacks[i].at("biases")) p.black.biases.push_back(tensor_from_json(w));
      if (p.black.weights.size() + 1 != p.black.widths.size() ||
          p.black.biases.size() + 1 != p.black.widths.size()) {
        throw ParseError("checkpoint MLP layer count disagrees with widths");
      }
      for (std::size_t l = 0; l < p.black.weights.size(); ++l) {
        if (p.black.weights[l].rows() != static_cast<std::size_t>(p.black.widths[l]) ||
            p.black.weights[l].cols() != static_cast<std::size_t>(p.black.widths[l + 1]) ||
            p.black.biases[l].cols() != static_cast<std::size_t>(p.black.widths[l + 1])) {
          throw ParseError("checkpoint MLP layer shape disagrees with widths");
        }
      }
      m.pairs.push_back(std::move(p));
    }
    const auto& n = j.at("normalization");
    m.norm.in_mean = tensor_from_json(n.at("in_mean"));
    m.norm.in_std = tensor_from_json(n.at("in_std"));
    m.norm.out_mean = tensor_from_json(n.at("out_mean"));
    m.norm.out_std = tensor_from_json(n.at("out_std"));
    m.seed = j.at("training").at("seed").get<std::uint64_t>();
    m.steps = j.at("training").at("steps").get<long>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const NmoeModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path);
  out << to_json(m).dump(1) << '\n';
  if (!out) throw Error("failed writing checkpoint " + path);
}

inline NmoeModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint ") + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace nmoe::mixture
