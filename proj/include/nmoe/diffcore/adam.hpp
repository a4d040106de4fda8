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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nmoe/diffcore/tensor.hpp"
#include "nmoe/error.hpp"

namespace nmoe::diff {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Tensor m;
  Tensor v;
};

// Moment buffers keyed by parameter name, plus the shared step counter.
struct AdamState {
  long step = 0;
  std::map<std::string, AdamMoments> moments;
};

// A trainable tensor owned elsewhere, addressed by a stable name.
struct ParamRef {
  std::string name;
  Tensor* value;
  double lr_scale = 1.0;  // multiplies the configured step size
};

// One bias-corrected Adam update. Parameters missing from `grads` are left
// untouched; a non-finite gradient entry aborts before anything is written.
inline void adam_step(const std::vector<ParamRef>& params,
                      const std::map<std::string, Tensor>& grads,
                      AdamState& state, const AdamConfig& cfg = {}) {
  for (const auto& p : params) {
    auto it = grads.find(p.name);
    if (it == grads.end()) continue;
    if (!it->second.same_shape(*p.value)) {
      throw ShapeError("gradient for " + p.name + " has shape " +
                       it->second.shape_string());
    }
    if (!it->second.all_finite()) {
      throw NonFiniteError("non-finite gradient for " + p.name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& p : params) {
    auto it = grads.find(p.name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    auto [mit, inserted] = state.moments.try_emplace(p.name);
    AdamMoments& mom = mit->second;
    if (inserted) {
      mom.m = Tensor(g.rows(), g.cols());
      mom.v = Tensor(g.rows(), g.cols());
    }
    Tensor& w = *p.value;
    for (std::size_t i = 0; i < w.size(); ++i) {
      mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g[i];
      mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / c1;
      const double vhat = mom.v[i] / c2;
      w[i] -= p.lr_scale * cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace nmoe::diff
