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

#include <array>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "nmoe/error.hpp"

namespace nmoe {

enum class Domain { kReacher, kCart, kHopper, kHalfCheetah };

// True constants of the inclined cart and its elastic wall.
struct CartPhysics {
  double mass = 1.0;
  double stiffness = 100.0;
  double damping = 1.0;
  double rail_angle = std::numbers::pi / 6.0;
  double wall_position = 0.0;
  double gravity = 9.81;
};

struct DomainInfo {
  Domain domain;
  std::string name;
  int state_dim;
  int action_dim;
  int hidden_width;             // per black-box expert
  std::string chain;            // bundled chain, empty for the cart
  std::vector<std::string> mode_names;
  // contact names held by each mode's white-box dynamics, in mode order
  std::vector<std::vector<std::string>> mode_contacts;

  int modes() const { return static_cast<int>(mode_names.size()); }
  int input_dim() const { return state_dim + action_dim; }
};

inline const DomainInfo& domain_info(Domain d) {
  static const std::array<DomainInfo, 4> table{{
      {Domain::kReacher, "reacher", 4, 2, 64, "reacher", {"free"}, {{}}},
      {Domain::kCart, "cart", 2, 1, 64, "", {"contact", "free"}, {{}, {}}},
      {Domain::kHopper,
       "hopper",
       12,
       3,
       128,
       "hopper",
       {"toe", "heel", "heel_toe", "free"},
       {{"toe"}, {"heel"}, {"heel", "toe"}, {}}},
      {Domain::kHalfCheetah,
       "halfcheetah",
       18,
       6,
       128,
       "halfcheetah",
       {"front", "rear", "front_rear", "free"},
       {{"front_foot"}, {"rear_foot"}, {"front_foot", "rear_foot"}, {}}},
  }};
  return table[static_cast<int>(d)];
}

inline Domain parse_domain(std::string_view name) {
  for (Domain d : {Domain::kReacher, Domain::kCart, Domain::kHopper,
                   Domain::kHalfCheetah}) {
    if (domain_info(d).name == name) return d;
  }
  throw InvalidArgument("unknown domain " + std::string(name));
}

inline const std::string& domain_name(Domain d) { return domain_info(d).name; }

inline constexpr double kControlStep = 0.01;

}  // namespace nmoe
