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

// Chains shipped with the library (sources under data/chains/).

#pragma once

#include <string>
#include <string_view>

#include "nmoe/error.hpp"
#include "nmoe/rbd/bundled_chains.hpp"
#include "nmoe/rbd/chain_spec.hpp"

namespace nmoe::rbd {

inline std::string_view bundled_chain_json(std::string_view name) {
  if (name == "reacher") return bundled::k_reacher;
  if (name == "hopper") return bundled::k_hopper;
  if (name == "halfcheetah") return bundled::k_halfcheetah;
  if (name == "double_pendulum") return bundled::k_double_pendulum;
  throw InvalidArgument("no bundled chain named " + std::string(name));
}

inline ChainSpec bundled_chain(std::string_view name) {
  return chain_from_json_text(bundled_chain_json(name));
}

}  // namespace nmoe::rbd
