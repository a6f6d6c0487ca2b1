// Copyright 2026 The MetaDOAR Authors.
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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "metadoar/game.hpp"

namespace metadoar::cli {

struct RunConfig {
  game::DoConfig run;  // env, br, meta, cache and do sections
  int seeds = 2;       // independent seeds behind every reported error bar
  std::string out = "out";
  int parallel = 1;    // concurrent seeds or sweep values
  bool wall_clock = true;  // false writes zeros in timing columns
  int scale_decodes = 200;
  int theory_instances = 200;
  double theory_tol = 1e-8;
  int theory_max_states = 20;
  int theory_max_actions = 6;
  bool theory_unpruned = false;

  void validate() const;
};

// INI with sections env, br, meta, cache, do, run. Every omitted key keeps its
// default; unknown sections or keys are rejected by name.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

// Fully resolved config in the same format; parse_config reads it back.
void write_config(std::ostream& out, const RunConfig& config);

}  // namespace metadoar::cli
