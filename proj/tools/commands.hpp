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
#include <string>
#include <vector>

#include "config.hpp"

namespace metadoar::cli {

namespace fs = std::filesystem;

// Resident set size from /proc/self/statm in MiB. A process-level proxy, not
// a per-run peak; 0 where /proc is missing.
double resident_memory_mb();

struct SeedRun {
  std::uint64_t seed = 0;
  double value = 0.0;
  double value_per_device = 0.0;
  int iterations = 0;
  bool converged = false;
  double wall_ms = 0.0;
  double payoff_wall_ms = 0.0;
  long long cache_hits = 0;
  long long cache_misses = 0;
  double memory_proxy_mb = 0.0;
  std::string error;  // empty on success
};

struct SolveReport {
  std::vector<SeedRun> runs;
  double utility_mean = 0.0;    // mean per-device defender value over seeds
  double utility_stderr = 0.0;  // 0 with one seed
  bool ok() const;
};

// Seeds run.seed, run.seed + 1, ... each under out/seed_<n>/.
SolveReport cmd_solve(const RunConfig& config, const fs::path& out);

enum class AblateParam { kAlpha, kKhop };
AblateParam parse_ablate_param(const std::string& name);

struct AblateRow {
  int value = 0;
  double utility_mean = 0.0;
  double utility_stderr = 0.0;
  double payoff_wall_ms = 0.0;
  double memory_proxy_mb = 0.0;
  std::string status = "ok";
};

std::vector<AblateRow> cmd_ablate(const RunConfig& config, AblateParam param,
                                  const std::vector<int>& values, const fs::path& out);

struct ScaleRow {
  int devices = 0;
  std::string role;
  int k = 0;
  int greedy_k = 0;
  long long bound = 0;  // k * greedy_k
  int decodes = 0;
  double decode_ms_mean = 0.0;
  double critic_evals_mean = 0.0;
  long long critic_evals_max = 0;
  double memory_proxy_mb = 0.0;
  bool bound_ok = false;
  std::string status = "ok";
};

std::vector<ScaleRow> cmd_scale(const RunConfig& config, const std::vector<int>& device_counts,
                                const fs::path& out);

struct TheorySummary {
  int instances = 0;
  int violations = 0;
};

TheorySummary cmd_verify_theory(const RunConfig& config, const fs::path& out);

}  // namespace metadoar::cli
