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


#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace metadoar;

int main(int argc, char** argv) {
  CLI::App app{"Double Oracle with meta-controlled action pruning and a Q-value cache"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> parallel;
  app.add_option("--config", config_path, "INI config; omitted keys take defaults")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "base seed (overrides run.seed)");
  app.add_option("--out", out, "output directory (overrides run.out)");
  app.add_option("--parallel", parallel, "concurrent seeds or sweep values")->check(CLI::PositiveNumber);

  auto* solve = app.add_subcommand("solve", "run Double Oracle and write the iteration log and report");
  auto* ablate = app.add_subcommand("ablate", "sweep alpha or the k-hop radius");
  std::string param;
  std::vector<int> values;
  ablate->add_option("--param", param, "alpha or khop")->required()->check(CLI::IsMember({"alpha", "khop"}));
  ablate->add_option("--values", values, "comma separated values")->required()->delimiter(',');
  auto* scale = app.add_subcommand("scale", "decode cost against the device count");
  std::vector<int> devices;
  scale->add_option("--devices", devices, "comma separated device counts")->required()->delimiter(',');
  auto* verify = app.add_subcommand("verify-theory", "randomized check of the pruning value bound");

  CLI11_PARSE(app, argc, argv);

  try {
    cli::RunConfig config = config_path.empty() ? cli::RunConfig{} : cli::load_config(config_path);
    if (seed) config.run.seed = *seed;
    if (out) config.out = *out;
    if (parallel) config.parallel = *parallel;
    config.validate();
    const cli::fs::path dir = config.out;

    if (*solve) {
      const auto report = cli::cmd_solve(config, dir);
      for (const auto& r : report.runs) {
        if (!r.error.empty()) {
          std::cerr << "seed " << r.seed << " failed: " << r.error << '\n';
          continue;
        }
        std::cout << "seed " << r.seed << ": value " << r.value << ", per device "
                  << r.value_per_device << ", iterations " << r.iterations
                  << (r.converged ? " (converged)" : "") << '\n';
      }
      std::cout << "utility per device " << report.utility_mean << " +- " << report.utility_stderr
                << " over " << report.runs.size() << " seeds; see " << (dir / "report.json").string() << '\n';
      return report.ok() ? 0 : 1;
    }
    if (*ablate) {
      const auto rows = cli::cmd_ablate(config, cli::parse_ablate_param(param), values, dir);
      bool ok = true;
      for (const auto& r : rows) {
        std::cout << param << '=' << r.value << ": " << r.utility_mean << " +- " << r.utility_stderr
                  << " (" << r.status << ")\n";
        ok = ok && r.status == "ok";
      }
      return ok ? 0 : 1;
    }
    if (*scale) {
      const auto rows = cli::cmd_scale(config, devices, dir);
      bool ok = true;
      for (const auto& r : rows) {
        std::cout << "M=" << r.devices << ' ' << r.role << ": critic evals per decode max "
                  << r.critic_evals_max << " (bound " << r.bound << "), " << r.decode_ms_mean
                  << " ms per decode (" << r.status << ")\n";
        ok = ok && r.bound_ok;
      }
      return ok ? 0 : 1;
    }
    if (*verify) {
      const auto s = cli::cmd_verify_theory(config, dir);
      std::cout << s.instances << " instances, " << s.violations << " violations\n";
      if (s.violations > 0)
        std::cerr << "witnesses in " << (dir / "theory_witnesses.txt").string() << '\n';
      return s.violations == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
