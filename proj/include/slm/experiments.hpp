#pragma once

#include <optional>
#include <string>

#include "slm/config.hpp"

namespace slm {

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out_dir;  // also settable via SLM_FORGE_OUT
  bool strict = false;
  bool dump_paths = false;
};

struct RunOutcome {
  int exit_code = 0;
  bool inconclusive = false;
  std::string report_path;
  std::string error;  // single-line machine-parsable message when exit_code != 0
};

// Loads, binds and executes the experiment; writes report files atomically
// under the output directory. Exit codes: 0 completed, 1 error,
// 2 inconclusive verdict under strict mode.
RunOutcome run_experiment_file(const std::string& config_path, const RunOverrides& ov);

RunOutcome run_experiment(ExperimentConfig cfg);

}  // namespace slm
