#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "slm/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"slm-forge: stochastic-volatility SDE lab (martingale defect, "
               "filtration enlargement, explosion tests)"};

  std::string config_path;
  app.add_option("--config", config_path, "experiment config file (text or .json)")
      ->required();

  slm::RunOverrides ov;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out_dir;
  const auto* seed_opt = app.add_option("--seed", seed, "override numerics.seed");
  const auto* threads_opt = app.add_option("--threads", threads, "cap worker threads");
  const auto* out_opt =
      app.add_option("--out", out_dir, "output directory (fallback: SLM_FORGE_OUT)");
  app.add_flag("--strict", ov.strict, "exit 2 when a verdict is inconclusive");
  app.add_flag("--dump-paths", ov.dump_paths, "write a per-step path dump CSV");

  CLI11_PARSE(app, argc, argv);

  if (seed_opt->count()) ov.seed = seed;
  if (threads_opt->count()) ov.threads = threads;
  if (out_opt->count()) {
    ov.out_dir = out_dir;
  } else if (const char* env = std::getenv("SLM_FORGE_OUT"); env && *env) {
    ov.out_dir = std::string(env);
  }

  const slm::RunOutcome result = slm::run_experiment_file(config_path, ov);
  if (result.exit_code == 1) {
    std::cerr << result.error << "\n";
    return 1;
  }
  if (!result.report_path.empty())
    std::cout << "report: " << result.report_path << "\n";
  if (result.inconclusive) std::cout << "verdict: inconclusive\n";
  return result.exit_code;
}
