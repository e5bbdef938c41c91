#pragma once

#include <string>
#include <vector>

#include "confflow/config.hpp"

namespace confflow {

// Exit codes of the CLI: 0 ok, 2 config error, 3 numerical failure,
// 4 non-convergence.
enum ExitCode { kOk = 0, kConfigError = 2, kNumericalError = 3, kNonConvergence = 4 };

struct RunOutcome {
  int exit_code = kOk;
  std::string run_id;
  std::string run_dir;
  std::vector<std::string> files;  // manifest, relative to run_dir
  std::string message;
};

// Dispatches one experiment command. Outputs are deterministic functions of
// (config, seed): run directories are sequence-numbered but every numeric
// file inside is byte-reproducible.
RunOutcome run_command(const ExperimentConfig& cfg, const std::string& command,
                       uint64_t seed, const std::string& out_dir);

// Renders the comparison table across runs recorded in out_dir/registry.tsv;
// run_filter empty means all runs.
std::string render_report(const std::string& out_dir,
                          const std::vector<std::string>& run_filter);

}  // namespace confflow
