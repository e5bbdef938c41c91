#include <iostream>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include "confflow/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"confflow: prescribed-curvature flows and elliptic solvers on "
               "one-dimensional reduced cylinders"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "runs";
  std::string runs_filter;
  uint64_t seed = 0;

  const char* commands[] = {"prepare",          "flow",     "solve",
                            "invariants",       "absearch", "subcritical-sweep",
                            "uniqueness-probe", "report"};
  for (const char* name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config file")
        ->required(std::string(name) != "report");
    sub->add_option("--out", out_dir, "output directory (default: runs)");
    sub->add_option("--seed", seed, "seed for randomized perturbations");
    if (std::string(name) == "report")
      sub->add_option("--runs", runs_filter, "comma-separated run ids (default: all)");
  }

  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();
  std::string command = sub->get_name();

  try {
    if (command == "report" && !runs_filter.empty()) {
      std::vector<std::string> filter;
      std::stringstream fs(runs_filter);
      std::string id;
      while (std::getline(fs, id, ',')) filter.push_back(id);
      std::cout << confflow::render_report(out_dir, filter);
      return confflow::kOk;
    }
    confflow::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = confflow::load_config_file(config_path);
    if (sub->count("--seed") == 0) seed = cfg.seed;
    confflow::RunOutcome out = confflow::run_command(cfg, command, seed, out_dir);
    if (!out.message.empty()) std::cout << out.message << "\n";
    if (out.exit_code == confflow::kOk)
      std::cout << "run " << out.run_id << " -> " << out.run_dir << "\n";
    return out.exit_code;
  } catch (const confflow::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return confflow::kConfigError;
  } catch (const confflow::nonconvergence_error& e) {
    std::cerr << "non-convergence: " << e.what() << "\n";
    return confflow::kNonConvergence;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return confflow::kNumericalError;
  }
}
