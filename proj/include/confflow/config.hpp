#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "confflow/elliptic.hpp"
#include "confflow/invariants.hpp"

namespace confflow {

// Flat key-value experiment configuration ("section.key = value" lines,
// '#' comments). Flat so that canonicalization, and hence the config hash,
// is a sort plus a join.
struct ExperimentConfig {
  // model
  int n = 3;
  double L = 1.0;
  int grid = 201;
  std::string psi = "1";
  double R_F = kNaN;  // default -(n-1)(n-2)
  bool synthetic = false;
  std::string R_bg_expr;
  double h_bg_0 = kNaN, h_bg_L = kNaN;
  // prepare
  double prepare_delta = 0.5;
  // problem
  double a = 1.0, b = 1.0;
  std::string f_expr = "background";  // expression or "background"
  std::string h_spec = "background";  // "background" or unset (h_0/h_L given)
  double h_0 = kNaN, h_L = kNaN;
  // flow
  double dt0 = 1e-3, dt_min = 1e-12, dt_max = 0.5, t_max = 500.0;
  double tol_F2 = 1e-9, tol_residual = 2e-8;
  std::string stepper = "imex";
  double perturb = 0.05;
  // monotone
  double monotone_tol = 1e-10;
  int monotone_max_iter = 500;
  // subcritical
  std::vector<double> q_list = {1.5, 2.2, 2.8, 2.95};
  // absearch
  double ab_a_small = 1e-3, ab_b_small = 1e-3, ab_tol = 1e-6;
  int ab_max_evals = 60;
  // uniqueness
  double uniq_perturb_a = 0.05, uniq_perturb_b = 0.03;
  // invariants
  int inv_restarts = 3;
  // misc
  uint64_t seed = 0;

  // canonical "key = value" lines, sorted; only keys present in the source
  std::map<std::string, std::string> raw;

  std::string canonical_text() const;
  std::string config_hash() const;  // fnv1a-64 of the canonical text, hex
};

// Parses and validates; reports every error, not just the first.
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config_file(const std::string& path);

struct BuiltProblem {
  WarpedModel base;      // as described in the config
  WarpedModel model;     // admissible background the solvers run on
  bool prepared = false;
  BackgroundPrep prep;   // valid when prepared
  ProblemData pd;
};

// Materializes the model (re-describing the background when it has h_bg = 0)
// and the prescribed data, with the sign preconditions checked.
BuiltProblem build_problem(const ExperimentConfig& cfg);

FlowConfig make_flow_config(const ExperimentConfig& cfg, const ProblemData& pd);

uint64_t fnv1a64(const std::string& text);

}  // namespace confflow
