#include "confflow/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace confflow {

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::set<std::string> kKnownKeys = {
    "model.n", "model.L", "model.grid", "model.psi", "model.R_F",
    "model.synthetic", "model.R_bg", "model.h_bg_0", "model.h_bg_L",
    "prepare.delta",
    "problem.a", "problem.b", "problem.f", "problem.h", "problem.h_0", "problem.h_L",
    "flow.dt0", "flow.dt_min", "flow.dt_max", "flow.t_max", "flow.tol_F2",
    "flow.tol_residual", "flow.stepper", "flow.perturb",
    "monotone.tol", "monotone.max_iter",
    "subcritical.q_list",
    "absearch.a_small", "absearch.b_small", "absearch.tol", "absearch.max_evals",
    "uniqueness.perturb_a", "uniqueness.perturb_b",
    "invariants.restarts",
    "seed",
};

struct ErrorList {
  std::vector<std::string> errors;
  void add(int line, const std::string& msg) {
    errors.push_back("line " + std::to_string(line) + ": " + msg);
  }
  void add(const std::string& msg) { errors.push_back(msg); }
  void raise_if_any() const {
    if (errors.empty()) return;
    std::string all = "configuration errors:";
    for (const auto& e : errors) all += "\n  " + e;
    throw config_error(all);
  }
};

double parse_double(const std::string& v, int line, ErrorList& errs,
                    const std::string& key) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (...) {
    errs.add(line, key + ": expected a number, got \"" + v + "\"");
    return kNaN;
  }
}

long parse_int(const std::string& v, int line, ErrorList& errs, const std::string& key) {
  try {
    size_t pos = 0;
    long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (...) {
    errs.add(line, key + ": expected an integer, got \"" + v + "\"");
    return 0;
  }
}

bool parse_bool(const std::string& v, int line, ErrorList& errs, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  errs.add(line, key + ": expected true/false, got \"" + v + "\"");
  return false;
}

}  // namespace

std::string ExperimentConfig::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : raw) out += k + " = " + v + "\n";
  return out;
}

std::string ExperimentConfig::config_hash() const {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_text())));
  return buf;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  ErrorList errs;

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::map<std::string, int> key_lines;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      errs.add(lineno, "expected key = value");
      continue;
    }
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!kKnownKeys.count(key)) {
      errs.add(lineno, "unknown key \"" + key + "\"");
      continue;
    }
    if (cfg.raw.count(key)) errs.add(lineno, "duplicate key \"" + key + "\"");
    cfg.raw[key] = val;
    key_lines[key] = lineno;
  }

  auto has = [&](const char* k) { return cfg.raw.count(k) != 0; };
  auto val = [&](const char* k) { return cfg.raw.at(k); };
  auto ln = [&](const char* k) { return key_lines[k]; };

  if (has("model.n")) cfg.n = int(parse_int(val("model.n"), ln("model.n"), errs, "model.n"));
  if (has("model.L")) cfg.L = parse_double(val("model.L"), ln("model.L"), errs, "model.L");
  if (has("model.grid"))
    cfg.grid = int(parse_int(val("model.grid"), ln("model.grid"), errs, "model.grid"));
  if (has("model.psi")) cfg.psi = val("model.psi");
  if (has("model.R_F")) cfg.R_F = parse_double(val("model.R_F"), ln("model.R_F"), errs, "model.R_F");
  if (has("model.synthetic"))
    cfg.synthetic = parse_bool(val("model.synthetic"), ln("model.synthetic"), errs, "model.synthetic");
  if (has("model.R_bg")) cfg.R_bg_expr = val("model.R_bg");
  if (has("model.h_bg_0")) cfg.h_bg_0 = parse_double(val("model.h_bg_0"), ln("model.h_bg_0"), errs, "model.h_bg_0");
  if (has("model.h_bg_L")) cfg.h_bg_L = parse_double(val("model.h_bg_L"), ln("model.h_bg_L"), errs, "model.h_bg_L");
  if (has("prepare.delta")) cfg.prepare_delta = parse_double(val("prepare.delta"), ln("prepare.delta"), errs, "prepare.delta");
  if (has("problem.a")) cfg.a = parse_double(val("problem.a"), ln("problem.a"), errs, "problem.a");
  if (has("problem.b")) cfg.b = parse_double(val("problem.b"), ln("problem.b"), errs, "problem.b");
  if (has("problem.f")) cfg.f_expr = val("problem.f");
  if (has("problem.h")) cfg.h_spec = val("problem.h");
  if (has("problem.h_0")) {
    cfg.h_0 = parse_double(val("problem.h_0"), ln("problem.h_0"), errs, "problem.h_0");
    cfg.h_spec = "values";
  }
  if (has("problem.h_L")) {
    cfg.h_L = parse_double(val("problem.h_L"), ln("problem.h_L"), errs, "problem.h_L");
    cfg.h_spec = "values";
  }
  if (has("flow.dt0")) cfg.dt0 = parse_double(val("flow.dt0"), ln("flow.dt0"), errs, "flow.dt0");
  if (has("flow.dt_min")) cfg.dt_min = parse_double(val("flow.dt_min"), ln("flow.dt_min"), errs, "flow.dt_min");
  if (has("flow.dt_max")) cfg.dt_max = parse_double(val("flow.dt_max"), ln("flow.dt_max"), errs, "flow.dt_max");
  if (has("flow.t_max")) cfg.t_max = parse_double(val("flow.t_max"), ln("flow.t_max"), errs, "flow.t_max");
  if (has("flow.tol_F2")) cfg.tol_F2 = parse_double(val("flow.tol_F2"), ln("flow.tol_F2"), errs, "flow.tol_F2");
  if (has("flow.tol_residual")) cfg.tol_residual = parse_double(val("flow.tol_residual"), ln("flow.tol_residual"), errs, "flow.tol_residual");
  if (has("flow.stepper")) cfg.stepper = val("flow.stepper");
  if (has("flow.perturb")) cfg.perturb = parse_double(val("flow.perturb"), ln("flow.perturb"), errs, "flow.perturb");
  if (has("monotone.tol")) cfg.monotone_tol = parse_double(val("monotone.tol"), ln("monotone.tol"), errs, "monotone.tol");
  if (has("monotone.max_iter")) cfg.monotone_max_iter = int(parse_int(val("monotone.max_iter"), ln("monotone.max_iter"), errs, "monotone.max_iter"));
  if (has("subcritical.q_list")) {
    cfg.q_list.clear();
    std::istringstream qs(val("subcritical.q_list"));
    std::string tok;
    while (std::getline(qs, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      cfg.q_list.push_back(parse_double(tok, ln("subcritical.q_list"), errs, "subcritical.q_list"));
    }
    if (cfg.q_list.empty()) errs.add(ln("subcritical.q_list"), "subcritical.q_list: empty list");
  }
  if (has("absearch.a_small")) cfg.ab_a_small = parse_double(val("absearch.a_small"), ln("absearch.a_small"), errs, "absearch.a_small");
  if (has("absearch.b_small")) cfg.ab_b_small = parse_double(val("absearch.b_small"), ln("absearch.b_small"), errs, "absearch.b_small");
  if (has("absearch.tol")) cfg.ab_tol = parse_double(val("absearch.tol"), ln("absearch.tol"), errs, "absearch.tol");
  if (has("absearch.max_evals")) cfg.ab_max_evals = int(parse_int(val("absearch.max_evals"), ln("absearch.max_evals"), errs, "absearch.max_evals"));
  if (has("uniqueness.perturb_a")) cfg.uniq_perturb_a = parse_double(val("uniqueness.perturb_a"), ln("uniqueness.perturb_a"), errs, "uniqueness.perturb_a");
  if (has("uniqueness.perturb_b")) cfg.uniq_perturb_b = parse_double(val("uniqueness.perturb_b"), ln("uniqueness.perturb_b"), errs, "uniqueness.perturb_b");
  if (has("invariants.restarts")) cfg.inv_restarts = int(parse_int(val("invariants.restarts"), ln("invariants.restarts"), errs, "invariants.restarts"));
  if (has("seed")) cfg.seed = uint64_t(parse_int(val("seed"), ln("seed"), errs, "seed"));

  // structural validation
  if (cfg.n < 3) errs.add("model.n: dimension must be >= 3");
  if (!(cfg.L > 0.0)) errs.add("model.L: length must be positive");
  if (cfg.grid < 16) errs.add("model.grid: need at least 16 nodes");
  if (!(cfg.a > 0.0)) errs.add("problem.a: must be positive");
  if (!(cfg.b > 0.0)) errs.add("problem.b: must be positive");
  if (cfg.stepper != "imex" && cfg.stepper != "explicit")
    errs.add("flow.stepper: expected imex or explicit");
  if (!(cfg.dt_min <= cfg.dt0 && cfg.dt0 <= cfg.dt_max))
    errs.add("flow: need dt_min <= dt0 <= dt_max");
  if (!(cfg.tol_F2 > 0.0) || !(cfg.tol_residual > 0.0))
    errs.add("flow: tolerances must be positive");
  if (cfg.synthetic && cfg.R_bg_expr.empty())
    errs.add("model.R_bg: required when model.synthetic = true");
  if (cfg.synthetic && (!std::isfinite(cfg.h_bg_0) || !std::isfinite(cfg.h_bg_L)))
    errs.add("model.h_bg_0/model.h_bg_L: required when model.synthetic = true");
  if (has("subcritical.q_list"))
    for (double q : cfg.q_list)
      if (!(q >= 1.0) || !(q < double(cfg.n + 2) / (cfg.n - 2)))
        errs.add("subcritical.q_list: q must lie in [1, (n+2)/(n-2))");

  // expression sanity: parse, evaluate on a sample of [0,L]
  auto check_expr = [&](const std::string& text, const char* key, bool need_positive,
                        bool need_negative) {
    try {
      Expression e = Expression::parse(text);
      for (int i = 0; i <= 32; ++i) {
        double x = cfg.L * i / 32.0;
        double v = e.eval(x);
        if (need_positive && !(v > 0.0)) {
          errs.add(std::string(key) + ": must be positive on [0,L], fails at x=" +
                   std::to_string(x));
          return;
        }
        if (need_negative && !(v < 0.0)) {
          errs.add(std::string(key) + ": must be negative on [0,L], fails at x=" +
                   std::to_string(x));
          return;
        }
      }
    } catch (const std::exception& ex) {
      errs.add(std::string(key) + ": " + ex.what());
    }
  };
  if (!cfg.synthetic) check_expr(cfg.psi, "model.psi", true, false);
  if (cfg.synthetic) check_expr(cfg.R_bg_expr, "model.R_bg", false, true);
  if (cfg.f_expr != "background") check_expr(cfg.f_expr, "problem.f", false, true);
  if (cfg.h_spec == "values") {
    if (!std::isfinite(cfg.h_0) || !std::isfinite(cfg.h_L))
      errs.add("problem.h_0/problem.h_L: both values required");
    else if (!(cfg.h_0 < 0.0) || !(cfg.h_L < 0.0))
      errs.add("problem.h_0/problem.h_L: must be negative");
  } else if (cfg.h_spec != "background") {
    errs.add("problem.h: expected \"background\" or numeric problem.h_0/problem.h_L");
  }

  errs.raise_if_any();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

BuiltProblem build_problem(const ExperimentConfig& cfg) {
  BuiltProblem bp;
  if (cfg.synthetic) {
    Expression rbg = Expression::parse(cfg.R_bg_expr);
    Field R(size_t(cfg.grid));
    double dx = cfg.L / (cfg.grid - 1);
    for (int i = 0; i < cfg.grid; ++i) R[i] = rbg.eval(i * dx);
    bp.base = build_synthetic_model(cfg.n, cfg.L, cfg.grid, std::move(R),
                                    {cfg.h_bg_0, cfg.h_bg_L});
  } else {
    double rf = std::isfinite(cfg.R_F) ? cfg.R_F : -double(cfg.n - 1) * (cfg.n - 2);
    bp.base = build_warped_model(cfg.n, cfg.L, Expression::parse(cfg.psi), rf, cfg.grid);
  }

  // Background admissibility: use it directly when R_bg < 0 and h_bg < 0,
  // re-describe it when h_bg = 0, reject otherwise.
  const WarpedModel& base = bp.base;
  bool admissible = max_of(base.R_bg) < 0.0 && base.h_bg.left < 0.0 && base.h_bg.right < 0.0;
  bool preparable = max_of(base.R_bg) < 0.0 && std::abs(base.h_bg.left) <= 1e-13 &&
                    std::abs(base.h_bg.right) <= 1e-13;
  if (admissible) {
    bp.model = base;
  } else if (preparable) {
    bp.prep = prepare_background(base, cfg.prepare_delta);
    bp.model = bp.prep.prepared;
    bp.prepared = true;
  } else {
    throw numerical_error(
        "background is not admissible (needs R_bg < 0 with h_bg < 0 or h_bg = 0)");
  }

  bp.pd.a = cfg.a;
  bp.pd.b = cfg.b;
  if (cfg.f_expr == "background") {
    bp.pd.f = bp.model.R_bg;
  } else {
    Expression fe = Expression::parse(cfg.f_expr);
    bp.pd.f.resize(size_t(cfg.grid));
    for (int i = 0; i < cfg.grid; ++i) bp.pd.f[i] = fe.eval(bp.model.x[i]);
  }
  if (cfg.h_spec == "background") {
    bp.pd.h = bp.model.h_bg;
  } else {
    bp.pd.h = {cfg.h_0, cfg.h_L};
  }
  validate(bp.model, bp.pd);
  return bp;
}

FlowConfig make_flow_config(const ExperimentConfig& cfg, const ProblemData& pd) {
  FlowConfig fc;
  fc.pd = pd;
  fc.dt0 = cfg.dt0;
  fc.dt_min = cfg.dt_min;
  fc.dt_max = cfg.dt_max;
  fc.t_max = cfg.t_max;
  fc.tol_F2 = cfg.tol_F2;
  fc.tol_residual = cfg.tol_residual;
  fc.stepper = cfg.stepper == "explicit" ? Stepper::explicit_euler : Stepper::imex;
  return fc;
}

}  // namespace confflow
