#include "confflow/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace confflow {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw numerical_error("cannot write " + p.string());
  out << text;
}

std::string trace_csv(const FlowTrace& trace) {
  std::string s = "t,E,lambda,alpha,beta,F2,umin,umax,drift,dt\n";
  for (const TraceRow& r : trace.rows) {
    s += fmt(r.t) + "," + fmt(r.E) + "," + fmt(r.lambda) + "," + fmt(r.alpha) + "," +
         fmt(r.beta) + "," + fmt(r.F2) + "," + fmt(r.umin) + "," + fmt(r.umax) + "," +
         fmt(r.drift) + "," + fmt(r.dt) + "\n";
  }
  return s;
}

std::string fp_chain_csv(const FlowTrace& trace, int n) {
  std::ostringstream h;
  h << "t,F2,F" << fmt(0.5 * n) << ",F" << (n - 1) << ",F" << (2 * n) << "\n";
  std::string s = h.str();
  for (const FpSample& r : trace.fp)
    s += fmt(r.t) + "," + fmt(r.f2) + "," + fmt(r.f_half_n) + "," + fmt(r.f_nm1) + "," +
         fmt(r.f_2n) + "\n";
  return s;
}

std::string field_csv(const WarpedModel& m, const Field& u, const char* name) {
  std::string s = std::string("x,") + name + "\n";
  for (int i = 0; i < m.nodes(); ++i) s += fmt(m.x[i]) + "," + fmt(u[i]) + "\n";
  return s;
}

json flow_summary(const WarpedModel& m, const FlowResult& r, const FlowConfig& cfg) {
  const DiagSummary& d = r.trace.diag;
  json j;
  j["converged"] = r.converged;
  j["steps"] = r.steps;
  j["t_end"] = r.state.t;
  j["E_inf"] = r.state.E;
  j["lambda_inf"] = r.state.lambda;
  j["alpha_inf"] = r.state.alpha;
  j["beta_inf"] = r.state.beta;
  j["F2_end"] = r.state.F2;
  j["resid_R"] = r.resid_R;
  j["resid_h"] = r.resid_h;
  j["constraint_dev_max"] = d.constraint_dev_max;
  j["drift_max"] = d.drift_max;
  j["energy_monotone"] = d.energy_monotone;
  j["lambda_monotone"] = d.lambda_monotone;
  j["preserve_residual_max"] = d.preserve_residual_max;
  j["floor_violations"] = d.floor_violations;
  j["ceiling_violations"] = d.ceiling_violations;
  j["velocity_violations"] = d.velocity_violations;
  j["volume_violations"] = d.volume_violations;
  j["floor_margin_min"] = d.floor_margin_min;
  j["ceiling_margin_min"] = d.ceiling_margin_min;
  j["velocity_margin_min"] = d.velocity_margin_min;
  if (!r.trace.fp.empty()) {
    const FpSample& last = r.trace.fp.back();
    j["fp_terminal"] = {{"F2", last.f2},
                        {"F_n_half", last.f_half_n},
                        {"F_n_minus_1", last.f_nm1},
                        {"F_2n", last.f_2n}};
  }
  (void)m;
  (void)cfg;
  return j;
}

json model_summary(const BuiltProblem& bp) {
  json j;
  j["n"] = bp.model.n;
  j["L"] = bp.model.L;
  j["grid"] = bp.model.nodes();
  j["prepared"] = bp.prepared;
  if (bp.prepared) {
    j["eps0"] = bp.prep.eps0;
    j["lambda1"] = bp.prep.lambda1;
    j["E_unit"] = bp.prep.E_unit;
    j["R_new_max"] = max_of(bp.prep.R_new);
    j["h_new_0"] = bp.prep.h_new.left;
    j["h_new_L"] = bp.prep.h_new.right;
  }
  return j;
}

struct RunContext {
  fs::path dir;
  std::vector<std::string> files;
  void emit(const std::string& name, const std::string& content) {
    write_text(dir / name, content);
    files.push_back(name);
  }
};

std::string next_run_id(const fs::path& out_dir, const std::string& command,
                        const std::string& hash, uint64_t seed) {
  int k = 0;
  std::error_code ec;
  for (auto& e : fs::directory_iterator(out_dir, ec))
    if (e.is_directory()) ++k;
  std::ostringstream id;
  id << command << "-" << hash.substr(0, 8) << "-s" << seed << "-" << (k + 1);
  return id.str();
}

void append_registry(const fs::path& out_dir, const std::string& run_id,
                     const std::string& hash, const std::string& command,
                     long wall_ms, const std::vector<std::string>& files) {
  auto now = std::chrono::system_clock::now();
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch());
  std::ofstream reg(out_dir / "registry.tsv", std::ios::app);
  reg << run_id << "\t" << secs.count() << "\t" << hash << "\t" << command << "\t"
      << wall_ms << "\t";
  for (size_t i = 0; i < files.size(); ++i) reg << (i ? ";" : "") << files[i];
  reg << "\n";
}

}  // namespace

RunOutcome run_command(const ExperimentConfig& cfg, const std::string& command,
                       uint64_t seed, const std::string& out_dir) {
  RunOutcome out;
  auto started = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  std::string hash = cfg.config_hash();
  out.run_id = next_run_id(out_dir, command, hash, seed);
  RunContext ctx;
  ctx.dir = fs::path(out_dir) / out.run_id;
  fs::create_directories(ctx.dir);
  out.run_dir = ctx.dir.string();

  json summary;
  summary["command"] = command;
  summary["config_hash"] = hash;
  summary["seed"] = seed;

  try {
    if (command == "report") {
      std::string table = render_report(out_dir, {});
      ctx.emit("report.txt", table);
      out.message = table;
    } else {
      BuiltProblem bp = build_problem(cfg);
      summary["model"] = model_summary(bp);

      if (command == "prepare") {
        if (!bp.prepared)
          throw numerical_error("prepare: background is already admissible");
        ctx.emit("phi.csv", field_csv(bp.base, bp.prep.phi, "phi"));
        ctx.emit("R_new.csv", field_csv(bp.model, bp.prep.R_new, "R_new"));
      } else if (command == "flow") {
        FlowConfig fc = make_flow_config(cfg, bp.pd);
        DescentOptions dopt;
        dopt.seed = seed + 17;
        dopt.restarts = cfg.inv_restarts;
        fc.y_est = estimate_Y(bp.model, dopt).value;
        EstimateResult qe = estimate_Qb(bp.model, dopt);
        fc.q_est = qe.divergent ? kNaN : qe.value;
        summary["Y_est"] = fc.y_est;
        summary["Q_est"] = qe.divergent ? json("-inf") : json(fc.q_est);
        Field u0 = perturbed_constant(bp.model, cfg.perturb, seed);
        FlowResult r = run(init_state(bp.model, u0, fc), bp.model, fc);
        summary["flow"] = flow_summary(bp.model, r, fc);
        ctx.emit("trace.csv", trace_csv(r.trace));
        ctx.emit("fp_chain.csv", fp_chain_csv(r.trace, bp.model.n));
        ctx.emit("u_final.csv", field_csv(bp.model, r.state.u, "u"));
        if (!r.converged) out.exit_code = kNonConvergence;
      } else if (command == "solve") {
        MonotoneConfig mc = make_monotone_config(bp.model, bp.pd);
        mc.tol = cfg.monotone_tol;
        mc.max_iter = cfg.monotone_max_iter;
        EllipticSolution sol = monotone_solve(bp.model, bp.pd, mc);
        summary["solve"] = {{"iterations", sol.iterations},
                            {"eps", sol.eps},
                            {"shift_N", mc.shift_N},
                            {"shift_H", mc.shift_H},
                            {"residual_interior", sol.residual_interior},
                            {"residual_boundary", sol.residual_boundary},
                            {"monotone", sol.monotone_flag},
                            {"u_min", min_of(sol.u)},
                            {"u_max", max_of(sol.u)}};
        ctx.emit("u_solution.csv", field_csv(bp.model, sol.u, "u"));
      } else if (command == "invariants") {
        DescentOptions dopt;
        dopt.seed = seed + 17;
        dopt.restarts = cfg.inv_restarts;
        EstimateResult ye = estimate_Y(bp.model, dopt);
        EstimateResult qe = estimate_Qb(bp.model, dopt);
        FlowConfig fc = make_flow_config(cfg, bp.pd);
        fc.y_est = ye.value;
        fc.q_est = qe.divergent ? kNaN : qe.value;
        YabResult yr = y_ab(bp.model, bp.pd, fc);
        double rho = std::sqrt(-yr.Y_ab * yr.alpha_ab) / yr.beta_ab;
        summary["invariants"] = {
            {"Y_est", ye.value},
            {"Y_stagnated", ye.stagnated},
            {"Q_est", qe.divergent ? json("-inf") : json(qe.value)},
            {"Q_divergent", qe.divergent},
            {"Y_ab", yr.Y_ab},
            {"alpha_ab", yr.alpha_ab},
            {"beta_ab", yr.beta_ab},
            {"rho", rho},
            {"preserve_residual", yr.preserve_residual},
            {"sandwich_C", yr.sandwich_C},
            {"sandwich_slack", yr.sandwich_slack}};
        ctx.emit("u_ab.csv", field_csv(bp.model, yr.u_ab, "u"));
      } else if (command == "absearch") {
        ABSearchOptions opts;
        opts.a_small = cfg.ab_a_small;
        opts.b_small = cfg.ab_b_small;
        opts.tol = cfg.ab_tol;
        opts.max_evals = cfg.ab_max_evals;
        opts.flow = make_flow_config(cfg, bp.pd);
        ABSearchResult r = ab_search(bp.model, bp.pd.f, bp.pd.h, opts);
        summary["absearch"] = {{"a_star", r.a_star},   {"b_star", r.b_star},
                               {"rho", r.rho},         {"mu_star", r.mu_star},
                               {"resid_R", r.resid_R}, {"resid_h", r.resid_h},
                               {"Y_ab", r.Y_ab},       {"alpha_ab", r.alpha_ab},
                               {"beta_ab", r.beta_ab}, {"evals", r.evals}};
        std::string path_csv = "s,rho\n";
        for (auto& [s, rho] : r.path) path_csv += fmt(s) + "," + fmt(rho) + "\n";
        ctx.emit("path.csv", path_csv);
        ctx.emit("u_scaled.csv", field_csv(bp.model, r.u_scaled, "u"));
      } else if (command == "subcritical-sweep") {
        FlowConfig fc = make_flow_config(cfg, bp.pd);
        YabResult yr = y_ab(bp.model, bp.pd, fc);
        // points are independent runs; evaluate them on a worker pool and
        // collect in list order so the emitted files stay deterministic
        std::vector<std::future<SubcriticalResult>> jobs;
        for (double q : cfg.q_list)
          jobs.push_back(std::async(std::launch::async, [&, q] {
            return subcritical_solve(bp.model, bp.pd, q, fc);
          }));
        json arr = json::array();
        std::string sweep_csv = "q,mu_q,resid_interior,resid_boundary\n";
        for (size_t i = 0; i < jobs.size(); ++i) {
          SubcriticalResult sr = jobs[i].get();
          arr.push_back({{"q", cfg.q_list[i]},
                         {"mu_q", sr.mu_q},
                         {"lambda_q", sr.lambda_q},
                         {"alpha_q", sr.alpha_q},
                         {"beta_q", sr.beta_q},
                         {"residual_interior", sr.residual_interior},
                         {"residual_boundary", sr.residual_boundary}});
          sweep_csv += fmt(cfg.q_list[i]) + "," + fmt(sr.mu_q) + "," +
                       fmt(sr.residual_interior) + "," + fmt(sr.residual_boundary) +
                       "\n";
        }
        summary["subcritical"] = {{"points", arr}, {"Y_ab", yr.Y_ab}};
        ctx.emit("sweep.csv", sweep_csv);
      } else if (command == "uniqueness-probe") {
        FlowConfig fc = make_flow_config(cfg, bp.pd);
        Field u0a = perturbed_constant(bp.model, cfg.uniq_perturb_a, seed);
        Field u0b = perturbed_constant(bp.model, cfg.uniq_perturb_b, seed + 101);
        UniquenessReport rep = uniqueness_probe(bp.model, fc, u0a, u0b);
        summary["uniqueness"] = {{"E_a", rep.E_a},
                                 {"E_b", rep.E_b},
                                 {"E_gap", rep.E_gap},
                                 {"u_gap", rep.u_gap}};
      } else {
        throw config_error("unknown command: " + command);
      }
    }
  } catch (const config_error& e) {
    out.exit_code = kConfigError;
    out.message = e.what();
  } catch (const nonconvergence_error& e) {
    out.exit_code = kNonConvergence;
    out.message = e.what();
  } catch (const numerical_error& e) {
    out.exit_code = kNumericalError;
    out.message = e.what();
  }

  if (out.exit_code == kConfigError || out.exit_code == kNumericalError)
    summary["error"] = out.message;
  ctx.emit("summary.json", summary.dump(2) + "\n");
  out.files = ctx.files;

  auto wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                     std::chrono::steady_clock::now() - started)
                     .count();
  append_registry(out_dir, out.run_id, hash, command, long(wall_ms), ctx.files);
  return out;
}

std::string render_report(const std::string& out_dir,
                          const std::vector<std::string>& run_filter) {
  std::ifstream reg(fs::path(out_dir) / "registry.tsv");
  if (!reg) throw config_error("no registry at " + out_dir + "/registry.tsv");

  std::ostringstream table;
  char line[4096];
  table << "run_id                            command           lambda_inf     "
           "alpha_inf      beta_inf       resid_R        resid_h        wall_ms\n";
  while (reg.getline(line, sizeof line)) {
    std::istringstream ls(line);
    std::string run_id, ts, hash, command, wall, files;
    std::getline(ls, run_id, '\t');
    std::getline(ls, ts, '\t');
    std::getline(ls, hash, '\t');
    std::getline(ls, command, '\t');
    std::getline(ls, wall, '\t');
    std::getline(ls, files, '\t');
    if (!run_filter.empty() &&
        std::find(run_filter.begin(), run_filter.end(), run_id) == run_filter.end())
      continue;
    if (command == "report") continue;

    std::string lam = "-", alpha = "-", beta = "-", rR = "-", rh = "-";
    std::ifstream sj(fs::path(out_dir) / run_id / "summary.json");
    if (sj) {
      json j = json::parse(sj, nullptr, false);
      if (!j.is_discarded()) {
        const json* src = nullptr;
        if (j.contains("flow")) src = &j["flow"];
        else if (j.contains("invariants")) src = &j["invariants"];
        else if (j.contains("absearch")) src = &j["absearch"];
        auto grab = [&](const char* k1, const char* k2) -> std::string {
          char buf[32];
          if (src && src->contains(k1) && (*src)[k1].is_number()) {
            std::snprintf(buf, sizeof buf, "%.6g", (*src)[k1].get<double>());
            return buf;
          }
          if (src && k2 && src->contains(k2) && (*src)[k2].is_number()) {
            std::snprintf(buf, sizeof buf, "%.6g", (*src)[k2].get<double>());
            return buf;
          }
          return "-";
        };
        lam = grab("lambda_inf", nullptr);
        alpha = grab("alpha_inf", "alpha_ab");
        beta = grab("beta_inf", "beta_ab");
        rR = grab("resid_R", nullptr);
        rh = grab("resid_h", nullptr);
        if (lam == "-" && src && src->contains("Y_ab") && (*src)["Y_ab"].is_number()) {
          char buf[32];  // lambda_inf = -Y_ab at the limit
          std::snprintf(buf, sizeof buf, "%.6g", -(*src)["Y_ab"].get<double>());
          lam = buf;
        }
      }
    }
    char row[512];
    std::snprintf(row, sizeof row,
                  "%-33s %-17s %-14s %-14s %-14s %-14s %-14s %s\n", run_id.c_str(),
                  command.c_str(), lam.c_str(), alpha.c_str(), beta.c_str(),
                  rR.c_str(), rh.c_str(), wall.c_str());
    table << row;
  }
  return table.str();
}

}  // namespace confflow
