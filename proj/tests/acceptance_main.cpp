// Acceptance suite: every release-gating property, each with its pinned
// tolerance and runtime budget, one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "confflow/elliptic.hpp"
#include "confflow/invariants.hpp"
#include "confflow/runner.hpp"

using namespace confflow;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  std::string label;
  bool pass = true;
  double seconds = 0.0;
  double budget = 0.0;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::vector<Criterion> g_results;

void run_criterion(int id, const std::string& label, double budget_s,
                   const std::function<void(Criterion&)>& body) {
  Criterion c;
  c.id = id;
  c.label = label;
  c.budget = budget_s;
  auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.pass = false;
    c.detail += std::string("exception: ") + e.what();
  }
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (c.seconds > c.budget) {
    c.pass = false;
    c.detail += (c.detail.empty() ? "" : "; ") + std::string("over budget");
  }
  std::printf("%s criterion %2d: %-58s [%6.2f s / %g s]%s%s\n",
              c.pass ? "PASS" : "FAIL", c.id, c.label.c_str(), c.seconds, c.budget,
              c.detail.empty() ? "" : " -- ", c.detail.c_str());
  std::fflush(stdout);
  g_results.push_back(c);
}

WarpedModel cylinder(int n, int grid = 201) {
  return build_warped_model(n, 1.0, Expression::parse("1"),
                            -double(n - 1) * (n - 2), grid);
}

struct Prepared {
  WarpedModel model;
  ProblemData pd;
  BackgroundPrep prep;
};

Prepared prepared_cylinder(int n, int grid = 201) {
  Prepared p;
  p.prep = prepare_background(cylinder(n, grid), 0.5);
  p.model = p.prep.prepared;
  p.pd.a = 1.0;
  p.pd.b = 1.0;
  p.pd.f = p.prep.R_new;
  p.pd.h = p.prep.h_new;
  return p;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// kept per dimension for criterion 9
FlowResult g_flow_runs[6];

}  // namespace

int main() {
  std::printf("acceptance suite: grid 201 cylinders, n = 3, 4, 5\n");

  // 1. Exactness of the discrete Green identity and integration by parts.
  run_criterion(1, "discrete Green identity and pairing symmetry at 10 eps", 5.0,
                [](Criterion& c) {
    SplitMix64 rng(20240808);
    double worst_green = 0.0, worst_sym = 0.0;
    for (int n : {3, 4, 5}) {
      WarpedModel m = cylinder(n);
      for (int t = 0; t < 100; ++t) {
        Field u(static_cast<size_t>(m.nodes())), w(static_cast<size_t>(m.nodes()));
        for (double& v : u) v = rng.uniform(-1.0, 1.0);
        for (double& v : w) v = rng.uniform(-1.0, 1.0);

        Field lap = laplacian(m, u);
        BoundaryPair nd = normal_derivative(m, u);
        double scale = 0.0;
        for (int i = 0; i < m.nodes(); ++i) scale += std::abs(m.w_bulk[i] * lap[i]);
        scale += std::abs(m.w_bdry.left * nd.left) + std::abs(m.w_bdry.right * nd.right);
        double defect =
            std::abs(integrate_bulk(m, lap) - integrate_boundary(m, nd)) / (kEps * scale);
        worst_green = std::max(worst_green, defect);

        auto pairing = [&](const Field& a, const Field& b) {
          Field lb = laplacian(m, b);
          BoundaryPair db = normal_derivative(m, b);
          Field prod(a.size());
          for (size_t i = 0; i < a.size(); ++i) prod[i] = a[i] * lb[i];
          double sc = 0.0;
          for (size_t i = 0; i < a.size(); ++i) sc += std::abs(m.w_bulk[i] * prod[i]);
          sc += std::abs(m.w_bdry.left * a.front() * db.left) +
                std::abs(m.w_bdry.right * a.back() * db.right);
          double v = integrate_bulk(m, prod) -
                     integrate_boundary(m, {a.front() * db.left, a.back() * db.right});
          return std::make_pair(v, sc);
        };
        auto [uw, s1] = pairing(u, w);
        auto [wu, s2] = pairing(w, u);
        worst_sym = std::max(worst_sym, std::abs(uw - wu) / (kEps * (s1 + s2 + 1.0)));
      }
    }
    c.require(worst_green <= 10.0, "Green defect " + fmt(worst_green) + " eps");
    c.require(worst_sym <= 10.0, "symmetry defect " + fmt(worst_sym) + " eps");
    c.detail = "max defects: green " + fmt(worst_green) + " eps, symmetry " +
               fmt(worst_sym) + " eps";
  });

  // 2. Background preparation certificates and second-order eigenvalue.
  run_criterion(2, "background preparation: signs, Rayleigh bound, O(h^2)", 10.0,
                [](Criterion& c) {
    WarpedModel base = cylinder(3);
    BackgroundPrep prep = prepare_background(base, 0.5);
    double vol = integrate_bulk(base, Field(201, 1.0));
    double area = integrate_boundary(base, {1.0, 1.0});
    c.require(prep.lambda1 < 0.0, "lambda1 not negative");
    c.require(prep.lambda1 <= -prep.eps0 * vol / area + 1e-12, "Rayleigh bound");
    c.require(max_of(prep.R_new) < 0.0, "R_new sign");
    c.require(prep.h_new.left < 0.0 && prep.h_new.right < 0.0, "h_new sign");
    c.require(prep.E_unit < 0.0, "unit-factor energy sign");

    double lam[3];
    int grids[3] = {101, 201, 401};
    for (int k = 0; k < 3; ++k)
      lam[k] = prepare_background(cylinder(3, grids[k]), 0.5).lambda1;
    double ratio = (lam[0] - lam[1]) / (lam[1] - lam[2]);
    c.require(ratio > 3.4 && ratio < 4.6,
              "refinement ratio " + fmt(ratio) + " not ~4");
    c.detail = "lambda1 " + fmt(prep.lambda1) + ", refinement ratio " + fmt(ratio);
  });

  // 3. Flow runs on all shipped models.
  for (int n : {3, 4, 5}) {
    run_criterion(3, "flow run n=" + std::to_string(n) +
                         ": conservation, monotonicity, limit residuals",
                  60.0, [n](Criterion& c) {
      Prepared p = prepared_cylinder(n);
      FlowConfig cfg;
      cfg.pd = p.pd;
      cfg.y_est = estimate_Y(p.model).value;
      cfg.q_est = estimate_Qb(p.model).value;
      FlowState s0 = init_state(p.model, perturbed_constant(p.model, 0.05, 11), cfg);
      FlowResult r = run(s0, p.model, cfg);
      g_flow_runs[n] = r;

      const DiagSummary& d = r.trace.diag;
      c.require(r.converged, "flow did not converge");
      c.require(d.constraint_dev_max <= 4.0 * kEps,
                "constraint deviation " + fmt(d.constraint_dev_max));
      c.require(d.energy_monotone, "energy not monotone");
      c.require(d.lambda_monotone, "lambda not monotone");
      c.require(r.state.F2 < 1e-8, "terminal F2 " + fmt(r.state.F2));
      c.require(r.resid_R < 1e-6, "interior residual " + fmt(r.resid_R));
      c.require(r.resid_h < 1e-6, "boundary residual " + fmt(r.resid_h));
      c.require(d.floor_violations == 0, "floor violations");
      c.require(d.ceiling_violations == 0, "ceiling violations");
      c.require(d.velocity_violations == 0, "velocity ceiling violations");
      c.require(d.preserve_residual_max < 1e-10,
                "conserved combination " + fmt(d.preserve_residual_max));
      c.detail = "F2 " + fmt(r.state.F2) + ", resid (" + fmt(r.resid_R) + ", " +
                 fmt(r.resid_h) + "), constraint dev " + fmt(d.constraint_dev_max);
    });
  }

  // 4. First-order rate identity between lambda and F2.
  run_criterion(4, "d lambda/dt = (n-2)/2 F2 at first order under dt halving", 30.0,
                [](Criterion& c) {
    Prepared p = prepared_cylinder(3);
    FlowConfig cfg;
    cfg.pd = p.pd;
    FlowState s = init_state(p.model, perturbed_constant(p.model, 0.05, 13), cfg);
    double errs[3];
    int k = 0;
    for (double dt : {3.2e-4, 1.6e-4, 8e-5}) {
      FlowState st = s;
      st.dt = dt;
      FlowState next = step(st, p.model, cfg);
      c.require(std::abs(next.t - s.t - dt) < 1e-15, "step rejected the probe dt");
      double rate = (next.lambda - st.lambda) / (next.t - st.t);
      errs[k++] = std::abs(rate - 0.5 * (p.model.n - 2) * st.F2);
    }
    double r1 = errs[0] / errs[1], r2 = errs[1] / errs[2];
    c.require(r1 > 1.7 && r1 < 2.3, "ratio1 " + fmt(r1));
    c.require(r2 > 1.7 && r2 < 2.3, "ratio2 " + fmt(r2));
    c.detail = "error ratios " + fmt(r1) + ", " + fmt(r2);
  });

  // 5. Monotone iteration certificates.
  run_criterion(5, "monotone iteration: unit limit, barriers, level independence",
                10.0, [](Criterion& c) {
    Prepared p = prepared_cylinder(3);
    MonotoneConfig mc = make_monotone_config(p.model, p.pd);
    EllipticSolution sol = monotone_solve(p.model, p.pd, mc);
    double dist1 = 0.0;
    for (double v : sol.u) dist1 = std::max(dist1, std::abs(v - 1.0));
    c.require(dist1 < 1e-8, "distance to the unit factor " + fmt(dist1));
    c.require(sol.monotone_flag, "iterates not monotone");
    c.require(min_of(sol.u) >= mc.eps - 1e-12 && max_of(sol.u) <= 1.0 / mc.eps + 1e-12,
              "barrier violation");

    MonotoneConfig mc2 = mc;
    mc2.eps = 0.5 * mc.eps;
    auto [N2, H2] = choose_shifts(p.model, p.pd, mc2.eps);
    mc2.shift_N = N2;
    mc2.shift_H = H2;
    mc2.max_iter = 2000000;
    EllipticSolution sol2 = monotone_solve(p.model, p.pd, mc2);
    double gap = 0.0;
    for (int i = 0; i < p.model.nodes(); ++i)
      gap = std::max(gap, std::abs(sol.u[i] - sol2.u[i]));
    c.require(gap < 1e-7, "level dependence " + fmt(gap));

    // constant-coefficient manufactured solution
    const double cc = 1.4;
    Field Rf(201, -3.0);
    WarpedModel ms = build_synthetic_model(3, 1.0, 201, Rf, {-1.2, -1.2});
    ProblemData pds;
    pds.f.assign(201, std::pow(cc, -4.0) * -3.0);
    pds.h = {std::pow(cc, -2.0) * -1.2, std::pow(cc, -2.0) * -1.2};
    EllipticSolution sc = monotone_solve(ms, pds, make_monotone_config(ms, pds));
    double distc = 0.0;
    for (double v : sc.u) distc = std::max(distc, std::abs(v - cc));
    c.require(distc < 1e-8, "constant-data distance " + fmt(distc));
    c.detail = "unit gap " + fmt(dist1) + ", level gap " + fmt(gap) +
               ", constant gap " + fmt(distc);
  });

  // 6. Parameter search realizes the prescribed data; cross-solver agreement.
  run_criterion(6, "parameter search: |rho-1| < 1e-6, realization, cross-solver",
                300.0, [](Criterion& c) {
    Prepared p = prepared_cylinder(3);
    ProblemData pd = p.pd;
    pd.f.resize(201);
    for (int i = 0; i < 201; ++i) pd.f[i] = -1.0 - p.model.x[i];
    pd.h = {-1.5, -0.8};

    ABSearchOptions opts;
    opts.flow.pd = pd;
    ABSearchResult res = ab_search(p.model, pd.f, pd.h, opts);

    double rho0 = kNaN, rho1 = kNaN;
    for (auto& [s, r] : res.path) {
      if (s == 0.0) rho0 = r;
      if (s == 1.0) rho1 = r;
    }
    c.require(rho0 > 1.0, "left endpoint rho " + fmt(rho0));
    c.require(rho1 < 1.0, "right endpoint rho " + fmt(rho1));
    c.require(std::abs(res.rho - 1.0) < 1e-6, "|rho-1| " + fmt(std::abs(res.rho - 1.0)));
    c.require(res.resid_R < 1e-4, "scaled-limit interior residual " + fmt(res.resid_R));
    c.require(res.resid_h < 1e-4, "scaled-limit boundary residual " + fmt(res.resid_h));

    MonotoneConfig mc = make_monotone_config(p.model, pd);
    mc.max_iter = 2000000;
    EllipticSolution sol = monotone_solve(p.model, pd, mc);
    double gap = 0.0;
    for (int i = 0; i < p.model.nodes(); ++i)
      gap = std::max(gap, std::abs(sol.u[i] - res.u_scaled[i]));
    c.require(gap < 1e-4, "cross-solver gap " + fmt(gap));
    c.detail = "a* " + fmt(res.a_star) + ", b* " + fmt(res.b_star) + ", |rho-1| " +
               fmt(std::abs(res.rho - 1.0)) + ", cross-solver gap " + fmt(gap) +
               ", evals " + std::to_string(res.evals);
  });

  // 7. Subcritical exponent ladder approaches the constrained minimum. The
  // ladder 1.5, 2.2, 2.8, 2.95 closes on the critical exponent 3, i.e. the
  // four-dimensional cylinder.
  run_criterion(7, "subcritical ladder q -> 3 reaches Y_{1,1} within 5e-3", 180.0,
                [](Criterion& c) {
    Prepared p = prepared_cylinder(4);
    FlowConfig base;
    base.pd = p.pd;
    FlowState s0 = init_state(p.model, Field(201, 1.0), base);
    FlowResult crit = run(s0, p.model, base);
    c.require(crit.converged, "critical flow did not converge");
    double Y11 = crit.state.E;

    double gaps[4];
    int k = 0;
    for (double q : {1.5, 2.2, 2.8, 2.95}) {
      SubcriticalResult sr = subcritical_solve(p.model, p.pd, q, base);
      gaps[k++] = std::abs(sr.mu_q - Y11);
    }
    c.require(gaps[3] < gaps[2], "tail not monotone");
    c.require(gaps[3] < 5e-3, "terminal gap " + fmt(gaps[3]));
    c.detail = "gaps " + fmt(gaps[0]) + " " + fmt(gaps[1]) + " " + fmt(gaps[2]) + " " +
               fmt(gaps[3]) + ", Y11 " + fmt(Y11);
  });

  // 8. Uniqueness criterion: equal limit energies mean equal limits.
  run_criterion(8, "uniqueness: |E gap| < 1e-8 implies sup-norm gap < 1e-6", 120.0,
                [](Criterion& c) {
    Prepared p = prepared_cylinder(3);
    FlowConfig cfg;
    cfg.pd = p.pd;
    UniquenessReport rep =
        uniqueness_probe(p.model, cfg, perturbed_constant(p.model, 0.05, 31),
                         perturbed_constant(p.model, 0.03, 37));
    c.require(rep.converged_a && rep.converged_b, "a probe flow failed");
    c.require(rep.E_gap < 1e-8, "E gap " + fmt(rep.E_gap));
    c.require(rep.u_gap < 1e-6, "u gap " + fmt(rep.u_gap));
    c.detail = "E gap " + fmt(rep.E_gap) + ", u gap " + fmt(rep.u_gap);
  });

  // 9. Terminal decay chain from the criterion-3 runs.
  run_criterion(9, "terminal F_p chain below 1e-6 for p in {2, n/2, n-1, 2n}", 5.0,
                [](Criterion& c) {
    for (int n : {3, 4, 5}) {
      const FlowResult& r = g_flow_runs[n];
      c.require(!r.trace.fp.empty(), "missing flow run");
      if (r.trace.fp.empty()) continue;
      const FpSample& last = r.trace.fp.back();
      for (double v : {last.f2, last.f_half_n, last.f_nm1, last.f_2n})
        c.require(v < 1e-6, "F_p " + fmt(v) + " at n=" + std::to_string(n));
      if (n == 3)
        c.detail = "n=3 terminal chain: " + fmt(last.f2) + ", " + fmt(last.f_half_n) +
                   ", " + fmt(last.f_nm1) + ", " + fmt(last.f_2n);
    }
  });

  // 10. Determinism of the experiment runner.
  run_criterion(10, "byte-identical traces for identical config and seed", 60.0,
                [](Criterion& c) {
    fs::path root = fs::temp_directory_path() / "confflow_acceptance";
    fs::remove_all(root);
    ExperimentConfig cfg =
        load_config_file(std::string(CONFIG_DIR) + "/cyl3.conf");
    RunOutcome r1 = run_command(cfg, "flow", 0, (root / "a").string());
    RunOutcome r2 = run_command(cfg, "flow", 0, (root / "b").string());
    c.require(r1.exit_code == 0 && r2.exit_code == 0, "runner failed");
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    std::string t1 = slurp(fs::path(r1.run_dir) / "trace.csv");
    std::string t2 = slurp(fs::path(r2.run_dir) / "trace.csv");
    c.require(!t1.empty() && t1 == t2, "traces differ");
    std::string s1 = slurp(fs::path(r1.run_dir) / "summary.json");
    std::string s2 = slurp(fs::path(r2.run_dir) / "summary.json");
    c.require(!s1.empty() && s1 == s2, "summaries differ");
    c.detail = "trace " + std::to_string(t1.size()) + " bytes, twice";
  });

  int failures = 0;
  for (const Criterion& c : g_results)
    if (!c.pass) ++failures;
  std::printf("%d/%zu criteria passed\n", int(g_results.size()) - failures,
              g_results.size());
  return failures;
}
