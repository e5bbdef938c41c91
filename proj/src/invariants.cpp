#include "confflow/invariants.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "confflow/banded.hpp"

namespace confflow {

namespace {

// Symmetric tridiagonal matrix of the energy quadratic form: E[u] = u^T A u.
struct EnergyForm {
  std::vector<double> diag, off;

  static EnergyForm assemble(const WarpedModel& m) {
    const int N = m.cells;
    const double c = conformal_coeff(m.n);
    EnergyForm a;
    a.diag.assign(size_t(N) + 1, 0.0);
    a.off.assign(size_t(N), 0.0);
    for (int i = 0; i <= N; ++i) {
      double k = 0.0;
      if (i > 0) k += m.kappa[i - 1];
      if (i < N) k += m.kappa[i];
      a.diag[i] = c * k / m.dx + m.w_bulk[i] * m.R_bg[i];
    }
    a.diag.front() += 2.0 * (m.n - 1) * m.w_bdry.left * m.h_bg.left;
    a.diag.back() += 2.0 * (m.n - 1) * m.w_bdry.right * m.h_bg.right;
    for (int i = 0; i < N; ++i) a.off[i] = -c * m.kappa[i] / m.dx;
    return a;
  }

  Field multiply(const Field& u) const {
    const size_t n = diag.size();
    Field out(n);
    for (size_t i = 0; i < n; ++i) {
      double s = diag[i] * u[i];
      if (i > 0) s += off[i - 1] * u[i - 1];
      if (i + 1 < n) s += off[i] * u[i + 1];
      out[i] = s;
    }
    return out;
  }

  double quad(const Field& u) const {
    KahanSum s;
    Field au = multiply(u);
    for (size_t i = 0; i < u.size(); ++i) s.add(u[i] * au[i]);
    return s.value();
  }

  // Positive definiteness of the interior block (Dirichlet part); the
  // boundary-normalized infimum is finite iff this holds.
  bool interior_positive() const {
    std::vector<double> d(diag.begin() + 1, diag.end() - 1);
    std::vector<double> e(off.begin() + 1, off.end() - 1);
    for (size_t i = 0; i < d.size(); ++i) {
      if (!(d[i] > 0.0)) return false;
      if (i + 1 < d.size()) {
        double l = e[i] / d[i];
        d[i + 1] -= l * e[i];
      }
    }
    return true;
  }
};

// Constraint sum omega_i |u_i|^p with its support baked into omega.
struct PowerConstraint {
  Field omega;  // nonnegative weights
  double p;

  double value(const Field& u) const {
    KahanSum s;
    for (size_t i = 0; i < u.size(); ++i)
      if (omega[i] != 0.0) s.add(omega[i] * std::pow(std::abs(u[i]), p));
    return s.value();
  }
  Field gradient(const Field& u) const {
    Field g(u.size(), 0.0);
    for (size_t i = 0; i < u.size(); ++i)
      if (omega[i] != 0.0)
        g[i] = p * omega[i] * std::pow(std::abs(u[i]), p - 1.0) *
               (u[i] < 0.0 ? -1.0 : 1.0);
    return g;
  }
  void normalize(Field& u) const {
    double v = value(u);
    if (!(v > 0.0)) throw numerical_error("constraint normalization of a null field");
    double s = std::pow(v, -1.0 / p);
    for (double& x : u) x *= s;
  }
};

// SPD preconditioner: stiffness plus a positive bulk mass shift.
BandedMatrix preconditioner(const WarpedModel& m) {
  const int N = m.cells;
  const double c = conformal_coeff(m.n);
  double tau = 1.0 + sup_norm(m.R_bg) +
               2.0 * (m.n - 1) *
                   std::max(std::abs(m.h_bg.left), std::abs(m.h_bg.right)) / m.dx;
  BandedMatrix M(N + 1, 1, 1);
  for (int i = 0; i <= N; ++i) {
    double k = 0.0;
    if (i > 0) k += m.kappa[i - 1];
    if (i < N) k += m.kappa[i];
    M.at(i, i) = c * k / m.dx + tau * m.w_bulk[i];
  }
  for (int i = 0; i < N; ++i) {
    M.at(i, i + 1) = -c * m.kappa[i] / m.dx;
    M.at(i + 1, i) = -c * m.kappa[i] / m.dx;
  }
  M.factor();
  return M;
}

double dot(const Field& a, const Field& b) {
  KahanSum s;
  for (size_t i = 0; i < a.size(); ++i) s.add(a[i] * b[i]);
  return s.value();
}

// Projected preconditioned descent followed by a bordered Newton polish on
// the stationarity system A u = mu * grad c / p, c(u) = 1.
EstimateResult constrained_minimize(const WarpedModel& m, const EnergyForm& A,
                                    const PowerConstraint& C, Field u0,
                                    const DescentOptions& opts, bool monitor_divergence) {
  EstimateResult res;
  BandedMatrix M = preconditioner(m);

  PowerConstraint c = C;
  c.normalize(u0);
  Field u = u0;
  double E = A.quad(u);
  double step = 1.0;

  for (int it = 0; it < opts.descent_iters; ++it) {
    Field g = A.multiply(u);
    for (double& v : g) v *= 2.0;
    Field gc = c.gradient(u);
    double proj = dot(g, gc) / std::max(dot(gc, gc), 1e-300);
    for (size_t i = 0; i < g.size(); ++i) g[i] -= proj * gc[i];
    Field d = M.solve(g);
    double gnorm = sup_norm(d);
    if (gnorm < 1e-14 * (1.0 + std::abs(E))) break;

    bool accepted = false;
    for (int back = 0; back < 40; ++back) {
      Field trial = u;
      for (size_t i = 0; i < u.size(); ++i) trial[i] -= step * d[i];
      if (!all_positive(trial)) {
        step *= 0.5;
        continue;
      }
      c.normalize(trial);
      double Et = A.quad(trial);
      if (Et <= E - 1e-4 * step * dot(g, d)) {
        u = std::move(trial);
        E = Et;
        step = std::min(step * 1.5, 1e3);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (monitor_divergence && E < opts.divergence_floor) {
      res.divergent = true;
      res.value = E;
      res.minimizer = u;
      return res;
    }
    if (!accepted) break;
  }

  // Newton polish: unknowns (u, mu), G = A u - mu/p * grad c, c(u) = 1.
  double mu = A.quad(u);  // = E; the multiplier at the solution
  const int n = int(u.size());
  double kkt = kInf;
  for (int it = 0; it < opts.newton_iters; ++it) {
    Field gc = c.gradient(u);
    Field G = A.multiply(u);
    for (int i = 0; i < n; ++i) G[i] -= mu / c.p * gc[i];
    double Cres = c.value(u) - 1.0;
    kkt = sup_norm(G) + std::abs(Cres);
    if (kkt < opts.newton_tol * (1.0 + std::abs(mu))) break;

    BandedMatrix J(n, 1, 1);
    for (int i = 0; i < n; ++i) {
      double hess = 0.0;
      if (c.omega[i] != 0.0)
        hess = (c.p - 1.0) * c.omega[i] * std::pow(std::abs(u[i]), c.p - 2.0);
      J.at(i, i) = A.diag[i] - mu * hess;
      if (i + 1 < n) {
        J.at(i, i + 1) = A.off[i];
        J.at(i + 1, i) = A.off[i];
      }
    }
    Field x1, x2;
    try {
      J.factor();
      Field rhs1(G);
      for (double& v : rhs1) v = -v;
      x1 = J.solve(rhs1);
      Field b(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) b[i] = gc[i] / c.p;
      x2 = J.solve(b);
    } catch (const numerical_error&) {
      break;  // keep the descent certificate
    }
    double denom = dot(gc, x2);
    if (denom == 0.0) break;
    double dmu = (dot(gc, x1) + Cres) / denom;
    Field du(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) du[i] = x1[i] - dmu * x2[i];

    double damp = 1.0;
    bool moved = false;
    for (int back = 0; back < 30; ++back) {
      Field trial = u;
      for (int i = 0; i < n; ++i) trial[i] += damp * du[i];
      if (all_positive(trial)) {
        u = std::move(trial);
        mu += damp * dmu;
        moved = true;
        break;
      }
      damp *= 0.5;
    }
    if (!moved) break;
  }

  c.normalize(u);
  res.value = A.quad(u);
  res.minimizer = std::move(u);
  res.kkt_residual = kkt;
  res.stagnated = !(kkt < 1e-8 * (1.0 + std::abs(res.value)));
  return res;
}

EstimateResult multi_start(const WarpedModel& m, const EnergyForm& A,
                           const PowerConstraint& C, const DescentOptions& opts,
                           bool monitor_divergence) {
  SplitMix64 rng(opts.seed);
  EstimateResult best;
  bool have = false;
  for (int r = 0; r < std::max(1, opts.restarts); ++r) {
    Field u0(size_t(m.nodes()), 1.0);
    if (r == 1)
      for (int i = 0; i < m.nodes(); ++i)
        u0[i] = 1.0 + 0.4 * std::sin(3.14159265358979323846 * m.x[i] / m.L);
    else if (r >= 2)
      for (double& v : u0) v = rng.uniform(0.5, 1.5);
    EstimateResult cand = constrained_minimize(m, A, C, u0, opts, monitor_divergence);
    if (cand.divergent) return cand;
    if (!have || cand.value < best.value) {
      best = cand;
      have = true;
    }
  }
  return best;
}

}  // namespace

EstimateResult estimate_Y(const WarpedModel& m, const DescentOptions& opts) {
  EnergyForm A = EnergyForm::assemble(m);
  PowerConstraint C{m.w_bulk, 2.0 * m.n / (m.n - 2)};
  return multi_start(m, A, C, opts, false);
}

EstimateResult estimate_Qb(const WarpedModel& m, const DescentOptions& opts) {
  EnergyForm A = EnergyForm::assemble(m);
  if (!A.interior_positive()) {
    EstimateResult res;
    res.divergent = true;
    res.value = -kInf;
    return res;
  }
  Field omega(size_t(m.nodes()), 0.0);
  omega.front() = m.w_bdry.left;
  omega.back() = m.w_bdry.right;
  PowerConstraint C{std::move(omega), 2.0 * (m.n - 1) / (m.n - 2)};
  return multi_start(m, A, C, opts, true);
}

EstimateResult minimize_q_direct(const WarpedModel& m, const ProblemData& pd,
                                 const DescentOptions& opts) {
  validate(m, pd);
  EnergyForm A = EnergyForm::assemble(m);
  Exponents ex = Exponents::critical_for(m.n);
  BandedMatrix M = preconditioner(m);

  Field u(size_t(m.nodes()), 1.0);
  u = normalize(m, u, pd, ex).u;
  double E = A.quad(u);
  double step = 1.0;

  for (int it = 0; it < opts.descent_iters * 10; ++it) {
    Field g = A.multiply(u);
    for (double& v : g) v *= 2.0;
    // gradient of the two-term constraint
    KahanSum If_s;
    for (size_t i = 0; i < u.size(); ++i)
      If_s.add(m.w_bulk[i] * (-pd.f[i]) * std::pow(u[i], ex.e_vol));
    double If = If_s.value();
    double Ih = m.w_bdry.left * (-pd.h.left) * std::pow(u.front(), ex.e_area) +
                m.w_bdry.right * (-pd.h.right) * std::pow(u.back(), ex.e_area);
    Field gc(u.size());
    double cf = 2.0 * pd.a * std::pow(If, 2.0 / ex.e_vol - 1.0);
    for (size_t i = 0; i < u.size(); ++i)
      gc[i] = cf * m.w_bulk[i] * (-pd.f[i]) * std::pow(u[i], ex.e_vol - 1.0);
    double ch = 4.0 * (m.n - 1) * pd.b * std::pow(Ih, 2.0 / ex.e_area - 1.0);
    gc.front() += ch * m.w_bdry.left * (-pd.h.left) * std::pow(u.front(), ex.e_area - 1.0);
    gc.back() += ch * m.w_bdry.right * (-pd.h.right) * std::pow(u.back(), ex.e_area - 1.0);

    double proj = dot(g, gc) / std::max(dot(gc, gc), 1e-300);
    for (size_t i = 0; i < g.size(); ++i) g[i] -= proj * gc[i];
    Field d = M.solve(g);
    if (sup_norm(d) < 1e-13 * (1.0 + std::abs(E))) break;

    bool accepted = false;
    for (int back = 0; back < 40; ++back) {
      Field trial = u;
      for (size_t i = 0; i < u.size(); ++i) trial[i] -= step * d[i];
      if (all_positive(trial)) {
        trial = normalize(m, trial, pd, ex).u;
        double Et = A.quad(trial);
        if (Et <= E - 1e-4 * step * dot(g, d)) {
          u = std::move(trial);
          E = Et;
          step = std::min(step * 1.5, 1e3);
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }

  EstimateResult res;
  res.value = E;
  res.minimizer = std::move(u);
  return res;
}

YabResult y_ab(const WarpedModel& m, const ProblemData& pd, const FlowConfig& base) {
  FlowConfig cfg = base;
  cfg.pd = pd;
  cfg.exps = Exponents::critical_for(m.n);

  Field u0(size_t(m.nodes()), 1.0);
  FlowState s0 = init_state(m, u0, cfg);
  FlowResult r = run(s0, m, cfg);
  if (!r.converged) throw nonconvergence_error("y_ab: flow did not converge");

  YabResult out;
  out.converged = true;
  out.Y_ab = r.state.E;
  out.alpha_ab = r.state.alpha;
  out.beta_ab = r.state.beta;
  out.u_ab = r.state.u;
  ScalarsTriple tr{r.state.alpha, r.state.beta, r.state.lambda};
  out.preserve_residual =
      std::abs(preserve_const_residual(m.n, pd, tr, cfg.exps));

  if (std::isfinite(base.y_est) && std::isfinite(base.q_est)) {
    double mf = std::pow(-max_of(pd.f), double(m.n - 2) / m.n);
    double mh = 2.0 * (m.n - 1) *
                std::pow(std::min(-pd.h.left, -pd.h.right), double(m.n - 2) / (m.n - 1));
    out.sandwich_C = std::min(mf, mh);
    double lhs = std::max(base.y_est / pd.a, base.q_est / pd.b);
    out.sandwich_slack = out.sandwich_C * out.Y_ab - lhs;
    out.sandwich_checked = true;
  }
  return out;
}

namespace {

struct PathPoint {
  double s, a, b, rho;
  YabResult yab;
};

PathPoint eval_path(const WarpedModel& m, const Field& f, BoundaryPair h,
                    const ABSearchOptions& opts, double s) {
  PathPoint p;
  p.s = s;
  p.a = std::pow(opts.a_small, 1.0 - s);
  p.b = std::pow(opts.b_small, s);
  ProblemData pd{p.a, p.b, f, h};
  p.yab = y_ab(m, pd, opts.flow);
  p.rho = std::sqrt(-p.yab.Y_ab * p.yab.alpha_ab) / p.yab.beta_ab;
  return p;
}

}  // namespace

ABSearchResult ab_search(const WarpedModel& m, const Field& f, BoundaryPair h,
                         const ABSearchOptions& opts) {
  ABSearchResult res;
  ABSearchOptions o = opts;

  PathPoint lo, hi;
  int enlarge = 0;
  for (;;) {
    // the two endpoint flows are independent; run them concurrently
    auto lo_job = std::async(std::launch::async,
                             [&] { return eval_path(m, f, h, o, 0.0); });
    hi = eval_path(m, f, h, o, 1.0);
    lo = lo_job.get();
    res.evals += 2;
    res.path.emplace_back(0.0, lo.rho);
    res.path.emplace_back(1.0, hi.rho);
    if (lo.rho > 1.0 && hi.rho < 1.0) break;
    if (++enlarge > 3)
      throw numerical_error("ab_search: endpoints fail to bracket rho = 1");
    if (!(lo.rho > 1.0)) o.a_small = std::max(o.a_small * 0.1, 1e-6);
    if (!(hi.rho < 1.0)) o.b_small = std::max(o.b_small * 0.1, 1e-6);
  }

  // Illinois false position on log(rho) over the path parameter.
  double slo = 0.0, shi = 1.0;
  double glo = std::log(lo.rho), ghi = std::log(hi.rho);
  PathPoint best = std::abs(lo.rho - 1.0) < std::abs(hi.rho - 1.0) ? lo : hi;
  int side = 0;
  while (res.evals < o.max_evals) {
    double s = (slo * ghi - shi * glo) / (ghi - glo);
    double margin = 1e-3 * (shi - slo);
    s = std::min(std::max(s, slo + margin), shi - margin);
    PathPoint p = eval_path(m, f, h, o, s);
    ++res.evals;
    res.path.emplace_back(s, p.rho);
    if (std::abs(p.rho - 1.0) < std::abs(best.rho - 1.0)) best = p;
    if (std::abs(p.rho - 1.0) < o.tol) break;
    double g = std::log(p.rho);
    if (g > 0.0) {
      if (side == -1) ghi *= 0.5;  // stale-end damping
      slo = s;
      glo = g;
      side = -1;
    } else {
      if (side == +1) glo *= 0.5;
      shi = s;
      ghi = g;
      side = +1;
    }
    if (shi - slo < 1e-15) break;
  }
  if (!(std::abs(best.rho - 1.0) < o.tol))
    throw nonconvergence_error("ab_search: |rho - 1| did not reach tolerance");

  res.a_star = best.a;
  res.b_star = best.b;
  res.rho = best.rho;
  res.Y_ab = best.yab.Y_ab;
  res.alpha_ab = best.yab.alpha_ab;
  res.beta_ab = best.yab.beta_ab;

  double lambda_inf = -best.yab.Y_ab;
  res.mu_star = std::pow(lambda_inf / best.yab.alpha_ab, 0.25 * (m.n - 2));

  // scaling algebra self-check: the interior and boundary routes to the
  // scaling constant must differ by exactly rho^{-(n-2)/2}
  double mu_h = std::pow(lambda_inf / best.yab.beta_ab, 0.5 * (m.n - 2));
  double consistency =
      res.mu_star / mu_h * std::pow(best.rho, 0.5 * (m.n - 2)) - 1.0;
  if (std::abs(consistency) > 1e-9)
    throw numerical_error("ab_search: scaling-constant routes disagree");

  res.u_scaled = best.yab.u_ab;
  for (double& v : res.u_scaled) v *= res.mu_star;

  CurvatureData c = curvatures(m, res.u_scaled);
  double rmax = 0.0;
  for (int i = 1; i < m.cells; ++i) rmax = std::max(rmax, std::abs(c.R_g[i] - f[i]));
  res.resid_R = rmax;
  res.resid_h = std::max(std::abs(c.h_g.left - h.left), std::abs(c.h_g.right - h.right));
  return res;
}

}  // namespace confflow
