#include "confflow/flow.hpp"

#include <algorithm>
#include <cmath>

#include "confflow/banded.hpp"

namespace confflow {

namespace {

const double kMonotoneTol = 1e-12;  // relative slack for E / lambda monotonicity

Exponents effective_exponents(const WarpedModel& m, const FlowConfig& cfg) {
  if (cfg.exps.e_vol == 0.0) return Exponents::critical_for(m.n);
  return cfg.exps;
}

void refresh_scalars(FlowState& s, const WarpedModel& m, const FlowConfig& cfg,
                     const Exponents& ex) {
  ScalarsTriple tr = functionals(m, s.u, cfg.pd, ex);
  s.alpha = tr.alpha;
  s.beta = tr.beta;
  s.lambda = tr.lambda;
  s.E = energy(m, s.u);
  s.constraint_value = constraint(m, s.u, cfg.pd, ex);
  Velocity v = velocity(m, s.u, cfg.pd, ex);
  s.F2 = F_p_given(m, s.u, cfg.pd, 2.0, ex, v, tr);
}

// The evolution is discretized variationally: with A the (constant,
// tridiagonal) matrix of the energy quadratic form and Theta the constraint,
// the weak form of the motion is
//     M(u) du/dt = -((n-2)/4) (A u + lambda * grad Theta / 2),
// where M(u) = grad Theta / (2u) is the positive diagonal metric weight. At
// interior nodes this is exactly du/dt = ((n-2)/4)(alpha R_g / f - lambda) u;
// at the two boundary nodes it is the sum of the interior and dynamic
// boundary laws weighted by the bulk half-cell and the boundary measure (the
// one-sided stencils of the flux closure and of B cancel by parts, so the
// boundary ODE stays implicitly coupled through the flux). Crucially,
// u.(A u + lambda grad Theta/2) = E + lambda Theta = 0 exactly for
// lambda = -E/Theta, so fixed points of the projected step are exactly the
// discrete constrained Euler-Lagrange states; a strong collocation of the
// boundary rows instead admits spurious velocity = const = O(dx^2) stalls.
struct WeakOperators {
  std::vector<double> a_diag, a_off;  // energy form matrix
  Field mass;                         // M(u_k), positive diagonal

  static WeakOperators assemble(const WarpedModel& m, const FlowConfig& cfg,
                                const Exponents& ex, const FlowState& s) {
    const int N = m.cells;
    const double c = conformal_coeff(m.n);
    WeakOperators w;
    w.a_diag.assign(size_t(N) + 1, 0.0);
    w.a_off.assign(size_t(N), 0.0);
    for (int i = 0; i <= N; ++i) {
      double k = 0.0;
      if (i > 0) k += m.kappa[i - 1];
      if (i < N) k += m.kappa[i];
      w.a_diag[i] = c * k / m.dx + m.w_bulk[i] * m.R_bg[i];
    }
    w.a_diag.front() += 2.0 * (m.n - 1) * m.w_bdry.left * m.h_bg.left;
    w.a_diag.back() += 2.0 * (m.n - 1) * m.w_bdry.right * m.h_bg.right;
    for (int i = 0; i < N; ++i) w.a_off[i] = -c * m.kappa[i] / m.dx;

    const ProblemData& pd = cfg.pd;
    w.mass.resize(size_t(N) + 1);
    for (int i = 0; i <= N; ++i)
      w.mass[i] = m.w_bulk[i] * (-pd.f[i]) * std::pow(s.u[i], ex.e_R - 1.0) / s.alpha;
    w.mass.front() += 2.0 * (m.n - 1) * m.w_bdry.left * (-pd.h.left) *
                      std::pow(s.u.front(), ex.e_h - 1.0) / s.beta;
    w.mass.back() += 2.0 * (m.n - 1) * m.w_bdry.right * (-pd.h.right) *
                     std::pow(s.u.back(), ex.e_h - 1.0) / s.beta;
    return w;
  }

  Field residual(const FlowState& s) const {
    // A u + lambda M u  (M u = grad Theta / 2 at the assembly state)
    const size_t n = a_diag.size();
    Field r(n);
    for (size_t i = 0; i < n; ++i) {
      double v = a_diag[i] * s.u[i];
      if (i > 0) v += a_off[i - 1] * s.u[i - 1];
      if (i + 1 < n) v += a_off[i] * s.u[i + 1];
      r[i] = v + s.lambda * mass[i] * s.u[i];
    }
    return r;
  }
};

// Implicit step: [ (1 + dt c4 lambda) M + dt c4 A ] u_new = M u_old, with the
// mass and the scalars frozen at step start.
Field imex_solve(const FlowState& s, const WarpedModel& m, const FlowConfig& cfg,
                 const Exponents& ex, double dt) {
  WeakOperators w = WeakOperators::assemble(m, cfg, ex, s);
  const double c4 = 0.25 * (m.n - 2);
  const int nn = m.nodes();
  BandedMatrix S(nn, 1, 1);
  for (int i = 0; i < nn; ++i)
    S.at(i, i) = (1.0 + dt * c4 * s.lambda) * w.mass[i] + dt * c4 * w.a_diag[i];
  for (int i = 0; i + 1 < nn; ++i) {
    S.at(i, i + 1) = dt * c4 * w.a_off[i];
    S.at(i + 1, i) = dt * c4 * w.a_off[i];
  }
  S.factor();
  Field rhs(static_cast<size_t>(nn));
  for (int i = 0; i < nn; ++i) rhs[i] = w.mass[i] * s.u[i];
  return S.solve(rhs);
}

Field explicit_solve(const FlowState& s, const WarpedModel& m, const FlowConfig& cfg,
                     const Exponents& ex, double dt) {
  WeakOperators w = WeakOperators::assemble(m, cfg, ex, s);
  Field r = w.residual(s);
  const double c4 = 0.25 * (m.n - 2);
  Field out = s.u;
  for (size_t i = 0; i < out.size(); ++i) out[i] -= dt * c4 * r[i] / w.mass[i];
  return out;
}

}  // namespace

Field perturbed_constant(const WarpedModel& m, double amplitude, uint64_t seed) {
  SplitMix64 rng(seed ^ 0x5bd1e995u);
  double k = 1.0 + double(rng.next() % 3);
  double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  double mix = rng.uniform(0.2, 0.5);
  Field u(m.nodes());
  for (int i = 0; i < m.nodes(); ++i) {
    double t = m.x[i] / m.L;
    u[i] = 1.0 + amplitude * (std::sin(3.14159265358979323846 * t) +
                              mix * std::sin(2.0 * 3.14159265358979323846 * k * t + phase));
  }
  return u;
}

FlowState init_state(const WarpedModel& m, const Field& u0, const FlowConfig& cfg) {
  validate(m, cfg.pd);
  if (!cfg.renorm)
    throw config_error("flow renormalization cannot be disabled");
  if (!(max_of(m.R_bg) < 0.0) || !(m.h_bg.left < 0.0) || !(m.h_bg.right < 0.0))
    throw numerical_error(
        "flow requires an admissible background: R_bg < 0 and h_bg < 0 everywhere");
  require_positive(u0, "init_state");

  Exponents ex = effective_exponents(m, cfg);
  FlowState s;
  s.t = 0.0;
  s.u = normalize(m, u0, cfg.pd, ex).u;
  refresh_scalars(s, m, cfg, ex);
  if (!(s.E < 0.0))
    throw numerical_error("initial data rejected: normalized energy is not negative");
  s.dt = cfg.dt0;
  return s;
}

FlowState step(const FlowState& s, const WarpedModel& m, const FlowConfig& cfg) {
  Exponents ex = effective_exponents(m, cfg);
  double dt = s.dt > 0.0 ? s.dt : cfg.dt0;

  for (;;) {
    if (dt < cfg.dt_min)
      throw numerical_error("flow step size underflow at t=" + std::to_string(s.t) +
                            " (dt=" + std::to_string(dt) + ", E=" + std::to_string(s.E) +
                            ", F2=" + std::to_string(s.F2) + ")");

    Field u_raw;
    bool ok = true;
    try {
      u_raw = cfg.stepper == Stepper::imex ? imex_solve(s, m, cfg, ex, dt)
                                           : explicit_solve(s, m, cfg, ex, dt);
    } catch (const numerical_error&) {
      ok = false;
    }
    if (ok && (!all_finite(u_raw) || !all_positive(u_raw))) ok = false;

    if (ok) {
      FlowState next;
      next.t = s.t + dt;
      double theta_raw = constraint(m, u_raw, cfg.pd, ex);
      next.drift = std::abs(theta_raw - 1.0);
      next.u = normalize(m, u_raw, cfg.pd, ex).u;
      refresh_scalars(next, m, cfg, ex);

      bool energy_ok = next.E <= s.E + kMonotoneTol * std::abs(s.E);
      bool lambda_ok = next.lambda >= s.lambda - kMonotoneTol * std::abs(s.lambda);
      if (energy_ok && lambda_ok) {
        next.clean_steps = s.clean_steps + 1;
        next.dt = dt;
        if (next.clean_steps % 10 == 0) next.dt = std::min(dt * 1.2, cfg.dt_max);
        return next;
      }
    }
    dt *= 0.5;
  }
}

DiagBounds make_diag_bounds(const FlowState& epoch, const WarpedModel& m,
                            const FlowConfig& cfg) {
  DiagBounds b;
  const ProblemData& pd = cfg.pd;
  const double ec = double(m.n + 2) / (m.n - 2);

  b.u0_pow_min = kInf;
  b.u0_pow_max = -kInf;
  for (double v : epoch.u) {
    double p = std::pow(v, ec);
    b.u0_pow_min = std::min(b.u0_pow_min, p);
    b.u0_pow_max = std::max(b.u0_pow_max, p);
  }
  b.mf_min = kInf;
  b.mf_max = -kInf;
  for (size_t i = 0; i < pd.f.size(); ++i) {
    double r = m.R_bg[i] / pd.f[i];
    b.mf_min = std::min(b.mf_min, r);
    b.mf_max = std::max(b.mf_max, r);
  }
  b.mh_min = std::min(m.h_bg.left / pd.h.left, m.h_bg.right / pd.h.right);
  b.mh_max = std::max(m.h_bg.left / pd.h.left, m.h_bg.right / pd.h.right);

  // Velocity ceiling evaluated at the diagnostic epoch: the epoch metric
  // plays the role of the initial metric, so the ceiling is the sup of the
  // epoch velocity field against zero.
  Exponents ex = effective_exponents(m, cfg);
  Velocity v0 = velocity(m, epoch.u, pd, ex);
  double c0 = 0.0;
  for (double vi : v0.interior) c0 = std::max(c0, vi);
  c0 = std::max(c0, std::max(v0.boundary.left, v0.boundary.right));
  b.C0 = c0;

  b.alpha_min = b.alpha_max = epoch.alpha;
  b.beta_min = b.beta_max = epoch.beta;
  b.lambda_min = b.lambda_max = epoch.lambda;

  // Volume bounds need the conformal invariant estimates.
  if (std::isfinite(cfg.y_est) && cfg.y_est < 0.0 && epoch.E < 0.0) {
    double v_lo = std::pow(epoch.E / cfg.y_est, double(m.n) / (m.n - 2));
    double min_neg_f = -max_of(pd.f);
    double v_hi = std::pow(pd.a, -double(m.n) / (m.n - 2)) / min_neg_f;
    b.V0 = std::max({v_hi, 1.0 / v_lo, 1.0});
  }
  if (std::isfinite(cfg.q_est) && cfg.q_est < 0.0 && epoch.E < 0.0) {
    double s_lo = std::pow(epoch.E / cfg.q_est, double(m.n - 1) / (m.n - 2));
    double denom = std::min(-pd.h.left, -pd.h.right);
    double s_hi =
        std::pow(2.0 * (m.n - 1) * pd.b, -double(m.n - 1) / (m.n - 2)) / denom;
    b.S0 = std::max({s_hi, 1.0 / s_lo, 1.0});
  }
  return b;
}

DiagRecord diagnostics(const FlowState& prev, const FlowState& next,
                       const WarpedModel& m, const FlowConfig& cfg,
                       const DiagBounds& bounds) {
  Exponents ex = effective_exponents(m, cfg);
  DiagRecord r;
  const double ec = double(m.n + 2) / (m.n - 2);
  const double slack = 1e-12;

  if (ex.critical) {
    // Conformal-factor floor and ceiling from the running functional extrema.
    double lam_hi = std::max(bounds.lambda_max, next.lambda);
    double lam_lo = std::min(bounds.lambda_min, next.lambda);
    double a_lo = std::min(bounds.alpha_min, next.alpha);
    double a_hi = std::max(bounds.alpha_max, next.alpha);
    double be_lo = std::min(bounds.beta_min, next.beta);
    double be_hi = std::max(bounds.beta_max, next.beta);

    double floor_c = bounds.u0_pow_min;
    if (lam_hi > 0.0) {
      floor_c = std::min(floor_c,
                         std::pow(a_lo / lam_hi * bounds.mf_min, 0.25 * (m.n + 2)));
      floor_c = std::min(floor_c,
                         std::pow(be_lo / lam_hi * bounds.mh_min, 0.5 * (m.n + 2)));
    }
    double ceil_c = bounds.u0_pow_max;
    if (lam_lo > 0.0) {
      ceil_c = std::max(ceil_c,
                        std::pow(a_hi / lam_lo * bounds.mf_max, 0.25 * (m.n + 2)));
      ceil_c = std::max(ceil_c,
                        std::pow(be_hi / lam_lo * bounds.mh_max, 0.5 * (m.n + 2)));
    }

    double umin_pow = std::pow(min_of(next.u), ec);
    double umax_pow = std::pow(max_of(next.u), ec);
    r.floor_margin = umin_pow - floor_c;
    r.ceiling_margin = ceil_c - umax_pow;
    r.floor_ok = r.floor_margin >= -slack * std::max(1.0, floor_c);
    r.ceiling_ok = r.ceiling_margin >= -slack * std::max(1.0, ceil_c);

    // One-sided velocity ceiling; the interior field at the two end nodes
    // is a closure artifact, so the sup runs over the interior nodes and the
    // boundary values.
    Velocity v = velocity(m, next.u, cfg.pd, ex);
    double vmax = std::max(v.boundary.left, v.boundary.right);
    for (int i = 1; i < m.cells; ++i) vmax = std::max(vmax, v.interior[i]);
    r.velocity_margin = bounds.C0 + 1e-8 - vmax;
    r.velocity_ok = r.velocity_margin >= 0.0;

    ScalarsTriple tr{next.alpha, next.beta, next.lambda};
    r.preserve_residual = std::abs(preserve_const_residual(m.n, cfg.pd, tr, ex));
    r.preserve_ok = r.preserve_residual < 1e-10;

    if (std::isfinite(bounds.V0) || std::isfinite(bounds.S0)) {
      r.volume_checked = true;
      r.volume_ok = true;
      r.volume_margin = kInf;
      if (std::isfinite(bounds.V0)) {
        KahanSum vol;
        for (size_t i = 0; i < next.u.size(); ++i)
          vol.add(m.w_bulk[i] * std::pow(next.u[i], ex.e_vol));
        double vm = std::min(bounds.V0 - vol.value(), vol.value() - 1.0 / bounds.V0);
        r.volume_margin = std::min(r.volume_margin, vm);
      }
      if (std::isfinite(bounds.S0)) {
        double area = m.w_bdry.left * std::pow(next.u.front(), ex.e_area) +
                      m.w_bdry.right * std::pow(next.u.back(), ex.e_area);
        double sm = std::min(bounds.S0 - area, area - 1.0 / bounds.S0);
        r.volume_margin = std::min(r.volume_margin, sm);
      }
      r.volume_ok = r.volume_margin >= -slack;
    }
  }

  // Rate identity d lambda / dt = (n-2)/2 F2, first order in dt.
  double dt = next.t - prev.t;
  if (dt > 0.0)
    r.lambda_rate_gap =
        std::abs((next.lambda - prev.lambda) / dt - 0.5 * (m.n - 2) * prev.F2);
  return r;
}

std::pair<double, double> limit_residuals(const WarpedModel& m, const FlowState& s,
                                          const FlowConfig& cfg) {
  Exponents ex = effective_exponents(m, cfg);
  CurvatureData c = curvatures(m, s.u, ex);
  double ratio_f = s.lambda / s.alpha;
  double rmax = 0.0;
  for (int i = 1; i < m.cells; ++i)
    rmax = std::max(rmax, std::abs(c.R_g[i] - ratio_f * cfg.pd.f[i]));
  double ratio_h = s.lambda / s.beta;
  double hmax = std::max(std::abs(c.h_g.left - ratio_h * cfg.pd.h.left),
                         std::abs(c.h_g.right - ratio_h * cfg.pd.h.right));
  return {rmax, hmax};
}

FlowResult run(const FlowState& initial, const WarpedModel& m, const FlowConfig& cfg) {
  FlowResult res;
  FlowState cur = initial;
  DiagBounds bounds = make_diag_bounds(cur, m, cfg);
  FlowTrace& trace = res.trace;
  const Exponents ex = effective_exponents(m, cfg);

  auto push_row = [&](const FlowState& st) {
    trace.rows.push_back({st.t, st.E, st.lambda, st.alpha, st.beta, st.F2,
                          min_of(st.u), max_of(st.u), st.drift, st.dt});
  };
  auto push_fp = [&](const FlowState& st) {
    Velocity v = velocity(m, st.u, cfg.pd, ex);
    ScalarsTriple tr{st.alpha, st.beta, st.lambda};
    trace.fp.push_back({st.t, F_p_given(m, st.u, cfg.pd, 2.0, ex, v, tr),
                        F_p_given(m, st.u, cfg.pd, 0.5 * m.n, ex, v, tr),
                        F_p_given(m, st.u, cfg.pd, double(m.n - 1), ex, v, tr),
                        F_p_given(m, st.u, cfg.pd, 2.0 * m.n, ex, v, tr)});
  };
  push_row(cur);
  push_fp(cur);

  while (cur.t < cfg.t_max) {
    FlowState next = step(cur, m, cfg);
    ++res.steps;

    DiagRecord d = diagnostics(cur, next, m, cfg, bounds);
    DiagSummary& ds = trace.diag;
    if (!d.floor_ok) ++ds.floor_violations;
    if (!d.ceiling_ok) ++ds.ceiling_violations;
    if (!d.velocity_ok) ++ds.velocity_violations;
    if (d.volume_checked && !d.volume_ok) ++ds.volume_violations;
    ds.floor_margin_min = std::min(ds.floor_margin_min, d.floor_margin);
    ds.ceiling_margin_min = std::min(ds.ceiling_margin_min, d.ceiling_margin);
    ds.velocity_margin_min = std::min(ds.velocity_margin_min, d.velocity_margin);
    if (std::isfinite(d.preserve_residual))
      ds.preserve_residual_max = std::max(ds.preserve_residual_max, d.preserve_residual);
    ds.constraint_dev_max =
        std::max(ds.constraint_dev_max, std::abs(next.constraint_value - 1.0));
    ds.drift_max = std::max(ds.drift_max, next.drift);
    if (next.E > cur.E + kMonotoneTol * std::abs(cur.E)) ds.energy_monotone = false;
    if (next.lambda < cur.lambda - kMonotoneTol * std::abs(cur.lambda))
      ds.lambda_monotone = false;
    if (std::isfinite(d.lambda_rate_gap))
      ds.lambda_rate_gap_max = std::max(ds.lambda_rate_gap_max, d.lambda_rate_gap);

    // Running extrema for the next diagnostic.
    bounds.alpha_min = std::min(bounds.alpha_min, next.alpha);
    bounds.alpha_max = std::max(bounds.alpha_max, next.alpha);
    bounds.beta_min = std::min(bounds.beta_min, next.beta);
    bounds.beta_max = std::max(bounds.beta_max, next.beta);
    bounds.lambda_min = std::min(bounds.lambda_min, next.lambda);
    bounds.lambda_max = std::max(bounds.lambda_max, next.lambda);

    cur = next;
    push_row(cur);
    if (res.steps % cfg.fp_log_every == 0) push_fp(cur);

    // Convergence thresholds scale with the state's own magnitudes: at
    // extreme (a, b) the limit has lambda/alpha ~ 1/a and the absolute
    // residual floor scales along with it.
    double scale_F2 = std::max(1.0, cur.lambda * cur.lambda);
    if (cur.F2 < cfg.tol_F2 * scale_F2) {
      auto [rr, rh] = limit_residuals(m, cur, cfg);
      double scale_R = std::max(1.0, std::abs(cur.lambda / cur.alpha) * sup_norm(cfg.pd.f));
      double scale_h = std::max(1.0, std::abs(cur.lambda / cur.beta) *
                                         std::max(std::abs(cfg.pd.h.left),
                                                  std::abs(cfg.pd.h.right)));
      // the one-sided boundary stencil floor sits an order above the
      // interior flux-form floor
      if (rr < cfg.tol_residual * scale_R && rh < 10.0 * cfg.tol_residual * scale_h) {
        res.converged = true;
        res.resid_R = rr;
        res.resid_h = rh;
        break;
      }
    }
  }

  push_fp(cur);
  if (!res.converged) {
    auto [rr, rh] = limit_residuals(m, cur, cfg);
    res.resid_R = rr;
    res.resid_h = rh;
  }
  res.state = cur;
  return res;
}

UniquenessReport uniqueness_probe(const WarpedModel& m, const FlowConfig& cfg,
                                  const Field& u0_a, const Field& u0_b) {
  UniquenessReport rep;
  FlowResult ra = run(init_state(m, u0_a, cfg), m, cfg);
  FlowResult rb = run(init_state(m, u0_b, cfg), m, cfg);
  rep.converged_a = ra.converged;
  rep.converged_b = rb.converged;
  if (!ra.converged || !rb.converged)
    throw nonconvergence_error("uniqueness probe: a flow failed to converge");
  rep.E_a = ra.state.E;
  rep.E_b = rb.state.E;
  rep.E_gap = std::abs(ra.state.E - rb.state.E);
  double gap = 0.0;
  for (size_t i = 0; i < ra.state.u.size(); ++i)
    gap = std::max(gap, std::abs(ra.state.u[i] - rb.state.u[i]));
  rep.u_gap = gap;
  return rep;
}

}  // namespace confflow
