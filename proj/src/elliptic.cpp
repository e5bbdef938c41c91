#include "confflow/elliptic.hpp"

#include <algorithm>
#include <cmath>

#include "confflow/banded.hpp"

namespace confflow {

namespace {

// Shifted Robin operator rows; shared by the linear solve and by tests via
// solve_linear_robin. Interior rows are the flux-form conformal operator,
// boundary rows collocate the flux-extrapolated normal derivative.
BandedMatrix robin_matrix(const WarpedModel& m, double shift_N, double shift_H) {
  const int N = m.cells;
  const double dx = m.dx;
  const double c = conformal_coeff(m.n);
  BandedMatrix A(N + 1, 3, 3);

  for (int i = 1; i < N; ++i) {
    double wi = m.w_bulk[i];
    double cl = m.kappa[i - 1] / (dx * wi);
    double cr = m.kappa[i] / (dx * wi);
    A.at(i, i - 1) = -c * cl;
    A.at(i, i) = c * (cl + cr) + m.R_bg[i] + shift_N;
    A.at(i, i + 1) = -c * cr;
  }
  {
    // d_nu u(0) = -s * (2F_1/2 - 3/2 F_3/2 + 1/2 F_5/2)/kappa_b
    double sc = m.nu_scale.left / (dx * m.flux_left());
    A.at(0, 0) = sc * 2.0 * m.kappa[0] + 0.5 * (m.n - 2) * (m.h_bg.left + shift_H);
    A.at(0, 1) = -sc * (2.0 * m.kappa[0] + 1.5 * m.kappa[1]);
    A.at(0, 2) = sc * (1.5 * m.kappa[1] + 0.5 * m.kappa[2]);
    A.at(0, 3) = -sc * 0.5 * m.kappa[2];
  }
  {
    double sc = m.nu_scale.right / (dx * m.flux_right());
    A.at(N, N) = sc * 2.0 * m.kappa[N - 1] + 0.5 * (m.n - 2) * (m.h_bg.right + shift_H);
    A.at(N, N - 1) = -sc * (2.0 * m.kappa[N - 1] + 1.5 * m.kappa[N - 2]);
    A.at(N, N - 2) = sc * (1.5 * m.kappa[N - 2] + 0.5 * m.kappa[N - 3]);
    A.at(N, N - 3) = -sc * 0.5 * m.kappa[N - 3];
  }
  return A;
}

// Symmetric tridiagonal LDL^T; returns false if any pivot is not positive.
bool ldlt_tridiag(std::vector<double>& diag, std::vector<double>& off) {
  const size_t n = diag.size();
  for (size_t i = 0; i < n; ++i) {
    if (!(diag[i] > 0.0)) return false;
    if (i + 1 < n) {
      double l = off[i] / diag[i];
      diag[i + 1] -= l * off[i];
      off[i] = l;  // store the unit-lower entry
    }
  }
  return true;
}

void ldlt_solve(const std::vector<double>& diag, const std::vector<double>& off,
                std::vector<double>& b) {
  const size_t n = diag.size();
  for (size_t i = 1; i < n; ++i) b[i] -= off[i - 1] * b[i - 1];
  for (size_t i = 0; i < n; ++i) b[i] /= diag[i];
  for (size_t i = n - 1; i > 0; --i) b[i - 1] -= off[i - 1] * b[i];
}

}  // namespace

Field solve_linear_robin(const WarpedModel& m, double shift_N, double shift_H,
                         const Field& F, const BoundaryPair& G) {
  check_same_size(F, size_t(m.nodes()), "solve_linear_robin rhs");
  for (double r : m.R_bg)
    if (!(r + shift_N > 0.0))
      throw numerical_error("linear Robin solve: interior shift not coercive");
  if (!(m.h_bg.left + shift_H > 0.0) || !(m.h_bg.right + shift_H > 0.0))
    throw numerical_error("linear Robin solve: boundary shift not coercive");

  BandedMatrix A = robin_matrix(m, shift_N, shift_H);
  A.factor();
  Field rhs = F;
  rhs.front() = G.left;
  rhs.back() = G.right;
  return A.solve(rhs);
}

double choose_epsilon(const WarpedModel& m, const ProblemData& pd) {
  validate(m, pd);
  if (!(max_of(m.R_bg) < 0.0) || !(m.h_bg.left < 0.0) || !(m.h_bg.right < 0.0))
    throw numerical_error("choose_epsilon needs an admissible background (R_bg < 0, h_bg < 0)");

  const double pf = 0.25 * (m.n - 2);
  const double ph = 0.5 * (m.n - 2);
  double r1 = kInf, r3 = kInf;
  for (size_t i = 0; i < pd.f.size(); ++i) {
    double q = pd.f[i] / m.R_bg[i];
    r1 = std::min(r1, std::pow(q, pf));
    r3 = std::min(r3, std::pow(1.0 / q, pf));
  }
  double hl = pd.h.left / m.h_bg.left, hr = pd.h.right / m.h_bg.right;
  double r2 = std::pow(std::min(hl, hr), ph);
  double r4 = std::pow(std::min(1.0 / hl, 1.0 / hr), ph);
  return 0.5 * std::min(std::min(r1, r2), std::min(r3, r4));
}

std::pair<double, double> choose_shifts(const WarpedModel& m, const ProblemData& pd,
                                        double eps) {
  if (!(eps > 0.0) || !(eps < 1.0))
    throw numerical_error("sub/super-solution level must lie in (0,1)");
  double sup_neg_f = -min_of(pd.f);
  double sup_neg_R = -min_of(m.R_bg);
  double sup_neg_h = std::max(-pd.h.left, -pd.h.right);
  double sup_neg_hbg = std::max(-m.h_bg.left, -m.h_bg.right);
  double N = sup_neg_f * (double(m.n + 2) / (m.n - 2)) *
                 std::pow(eps, -4.0 / (m.n - 2)) +
             sup_neg_R + 1.0;
  double H = sup_neg_h * (double(m.n) / (m.n - 2)) * std::pow(eps, -2.0 / (m.n - 2)) +
             sup_neg_hbg + 1.0;
  return {N, H};
}

MonotoneConfig make_monotone_config(const WarpedModel& m, const ProblemData& pd) {
  MonotoneConfig cfg;
  cfg.eps = choose_epsilon(m, pd);
  auto [N, H] = choose_shifts(m, pd, cfg.eps);
  cfg.shift_N = N;
  cfg.shift_H = H;
  return cfg;
}

EllipticSolution monotone_solve(const WarpedModel& m, const ProblemData& pd,
                                const MonotoneConfig& cfg) {
  validate(m, pd);
  const int n = m.n;
  const int nn = m.nodes();
  const double eR = double(n + 2) / (n - 2);
  const double eh = double(n) / (n - 2);
  const double eps = cfg.eps;
  if (!(eps > 0.0) || !(eps < 1.0))
    throw numerical_error("monotone_solve: invalid eps");

  BandedMatrix A = robin_matrix(m, cfg.shift_N, cfg.shift_H);
  A.factor();

  EllipticSolution sol;
  sol.eps = eps;
  sol.monotone_flag = true;
  Field u(size_t(nn), eps);

  auto residuals = [&](const Field& w) {
    Field Lw = apply_L(m, w);
    BoundaryPair Bw = apply_B(m, w);
    double ri = 0.0;
    for (int i = 1; i < m.cells; ++i)
      ri = std::max(ri, std::abs(Lw[i] - pd.f[i] * std::pow(w[i], eR)));
    double rb = std::max(
        std::abs(Bw.left - 0.5 * (n - 2) * pd.h.left * std::pow(w.front(), eh)),
        std::abs(Bw.right - 0.5 * (n - 2) * pd.h.right * std::pow(w.back(), eh)));
    return std::make_pair(ri, rb);
  };

  // Iterate-comparison slack: the banded solve leaves conditioning-amplified
  // roundoff well above machine epsilon, so an exact comparison would flag
  // noise; genuine maximum-principle failures show at the increment scale.
  const double slack = std::max(64.0 * kEps, 1e-3 * cfg.tol);

  for (int it = 1; it <= cfg.max_iter; ++it) {
    Field rhs(static_cast<size_t>(nn));
    for (int i = 0; i < nn; ++i)
      rhs[i] = pd.f[i] * std::pow(u[i], eR) + cfg.shift_N * u[i];
    rhs.front() = 0.5 * (n - 2) *
                  (pd.h.left * std::pow(u.front(), eh) + cfg.shift_H * u.front());
    rhs.back() = 0.5 * (n - 2) *
                 (pd.h.right * std::pow(u.back(), eh) + cfg.shift_H * u.back());
    Field next = A.solve(rhs);

    double inc = 0.0;
    for (int i = 0; i < nn; ++i) {
      double d = next[i] - u[i];
      inc = std::max(inc, std::abs(d));
      if (d < -slack * (1.0 + std::abs(u[i]))) sol.monotone_flag = false;
      if (next[i] < eps - slack || next[i] > 1.0 / eps + slack)
        sol.monotone_flag = false;
    }
    if (!sol.monotone_flag)
      throw numerical_error(
          "monotone iteration violated monotonicity or the [eps, 1/eps] barriers "
          "(discrete maximum-principle failure)");
    u = std::move(next);
    sol.iterations = it;

    if (inc < cfg.tol) {
      auto [ri, rb] = residuals(u);
      sol.residual_interior = ri;
      sol.residual_boundary = rb;
      // The fixed-point residual scale is the frozen Lipschitz constant of
      // the reaction, roughly the shifts; an absolute 10*tol is unattainable.
      double scale = cfg.shift_N + cfg.shift_H + 1.0;
      if (ri > 10.0 * cfg.tol * scale || rb > 10.0 * cfg.tol * scale)
        throw nonconvergence_error(
            "monotone iteration stopped with residuals above the accepted scale");
      sol.u = std::move(u);
      return sol;
    }
  }
  throw nonconvergence_error("monotone iteration did not converge in " +
                             std::to_string(cfg.max_iter) + " iterations");
}

SteklovResult steklov_min(const WarpedModel& m, double eps0) {
  if (!(eps0 > 0.0)) throw numerical_error("steklov_min requires eps0 > 0");
  const int N = m.cells;
  const double dx = m.dx;
  const double c = conformal_coeff(m.n);

  // A = c K - eps0 diag(w_bulk), symmetric tridiagonal: K from the Dirichlet
  // form, boundary rows are the natural (variational) ones.
  std::vector<double> diag(size_t(N) + 1), off(static_cast<size_t>(N));
  for (int i = 0; i <= N; ++i) {
    double k = 0.0;
    if (i > 0) k += m.kappa[i - 1];
    if (i < N) k += m.kappa[i];
    diag[i] = c * k / dx - eps0 * m.w_bulk[i];
  }
  for (int i = 0; i < N; ++i) off[i] = -c * m.kappa[i] / dx;

  // Condense the interior onto the boundary pair: S = A_bb - A_bi A_ii^-1 A_ib.
  std::vector<double> idiag(diag.begin() + 1, diag.end() - 1);
  std::vector<double> ioff(off.begin() + 1, off.end() - 1);
  if (!ldlt_tridiag(idiag, ioff))
    throw numerical_error(
        "steklov_min: interior form is not positive definite (eps0 too large)");

  const size_t ni = idiag.size();
  std::vector<double> e0(ni, 0.0), eN(ni, 0.0);
  e0.front() = off.front();  // coupling of node 0 into the interior
  eN.back() = off.back();
  ldlt_solve(idiag, ioff, e0);
  ldlt_solve(idiag, ioff, eN);

  double S00 = diag.front() - off.front() * e0.front();
  double SNN = diag.back() - off.back() * eN.back();
  double S0N = -off.front() * eN.front();  // = -off.back() * e0.back() by symmetry

  // 2x2 generalized symmetric problem S z = lambda W z, W = boundary weights.
  double w0 = m.w_bdry.left, wN = m.w_bdry.right;
  double a = S00 / w0, b = S0N / std::sqrt(w0 * wN), d = SNN / wN;
  double tr = 0.5 * (a + d);
  double disc = std::sqrt(std::max(0.0, 0.25 * (a - d) * (a - d) + b * b));
  double lam = tr - disc;  // refined below by a Rayleigh quotient

  // eigenvector of the symmetrized 2x2, mapped back through W^(1/2)
  double y0, yN;
  if (std::abs(b) > 1e-300) {
    y0 = b;
    yN = lam - a;
  } else if (a <= d) {
    y0 = 1.0;
    yN = 0.0;
  } else {
    y0 = 0.0;
    yN = 1.0;
  }
  double z0 = y0 / std::sqrt(w0), zN = yN / std::sqrt(wN);

  SteklovResult out;
  out.lambda1 = lam;
  out.phi.assign(size_t(N) + 1, 0.0);
  out.phi.front() = z0;
  out.phi.back() = zN;
  std::vector<double> interior(ni, 0.0);
  interior.front() = -off.front() * z0;
  interior.back() += -off.back() * zN;
  ldlt_solve(idiag, ioff, interior);
  for (size_t i = 0; i < ni; ++i) out.phi[i + 1] = interior[i];

  // boundary-norm 1, sign-normalized positive
  double norm = std::sqrt(w0 * z0 * z0 + wN * zN * zN);
  if (!(norm > 0.0)) throw numerical_error("steklov_min: degenerate eigenvector");
  double sign = (out.phi[size_t(N) / 2] < 0.0) ? -1.0 : 1.0;
  for (double& v : out.phi) v *= sign / norm;
  if (!all_positive(out.phi))
    throw numerical_error("steklov_min: ground state changed sign (discretization problem)");

  // Report the Rayleigh quotient of the computed eigenvector (extended
  // accumulation: the form entries are ~1/dx^2 and cancel to O(lambda1)).
  const Field& phi = out.phi;
  long double quad = 0.0L;
  for (int i = 0; i <= N; ++i) {
    long double av = static_cast<long double>(diag[i]) * phi[i];
    if (i > 0) av += static_cast<long double>(off[i - 1]) * phi[i - 1];
    if (i < N) av += static_cast<long double>(off[i]) * phi[i + 1];
    quad += phi[i] * av;
  }
  long double bnorm = static_cast<long double>(w0) * phi.front() * phi.front() +
                      static_cast<long double>(wN) * phi.back() * phi.back();
  out.lambda1 = double(quad / bnorm);
  return out;
}

BackgroundPrep prepare_background(const WarpedModel& m, double delta) {
  if (!(delta > 0.0)) throw config_error("prepare_background: delta must be positive");
  if (!(max_of(m.R_bg) < 0.0))
    throw numerical_error("prepare_background expects R_bg < 0 everywhere");
  if (std::abs(m.h_bg.left) > 1e-13 || std::abs(m.h_bg.right) > 1e-13)
    throw numerical_error("prepare_background expects h_bg = 0 at both ends");

  double eps0 = std::min(delta, 0.5 * (-max_of(m.R_bg)));
  for (int attempt = 0; attempt < 60; ++attempt) {
    SteklovResult ev = steklov_min(m, eps0);
    if (ev.lambda1 < 0.0) {
      BackgroundPrep prep;
      prep.eps0 = eps0;
      prep.lambda1 = ev.lambda1;
      prep.phi = ev.phi;
      prep.prepared = conformal_shift(m, ev.phi);
      prep.R_new = prep.prepared.R_bg;
      prep.h_new = prep.prepared.h_bg;
      if (!(max_of(prep.R_new) < 0.0) || !(prep.h_new.left < 0.0) ||
          !(prep.h_new.right < 0.0)) {
        eps0 *= 0.5;
        continue;
      }
      Field unit(size_t(m.nodes()), 1.0);
      prep.E_unit = energy(prep.prepared, unit);
      if (!(prep.E_unit < 0.0)) {
        eps0 *= 0.5;
        continue;
      }
      return prep;
    }
    eps0 *= 0.5;
  }
  throw numerical_error(
      "prepare_background: could not reach lambda1 < 0 with negative curvature data");
}

SubcriticalResult subcritical_solve(const WarpedModel& m, const ProblemData& pd,
                                    double q, const FlowConfig& base) {
  FlowConfig cfg = base;
  cfg.pd = pd;
  cfg.exps = Exponents::subcritical(m.n, q);

  Field u0(size_t(m.nodes()), 1.0);
  FlowState s0 = init_state(m, u0, cfg);
  FlowResult res = run(s0, m, cfg);
  if (!res.converged)
    throw nonconvergence_error("subcritical minimization stagnated above tolerance (q=" +
                               std::to_string(q) + ")");

  SubcriticalResult out;
  out.q = q;
  out.u_q = res.state.u;
  out.mu_q = res.state.E;
  out.lambda_q = res.state.lambda;
  out.alpha_q = res.state.alpha;
  out.beta_q = res.state.beta;
  out.converged = true;

  // Euler-Lagrange residuals of L u = (lambda/alpha) f u^q and the boundary
  // analogue with exponent (q+1)/2.
  Field Lu = apply_L(m, out.u_q);
  BoundaryPair Bu = apply_B(m, out.u_q);
  double rf = out.lambda_q / out.alpha_q;
  double ri = 0.0;
  for (int i = 1; i < m.cells; ++i)
    ri = std::max(ri, std::abs(Lu[i] - rf * pd.f[i] * std::pow(out.u_q[i], q)));
  double rh = out.lambda_q / out.beta_q;
  double eb = 0.5 * (q + 1.0);
  double rb = std::max(std::abs(Bu.left - 0.5 * (m.n - 2) * rh * pd.h.left *
                                              std::pow(out.u_q.front(), eb)),
                       std::abs(Bu.right - 0.5 * (m.n - 2) * rh * pd.h.right *
                                               std::pow(out.u_q.back(), eb)));
  out.residual_interior = ri;
  out.residual_boundary = rb;
  return out;
}

}  // namespace confflow
