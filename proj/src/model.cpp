#include "confflow/model.hpp"

#include <cmath>

namespace confflow {

namespace {

void check_grid_args(int n, double L, int grid_size) {
  if (n < 3) throw config_error("model dimension must satisfy n >= 3");
  if (!(L > 0.0)) throw config_error("interval length must be positive");
  if (grid_size < 16) throw config_error("grid too small: need at least 16 nodes");
}

std::vector<double> uniform_nodes(double L, int nodes) {
  std::vector<double> x(nodes);
  double dx = L / double(nodes - 1);
  for (int i = 0; i < nodes; ++i) x[i] = i * dx;
  x.back() = L;
  return x;
}

// Trapezoid weights against the bulk density rho.
Field trapezoid_weights(const std::vector<double>& rho, double dx) {
  Field w(rho.size());
  for (size_t i = 0; i < rho.size(); ++i) w[i] = dx * rho[i];
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

}  // namespace

WarpedModel build_warped_model(int n, double L, const PsiSpec& psi_spec, double R_F,
                               int grid_size) {
  check_grid_args(n, L, grid_size);
  WarpedModel m;
  m.n = n;
  m.L = L;
  m.cells = grid_size - 1;
  m.dx = L / double(m.cells);
  m.x = uniform_nodes(L, grid_size);
  m.R_F = R_F;
  m.mode = ModelMode::warped;

  const int N = m.cells;
  Field dpsi(grid_size), ddpsi(grid_size);
  std::vector<double> psi_face(N);

  if (std::holds_alternative<Expression>(psi_spec)) {
    const Expression& e = std::get<Expression>(psi_spec);
    Expression de = e.derivative();
    Expression dde = de.derivative();
    m.psi.resize(grid_size);
    for (int i = 0; i < grid_size; ++i) {
      m.psi[i] = e.eval(m.x[i]);
      dpsi[i] = de.eval(m.x[i]);
      ddpsi[i] = dde.eval(m.x[i]);
    }
    for (int i = 0; i < N; ++i) psi_face[i] = e.eval(0.5 * (m.x[i] + m.x[i + 1]));
  } else {
    m.psi = std::get<std::vector<double>>(psi_spec);
    check_same_size(m.psi, size_t(grid_size), "warp table");
    const Field& p = m.psi;
    const double dx = m.dx;
    for (int i = 1; i < N; ++i) {
      dpsi[i] = (p[i + 1] - p[i - 1]) / (2 * dx);
      ddpsi[i] = (p[i + 1] - 2 * p[i] + p[i - 1]) / (dx * dx);
    }
    dpsi[0] = (-3 * p[0] + 4 * p[1] - p[2]) / (2 * dx);
    dpsi[N] = (3 * p[N] - 4 * p[N - 1] + p[N - 2]) / (2 * dx);
    ddpsi[0] = (2 * p[0] - 5 * p[1] + 4 * p[2] - p[3]) / (dx * dx);
    ddpsi[N] = (2 * p[N] - 5 * p[N - 1] + 4 * p[N - 2] - p[N - 3]) / (dx * dx);
    for (int i = 0; i < N; ++i) psi_face[i] = 0.5 * (p[i] + p[i + 1]);
  }

  for (double v : m.psi)
    if (!(v > 0.0) || !std::isfinite(v))
      throw config_error("warp function must be positive and finite on [0,L]");

  // Fiber volume is normalized to 1, so the bulk density is psi^(n-1).
  std::vector<double> rho(grid_size);
  for (int i = 0; i < grid_size; ++i) rho[i] = std::pow(m.psi[i], n - 1);
  m.w_bulk = trapezoid_weights(rho, m.dx);
  m.w_bdry = {rho.front(), rho.back()};
  m.kappa.resize(N);
  for (int i = 0; i < N; ++i) m.kappa[i] = std::pow(psi_face[i], n - 1);
  m.nu_scale = {1.0, 1.0};

  // Warped-product curvature: R = R_F/psi^2 - 2(n-1) psi''/psi - (n-1)(n-2)(psi'/psi)^2;
  // boundary mean curvature (average of principal curvatures w.r.t. the
  // outward normal): -psi'/psi at x=0, +psi'/psi at x=L.
  m.R_bg.resize(grid_size);
  for (int i = 0; i < grid_size; ++i) {
    double p = m.psi[i];
    double r = R_F / (p * p) - 2.0 * (n - 1) * ddpsi[i] / p -
               double(n - 1) * (n - 2) * (dpsi[i] / p) * (dpsi[i] / p);
    if (!std::isfinite(r)) throw config_error("background curvature is non-finite");
    m.R_bg[i] = r;
  }
  m.h_bg = {-dpsi.front() / m.psi.front(), dpsi.back() / m.psi.back()};
  return m;
}

WarpedModel build_synthetic_model(int n, double L, int grid_size, Field R_bg,
                                  BoundaryPair h_bg) {
  check_grid_args(n, L, grid_size);
  check_same_size(R_bg, size_t(grid_size), "synthetic R_bg");
  if (!all_finite(R_bg) || !std::isfinite(h_bg.left) || !std::isfinite(h_bg.right))
    throw config_error("synthetic coefficient data must be finite");

  WarpedModel m;
  m.n = n;
  m.L = L;
  m.cells = grid_size - 1;
  m.dx = L / double(m.cells);
  m.x = uniform_nodes(L, grid_size);
  m.psi.assign(grid_size, 1.0);
  m.R_F = 0.0;
  m.mode = ModelMode::synthetic;
  m.R_bg = std::move(R_bg);
  m.h_bg = h_bg;

  std::vector<double> rho(grid_size, 1.0);
  m.w_bulk = trapezoid_weights(rho, m.dx);
  m.w_bdry = {1.0, 1.0};
  m.kappa.assign(size_t(m.cells), 1.0);
  m.nu_scale = {1.0, 1.0};
  return m;
}

// One-sided derivatives built by extrapolating the face fluxes kappa u' to
// the boundary: d0 = (2 F_{1/2} - 3/2 F_{3/2} + 1/2 F_{5/2}) / kappa_b.
// Second-order accurate, exact on quadratics for a unit warp, and the
// resulting Green closure (F_{1/2} - kappa_b d0)/w_0 is a second-order
// one-sided approximation of the Laplacian at the boundary node.
BoundaryPair one_sided_derivatives(const WarpedModel& m, const Field& u) {
  check_same_size(u, size_t(m.nodes()), "one_sided_derivatives");
  const int N = m.cells;
  const double dx = m.dx;
  auto flux = [&](int f) { return m.kappa[f] * (u[f + 1] - u[f]) / dx; };
  double d0 = (2.0 * flux(0) - 1.5 * flux(1) + 0.5 * flux(2)) / m.flux_left();
  double dL =
      (2.0 * flux(N - 1) - 1.5 * flux(N - 2) + 0.5 * flux(N - 3)) / m.flux_right();
  return {d0, dL};
}

Field laplacian(const WarpedModel& m, const Field& u) {
  check_same_size(u, size_t(m.nodes()), "laplacian");
  const int N = m.cells;
  const double dx = m.dx;
  Field out(size_t(N) + 1);

  for (int i = 1; i < N; ++i) {
    double flux_hi = m.kappa[i] * (u[i + 1] - u[i]) / dx;
    double flux_lo = m.kappa[i - 1] * (u[i] - u[i - 1]) / dx;
    out[i] = (flux_hi - flux_lo) / m.w_bulk[i];
  }
  BoundaryPair d = one_sided_derivatives(m, u);
  out[0] = (m.kappa[0] * (u[1] - u[0]) / dx - m.flux_left() * d.left) / m.w_bulk[0];
  out[N] = (m.flux_right() * d.right - m.kappa[N - 1] * (u[N] - u[N - 1]) / dx) /
           m.w_bulk[N];
  return out;
}

BoundaryPair normal_derivative(const WarpedModel& m, const Field& u) {
  BoundaryPair d = one_sided_derivatives(m, u);
  return {-m.nu_scale.left * d.left, m.nu_scale.right * d.right};
}

double integrate_bulk(const WarpedModel& m, const Field& u) {
  check_same_size(u, size_t(m.nodes()), "integrate_bulk");
  KahanSum s;
  for (size_t i = 0; i < u.size(); ++i) s.add(m.w_bulk[i] * u[i]);
  return s.value();
}

double integrate_boundary(const WarpedModel& m, const BoundaryPair& p) {
  return m.w_bdry.left * p.left + m.w_bdry.right * p.right;
}

double dirichlet_form(const WarpedModel& m, const Field& u, const Field& w) {
  check_same_size(u, size_t(m.nodes()), "dirichlet_form");
  check_same_size(w, size_t(m.nodes()), "dirichlet_form");
  KahanSum s;
  for (int i = 0; i < m.cells; ++i)
    s.add(m.kappa[i] * (u[i + 1] - u[i]) * (w[i + 1] - w[i]) / m.dx);
  return s.value();
}

}  // namespace confflow
