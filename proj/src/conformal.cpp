#include "confflow/conformal.hpp"

#include <cmath>

namespace confflow {

void require_positive(const Field& u, const char* what) {
  for (double v : u)
    if (!(v > 0.0) || !std::isfinite(v))
      throw numerical_error(std::string(what) + ": conformal factor must be strictly positive");
}

void validate(const WarpedModel& m, const ProblemData& pd) {
  if (!(pd.a > 0.0) || !(pd.b > 0.0))
    throw config_error("constraint weights a, b must be positive");
  check_same_size(pd.f, size_t(m.nodes()), "problem data f");
  if (!all_negative(pd.f))
    throw config_error("prescribed interior curvature f must be negative everywhere");
  if (!(pd.h.left < 0.0) || !(pd.h.right < 0.0))
    throw config_error("prescribed boundary curvature h must be negative at both ends");
}

Field apply_L(const WarpedModel& m, const Field& u) {
  Field out = laplacian(m, u);
  const double c = conformal_coeff(m.n);
  for (size_t i = 0; i < out.size(); ++i) out[i] = -c * out[i] + m.R_bg[i] * u[i];
  return out;
}

BoundaryPair apply_B(const WarpedModel& m, const Field& u) {
  BoundaryPair d = normal_derivative(m, u);
  const double k = 0.5 * (m.n - 2);
  return {d.left + k * m.h_bg.left * u.front(), d.right + k * m.h_bg.right * u.back()};
}

CurvatureData curvatures(const WarpedModel& m, const Field& u, const Exponents& ex) {
  require_positive(u, "curvatures");
  Field Lu = apply_L(m, u);
  BoundaryPair Bu = apply_B(m, u);
  CurvatureData out;
  out.R_g.resize(u.size());
  for (size_t i = 0; i < u.size(); ++i) out.R_g[i] = std::pow(u[i], -ex.e_R) * Lu[i];
  const double k = 2.0 / (m.n - 2);
  out.h_g = {k * std::pow(u.front(), -ex.e_h) * Bu.left,
             k * std::pow(u.back(), -ex.e_h) * Bu.right};
  return out;
}

CurvatureData curvatures(const WarpedModel& m, const Field& u) {
  return curvatures(m, u, Exponents::critical_for(m.n));
}

double energy(const WarpedModel& m, const Field& u) {
  check_same_size(u, size_t(m.nodes()), "energy");
  const double c = conformal_coeff(m.n);
  KahanSum s;
  for (int i = 0; i < m.cells; ++i) {
    double du = u[i + 1] - u[i];
    s.add(c * m.kappa[i] * du * du / m.dx);
  }
  for (size_t i = 0; i < u.size(); ++i) s.add(m.w_bulk[i] * m.R_bg[i] * u[i] * u[i]);
  const double bw = 2.0 * (m.n - 1);
  s.add(bw * m.w_bdry.left * m.h_bg.left * u.front() * u.front());
  s.add(bw * m.w_bdry.right * m.h_bg.right * u.back() * u.back());
  return s.value();
}

namespace {

// int (-f) |u|^p dmu and int (-h) |u|^p dsigma.
double weighted_bulk_power(const WarpedModel& m, const ProblemData& pd, const Field& u,
                           double p) {
  KahanSum s;
  for (size_t i = 0; i < u.size(); ++i)
    s.add(m.w_bulk[i] * (-pd.f[i]) * std::pow(std::abs(u[i]), p));
  return s.value();
}

double weighted_boundary_power(const WarpedModel& m, const ProblemData& pd,
                               const Field& u, double p) {
  return m.w_bdry.left * (-pd.h.left) * std::pow(std::abs(u.front()), p) +
         m.w_bdry.right * (-pd.h.right) * std::pow(std::abs(u.back()), p);
}

}  // namespace

double constraint(const WarpedModel& m, const Field& u, const ProblemData& pd,
                  const Exponents& ex) {
  double If = weighted_bulk_power(m, pd, u, ex.e_vol);
  double Ih = weighted_boundary_power(m, pd, u, ex.e_area);
  return pd.a * std::pow(If, 2.0 / ex.e_vol) +
         2.0 * (m.n - 1) * pd.b * std::pow(Ih, 2.0 / ex.e_area);
}

double constraint(const WarpedModel& m, const Field& u, const ProblemData& pd) {
  return constraint(m, u, pd, Exponents::critical_for(m.n));
}

Normalized normalize(const WarpedModel& m, const Field& u, const ProblemData& pd,
                     const Exponents& ex) {
  require_positive(u, "normalize");
  Normalized out;
  out.u = u;
  out.mu = 1.0;
  // The constraint is degree-2 homogeneous, so one scaling lands on 1 up to
  // the roundoff of re-evaluating the powers; polish until that noise floor.
  for (int pass = 0; pass < 3; ++pass) {
    double theta = constraint(m, out.u, pd, ex);
    if (!(theta > 0.0) || !std::isfinite(theta))
      throw numerical_error("constraint must be positive to normalize");
    if (std::abs(theta - 1.0) <= 2.0 * kEps) break;
    double mu = 1.0 / std::sqrt(theta);
    for (double& v : out.u) v *= mu;
    out.mu *= mu;
  }
  return out;
}

Normalized normalize(const WarpedModel& m, const Field& u, const ProblemData& pd) {
  return normalize(m, u, pd, Exponents::critical_for(m.n));
}

ScalarsTriple functionals(const WarpedModel& m, const Field& u, const ProblemData& pd,
                          const Exponents& ex) {
  double If = weighted_bulk_power(m, pd, u, ex.e_vol);
  double Ih = weighted_boundary_power(m, pd, u, ex.e_area);
  ScalarsTriple s;
  s.alpha = std::pow(If, 1.0 - 2.0 / ex.e_vol) / pd.a;
  s.beta = std::pow(Ih, 1.0 - 2.0 / ex.e_area) / pd.b;
  double theta = pd.a * std::pow(If, 2.0 / ex.e_vol) +
                 2.0 * (m.n - 1) * pd.b * std::pow(Ih, 2.0 / ex.e_area);
  s.lambda = -energy(m, u) / theta;
  return s;
}

ScalarsTriple functionals(const WarpedModel& m, const Field& u, const ProblemData& pd) {
  return functionals(m, u, pd, Exponents::critical_for(m.n));
}

double q_functional(const WarpedModel& m, const Field& u, const ProblemData& pd) {
  if (sup_norm(u) == 0.0) throw numerical_error("q_functional of the zero field");
  return energy(m, u) / constraint(m, u, pd);
}

Velocity velocity(const WarpedModel& m, const Field& u, const ProblemData& pd,
                  const Exponents& ex) {
  ScalarsTriple s = functionals(m, u, pd, ex);
  CurvatureData c = curvatures(m, u, ex);
  Velocity v;
  v.interior.resize(u.size());
  for (size_t i = 0; i < u.size(); ++i)
    v.interior[i] = s.alpha * c.R_g[i] / pd.f[i] - s.lambda;
  v.boundary = {s.beta * c.h_g.left / pd.h.left - s.lambda,
                s.beta * c.h_g.right / pd.h.right - s.lambda};
  // The field is continuous up to the boundary, where the two formulas agree;
  // the trace from the boundary law replaces the flux-closure artifact at the
  // two end nodes of the bulk grid.
  v.interior.front() = v.boundary.left;
  v.interior.back() = v.boundary.right;
  return v;
}

Velocity velocity(const WarpedModel& m, const Field& u, const ProblemData& pd) {
  return velocity(m, u, pd, Exponents::critical_for(m.n));
}

double F_p_given(const WarpedModel& m, const Field& u, const ProblemData& pd, double p,
                 const Exponents& ex, const Velocity& v, const ScalarsTriple& s) {
  KahanSum bulk;
  for (size_t i = 0; i < u.size(); ++i)
    bulk.add(m.w_bulk[i] * (-pd.f[i]) * std::pow(std::abs(v.interior[i]), p) *
             std::pow(u[i], ex.e_vol));
  double bdry =
      m.w_bdry.left * (-pd.h.left) * std::pow(std::abs(v.boundary.left), p) *
          std::pow(u.front(), ex.e_area) +
      m.w_bdry.right * (-pd.h.right) * std::pow(std::abs(v.boundary.right), p) *
          std::pow(u.back(), ex.e_area);
  return bulk.value() / s.alpha + 2.0 * (m.n - 1) * bdry / s.beta;
}

double F_p(const WarpedModel& m, const Field& u, const ProblemData& pd, double p,
           const Exponents& ex) {
  if (!(p >= 1.0)) throw config_error("F_p requires p >= 1");
  Velocity v = velocity(m, u, pd, ex);
  ScalarsTriple s = functionals(m, u, pd, ex);
  return F_p_given(m, u, pd, p, ex, v, s);
}

double F_p(const WarpedModel& m, const Field& u, const ProblemData& pd, double p) {
  return F_p(m, u, pd, p, Exponents::critical_for(m.n));
}

double preserve_const_residual(int n, const ProblemData& pd, const ScalarsTriple& s,
                               const Exponents& ex) {
  double p1 = 2.0 / (ex.e_vol - 2.0);
  double p2 = 2.0 / (ex.e_area - 2.0);
  double v = pd.a * std::pow(pd.a * s.alpha, p1) +
             2.0 * (n - 1) * pd.b * std::pow(pd.b * s.beta, p2);
  return v - 1.0;
}

WarpedModel conformal_shift(const WarpedModel& m, const Field& phi) {
  check_same_size(phi, size_t(m.nodes()), "conformal_shift");
  require_positive(phi, "conformal_shift");

  CurvatureData c = curvatures(m, phi);

  WarpedModel out = m;
  out.mode = ModelMode::shifted;
  const double pv = 2.0 * m.n / (m.n - 2);        // bulk measure exponent
  const double pa = 2.0 * (m.n - 1) / (m.n - 2);  // boundary measure exponent
  const double ps = -2.0 / (m.n - 2);             // normal scale exponent
  for (int i = 0; i < m.nodes(); ++i) out.w_bulk[i] = m.w_bulk[i] * std::pow(phi[i], pv);
  for (int i = 0; i < m.cells; ++i) out.kappa[i] = m.kappa[i] * phi[i] * phi[i + 1];
  out.w_bdry = {m.w_bdry.left * std::pow(phi.front(), pa),
                m.w_bdry.right * std::pow(phi.back(), pa)};
  out.nu_scale = {m.nu_scale.left * std::pow(phi.front(), ps),
                  m.nu_scale.right * std::pow(phi.back(), ps)};
  out.R_bg = c.R_g;
  out.h_bg = c.h_g;
  return out;
}

}  // namespace confflow
