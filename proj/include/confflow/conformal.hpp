#pragma once

#include "confflow/model.hpp"

namespace confflow {

// Coefficient of the Laplacian in the conformal operator, 4(n-1)/(n-2).
inline double conformal_coeff(int n) { return 4.0 * (n - 1) / double(n - 2); }

// Exponent pack for the constrained energy machinery. The critical pack is
// the conformal one; the subcritical pack replaces the interior exponent by
// q < (n+2)/(n-2) and the boundary exponent by (q+1)/2, and every functional
// below (constraint, alpha, beta, lambda, velocity, F_p) keeps its shape.
struct Exponents {
  double e_R;     // interior curvature exponent
  double e_h;     // boundary curvature exponent
  double e_vol;   // bulk measure exponent   (= e_R + 1)
  double e_area;  // boundary measure exponent (= e_h + 1)
  bool critical = true;

  static Exponents critical_for(int n) {
    double q = double(n + 2) / (n - 2);
    return {q, double(n) / (n - 2), q + 1.0, double(n) / (n - 2) + 1.0, true};
  }
  static Exponents subcritical(int n, double q) {
    if (!(q >= 1.0) || !(q < double(n + 2) / (n - 2)))
      throw config_error("subcritical exponent must satisfy 1 <= q < (n+2)/(n-2)");
    return {q, 0.5 * (q + 1.0), q + 1.0, 0.5 * (q + 3.0), false};
  }
};

// Prescribed data: f < 0 in the interior, h < 0 at both boundary points,
// together with the positive constants a, b weighting the two constraint
// terms.
struct ProblemData {
  double a = 1.0;
  double b = 1.0;
  Field f;
  BoundaryPair h;
};

void validate(const WarpedModel& m, const ProblemData& pd);

struct CurvatureData {
  Field R_g;
  BoundaryPair h_g;
};

struct ScalarsTriple {
  double alpha = 0.0;
  double beta = 0.0;
  double lambda = 0.0;
};

struct Normalized {
  Field u;
  double mu = 1.0;
};

struct Velocity {
  Field interior;
  BoundaryPair boundary;
};

// L u = -(4(n-1)/(n-2)) lap u + R_bg u.
Field apply_L(const WarpedModel& m, const Field& u);
// B u = d_nu u + (n-2)/2 h_bg u.
BoundaryPair apply_B(const WarpedModel& m, const Field& u);

// Curvatures of g = u^(4/(n-2)) g0: R_g = u^(-e_R) L u, h_g = 2/(n-2) u^(-e_h) B u.
CurvatureData curvatures(const WarpedModel& m, const Field& u, const Exponents& ex);
CurvatureData curvatures(const WarpedModel& m, const Field& u);

// E[u] = c D(u,u) + int R_bg u^2 dmu + 2(n-1) int h_bg u^2 dsigma; exactly
// equal (to roundoff) to int u Lu dmu + c int u Bu dsigma by the discrete
// integration-by-parts identity.
double energy(const WarpedModel& m, const Field& u);

double constraint(const WarpedModel& m, const Field& u, const ProblemData& pd,
                  const Exponents& ex);
double constraint(const WarpedModel& m, const Field& u, const ProblemData& pd);

// Scale u so the constraint equals 1 exactly; mu = constraint(u)^(-1/2).
Normalized normalize(const WarpedModel& m, const Field& u, const ProblemData& pd,
                     const Exponents& ex);
Normalized normalize(const WarpedModel& m, const Field& u, const ProblemData& pd);

ScalarsTriple functionals(const WarpedModel& m, const Field& u, const ProblemData& pd,
                          const Exponents& ex);
ScalarsTriple functionals(const WarpedModel& m, const Field& u, const ProblemData& pd);

// E[u] / constraint(|u|); degree-0 homogeneous.
double q_functional(const WarpedModel& m, const Field& u, const ProblemData& pd);

// v = alpha R_g / f - lambda in the interior, beta h_g / h - lambda on the
// boundary; identically zero exactly at the constrained Euler-Lagrange state.
Velocity velocity(const WarpedModel& m, const Field& u, const ProblemData& pd,
                  const Exponents& ex);
Velocity velocity(const WarpedModel& m, const Field& u, const ProblemData& pd);

// F_p = alpha^-1 int (-f)|v|^p dmu_g + 2(n-1) beta^-1 int (-h)|v|^p dsigma_g >= 0.
double F_p(const WarpedModel& m, const Field& u, const ProblemData& pd, double p,
           const Exponents& ex);
double F_p(const WarpedModel& m, const Field& u, const ProblemData& pd, double p);
// Same, reusing a precomputed velocity.
double F_p_given(const WarpedModel& m, const Field& u, const ProblemData& pd, double p,
                 const Exponents& ex, const Velocity& v, const ScalarsTriple& s);

// a (a alpha)^{2/(e_vol-2)} + 2(n-1) b (b beta)^{2/(e_area-2)} - 1; vanishes on
// the constraint set for all time along the flow.
double preserve_const_residual(int n, const ProblemData& pd, const ScalarsTriple& s,
                               const Exponents& ex);

// Background re-description by a positive conformal factor phi: returns the
// model of phi^(4/(n-2)) g with its own measures, flux coefficients, normal
// scale, and curvature data. Face coefficients use the product phi_i phi_{i+1},
// which makes the discrete energy exactly covariant: E_new[w] = E_old[phi*w].
WarpedModel conformal_shift(const WarpedModel& m, const Field& phi);

void require_positive(const Field& u, const char* what);

}  // namespace confflow
