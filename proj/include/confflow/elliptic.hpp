#pragma once

#include "confflow/flow.hpp"

namespace confflow {

struct MonotoneConfig {
  double eps = 0.0;      // sub/super-solution level; iterates stay in [eps, 1/eps]
  double shift_N = 0.0;  // interior shift making the reaction monotone
  double shift_H = 0.0;  // boundary shift
  double tol = 1e-10;    // sup-norm increment (residuals checked at 10*tol)
  int max_iter = 500;
};

struct EllipticSolution {
  Field u;
  double residual_interior = kNaN;
  double residual_boundary = kNaN;
  int iterations = 0;
  bool monotone_flag = true;
  double eps = 0.0;
};

struct SteklovResult {
  double lambda1 = kNaN;
  Field phi;  // positive, boundary norm 1
};

struct BackgroundPrep {
  double eps0 = kNaN;
  double lambda1 = kNaN;
  Field phi;
  Field R_new;
  BoundaryPair h_new;
  double E_unit = kNaN;  // energy of the unit factor on the prepared model
  WarpedModel prepared;  // the re-described background, ready for the flow
};

struct SubcriticalResult {
  double q = kNaN;
  Field u_q;
  double mu_q = kNaN;  // minimum value (energy at the constrained minimizer)
  double lambda_q = kNaN, alpha_q = kNaN, beta_q = kNaN;
  double residual_interior = kNaN;
  double residual_boundary = kNaN;
  bool converged = false;
};

// Unique solution of (-c lap + R_bg + N) u = F, (d_nu + (n-2)/2 (h_bg+H)) u = G
// by banded direct factorization. Requires R_bg + N > 0 and h_bg + H > 0.
Field solve_linear_robin(const WarpedModel& m, double shift_N, double shift_H,
                         const Field& F, const BoundaryPair& G);

// Half the smallest of the four sub/super-solution ratios.
double choose_epsilon(const WarpedModel& m, const ProblemData& pd);

// Shifts making both frozen reactions strictly increasing on [eps, 1/eps]
// and the shifted operators coercive.
std::pair<double, double> choose_shifts(const WarpedModel& m, const ProblemData& pd,
                                        double eps);

MonotoneConfig make_monotone_config(const WarpedModel& m, const ProblemData& pd);

// Nondecreasing iteration from the constant subsolution; converges to the
// discrete solution of L u = f u^((n+2)/(n-2)), B u = (n-2)/2 h u^(n/(n-2)).
EllipticSolution monotone_solve(const WarpedModel& m, const ProblemData& pd,
                                const MonotoneConfig& cfg);

// Smallest eigenvalue of the bulk form c|grad phi|^2 - eps0 phi^2 against the
// boundary mass, via exact condensation of the interior unknowns onto the two
// boundary values (the boundary mass has rank 2, so the pencil has exactly
// two finite eigenvalues).
SteklovResult steklov_min(const WarpedModel& m, double eps0);

// From a background with R_bg < 0, h_bg = 0, manufacture a re-described
// background with R < 0, h < 0 and negative unit-factor energy.
BackgroundPrep prepare_background(const WarpedModel& m, double delta);

// Constrained minimization with subcritical exponents (q, (q+1)/2), run on
// the flow machinery.
SubcriticalResult subcritical_solve(const WarpedModel& m, const ProblemData& pd,
                                    double q, const FlowConfig& base);

}  // namespace confflow
