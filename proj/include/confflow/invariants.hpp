#pragma once

#include "confflow/flow.hpp"

namespace confflow {

struct DescentOptions {
  int descent_iters = 400;
  int newton_iters = 60;
  double newton_tol = 1e-12;
  int restarts = 3;
  uint64_t seed = 1;
  double divergence_floor = -1e6;  // values below this flag a -inf invariant
};

struct EstimateResult {
  double value = kNaN;
  Field minimizer;
  bool stagnated = false;   // best certificate kept but stationarity not reached
  bool divergent = false;   // boundary-normalized infimum is -inf
  double kkt_residual = kNaN;
};

// Infimum of E over the unit bulk-volume constraint (multi-start descent with
// a Newton polish on the stationarity system); an upper-bound certificate.
EstimateResult estimate_Y(const WarpedModel& m, const DescentOptions& opts = {});

// Same with the boundary-volume constraint. Divergence (the infimum can be
// -inf when the interior part of the energy form is indefinite) is certified
// by an LDL^T pivot test and monitored along the descent.
EstimateResult estimate_Qb(const WarpedModel& m, const DescentOptions& opts = {});

// Direct constrained minimizer of E on the constraint set of pd; cross-check
// oracle for the flow-limit route.
EstimateResult minimize_q_direct(const WarpedModel& m, const ProblemData& pd,
                                 const DescentOptions& opts = {});

struct YabResult {
  double Y_ab = kNaN;
  double alpha_ab = kNaN;
  double beta_ab = kNaN;
  Field u_ab;
  bool converged = false;
  double preserve_residual = kNaN;
  double sandwich_C = kNaN;       // concrete constant from the f, h extrema
  double sandwich_slack = kNaN;   // C*Y_ab - max(Y/a, Q/b) >= 0 when checked
  bool sandwich_checked = false;
};

// Flow-limit route to the constrained infimum; validates the sandwich bound
// when finite y_est/q_est are supplied through the flow config.
YabResult y_ab(const WarpedModel& m, const ProblemData& pd, const FlowConfig& base);

struct ABSearchOptions {
  double a_small = 1e-3;
  double b_small = 1e-3;
  double tol = 1e-6;  // on |rho - 1|
  int max_evals = 60;
  FlowConfig flow;  // pd is overwritten per path point
};

struct ABSearchResult {
  double a_star = kNaN, b_star = kNaN;
  double rho = kNaN;       // (-Y_ab alpha)^(1/2) / beta at the solution
  double mu_star = kNaN;   // (lambda/alpha)^((n-2)/4), the factor scaling
  Field u_scaled;          // mu_star * u_ab; realizes R = f, h_g = h
  double resid_R = kNaN;
  double resid_h = kNaN;
  int evals = 0;
  std::vector<std::pair<double, double>> path;  // (s, rho) samples, monitoring
  double Y_ab = kNaN, alpha_ab = kNaN, beta_ab = kNaN;
};

ABSearchResult ab_search(const WarpedModel& m, const Field& f, BoundaryPair h,
                         const ABSearchOptions& opts);

}  // namespace confflow
