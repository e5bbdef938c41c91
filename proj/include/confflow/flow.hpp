#pragma once

#include <vector>

#include "confflow/conformal.hpp"

namespace confflow {

enum class Stepper { imex, explicit_euler };

struct FlowConfig {
  ProblemData pd;
  double dt0 = 1e-3;
  double dt_min = 1e-12;
  double dt_max = 0.5;
  double t_max = 500.0;
  double tol_F2 = 1e-9;        // convergence threshold on F_2 (relative to
                               // max(1, lambda^2))
  double tol_residual = 2e-8;  // sup-norm limit residuals, relative to the
                               // state scale max(1, |lambda/alpha| sup|f|);
                               // the boundary threshold carries a 10x factor
  bool renorm = true;          // constraint projection every step; must stay on
  Stepper stepper = Stepper::imex;
  Exponents exps = {0, 0, 0, 0, true};  // zeroed => critical_for(n) at init
  // Optional invariant estimates; enable the volume-bound diagnostics.
  double y_est = kNaN;
  double q_est = kNaN;
  int fp_log_every = 25;  // cadence of the F_p chain samples
};

struct FlowState {
  double t = 0.0;
  Field u;
  double alpha = 0.0, beta = 0.0, lambda = 0.0;
  double E = 0.0;
  double F2 = 0.0;
  double constraint_value = 1.0;
  // stepping metadata
  double dt = 0.0;
  int clean_steps = 0;
  double drift = 0.0;  // |constraint - 1| before the last projection
};

struct TraceRow {
  double t, E, lambda, alpha, beta, F2, umin, umax, drift, dt;
};

struct FpSample {
  double t;
  double f2, f_half_n, f_nm1, f_2n;
};

// Running extrema plus the frozen constants of the a-priori bounds.
struct DiagBounds {
  double alpha_min = kInf, alpha_max = -kInf;
  double beta_min = kInf, beta_max = -kInf;
  double lambda_min = kInf, lambda_max = -kInf;
  double u0_pow_min = kNaN, u0_pow_max = kNaN;  // extrema of u(t0)^((n+2)/(n-2))
  double mf_min = kNaN, mf_max = kNaN;          // extrema of R_bg/f
  double mh_min = kNaN, mh_max = kNaN;          // extrema of h_bg/h
  double C0 = kNaN;                             // velocity ceiling, frozen at epoch
  double V0 = kNaN, S0 = kNaN;                  // volume bounds (need Y, Q estimates)
};

struct DiagRecord {
  bool floor_ok = true, ceiling_ok = true, velocity_ok = true;
  bool preserve_ok = true;
  bool volume_checked = false, volume_ok = true;
  double floor_margin = kNaN;     // min u^e - floor
  double ceiling_margin = kNaN;   // ceiling - max u^e
  double velocity_margin = kNaN;  // C0 - max v
  double volume_margin = kNaN;
  double preserve_residual = kNaN;
  double lambda_rate_gap = kNaN;  // |dlambda/dt - (n-2)/2 F2|
};

// Aggregates over a run; the acceptance checks read these.
struct DiagSummary {
  int floor_violations = 0, ceiling_violations = 0, velocity_violations = 0;
  int volume_violations = 0;
  double floor_margin_min = kInf, ceiling_margin_min = kInf, velocity_margin_min = kInf;
  double preserve_residual_max = 0.0;
  double constraint_dev_max = 0.0;   // max |constraint - 1| after projection
  double drift_max = 0.0;            // max pre-projection drift
  bool energy_monotone = true;       // within 1e-12 relative at every step
  bool lambda_monotone = true;
  double lambda_rate_gap_max = 0.0;
};

struct FlowTrace {
  std::vector<TraceRow> rows;
  std::vector<FpSample> fp;
  DiagSummary diag;
};

struct FlowResult {
  FlowState state;
  FlowTrace trace;
  bool converged = false;
  double resid_R = kNaN;  // sup over interior nodes of |R_g - (lambda/alpha) f|
  double resid_h = kNaN;  // max over the two ends of |h_g - (lambda/beta) h|
  int steps = 0;
};

// Admissibility: background with R_bg < 0 and h_bg < 0, positive u0 with
// negative energy after projection to the constraint set.
FlowState init_state(const WarpedModel& m, const Field& u0, const FlowConfig& cfg);

// One accepted step (internally halves dt and retries on positivity loss or
// energy increase). Throws numerical_error on dt underflow.
FlowState step(const FlowState& s, const WarpedModel& m, const FlowConfig& cfg);

DiagRecord diagnostics(const FlowState& prev, const FlowState& next,
                       const WarpedModel& m, const FlowConfig& cfg,
                       const DiagBounds& bounds);

DiagBounds make_diag_bounds(const FlowState& epoch, const WarpedModel& m,
                            const FlowConfig& cfg);

FlowResult run(const FlowState& initial, const WarpedModel& m, const FlowConfig& cfg);

// Sup-norm residuals of R_g = (lambda/alpha) f (interior nodes) and
// h_g = (lambda/beta) h (both ends).
std::pair<double, double> limit_residuals(const WarpedModel& m, const FlowState& s,
                                          const FlowConfig& cfg);

struct UniquenessReport {
  bool converged_a = false, converged_b = false;
  double E_gap = kNaN;
  double u_gap = kNaN;
  double E_a = kNaN, E_b = kNaN;
};

UniquenessReport uniqueness_probe(const WarpedModel& m, const FlowConfig& cfg,
                                  const Field& u0_a, const Field& u0_b);

// Deterministic perturbed-constant initial data.
Field perturbed_constant(const WarpedModel& m, double amplitude, uint64_t seed);

}  // namespace confflow
