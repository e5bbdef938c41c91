#pragma once

#include <variant>
#include <vector>

#include "confflow/common.hpp"
#include "confflow/expression.hpp"

namespace confflow {

enum class ModelMode { warped, synthetic, shifted };

// Discrete model manifold: the cylinder [0,L] x F reduced to one dimension by
// fiber invariance. Everything downstream sees only the nodal quadrature
// weights w_bulk, the face flux coefficients kappa, the boundary weights and
// normal scales, and the background curvature data (R_bg, h_bg).
//
// The bulk Laplacian is a vertex-centered finite volume in flux form; the
// boundary cells close the flux with the same one-sided derivative stencil
// that normal_derivative uses, so the discrete Green identity
//     sum_i w_bulk_i (Lap u)_i == sum_b w_bdry_b (d_nu u)_b
// telescopes exactly (to roundoff), not merely to discretization order.
struct WarpedModel {
  int n = 3;        // dimension, n >= 3
  double L = 1.0;   // interval length
  int cells = 0;    // grid has cells + 1 nodes
  double dx = 0.0;
  std::vector<double> x;      // nodes, uniform
  std::vector<double> psi;    // warp values at nodes (1 in synthetic mode)
  double R_F = 0.0;           // constant fiber scalar curvature
  Field R_bg;                 // background scalar curvature at nodes
  BoundaryPair h_bg;          // background mean curvature at x=0, x=L
  Field w_bulk;               // positive nodal quadrature weights
  BoundaryPair w_bdry;        // boundary measure weights
  std::vector<double> kappa;  // face flux coefficients, faces i+1/2, size cells
  BoundaryPair nu_scale;      // metric scale of the outward normal derivative
  ModelMode mode = ModelMode::warped;

  int nodes() const { return cells + 1; }
  // Boundary flux coefficients; equal to w_bdry * nu_scale by construction,
  // which is exactly what Green's identity needs.
  double flux_left() const { return w_bdry.left * nu_scale.left; }
  double flux_right() const { return w_bdry.right * nu_scale.right; }
};

// Warp profile: analytic expression (derivatives taken symbolically) or a
// nodal table (derivatives by second-order centered/one-sided differences).
using PsiSpec = std::variant<Expression, std::vector<double>>;

WarpedModel build_warped_model(int n, double L, const PsiSpec& psi_spec, double R_F,
                               int grid_size);

WarpedModel build_synthetic_model(int n, double L, int grid_size, Field R_bg,
                                  BoundaryPair h_bg);

// Raw one-sided derivative values (du/dx) at the two ends, second order.
BoundaryPair one_sided_derivatives(const WarpedModel& m, const Field& u);

Field laplacian(const WarpedModel& m, const Field& u);
BoundaryPair normal_derivative(const WarpedModel& m, const Field& u);

double integrate_bulk(const WarpedModel& m, const Field& u);
double integrate_boundary(const WarpedModel& m, const BoundaryPair& p);

// Discrete Dirichlet form sum_f kappa_f (u_{i+1}-u_i)(w_{i+1}-w_i)/dx; the
// exact bilinear partner of the flux-form Laplacian:
//   integrate_bulk(u * lap w) - integrate_boundary(u * d_nu w) = -dirichlet_form(u, w).
double dirichlet_form(const WarpedModel& m, const Field& u, const Field& w);

}  // namespace confflow
