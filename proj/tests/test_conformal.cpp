#include <doctest.h>

#include <cmath>

#include "confflow/conformal.hpp"
#include "oracles.hpp"

using namespace confflow;

namespace {

WarpedModel cylinder(int n, int grid = 201) {
  return build_warped_model(n, 1.0, Expression::parse("1"),
                            -double(n - 1) * (n - 2), grid);
}

WarpedModel constant_synthetic(int n, double R, double h, int grid = 201) {
  Field Rf(static_cast<size_t>(grid), R);
  return build_synthetic_model(n, 1.0, grid, Rf, {h, h});
}

ProblemData pd_const(const WarpedModel& m, double f, double h) {
  ProblemData pd;
  pd.f.assign(static_cast<size_t>(m.nodes()), f);
  pd.h = {h, h};
  return pd;
}

Field grid_expr(const WarpedModel& m, const char* text) {
  Expression e = Expression::parse(text);
  Field u(static_cast<size_t>(m.nodes()));
  for (int i = 0; i < m.nodes(); ++i) u[i] = e.eval(m.x[i]);
  return u;
}

// Problem data for which u = 1 is exactly the constrained stationary state:
// f = R_bg, h = h_bg, a = I_f^(2/n), b = I_h^(1/(n-1)) puts alpha = beta =
// lambda = 1 and the velocity vanishes identically.
ProblemData stationary_pd(const WarpedModel& m) {
  ProblemData pd;
  pd.f = m.R_bg;
  pd.h = m.h_bg;
  Field negf(pd.f.size());
  for (size_t i = 0; i < negf.size(); ++i) negf[i] = -pd.f[i];
  double If = integrate_bulk(m, negf);
  double Ih = integrate_boundary(m, {-pd.h.left, -pd.h.right});
  pd.a = std::pow(If, 2.0 / m.n);
  pd.b = std::pow(Ih, 1.0 / (m.n - 1));
  return pd;
}

}  // namespace

TEST_CASE("conformal operators: unit factor and linearity") {
  WarpedModel m = cylinder(3);
  Field one(201, 1.0);
  Field L1 = apply_L(m, one);
  for (int i = 0; i < 201; ++i) CHECK(L1[i] == doctest::Approx(m.R_bg[i]).epsilon(1e-12));
  BoundaryPair B1 = apply_B(m, one);
  CHECK(B1.left == doctest::Approx(0.5 * (m.n - 2) * m.h_bg.left));
  CHECK(B1.right == doctest::Approx(0.5 * (m.n - 2) * m.h_bg.right));

  confflow::SplitMix64 rng(7);
  Field u = oracle::random_field(rng, 201, -1.0, 1.0);
  Field w = oracle::random_field(rng, 201, -1.0, 1.0);
  Field lin(201);
  for (int i = 0; i < 201; ++i) lin[i] = 2.0 * u[i] + w[i];
  Field Lu = apply_L(m, u), Lw = apply_L(m, w), Ll = apply_L(m, lin);
  for (int i = 0; i < 201; ++i)
    CHECK(Ll[i] == doctest::Approx(2.0 * Lu[i] + Lw[i]).epsilon(1e-11));
}

TEST_CASE("apply_L and apply_B match the dense assembly oracle") {
  WarpedModel m = build_warped_model(3, 1.0, Expression::parse("exp(x)"), 0.0, 101);
  auto D = oracle::dense_L(m);
  confflow::SplitMix64 rng(21);
  Field u = oracle::random_field(rng, m.nodes(), -1.0, 1.0);
  Field Lu = apply_L(m, u);
  for (int i = 0; i < m.nodes(); ++i) {
    double want = 0.0;
    for (int j = 0; j < m.nodes(); ++j) want += D[i][j] * u[j];
    CHECK(Lu[i] == doctest::Approx(want).epsilon(1e-9));
  }
  // boundary operator against the explicit flux-extrapolated formula
  BoundaryPair Bu = apply_B(m, u);
  auto c0 = oracle::d0_coeffs(m);
  double d0 = c0[0] * u[0] + c0[1] * u[1] + c0[2] * u[2] + c0[3] * u[3];
  CHECK(Bu.left == doctest::Approx(-m.nu_scale.left * d0 +
                                   0.5 * (m.n - 2) * m.h_bg.left * u[0]));
}

TEST_CASE("curvatures: identity factor, scaling law, quadratic factor") {
  WarpedModel m = cylinder(3);
  Field one(201, 1.0);
  CurvatureData c1 = curvatures(m, one);
  for (int i = 0; i < 201; ++i) CHECK(c1.R_g[i] == doctest::Approx(m.R_bg[i]));
  CHECK(c1.h_g.left == doctest::Approx(m.h_bg.left));

  confflow::SplitMix64 rng(3);
  Field u = oracle::random_field(rng, 201, 0.5, 1.8);
  const double cc = 1.7;
  Field cu(u.size());
  for (size_t i = 0; i < u.size(); ++i) cu[i] = cc * u[i];
  CurvatureData a = curvatures(m, u);
  CurvatureData b = curvatures(m, cu);
  double sR = std::pow(cc, -4.0 / (m.n - 2));
  double sh = std::pow(cc, -2.0 / (m.n - 2));
  for (int i = 0; i < 201; ++i)
    CHECK(b.R_g[i] == doctest::Approx(sR * a.R_g[i]).epsilon(1e-12));
  CHECK(b.h_g.left == doctest::Approx(sh * a.h_g.left).epsilon(1e-12));
  CHECK(b.h_g.right == doctest::Approx(sh * a.h_g.right).epsilon(1e-12));

  // u = 1 + x^2/4 on the n=3 cylinder: the stencils are exact on quadratics,
  // so the discrete curvature equals -(6 + x^2/2)/(1 + x^2/4)^5 and the
  // boundary curvature (0, 0.512) to roundoff.
  Field uq = grid_expr(m, "1 + x^2/4");
  CurvatureData cq = curvatures(m, uq);
  for (int i = 0; i < 201; ++i) {
    double x = m.x[i];
    double want = -(6.0 + 0.5 * x * x) / std::pow(1.0 + 0.25 * x * x, 5.0);
    CHECK(cq.R_g[i] == doctest::Approx(want).epsilon(1e-9));
  }
  CHECK(cq.h_g.left == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(cq.h_g.right == doctest::Approx(0.512).epsilon(1e-9));
}

TEST_CASE("energy identities") {
  WarpedModel m = build_warped_model(4, 1.0, Expression::parse("1 + x*(1-x)"), -6.0, 161);
  const double c = conformal_coeff(m.n);
  Field one(static_cast<size_t>(m.nodes()), 1.0);

  // E[1] = int R dmu + 2(n-1) int h dsigma
  double e1 = energy(m, one);
  double want = integrate_bulk(m, m.R_bg) +
                2.0 * (m.n - 1) * integrate_boundary(m, m.h_bg);
  CHECK(e1 == doctest::Approx(want).epsilon(1e-13));

  confflow::SplitMix64 rng(11);
  for (int t = 0; t < 10; ++t) {
    Field u = oracle::random_field(rng, m.nodes(), 0.4, 1.6);

    // quadratic homogeneity
    Field u2(u.size());
    for (size_t i = 0; i < u.size(); ++i) u2[i] = 3.0 * u[i];
    CHECK(energy(m, u2) == doctest::Approx(9.0 * energy(m, u)).epsilon(1e-12));

    // E = int u L u dmu + c int u B u dsigma, exactly
    Field Lu = apply_L(m, u);
    Field prod(u.size());
    for (size_t i = 0; i < u.size(); ++i) prod[i] = u[i] * Lu[i];
    BoundaryPair Bu = apply_B(m, u);
    double rhs = integrate_bulk(m, prod) +
                 c * integrate_boundary(m, {u.front() * Bu.left, u.back() * Bu.right});
    double scale = 0.0;
    for (size_t i = 0; i < u.size(); ++i) scale += std::abs(m.w_bulk[i] * prod[i]);
    scale += c * (std::abs(m.w_bdry.left * u.front() * Bu.left) +
                  std::abs(m.w_bdry.right * u.back() * Bu.right));
    CHECK(std::abs(energy(m, u) - rhs) <= 20.0 * kEps * scale);

    // E = int R_g dmu_g + 2(n-1) int h_g dsigma_g via curvature quadrature
    CurvatureData cd = curvatures(m, u);
    Field rg(u.size());
    for (size_t i = 0; i < u.size(); ++i)
      rg[i] = cd.R_g[i] * std::pow(u[i], 2.0 * m.n / (m.n - 2));
    double pa = 2.0 * (m.n - 1) / (m.n - 2);
    double bdry = integrate_boundary(
        m, {cd.h_g.left * std::pow(u.front(), pa), cd.h_g.right * std::pow(u.back(), pa)});
    CHECK(energy(m, u) ==
          doctest::Approx(integrate_bulk(m, rg) + 2.0 * (m.n - 1) * bdry).epsilon(1e-11));
  }
}

TEST_CASE("discrete self-adjointness of the conformal pairing") {
  WarpedModel m = build_warped_model(3, 1.0, Expression::parse("exp(x)"), 0.0, 201);
  const double c = conformal_coeff(m.n);
  confflow::SplitMix64 rng(5150);
  for (int t = 0; t < 20; ++t) {
    Field u = oracle::random_field(rng, m.nodes(), -1.0, 1.0);
    Field w = oracle::random_field(rng, m.nodes(), -1.0, 1.0);
    auto form = [&](const Field& a, const Field& b) {
      Field Lb = apply_L(m, b);
      BoundaryPair db = normal_derivative(m, b);
      Field prod(a.size());
      for (size_t i = 0; i < a.size(); ++i) prod[i] = a[i] * Lb[i];
      double scale = 0.0;
      for (size_t i = 0; i < a.size(); ++i) scale += std::abs(m.w_bulk[i] * prod[i]);
      scale += c * (std::abs(m.w_bdry.left * a.front() * db.left) +
                    std::abs(m.w_bdry.right * a.back() * db.right));
      double v = integrate_bulk(m, prod) +
                 c * integrate_boundary(m, {a.front() * db.left, a.back() * db.right});
      return std::make_pair(v, scale);
    };
    auto [uw, s1] = form(u, w);
    auto [wu, s2] = form(w, u);
    CHECK(std::abs(uw - wu) <= 10.0 * kEps * (s1 + s2 + 1.0));
  }
}

TEST_CASE("constraint: scaling, unit-measure value, quadrature oracle") {
  WarpedModel m = constant_synthetic(3, -2.0, -1.0);
  ProblemData pd = pd_const(m, -1.0, -1.0);
  Field one(201, 1.0);

  // a = b = 1, f = -1, h = (-1,-1), unit measures: 1 + 4*sqrt(2)
  CHECK(constraint(m, one, pd) ==
        doctest::Approx(1.0 + 4.0 * std::sqrt(2.0)).epsilon(1e-14));

  confflow::SplitMix64 rng(99);
  Field u = oracle::random_field(rng, 201, 0.3, 1.9);
  Field cu(u.size());
  for (size_t i = 0; i < u.size(); ++i) cu[i] = 2.0 * u[i];
  CHECK(constraint(m, cu, pd) == doctest::Approx(4.0 * constraint(m, u, pd)).epsilon(1e-13));

  // smooth field against the high-resolution quadrature oracle
  WarpedModel mw = build_warped_model(3, 1.0, Expression::parse("exp(x)"), 0.0, 201);
  ProblemData pdw = pd_const(mw, -1.0, -1.0);
  Field us = grid_expr(mw, "1 + x/2");
  double If = oracle::quadrature(
      [](double x) { return std::exp(2.0 * x) * std::pow(1.0 + 0.5 * x, 6.0); }, 0.0, 1.0);
  double Ih = 1.0 * std::pow(1.0, 4.0) + std::exp(2.0) * std::pow(1.5, 4.0);
  double want = std::pow(If, 1.0 / 3.0) + 4.0 * std::sqrt(Ih);
  CHECK(constraint(mw, us, pdw) == doctest::Approx(want).epsilon(2e-5));
}

TEST_CASE("normalize lands on the constraint set exactly") {
  WarpedModel m = cylinder(4);
  ProblemData pd = pd_const(m, -2.0, -1.5);
  confflow::SplitMix64 rng(17);
  for (int t = 0; t < 10; ++t) {
    Field u = oracle::random_field(rng, m.nodes(), 0.2, 2.5);
    Normalized nu = normalize(m, u, pd);
    CHECK(std::abs(constraint(m, nu.u, pd) - 1.0) <= 4.0 * kEps);

    Field u2(u.size());
    for (size_t i = 0; i < u.size(); ++i) u2[i] = 2.0 * u[i];
    Normalized nu2 = normalize(m, u2, pd);
    CHECK(nu2.mu == doctest::Approx(nu.mu / 2.0).epsilon(1e-12));
  }
  Field already(static_cast<size_t>(m.nodes()), 1.0);
  Normalized n1 = normalize(m, normalize(m, already, pd).u, pd);
  CHECK(n1.mu == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("functionals: homogeneity and the conserved combination") {
  WarpedModel m = cylinder(3);
  ProblemData pd = pd_const(m, -1.0, -2.0);
  confflow::SplitMix64 rng(23);
  Field u = oracle::random_field(rng, 201, 0.5, 1.5);

  ScalarsTriple s = functionals(m, u, pd);
  Field cu(u.size());
  const double c = 1.3;
  for (size_t i = 0; i < u.size(); ++i) cu[i] = c * u[i];
  ScalarsTriple sc = functionals(m, cu, pd);
  CHECK(sc.lambda == doctest::Approx(s.lambda).epsilon(1e-12));
  CHECK(sc.alpha == doctest::Approx(std::pow(c, 4.0 / (m.n - 2)) * s.alpha).epsilon(1e-12));
  CHECK(sc.beta == doctest::Approx(std::pow(c, 2.0 / (m.n - 2)) * s.beta).epsilon(1e-12));

  // on the constraint set: a(a alpha)^((n-2)/2) + 2(n-1) b(b beta)^(n-2) = 1
  Field un = normalize(m, u, pd).u;
  ScalarsTriple sn = functionals(m, un, pd);
  Exponents ex = Exponents::critical_for(m.n);
  CHECK(std::abs(preserve_const_residual(m.n, pd, sn, ex)) < 1e-13);
}

TEST_CASE("q_functional is scale free and equals E on the constraint set") {
  WarpedModel m = cylinder(5);
  ProblemData pd = pd_const(m, -1.0, -1.0);
  confflow::SplitMix64 rng(29);
  Field u = oracle::random_field(rng, 201, 0.4, 1.7);
  Field cu(u.size());
  for (size_t i = 0; i < u.size(); ++i) cu[i] = 0.37 * u[i];
  CHECK(q_functional(m, cu, pd) == doctest::Approx(q_functional(m, u, pd)).epsilon(1e-11));
  Field un = normalize(m, u, pd).u;
  CHECK(q_functional(m, un, pd) == doctest::Approx(energy(m, un)).epsilon(1e-12));
}

TEST_CASE("velocity vanishes exactly at the stationary state") {
  WarpedModel m = constant_synthetic(3, -2.0, -1.0);
  ProblemData pd = stationary_pd(m);
  Field one(201, 1.0);
  // alpha = beta = lambda = 1 here, so v = R_g/f - 1 = 0 up to roundoff;
  // v is degree-0 homogeneous, so the normalized state is stationary too.
  // At the two end nodes the flux closure divides stencil cancellation noise
  // by the half cell, so the noise floor there is eps/dx^2-sized.
  const double closure_noise = 100.0 * kEps / (m.dx * m.dx);
  auto check_velocity = [&](const Velocity& v) {
    for (int i = 1; i < m.cells; ++i) CHECK(std::abs(v.interior[i]) < 5e-13);
    CHECK(std::abs(v.interior.front()) < closure_noise);
    CHECK(std::abs(v.interior.back()) < closure_noise);
    CHECK(std::abs(v.boundary.left) < 5e-13);
    CHECK(std::abs(v.boundary.right) < 5e-13);
  };
  check_velocity(velocity(m, one, pd));

  Field un = normalize(m, one, pd).u;
  CHECK(std::abs(constraint(m, un, pd) - 1.0) <= 4.0 * kEps);
  check_velocity(velocity(m, un, pd));
  for (double p : {1.0, 2.0, 3.5}) CHECK(F_p(m, un, pd, p) < 1e-12);
}

TEST_CASE("velocity: constant when curvature data are proportional") {
  // f = 2 R_bg, h = 2 h_bg with a, b tuned so alpha = beta: v is one global
  // constant over interior and boundary.
  WarpedModel m = constant_synthetic(4, -6.0, -1.0);
  ProblemData pd;
  pd.f.assign(201, 2.0 * -6.0);
  pd.h = {-2.0, -2.0};
  Field negf(pd.f.size());
  for (size_t i = 0; i < negf.size(); ++i) negf[i] = -pd.f[i];
  double If = integrate_bulk(m, negf);
  double Ih = integrate_boundary(m, {2.0, 2.0});
  pd.a = std::pow(If, 2.0 / m.n) / 0.7;       // alpha = 0.7
  pd.b = std::pow(Ih, 1.0 / (m.n - 1)) / 0.7;  // beta = 0.7
  Field one(201, 1.0);
  ScalarsTriple s = functionals(m, one, pd);
  CHECK(s.alpha == doctest::Approx(0.7).epsilon(1e-13));
  CHECK(s.beta == doctest::Approx(0.7).epsilon(1e-13));
  Velocity v = velocity(m, one, pd);
  double first = v.interior[0];
  for (double vi : v.interior) CHECK(vi == doctest::Approx(first).epsilon(1e-12));
  CHECK(v.boundary.left == doctest::Approx(first).epsilon(1e-12));
  CHECK(v.boundary.right == doctest::Approx(first).epsilon(1e-12));
}

TEST_CASE("velocity agrees with the componentwise definition on random data") {
  WarpedModel m = cylinder(3);
  ProblemData pd = pd_const(m, -1.5, -0.8);
  confflow::SplitMix64 rng(31);
  Field u = oracle::random_field(rng, 201, 0.6, 1.4);
  Velocity v = velocity(m, u, pd);
  ScalarsTriple s = functionals(m, u, pd);
  CurvatureData c = curvatures(m, u);
  for (int i = 1; i < 200; ++i)
    CHECK(v.interior[i] ==
          doctest::Approx(s.alpha * c.R_g[i] / pd.f[i] - s.lambda).epsilon(1e-12));
  CHECK(v.boundary.right ==
        doctest::Approx(s.beta * c.h_g.right / pd.h.right - s.lambda).epsilon(1e-12));
  // at the end nodes of the bulk grid the field carries the boundary trace
  CHECK(v.interior.front() == v.boundary.left);
  CHECK(v.interior.back() == v.boundary.right);
}

TEST_CASE("F_p: nonnegative, and the n/2 interpolation inequality") {
  WarpedModel m = cylinder(5);
  ProblemData pd = pd_const(m, -1.0, -1.0);
  confflow::SplitMix64 rng(37);
  for (int t = 0; t < 10; ++t) {
    Field u = oracle::random_field(rng, 201, 0.5, 1.5);
    double f2 = F_p(m, u, pd, 2.0);
    CHECK(f2 >= 0.0);
    // n = 5: p = 2 < n/2 = 2.5 <= p+1, s = p+1-n/2 = 0.5
    double fn2 = F_p(m, u, pd, 2.5);
    double f3 = F_p(m, u, pd, 3.0);
    CHECK(fn2 <= 0.5 * f2 + 0.5 * f3 + 1e-12);
    CHECK(fn2 <= std::pow(f2, 0.5) * std::pow(f3, 0.5) + 1e-12);
  }
  CHECK_THROWS_AS(F_p(m, Field(201, 1.0), pd, 0.5), config_error);
}

TEST_CASE("conformal re-description: exact energy covariance") {
  WarpedModel m = cylinder(3);
  Field phi = grid_expr(m, "1 + x*(1-x)/2");
  WarpedModel shifted = conformal_shift(m, phi);
  CHECK(shifted.mode == ModelMode::shifted);

  confflow::SplitMix64 rng(41);
  for (int t = 0; t < 10; ++t) {
    Field w = oracle::random_field(rng, 201, 0.3, 1.7);
    Field pw(w.size());
    for (size_t i = 0; i < w.size(); ++i) pw[i] = phi[i] * w[i];
    CHECK(energy(shifted, w) == doctest::Approx(energy(m, pw)).epsilon(1e-12));

    // measures transform pointwise
    Field wp(w.size());
    for (size_t i = 0; i < w.size(); ++i)
      wp[i] = std::pow(w[i], 2.0 * m.n / (m.n - 2));
    Field pwp(w.size());
    for (size_t i = 0; i < w.size(); ++i)
      pwp[i] = std::pow(pw[i], 2.0 * m.n / (m.n - 2));
    CHECK(integrate_bulk(shifted, wp) ==
          doctest::Approx(integrate_bulk(m, pwp)).epsilon(1e-13));
  }

  // Green identity still exact on the shifted model
  Field u = oracle::random_field(rng, 201, -1.0, 1.0);
  Field lap = laplacian(shifted, u);
  BoundaryPair nd = normal_derivative(shifted, u);
  double scale = 0.0;
  for (int i = 0; i < 201; ++i) scale += std::abs(shifted.w_bulk[i] * lap[i]);
  scale += std::abs(shifted.w_bdry.left * nd.left) +
           std::abs(shifted.w_bdry.right * nd.right);
  CHECK(std::abs(integrate_bulk(shifted, lap) - integrate_boundary(shifted, nd)) <=
        10.0 * kEps * scale);
}

TEST_CASE("positivity is rejected, not clamped") {
  WarpedModel m = cylinder(3);
  Field u(201, 1.0);
  u[57] = 0.0;
  CHECK_THROWS_AS(curvatures(m, u), numerical_error);
  u[57] = -0.2;
  ProblemData pd = pd_const(m, -1.0, -1.0);
  CHECK_THROWS_AS(normalize(m, u, pd), numerical_error);
}
