#include <doctest.h>

#include <cmath>

#include "yamabe/iterate.hpp"

using namespace yamabe;

namespace {

MetricField torus(int n, double L, int m, const std::function<double(const Eigen::VectorXd&)>& S) {
  const GridSpec grid = build_periodic_grid(n, L, m);
  return with_scalar_curvature(flat_metric(grid), sample(grid, S).values);
}

double gauss(const Eigen::VectorXd& x, double c, double var) {
  return std::exp(-(x.array() - c).matrix().squaredNorm() / (2 * var));
}

Eigen::VectorXd constant(const GridSpec& g, double v) { return Eigen::VectorXd::Constant(g.node_count(), v); }

}  // namespace

TEST_CASE("lambda selectors") {
  CHECK(select_lambda_negative_scalar(1, 1, 6) == doctest::Approx(-0.9));
  CHECK(select_lambda_negative_scalar(2, 1, 6) == doctest::Approx(-0.9 / 16));
  for (double C : {0.5, 1.0, 3.0})
    for (double s : {0.1, 1.0, 7.0}) {
      const double l = select_lambda_negative_scalar(C, s, 6);
      CHECK(std::abs(l) * std::pow(C, 4) < s);
    }
  CHECK_THROWS_AS(select_lambda_negative_scalar(1, 0, 6), PreconditionError);

  CHECK(select_lambda_positive_scalar(1, 8, 6) == doctest::Approx(-3));
  CHECK(select_lambda_positive_scalar(2, 8, 6) == doctest::Approx(-3.0 / 16));
  for (int n = 3; n <= 8; ++n)
    for (double c : {0.3, 1.0, 2.5}) {
      const double a = conformal_a(n), p = critical_p(n);
      const double band = std::abs(select_lambda_positive_scalar(c, a, p)) * std::pow(c, p - 2);
      CHECK(band >= a / 4);
      CHECK(band <= a / 2);
    }
}

TEST_CASE("monotone iteration: constant fixed point") {
  const GridSpec grid = build_periodic_grid(3, 1.0, 17);
  const MetricField g = flat_metric(grid);
  const Semilinear eq = make_semilinear(g, 8.0, constant(grid, -1), constant(grid, -1), 5);
  const MonotoneResult r = monotone_iteration({eq, constant_field(grid, 0.5), constant_field(grid, 2.0)}, 1e-9);
  CHECK((r.u.values.array() - 1).abs().maxCoeff() < 1e-10);
  CHECK(residual_norm(eq, r.u) <= 1e-9);
  for (std::size_t j = 1; j < r.trace.umax.size(); ++j) {
    CHECK(r.trace.monotone[j]);
    CHECK(r.trace.umax[j] <= r.trace.umax[j - 1] + 1e-10);
  }
  // k = sup(h - 5 H u^4) over [0.5, 2] = -1 + 5 * 16
  CHECK(r.k[0] == doctest::Approx(79));

  CHECK_THROWS_AS(monotone_iteration({eq, constant_field(grid, 0.0), constant_field(grid, 2.0)}), PreconditionError);
  CHECK_THROWS_AS(monotone_iteration({eq, constant_field(grid, 2.5), constant_field(grid, 2.0)}), PreconditionError);
}

TEST_CASE("monotone iteration: manufactured solution on a torus") {
  // u* = 1 + 0.3 sin sin sin, h = (H u*^5 + a Lap u*) / u* with H = -1; the long period keeps the
  // constant sandwich 0.9 min u*, 1.1 max u* valid
  const double L = 80, A = 0.3, k = 2 * std::numbers::pi / L, a = 8;
  double prev = 0;
  for (int m : {17, 33}) {
    const GridSpec grid = build_periodic_grid(3, L, m);
    const MetricField g = flat_metric(grid);
    const ScalarField us = sample(grid, [&](const Eigen::VectorXd& x) {
      return 1 + A * std::sin(k * x[0]) * std::sin(k * x[1]) * std::sin(k * x[2]);
    });
    Eigen::VectorXd h(grid.node_count());
    for (Index i = 0; i < h.size(); ++i) h[i] = (-3 * a * k * k * (us[i] - 1) - std::pow(us[i], 5)) / us[i];
    const Semilinear eq = make_semilinear(g, a, h, constant(grid, -1), 5);
    const ScalarField lo = constant_field(grid, 0.9 * us.values.minCoeff());
    const ScalarField hi = constant_field(grid, 1.1 * us.values.maxCoeff());
    CHECK(verify_subsolution(lo, eq).ok);
    CHECK(verify_supersolution(hi, eq).ok);
    const MonotoneResult r = monotone_iteration({eq, lo, hi}, 1e-9);
    const double err = (r.u.values - us.values).cwiseAbs().maxCoeff();
    const double sp = grid.spacing();
    CHECK(err <= 5 * sp * sp * us.values.maxCoeff());
    if (prev > 0) CHECK(std::log2(prev / err) > 1.8);
    prev = err;

    NewtonReport nr;
    const ScalarField un = damped_newton(eq, hi, 1e-9, 60, &nr);
    CHECK(nr.converged);
    CHECK((un.values - r.u.values).cwiseAbs().maxCoeff() <= 10 * 1e-9);
  }
}

TEST_CASE("local double iteration: both sign cases and the neutral case") {
  const GridSpec grid = build_radial_grid(3, 0.5, 51);
  const Index N = grid.node_count();
  SUBCASE("S = -1") {
    const MetricField g = with_scalar_curvature(flat_metric(grid), constant(grid, -1));
    const double lam = select_lambda_negative_scalar(2.0, 1.0, 6.0);
    const LocalResult r = double_iteration_local(make_local_problem(g, lam, 0, 1.0), 1e-9);
    CHECK(r.kind == LocalCase::negative);
    CHECK(r.trace.residual.back() <= 1e-9);
    CHECK(r.u.values.minCoeff() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.boundary_extreme_gap >= -1e-12);
    CHECK(r.lambda_ok);
    const Semilinear eq = make_semilinear(g, 8, g.scalar_curv, constant(grid, lam), 5, radial_interior_mask(grid), 1);
    const ScalarField un = damped_newton(eq, constant_field(grid, 1.0), 1e-11);
    CHECK((un.values - r.u.values).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("S = +1") {
    const MetricField g = with_scalar_curvature(flat_metric(grid), constant(grid, 1));
    const LocalResult r = double_iteration_local(make_local_problem(g, -3.0, 0, 1.0), 1e-9);
    CHECK(r.kind == LocalCase::positive);
    for (std::size_t j = 0; j < r.trace.umin.size(); ++j) {
      CHECK(r.trace.umin[j] >= -1e-10);
      CHECK(r.trace.umax[j] <= 1 + 1e-10);
    }
    CHECK(r.u.values[N - 1] == 1.0);
    CHECK(r.boundary_extreme_gap >= 0);
    const Semilinear eq = make_semilinear(g, 8, g.scalar_curv, constant(grid, -3), 5, radial_interior_mask(grid), 1);
    const ScalarField un = damped_newton(eq, constant_field(grid, 1.0), 1e-11);
    CHECK((un.values - r.u.values).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("S = 0, lambda = 0") {
    const MetricField g = flat_metric(grid);
    const LocalResult r = double_iteration_local(make_local_problem(g, 0.0, 0, 1.3), 1e-9);
    CHECK(r.kind == LocalCase::neutral);
    CHECK((r.u.values.array() - 1.3).abs().maxCoeff() < 1e-10);
  }
  SUBCASE("inadmissible data") {
    const MetricField g = with_scalar_curvature(flat_metric(grid), constant(grid, 1));
    CHECK_THROWS_AS(double_iteration_local(make_local_problem(g, -1.0, 0, 1.0)), PreconditionError);  // outside band
    const MetricField big = with_scalar_curvature(flat_metric(grid), constant(grid, 5));
    CHECK_THROWS_AS(double_iteration_local(make_local_problem(big, -3.0, 0, 1.0)), PreconditionError);  // S > a/2
    CHECK_THROWS_AS(double_iteration_local(make_local_problem(g, -3.0, 0.1, 1.0)), PreconditionError);  // beta > 0
  }
}

TEST_CASE("certificates and the extension subsolution") {
  const GridSpec grid = build_periodic_grid(3, 4.0, 17);
  const MetricField g = with_scalar_curvature(flat_metric(grid), constant(grid, -1));
  const Semilinear exact = make_semilinear(g, 8, constant(grid, -1), constant(grid, -1), 5);
  const Certificate s = verify_subsolution(constant_field(grid, 1.0), exact);
  const Certificate t = verify_supersolution(constant_field(grid, 1.0), exact);
  CHECK(s.ok);
  CHECK(t.ok);
  CHECK(std::abs(s.margin) < 1e-12);
  CHECK(std::abs(t.margin) < 1e-12);

  const Eigen::VectorXd center = grid.center();
  const NodeMask ball = ball_mask(grid, center, 1.0);
  const double c = 1.0, lam = select_lambda_negative_scalar(2 * c, 1.0, 6.0);
  const LocalResult loc = double_iteration_local(make_local_problem(g, lam, 0, c, ball), 1e-9);
  const ScalarField um = build_sub_by_extension(loc.u, c, ball);
  CHECK(um.values.minCoeff() >= c - 1e-12);
  for (Index i = 0; i < grid.node_count(); ++i)
    if (!ball[i]) CHECK(um[i] == c);
  const Semilinear eq = make_semilinear(g, 8, g.scalar_curv, constant(grid, lam), 5);
  const NodeMask iface = interface_mask(grid, ball);
  const Certificate sub = verify_subsolution(um, eq, &iface);
  CHECK(sub.ok);
  CHECK(sub.interface_nodes > 0);
  // far from the ball the residual is c (S - lambda c^{p-2}) <= 0
  const Eigen::VectorXd R = semilinear_residual(eq, um.values);
  CHECK(R[0] == doctest::Approx(c * (-1 - lam)));

  // reflecting the bump about c flips the flux at the interface
  ScalarField flipped = um;
  for (Index i = 0; i < grid.node_count(); ++i)
    if (ball[i]) flipped[i] = 2 * c - um[i];
  const Certificate bad = verify_subsolution(flipped, eq, &iface);
  CHECK_FALSE(bad.ok);
  CHECK(bad.interface_margin < 0);
  CHECK(bad.worst >= 0);

  // constant local field extends to the constant
  CHECK((build_sub_by_extension(constant_field(grid, c), c, ball).values.array() == c).all());
}

TEST_CASE("radial profile embedding") {
  const GridSpec amb = build_periodic_grid(3, 2.0, 17);
  const GridSpec rad = build_radial_grid(3, 0.5, 11);
  const ScalarField prof = sample(rad, [](const Eigen::VectorXd& s) { return 1.0 + (0.25 - s[0] * s[0]); });
  const ScalarField u = build_sub_by_extension(prof, 1.0, amb, amb.center());
  CHECK(u[amb.center_node()] == doctest::Approx(1.25));
  CHECK(u.values.minCoeff() == doctest::Approx(1.0));
  CHECK(u[0] == 1.0);
  const GridSpec wide = build_radial_grid(3, 1.2, 11);
  CHECK_THROWS_AS(build_sub_by_extension(constant_field(wide, 1.0), 1.0, amb, amb.center()), PreconditionError);
  CHECK_THROWS_AS(build_sub_by_extension(prof, 2.0, amb, amb.center()), PreconditionError);  // boundary value != c
}

TEST_CASE("constant supersolution") {
  const GridSpec grid = build_periodic_grid(3, 1.0, 5);
  CHECK(build_super_constant(-1, constant_field(grid, -2.0), constant_field(grid, 1.2), 6) == doctest::Approx(1.2));
  CHECK(build_super_constant(-1, constant_field(grid, -16.0), constant_field(grid, 1.0), 6) == doctest::Approx(2));
  CHECK_THROWS_AS(build_super_constant(0.5, constant_field(grid, -2.0), constant_field(grid, 1.0), 6),
                  PreconditionError);

  const MetricField g = torus(3, 4.0, 17, [](const Eigen::VectorXd& x) { return -1 - 0.5 * gauss(x, 2, 0.3); });
  const double lam = -0.3;
  const double C = build_super_constant(lam, g.curvature(), constant_field(g.grid, 0.5), 6);
  const Semilinear eq = make_semilinear(g, 8, g.scalar_curv, constant(g.grid, lam), 5);
  const Certificate cert = verify_supersolution(constant_field(g.grid, C), eq);
  CHECK(cert.ok);
  CHECK(cert.margin >= -1e-12);
}

TEST_CASE("extension supersolution from the positive local problem") {
  const MetricField g = torus(3, 4.0, 17, [](const Eigen::VectorXd&) { return 1.0; });
  const GridSpec& grid = g.grid;
  const NodeMask ball = ball_mask(grid, grid.center(), 1.0);
  const double c = 1.0, lam = -3.0;
  const LocalResult loc = double_iteration_local(make_local_problem(g, lam, 0, c, ball), 1e-9);
  const ScalarField up = build_super_by_extension(loc.u, c, ball);
  CHECK(up.values.maxCoeff() <= c + 1e-12);
  CHECK(up.values.minCoeff() > 0);
  const Semilinear eq = make_semilinear(g, 8, g.scalar_curv, constant(grid, lam), 5);
  const Certificate cert = verify_supersolution(up, eq);
  CHECK(cert.ok);
  CHECK(semilinear_residual(eq, up.values)[0] == doctest::Approx(1 * c - lam * c));
  CHECK((build_super_by_extension(constant_field(grid, c), c, ball).values.array() == c).all());
}

TEST_CASE("eigenfunction subsolution") {
  const double s = -2.0;
  const MetricField g = torus(3, 2.0, 9, [&](const Eigen::VectorXd&) { return s; });
  const GridSpec& grid = g.grid;
  const ScalarField phi = constant_field(grid, 1.0);
  const ScalarField up = constant_field(grid, 2.0);
  const ScalarField um = build_sub_eigen(phi, s, s / 2, up);
  CHECK((um.values.array() == 1.0).all());
  const Semilinear eq = make_semilinear(g, 8, g.scalar_curv, constant(grid, s / 2), 5);
  CHECK(verify_subsolution(um, eq).ok);
  CHECK(verify_subsolution(ScalarField(grid, 0.1 * um.values), eq).ok);
  // lambda = eta1: zero margin in the linear term
  const ScalarField ue = build_sub_eigen(phi, s, s, up);
  const Semilinear eq2 = make_semilinear(g, 8, g.scalar_curv, constant(grid, s), 5);
  const Certificate c2 = verify_subsolution(ue, eq2);
  CHECK(c2.ok);
  CHECK(std::abs(c2.margin) < 1e-12);
  CHECK_THROWS_AS(build_sub_eigen(phi, s, 1.5 * s, up), PreconditionError);
}

TEST_CASE("theta scaling of the eigenfunction") {
  const GridSpec grid = build_periodic_grid(3, 1.0, 5);
  const ScalarField phi = constant_field(grid, 1.0);
  const ThetaScaling t = scale_eigen_theta(phi, 1.5, -0.5, 2.0, 1.0, 6);
  CHECK(t.theta_max == doctest::Approx(0.5));
  CHECK(t.theta == doctest::Approx(0.45));
  CHECK(t.ratio >= 1.05);
  const ThetaScaling t2 = scale_eigen_theta(phi, 1.5, -0.5, 2.5, 1.0, 6);
  const ThetaScaling t3 = scale_eigen_theta(phi, 1.5, -0.5, 2.5, 2.0, 6);
  CHECK(t3.theta > t2.theta);
  // non-constant phi: recheck the strict inequality directly
  const ScalarField wavy = sample(grid, [](const Eigen::VectorXd& x) { return 1.0 + 0.5 * std::sin(6 * x[0]); });
  const ThetaScaling t4 = scale_eigen_theta(wavy, 1.0, 0.0, 3.0, 1.0, 6);
  const double lhs = 1.0 * t4.phi.values.minCoeff();
  const double rhs = 16 * 2.0 * std::pow(t4.phi.values.maxCoeff(), 5);
  CHECK(lhs > 1.05 * rhs);
  CHECK_THROWS_AS(scale_eigen_theta(phi, 1.0, -1.0, 2.0, 1.0, 6), PreconditionError);
  CHECK_THROWS_AS(scale_eigen_theta(phi, 1.0, 0.0, 2.0, 2.0, 6), PreconditionError);
}

namespace {

struct PartitionCase {
  MetricField g;
  Semilinear eq;
  NodeMask ball;
  ScalarField phi;
  double eta1 = 1.0, beta = -0.1, lp = 1.0;
};

// flat torus with constant S: phi = theta is constant, u3 a bump on a ball
PartitionCase partition_case(int m, double bump) {
  PartitionCase pc;
  pc.g = torus(3, 4.0, m, [](const Eigen::VectorXd&) { return 1.0; });
  const GridSpec& grid = pc.g.grid;
  pc.eq = make_semilinear(pc.g, 8, (pc.g.scalar_curv.array() + pc.beta).matrix(), constant(grid, pc.lp), 5);
  pc.ball = ball_mask(grid, grid.center(), 1.0);
  const ThetaScaling th = scale_eigen_theta(constant_field(grid, 1.0), pc.eta1, pc.beta, pc.lp + 0.5, 0.5, 6);
  pc.phi = th.phi;
  (void)bump;
  return pc;
}

ScalarField bump_field(const GridSpec& grid, const NodeMask& ball, double height) {
  ScalarField u = sample(grid, [&](const Eigen::VectorXd& x) {
    const double s = (x - grid.center()).norm();
    return s < 1.0 ? height * std::cos(0.5 * std::numbers::pi * s) : 0.0;
  });
  for (Index i = 0; i < grid.node_count(); ++i)
    if (!ball[i]) u[i] = 0;
  return u;
}

}  // namespace

TEST_CASE("partition supersolution: dominance shortcut and structure") {
  const PartitionCase pc = partition_case(17, 0);
  const GridSpec& grid = pc.g.grid;
  const PartitionInputs in{pc.eta1, pc.beta, pc.lp, 1e-6};

  const ScalarField low = bump_field(grid, pc.ball, 0.5 * pc.phi.values.minCoeff());
  const PartitionResult d = build_super_partition(low, pc.phi, pc.ball, pc.eq, in);
  CHECK(d.dominance);
  CHECK((d.u_bar.values - pc.phi.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(d.ok);
  CHECK(d.used.beta_prime > 0);

  const ScalarField high = bump_field(grid, pc.ball, 3 * pc.phi.values.maxCoeff());
  const PartitionResult x = build_super_partition(high, pc.phi, pc.ball, pc.eq, in);
  CHECK_FALSE(x.dominance);
  CHECK(x.crossings > 0);
  CHECK(x.above_u3);
  const Eigen::ArrayXd sum = x.chi1.values.array() + x.chi2.values.array() + x.chi3.values.array();
  for (Index i = 0; i < grid.node_count(); ++i) {
    if (!pc.ball[i]) continue;
    CHECK(sum[i] == doctest::Approx(1.0));
    CHECK(x.chi1[i] >= 0);
    CHECK(x.chi2[i] >= 0);
    CHECK(x.chi3[i] >= -1e-14);
  }
  // gamma obeys both collar inequalities with the pointwise beta'
  const double g = x.used.gamma, bp = x.used.beta_prime;
  CHECK(20 * pc.lp * g + 2 * g * (1.0 + 0.1 + 0.1) < bp / 2);
  CHECK(31 * pc.lp * std::pow(pc.phi.values.maxCoeff() + g, 4) * g < bp / 2);
  // where chi1 = 1 the glued field is u3 itself
  for (Index i = 0; i < grid.node_count(); ++i)
    if (x.chi1[i] == 1.0) CHECK(x.u_bar[i] == high[i]);
}

// The glued field has a convex kink where chi1 reaches 1, so its weak residual is negative there no matter
// how small the mollifier; the certificate is expected to fail (see README, "Known deviations").
TEST_CASE("partition supersolution: crossing case certificate" * doctest::should_fail()) {
  const PartitionCase pc = partition_case(33, 0);
  const GridSpec& grid = pc.g.grid;
  const ScalarField high = bump_field(grid, pc.ball, 3 * pc.phi.values.maxCoeff());
  const PartitionInputs in{pc.eta1, pc.beta, pc.lp, 1e-6};
  const PartitionResult x = build_super_partition(high, pc.phi, pc.ball, pc.eq, in);
  for (const auto& r : x.regions)
    if (r.nodes > 0) CHECK(r.margin >= -1e-6);
}

TEST_CASE("global negative pipelines") {
  SUBCASE("S < 0 everywhere, beta = 0 and beta = -0.1") {
    const MetricField g = torus(3, 4.0, 17, [](const Eigen::VectorXd& x) { return -1 - 0.5 * gauss(x, 2, 0.3); });
    for (double beta : {0.0, -0.1}) {
      const GlobalReport r = solve_global_negative(g, beta);
      CHECK(r.eta1 < 0);
      CHECK(r.lambda < 0);
      CHECK(r.residual <= 1e-7);
      CHECK(r.u.values.minCoeff() > 0);
      CHECK(r.sub.ok);
      CHECK(r.super.ok);
      CHECK(r.oracle_difference <= 1e-8);
      const double infNegS = -(g.scalar_curv.maxCoeff() + beta);
      CHECK(r.lambda == doctest::Approx(select_lambda_negative_scalar(2.0, infNegS, 6.0)));
      for (std::size_t j = 1; j < r.monotone_trace.umax.size(); ++j) CHECK(r.monotone_trace.monotone[j]);
    }
  }
  SUBCASE("positive bump on a negative background") {
    const MetricField g = torus(3, 4.0, 17, [](const Eigen::VectorXd& x) { return -1 + 1.5 * gauss(x, 2, 0.5); });
    const GlobalReport r = solve_global_negative(g, 0.0);
    CHECK(r.path == "sign-mixed");
    CHECK(r.eta1 < 0);
    CHECK(r.lambda < 0);
    CHECK(r.lambda >= r.eta1);
    CHECK(r.residual <= 1e-7);
    CHECK(r.sub.ok);
    CHECK(r.super.ok);
    CHECK(r.u.values.minCoeff() > 0);
  }
  SUBCASE("eta1 > 0 is refused") {
    const MetricField g = torus(3, 4.0, 9, [](const Eigen::VectorXd&) { return 1.0; });
    CHECK_THROWS_AS(solve_global_negative(g, 0.0), GateError);
  }
}

TEST_CASE("perturbed positive pipeline and continuation") {
  const MetricField g = torus(3, 4.0, 17, [](const Eigen::VectorXd& x) { return 1 - 2 * gauss(x, 2, 0.16); });
  SUBCASE("solve at beta = -0.05") {
    const GlobalReport r = solve_perturbed_positive(g, -0.05, -1);
    CHECK(r.eta1 > 0);
    CHECK(r.lambda > 0);
    CHECK(r.lambda == doctest::Approx(0.9 * r.lambda_beta));
    CHECK(r.residual <= 1e-7);
    CHECK(r.u.values.minCoeff() > 0);
    CHECK(r.sub.ok);
    CHECK(r.mountain_level < r.mountain_K0);
  }
  SUBCASE("gates") {
    const double lb = estimate_lambda_beta(g, -0.05).value;
    CHECK_THROWS_AS(solve_perturbed_positive(g, -0.05, lb), GateError);
    CHECK_THROWS_AS(solve_perturbed_positive(g, -5.0, -1), GateError);
    const MetricField pos = torus(3, 4.0, 9, [](const Eigen::VectorXd&) { return 1.0; });
    CHECK_THROWS_AS(solve_perturbed_positive(pos, -0.05, -1), GateError);
  }
  SUBCASE("continuation") {
    const auto sched = continuation_schedule(-0.2, 4);
    REQUIRE(sched.size() == 4);
    CHECK(sched[0] == -0.2);
    CHECK(sched[1] == -0.1);
    CHECK(sched[2] == -0.05);
    CHECK(sched[3] == 0.0);
    const ContinuationReport c = beta_continuation(g, -0.2, 4, -1);
    CHECK(c.steps.size() == 4);
    CHECK(c.final_residual <= 1e-7);
    CHECK(c.lambda_monotone);
    CHECK(c.contraction_ok);
    CHECK(c.below_aT);
    for (const auto& s : c.steps) CHECK(s.lp_norm >= 1 - 1e-8);
    CHECK(c.metric_scale <= 1.0);
  }
}
