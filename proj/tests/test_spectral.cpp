#include <doctest.h>

#include <cmath>
#include <random>

#include "yamabe/spectral.hpp"

using namespace yamabe;

TEST_CASE("flat torus without potential: zero mode") {
  const auto grid = build_periodic_grid(3, 1.0, 12);
  const auto op = assemble_operator(flat_metric(grid), 8.0, constant_field(grid, 0.0), Boundary::periodic);
  const auto r = first_eigenpair(op);
  CHECK(std::abs(r.eigenvalue) < 1e-10);
  CHECK(r.sign == Sign::zero);
  const auto& phi = r.eigenfunction.values;
  CHECK(phi.maxCoeff() - phi.minCoeff() < 1e-8);
  CHECK(r.residual <= 1e-8);
}

TEST_CASE("constant potential shifts the spectrum") {
  const auto grid = build_periodic_grid(3, 1.0, 12);
  for (double s : {-1.0, 0.7}) {
    const auto op = assemble_operator(flat_metric(grid), 8.0, constant_field(grid, s), Boundary::periodic);
    const auto r = first_eigenpair(op);
    CHECK(r.eigenvalue == doctest::Approx(s).epsilon(1e-10));
    CHECK(r.sign == (s < 0 ? Sign::negative : Sign::positive));
  }
}

TEST_CASE("Dirichlet Laplacian on the unit 3-ball") {
  const auto grid = build_radial_grid(3, 1.0, 2001);
  const auto op = assemble_operator(flat_metric(grid), 1.0, constant_field(grid, 0.0), Boundary::dirichlet);
  const auto r = first_eigenpair(op);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  CHECK(std::abs(r.eigenvalue / pi2 - 1) < 0.005);
  CHECK(r.residual <= 1e-8);
  for (Index k = 0; k + 1 < grid.node_count(); ++k) CHECK(r.eigenfunction[k] > 0);
}

TEST_CASE("Rayleigh minimality on a curved torus") {
  const auto grid = build_periodic_grid(3, 1.0, 10);
  const auto g = synthesize_normal_metric(grid, {-2.0, {-1.0, -0.5, -0.5}, {0.5, 0.0, 0.0}});
  const auto op = assemble_operator(g, conformal_a(3), g.curvature(), Boundary::periodic);
  const auto r = first_eigenpair(op);
  CHECK(r.residual <= 1e-8);
  CHECK(r.eigenfunction.values.minCoeff() > 0);
  std::mt19937 rng(12345);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXd v(grid.node_count());
    for (Index i = 0; i < v.size(); ++i) v[i] = nd(rng) + (k % 2 ? 3.0 : 0.0);
    CHECK(rayleigh_quotient(op, v) >= r.eigenvalue - 1e-8);
  }
}

TEST_CASE("negative curvature gives a negative first eigenvalue") {
  const auto grid = build_periodic_grid(3, 2.0, 10);
  const auto op = assemble_operator(flat_metric(grid), 8.0, constant_field(grid, -1.0), Boundary::periodic);
  CHECK(first_eigenpair(op).sign == Sign::negative);
}

TEST_CASE("sign classification") {
  CHECK(classify_sign(-0.5, 1e-6) == Sign::negative);
  CHECK(classify_sign(1e-9, 1e-6) == Sign::zero);
  CHECK(classify_sign(2e-6, 1e-6) == Sign::positive);
  CHECK_THROWS_AS(classify_sign(1.0, 0.0), PreconditionError);
}

TEST_CASE("Li-Yau bound") {
  const auto b = li_yau_lower_bound({3, 0.0, 0.1, 10.0});
  CHECK(b.gamma == doctest::Approx(std::exp(2.0)).epsilon(1e-15));
  CHECK(b.bound == doctest::Approx(6.7667641618306346).epsilon(1e-14));  // 50/e^2
  // K = 0, h r = 1: halving r quadruples the bound
  const auto b1 = li_yau_lower_bound({3, 0.0, 0.2, 5.0});
  const auto b2 = li_yau_lower_bound({3, 0.0, 0.1, 10.0});
  CHECK(b2.bound / b1.bound == doctest::Approx(4.0).epsilon(1e-14));
  // nonincreasing in K
  double prev = INFINITY;
  for (double K : {0.0, 0.5, 1.0, 1.5}) {
    const double v = li_yau_lower_bound({3, K, 0.1, 10.0}).bound;
    CHECK(v <= prev);
    prev = v;
  }
  CHECK_THROWS_AS(li_yau_lower_bound({3, 100.0, 0.1, 10.0}), PreconditionError);
  CHECK_THROWS_AS(li_yau_lower_bound({3, 0.0, 0.0, 10.0}), PreconditionError);
}

TEST_CASE("discrete Dirichlet eigenvalue dominates the Li-Yau bound on flat balls") {
  double prev_scaled = 0;
  for (double r : {0.2, 0.1, 0.05, 0.025}) {
    const auto grid = build_radial_grid(3, r, 401);
    const auto op = assemble_operator(flat_metric(grid), 1.0, constant_field(grid, 0.0), Boundary::dirichlet);
    const double lam = first_eigenpair(op).eigenvalue;
    const auto b = li_yau_lower_bound({3, 0.0, r, 2.0 / r});
    CHECK(lam >= b.bound);
    // lambda_1 r^2 stays bounded below
    CHECK(lam * r * r > 9.0);
    if (prev_scaled > 0) CHECK(lam * r * r == doctest::Approx(prev_scaled).epsilon(1e-6));
    prev_scaled = lam * r * r;
  }
}
