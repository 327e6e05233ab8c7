#include "yamabe/prescribe.hpp"

#include <cmath>
#include <sstream>

namespace yamabe {

const char* to_string(BumpSign s) { return s == BumpSign::negative ? "negative" : "positive"; }

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

double bump_profile(double t) { return t < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - t * t)) : 0.0; }

PrescribeResult finish(const MetricField& metric, const ScalarField& F, double C, Index q, BumpSign sign,
                       const PrescribeOptions& opts) {
  const GridSpec& grid = metric.grid;
  const int n = grid.n;
  const double a = conformal_a(n);
  const EllipticOperator op = assemble_operator(metric, a, constant_field(grid, 0.0), Boundary::periodic);
  SolveOptions so;
  so.tol = opts.solve_tol;
  so.mean_zero = true;

  PrescribeResult r;
  r.F = F;
  r.u_prime = solve(op, F, 0.0, so);
  r.sup_u_prime = r.u_prime.values.cwiseAbs().maxCoeff();
  r.u = ScalarField(grid, (r.u_prime.values.array() + C / 4).matrix());
  r.u_min = r.u.values.minCoeff();
  r.u_max = r.u.values.maxCoeff();
  r.band_ok = r.u_min >= C / 8 && r.u_max <= 3 * C / 8;
  if (r.u_min > 0) {
    r.H = conformal_metric(metric, r.u).curvature();
    r.H_q = r.H[q];
    r.flipped = sign == BumpSign::negative ? r.H_q < 0 : r.H_q > 0;
  }
  const Eigen::VectorXd w = quadrature_weights(metric);
  r.integral_F = w.dot(F.values);
  r.l1_F = w.dot(F.values.cwiseAbs());
  return r;
}

void check_background(const MetricField& metric, BumpSign sign) {
  require(metric.grid.periodic(), "curvature flipping needs a closed (periodic) grid");
  const double smin = metric.scalar_curv.minCoeff(), smax = metric.scalar_curv.maxCoeff();
  if (sign == BumpSign::negative) {
    require(smin >= 0, "negative flip requires S >= 0 everywhere (min S = " + num(smin) + ")");
    require(smax <= 1, "negative flip requires sup S <= 1; rescale the metric (sup S = " + num(smax) + ")");
  } else {
    require(smax <= 0, "positive flip requires S <= 0 everywhere (max S = " + num(smax) + ")");
    require(smin >= -1, "positive flip requires inf S >= -1; rescale the metric (inf S = " + num(smin) + ")");
  }
}

PrescribeResult flip(const MetricField& metric, BumpSpec spec, BumpSign sign, const PrescribeOptions& opts) {
  check_background(metric, sign);
  spec.sign = sign;
  for (int k = 0;; ++k) {
    const BalancedBump b = build_balanced_bump(metric, spec);
    PrescribeResult r = finish(metric, b.F, spec.depth, spec.center, sign, opts);
    r.eps = b.eps;
    r.used = spec;
    r.halvings = k;
    if (r.sup_u_prime < spec.depth / 8) return r;
    if (k == opts.max_halvings)
      throw NumericalFailure("sup|u'| = " + num(r.sup_u_prime) + " >= C/8 = " + num(spec.depth / 8) + " after " +
                             std::to_string(k) + " halvings of r");
    spec.radius /= 2;
  }
}

}  // namespace

BalancedBump build_balanced_bump(const MetricField& metric, const BumpSpec& spec) {
  const GridSpec& grid = metric.grid;
  require(grid.periodic(), "balanced bump needs a closed (periodic) grid");
  require(spec.depth > 1, "bump depth C must exceed 1 (C = " + num(spec.depth) + ")");
  require(spec.radius > 0 && spec.radius < grid.extent / 2,
          "bump radius must lie in (0, L/2) (r = " + num(spec.radius) + ")");
  require(spec.center >= 0 && spec.center < grid.node_count(), "bump center is not a grid node");

  const double s = spec.sign == BumpSign::negative ? -1.0 : 1.0;
  const Eigen::VectorXd q = grid.coords(spec.center);
  BalancedBump b;
  b.f = constant_field(grid, 0.0);
  for (Index i = 0; i < grid.node_count(); ++i)
    b.f[i] = s * spec.depth * bump_profile(grid.displacement(i, q).norm() / spec.radius);

  const Eigen::VectorXd w = quadrature_weights(metric);
  b.eps = -w.dot(b.f.values) / w.sum();
  if (std::abs(b.eps) >= spec.depth / 2)
    throw PreconditionError("|eps| = " + num(std::abs(b.eps)) + " >= C/2; use a smaller r");
  b.F = ScalarField(grid, (b.f.values.array() + b.eps).matrix());
  b.integral_F = w.dot(b.F.values);
  b.l1_F = w.dot(b.F.values.cwiseAbs());
  return b;
}

PrescribeResult flip_curvature_negative(const MetricField& metric, const BumpSpec& spec,
                                        const PrescribeOptions& opts) {
  return flip(metric, spec, BumpSign::negative, opts);
}

PrescribeResult flip_curvature_positive(const MetricField& metric, const BumpSpec& spec,
                                        const PrescribeOptions& opts) {
  return flip(metric, spec, BumpSign::positive, opts);
}

PrescribeResult flip_from_field(const MetricField& metric, const ScalarField& F, double C, Index q, BumpSign sign,
                                const PrescribeOptions& opts) {
  check_background(metric, sign);
  require(F.grid == metric.grid, "F lives on a different grid");
  require(C > 0, "C must be positive");
  const Eigen::VectorXd w = quadrature_weights(metric);
  const double l1 = w.dot(F.values.cwiseAbs());
  require(std::abs(w.dot(F.values)) <= 1e-12 * std::max(l1, 1.0), "F must have zero mean");
  PrescribeResult r = finish(metric, F, C, q, sign, opts);
  r.used = BumpSpec{q, 0.0, C, sign};
  return r;
}

}  // namespace yamabe
