#include "yamabe/quotient.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "yamabe/constants.hpp"
#include "yamabe/quadrature.hpp"

namespace yamabe {

namespace {

struct Sums {
  double energy = 0, curv = 0, l2 = 0, lp = 0;
};

Sums quotient_sums(const ScalarField& u, const MetricField& metric, double a, const ScalarField& S) {
  require(u.grid == metric.grid && S.grid == metric.grid, "quotient: fields live on different grids");
  const Boundary bc = metric.grid.periodic() ? Boundary::periodic : Boundary::dirichlet;
  const EllipticOperator op = assemble_operator(metric, a, S, bc);
  const double p = critical_p(metric.grid.n);
  Sums s;
  s.energy = op.energy(u.values);
  const Eigen::ArrayXd u2 = u.values.array().square();
  s.curv = (op.mass.array() * S.values.array() * u2).sum();
  s.l2 = (op.mass.array() * u2).sum();
  s.lp = (op.mass.array() * u.values.array().abs().pow(p)).sum();
  if (!(s.lp > 0)) throw PreconditionError("quotient of the zero field is undefined");
  return s;
}

}  // namespace

double yamabe_quotient(const ScalarField& u, const MetricField& metric, double a, const ScalarField& S) {
  const Sums s = quotient_sums(u, metric, a, S);
  const double p = critical_p(metric.grid.n);
  return (s.energy + s.curv) / std::pow(s.lp, 2.0 / p);
}

double perturbed_quotient(const ScalarField& u, const MetricField& metric, double a, const ScalarField& S,
                          double beta) {
  const Sums s = quotient_sums(u, metric, a, S);
  const double p = critical_p(metric.grid.n);
  return (s.energy + s.curv + beta * s.l2) / std::pow(s.lp, 2.0 / p);
}

// ---------------------------------------------------------------- test functions

TestFunctionSpec make_test_function_spec(int n, double r, double epsilon) {
  require(n >= 3, "dimension n must be at least 3");
  require(epsilon > 0, "epsilon must be positive");
  require(r > 0, "radius must be positive");
  TestFunctionSpec s{n, r, epsilon, n == 3 ? Cutoff::cosine : Cutoff::plateau_bump};
  if (n == 3) require(r == 1.0, "the cosine cutoff lives on the unit ball (r = 1)");
  return s;
}

namespace {

// smooth step: 0 for t <= 0, 1 for t >= 1
template <typename R>
R smooth_step(R t) {
  if (t <= 0) return 0;
  if (t >= 1) return 1;
  using std::exp;
  return 1 / (1 + exp(1 / t - 1 / (1 - t)));
}

template <typename R>
R smooth_step_derivative(R t) {
  if (t <= 0 || t >= 1) return 0;
  const R q = smooth_step(t);
  return q * (1 - q) * (1 / (t * t) + 1 / ((1 - t) * (1 - t)));
}

template <typename R>
R cutoff_t(const TestFunctionSpec& spec, R s) {
  if (spec.cutoff == Cutoff::cosine) {
    using std::cos;
    return s >= 1 ? R(0) : cos(std::numbers::pi_v<R> * s / 2);
  }
  const R r = R(spec.r);
  return smooth_step((r - s) / (r / 2));
}

template <typename R>
R cutoff_dt(const TestFunctionSpec& spec, R s) {
  if (spec.cutoff == Cutoff::cosine) {
    using std::sin;
    const R pi = std::numbers::pi_v<R>;
    return s >= 1 ? R(0) : -pi / 2 * sin(pi * s / 2);
  }
  const R r = R(spec.r);
  return -smooth_step_derivative((r - s) / (r / 2)) / (r / 2);
}

}  // namespace

double cutoff_value(const TestFunctionSpec& spec, double s) { return cutoff_t<double>(spec, s); }
double cutoff_derivative(const TestFunctionSpec& spec, double s) { return cutoff_dt<double>(spec, s); }

ScalarField aubin_test_field(const TestFunctionSpec& spec, const GridSpec& grid) {
  require(!grid.periodic(), "test functions live on a radial grid");
  require(spec.epsilon > 0, "epsilon must be positive");
  require(std::abs(grid.extent - spec.r) <= 1e-14 * spec.r, "radial grid radius must equal the test-function radius");
  ScalarField u = sample(grid, [&](const Eigen::VectorXd& x) {
    const double s = x[0];
    return cutoff_value(spec, s) / std::pow(spec.epsilon + s * s, 0.5 * (spec.n - 2));
  });
  u[grid.node_count() - 1] = 0.0;
  return u;
}

AubinPieces aubin_pieces(const TestFunctionSpec& spec, double S0) {
  using R = long double;
  const int n = spec.n;
  const R eps = spec.epsilon, se = std::sqrt(eps);
  const R p = critical_p<R>(n);
  const R e = R(n - 2) / 2;
  const R R2 = R(spec.r) / se;
  const R R1 = spec.cutoff == Cutoff::cosine ? R2 : R2 / 2;

  auto v = [&](R y) { return cutoff_t<R>(spec, se * y) * std::pow(1 + y * y, -e); };
  auto dv = [&](R y) {
    return cutoff_dt<R>(spec, se * y) * se * std::pow(1 + y * y, -e) -
           cutoff_t<R>(spec, se * y) * R(n - 2) * y * std::pow(1 + y * y, -e - 1);
  };
  auto w = [&](R y) { return (1 - R(S0) * eps * y * y / (6 * n)) * std::pow(y, R(n - 1)); };

  // geometric breakpoints resolve the bubble scale y ~ 1 and the slow tail
  std::vector<R> cuts{0};
  for (R b = 1; b < R1; b *= 4) cuts.push_back(b);
  cuts.push_back(R1);
  if (R2 > R1) cuts.push_back(R2);

  AubinPieces pc;
  const R tol = 1e-16L;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const R lo = cuts[k], hi = cuts[k + 1];
    if (!(hi > lo)) continue;
    pc.grad += tanh_sinh_plain<R>([&](R y) { const R d = dv(y); return d * d * w(y); }, lo, hi, tol, 14).value;
    pc.mass2 += tanh_sinh_plain<R>([&](R y) { const R u = v(y); return u * u * w(y); }, lo, hi, tol, 14).value;
    pc.pmass += tanh_sinh_plain<R>([&](R y) { return std::pow(v(y), p) * w(y); }, lo, hi, tol, 14).value;
  }
  return pc;
}

long double aubin_quotient(const AubinPieces& pc, const TestFunctionSpec& spec, double S0, double beta) {
  using R = long double;
  const int n = spec.n;
  const R om = sphere_area<R>(n);
  const R a = conformal_a<R>(n), p = critical_p<R>(n);
  const R num = om * (pc.grad + R(spec.epsilon) * (R(S0) + R(beta)) / a * pc.mass2);
  return num / std::pow(om * pc.pmass, 2 / p);
}

namespace {

// least squares for y = c1 f1 + c2 f2
std::pair<double, double> fit2(const std::vector<double>& f1, const std::vector<double>& f2,
                               const std::vector<double>& y) {
  Eigen::MatrixXd A(y.size(), 2);
  Eigen::VectorXd b(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) A(i, 0) = f1[i], A(i, 1) = f2[i], b[i] = y[i];
  const Eigen::Vector2d c = A.colPivHouseholderQr().solve(b);
  return {c[0], c[1]};
}

}  // namespace

QuotientReport quotient_scan(int n, double r, double beta, const CurvatureSpec& curv, std::vector<double> eps) {
  require(n >= 3, "dimension n must be at least 3");
  require(beta < 0, "the scan needs beta < 0");
  require(!eps.empty(), "the scan needs at least one epsilon");
  const double pi = std::numbers::pi;
  if (n == 3 && std::abs(curv.S0 / 8 + pi * pi / 4) > 1e-12 * pi * pi)
    throw PreconditionError("n=3 requires S0 = -2*pi^2 (so that S0/8 + pi^2/4 = 0)");
  require(curv.S0 < 0, "the scan needs negative scalar curvature at the center");
  for (double e : eps) require(e > 0 && e < r * r, "each epsilon must satisfy 0 < epsilon < r^2");
  std::sort(eps.begin(), eps.end());

  QuotientReport rep;
  rep.n = n;
  rep.r = r;
  rep.beta = beta;
  rep.S0 = curv.S0;
  rep.T = best_sobolev_constant(n);
  rep.epsilons = eps;
  rep.margin = INFINITY;
  const long double om = sphere_area<long double>(n);
  const long double a = conformal_a<long double>(n), p = critical_p<long double>(n);
  std::vector<double> gap;
  for (double e : eps) {
    const auto spec = make_test_function_spec(n, r, e);
    const auto pc = aubin_pieces(spec, curv.S0);
    const long double num = om * (pc.grad + (long double)e * ((long double)curv.S0 + beta) / a * pc.mass2);
    const long double den = std::pow(om * pc.pmass, 2 / p);
    const long double Q = num / den;
    rep.numerator.push_back(double(num));
    rep.denominator.push_back(double(den));
    rep.Q.push_back(double(Q));
    const double g = double((long double)best_sobolev_constant(n) - Q);
    gap.push_back(g);
    rep.margin = std::min(rep.margin, g);
  }

  const std::size_t k = std::min<std::size_t>(3, eps.size());
  std::vector<double> e3(eps.begin(), eps.begin() + k), g3(gap.begin(), gap.begin() + k);
  SlopeFit& f = rep.fit;
  if (n >= 5) {
    f.regime = "linear";
    double num = 0, den = 0;
    for (std::size_t i = 0; i < k; ++i) num += g3[i] * e3[i], den += e3[i] * e3[i];
    f.coefficient = num / den;
    const auto t = constants_for(n);
    f.predicted = (n - 2) * std::abs(beta) * (*t.K3) / (4.0 * (n - 1) * t.K2);
    f.ok = std::abs(f.coefficient / f.predicted - 1) <= 0.25;
  } else if (n == 4) {
    f.regime = "eps-log-eps";
    std::vector<double> f1, f2;
    for (double e : eps) f1.push_back(e * std::abs(std::log(e))), f2.push_back(e);
    if (eps.size() >= 2) {
      std::tie(f.coefficient, f.secondary) = fit2(f1, f2, gap);
    } else {
      f.coefficient = gap[0] / f1[0];
    }
    f.ok = f.coefficient > 0;
  } else {
    f.regime = "sqrt-eps";
    std::vector<double> f1, f2;
    for (double e : eps) f1.push_back(std::sqrt(e)), f2.push_back(e);
    if (eps.size() >= 2) {
      std::tie(f.coefficient, f.secondary) = fit2(f1, f2, gap);
    } else {
      f.coefficient = gap[0] / f1[0];
    }
    // omega_3 int_0^1 cos^2(pi s / 2) ds = 2 pi
    f.predicted = std::abs(beta) / 8 * (2 * pi) / constants_for(3).K2;
    f.ok = f.coefficient > 0;
  }
  return rep;
}

// ---------------------------------------------------------------- mountain level

MountainLevel mountain_level_from_parts(int n, double lambda, double V1, double V2, double Wp) {
  require(lambda > 0, "mountain-pass level needs lambda > 0");
  require(Wp > 0, "W = 0: the field vanishes");
  const double p = critical_p(n), a = conformal_a(n);
  MountainLevel m;
  m.V1 = V1;
  m.V2 = V2;
  m.W = std::pow(Wp, 1.0 / p);
  m.K0 = std::pow(lambda, (2.0 - n) / 2) * std::pow(a * best_sobolev_constant(n), 0.5 * n) / n;
  if (V1 > V2) {
    m.t0 = std::pow((V1 - V2) / Wp, 1.0 / (p - 2));
    m.level = std::pow((V1 - V2) / (m.W * m.W), 0.5 * n) / n;
  } else {
    m.t0 = 0;
    m.level = 0;
  }
  m.below = m.level < m.K0;
  return m;
}

MountainLevel mountain_level(const ScalarField& u, const MetricField& metric, double a, const ScalarField& S,
                             double beta, double lambda) {
  require(u.values.minCoeff() >= 0, "mountain-pass level needs u >= 0");
  const Sums s = quotient_sums(u, metric, a, S);
  // V2 = int (-S - beta) u^2
  return mountain_level_from_parts(metric.grid.n, lambda, s.energy, -(s.curv + beta * s.l2), lambda * s.lp);
}

MountainLevel mountain_level_aubin(const TestFunctionSpec& spec, double S0, double beta, double lambda) {
  const int n = spec.n;
  const auto pc = aubin_pieces(spec, S0);
  const long double om = sphere_area<long double>(n), a = conformal_a<long double>(n);
  const long double eps = spec.epsilon;
  // undo the y-scaling: u(s) = eps^{-(n-2)/2} v(s / sqrt eps)
  const long double f = std::pow(eps, -(long double)(n - 2) / 2);
  const long double V1 = a * om * pc.grad * f;
  const long double V2 = -((long double)S0 + beta) * om * pc.mass2 * f * eps;
  const long double Wp = lambda * om * pc.pmass * std::pow(eps, -(long double)n / 2);
  return mountain_level_from_parts(n, lambda, double(V1), double(V2), double(Wp));
}

// ---------------------------------------------------------------- lambda_beta

namespace {

struct Descent {
  Eigen::VectorXd mass;
  SparseMatrix A;  // K + diag(M (S + beta))
  SparseMatrix B;  // SPD preconditioner
  double p;

  double lp(const Eigen::VectorXd& v) const { return (mass.array() * v.array().abs().pow(p)).sum(); }
  Eigen::VectorXd normalise(const Eigen::VectorXd& v) const { return v / std::pow(lp(v), 1.0 / p); }
  double Q(const Eigen::VectorXd& v) const { return v.dot(A * v) / std::pow(lp(v), 2.0 / p); }
};

LambdaBetaEstimate descend(const Descent& d, const GridSpec& grid, Eigen::VectorXd v, const LambdaBetaOptions& opts,
                           const std::vector<Index>* unknowns = nullptr) {
  LambdaBetaEstimate out;
  v = d.normalise(v.cwiseMax(0.0));
  double q = d.Q(v);
  out.trace.push_back(q);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(v.size()), dir;
  double step = 1.0;
  int it = 0, small = 0;
  for (; it < opts.iters; ++it) {
    // gradient at unit L^p norm: 2 (A v - Q M v^{p-1})
    const Eigen::VectorXd g =
        2.0 * (d.A * v - q * (d.mass.array() * v.array().pow(d.p - 1)).matrix());
    // Sobolev gradient: B x = g, warm-started from the previous solve
    x = pcg(d.B, g, x, Eigen::VectorXd::Ones(v.size()), 1e-10, 5000, false, nullptr);
    dir = -0.5 * x;
    const double slope = g.dot(dir);
    if (slope >= 0) break;
    bool accepted = false;
    double t = std::min(1.0, 2.0 * step);
    for (int k = 0; k < 40; ++k, t *= 0.5) {
      const Eigen::VectorXd trial = d.normalise((v + t * dir).cwiseMax(0.0));
      const double qt = d.Q(trial);
      if (qt <= q + 1e-4 * t * slope) {
        const double dec = q - qt;
        v = trial;
        q = qt;
        accepted = true;
        step = t;
        small = dec <= opts.tol * std::max(1.0, std::abs(q)) ? small + 1 : 0;
        break;
      }
    }
    if (!accepted) break;  // no decrease along the preconditioned direction: stationary up to roundoff
    out.trace.push_back(q);
    if (small >= 3) {
      out.converged = true;
      break;
    }
  }
  if (it == opts.iters) out.converged = false;
  if (!out.converged) {
    // a failed line search at the roundoff level still counts as stationary
    const std::size_t t = out.trace.size();
    out.converged = t >= 2 && std::abs(out.trace[t - 2] - out.trace[t - 1]) <= 1e3 * opts.tol * std::max(1.0, std::abs(q));
  }
  out.value = q;
  out.iterations = it;
  if (unknowns) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(grid.node_count());
    for (std::size_t s = 0; s < unknowns->size(); ++s) full[(*unknowns)[s]] = v[Index(s)];
    out.minimizer = ScalarField(grid, full);
  } else {
    out.minimizer = ScalarField(grid, v);
  }
  return out;
}

}  // namespace

LambdaBetaEstimate estimate_lambda_beta(const MetricField& metric, double beta, const LambdaBetaOptions& opts) {
  require(beta <= 0, "lambda_beta needs beta <= 0");
  require(metric.grid.periodic(), "lambda_beta is defined on a closed (periodic) manifold");
  const int n = metric.grid.n;
  const double a = conformal_a(n);
  const Eigen::VectorXd Vb = metric.scalar_curv.array() + beta;
  const EllipticOperator op = assemble_operator(metric, a, ScalarField(metric.grid, Vb), Boundary::periodic);
  Descent d{op.mass, op.stiffness, op.stiffness, critical_p(n)};
  const double shift = 1.0 + std::max(0.0, -Vb.minCoeff());
  for (Index i = 0; i < Vb.size(); ++i) {
    d.A.coeffRef(i, i) += op.mass[i] * Vb[i];
    d.B.coeffRef(i, i) += op.mass[i] * (Vb[i] + shift);
  }

  const Index N = metric.grid.node_count();
  LambdaBetaEstimate best = descend(d, metric.grid, Eigen::VectorXd::Ones(N), opts);
  best.start = "constant";
  const double smin = metric.scalar_curv.minCoeff(), smax = metric.scalar_curv.maxCoeff();
  if (smax - smin > 1e-12 * std::max(1.0, std::abs(smax))) {
    const Eigen::VectorXd w = (-(metric.scalar_curv.array() - smin) / (smax - smin)).exp();
    LambdaBetaEstimate other = descend(d, metric.grid, w, opts);
    other.start = "curvature-weighted";
    if (other.value < best.value) best = std::move(other);
  }
  return best;
}

LambdaBetaEstimate minimize_dirichlet_quotient(const EllipticOperator& op, const ScalarField& start,
                                               const LambdaBetaOptions& opts) {
  require(op.has_boundary(), "the Dirichlet quotient needs inactive (zero) nodes");
  require(start.grid == op.grid, "start field lives on a different grid");
  const Index na = Index(op.unknowns.size());
  Descent d{Eigen::VectorXd(na), op.K_aa, op.K_aa, critical_p(op.grid.n)};
  Eigen::VectorXd v(na);
  double vmin = INFINITY;
  for (Index s = 0; s < na; ++s) {
    const Index i = op.unknowns[s];
    d.mass[s] = op.mass[i];
    v[s] = start.values[i];
    vmin = std::min(vmin, op.V[i]);
  }
  const double shift = 1.0 + std::max(0.0, -vmin);
  for (Index s = 0; s < na; ++s) {
    const Index i = op.unknowns[s];
    d.A.coeffRef(s, s) += d.mass[s] * op.V[i];
    d.B.coeffRef(s, s) += d.mass[s] * (op.V[i] + shift);
  }
  require((v.array() > 0).any(), "start field vanishes on the active nodes");
  LambdaBetaEstimate out = descend(d, op.grid, v, opts, &op.unknowns);
  out.start = "given";
  return out;
}

}  // namespace yamabe
