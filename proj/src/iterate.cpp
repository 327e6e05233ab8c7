#include "yamabe/iterate.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace yamabe {

double select_lambda_negative_scalar(double C_Mn, double infNegS, double p) {
  require(infNegS > 0, "the negative-curvature selector needs inf(-S) > 0");
  require(C_Mn > 0, "the bound C_Mn must be positive");
  require(p > 2, "exponent p must exceed 2");
  return -0.9 * infNegS / std::pow(C_Mn, p - 2);
}

double select_lambda_positive_scalar(double c, double a, double p) {
  require(c > 0, "boundary constant c must be positive");
  require(p > 2, "exponent p must exceed 2");
  return -(3.0 * a / 8.0) / std::pow(c, p - 2);
}

// ---------------------------------------------------------------- semilinear

Semilinear make_semilinear(const MetricField& metric, double a, const Eigen::VectorXd& h, const Eigen::VectorXd& H,
                           double m, const NodeMask& active, double boundary) {
  const Index N = metric.grid.node_count();
  require(h.size() == N && H.size() == N, "coefficient size does not match the grid");
  require(m > 1, "nonlinear exponent m must exceed 1");
  Semilinear eq;
  eq.op = assemble_operator(metric, a, constant_field(metric.grid, 0.0), active);
  eq.h = h;
  eq.H = H;
  eq.m = m;
  eq.boundary = boundary;
  return eq;
}

Semilinear make_semilinear(const MetricField& metric, double a, const Eigen::VectorXd& h, const Eigen::VectorXd& H,
                           double m) {
  require(metric.grid.periodic(), "a semilinear problem without Dirichlet nodes needs a periodic grid");
  return make_semilinear(metric, a, h, H, m, full_mask(metric.grid), 0.0);
}

namespace {

Eigen::ArrayXd positive_power(const Eigen::VectorXd& u, double m) { return u.array().max(0.0).pow(m); }

double active_norm(const EllipticOperator& op, const Eigen::VectorXd& r) {
  double acc = 0;
  for (Index i : op.unknowns) acc += r[i] * r[i];
  return std::sqrt(acc);
}

double active_min(const EllipticOperator& op, const Eigen::VectorXd& u) {
  double v = INFINITY;
  for (Index i : op.unknowns) v = std::min(v, u[i]);
  return v;
}

double active_max(const EllipticOperator& op, const Eigen::VectorXd& u) {
  double v = -INFINITY;
  for (Index i : op.unknowns) v = std::max(v, u[i]);
  return v;
}

void record(IterationTrace& t, const EllipticOperator& op, const Eigen::VectorXd& u, double res, bool mono) {
  t.residual.push_back(res);
  t.umin.push_back(u.minCoeff());
  t.umax.push_back(u.maxCoeff());
  t.monotone.push_back(mono ? 1 : 0);
  t.C_Mn = std::max(t.C_Mn, u.cwiseAbs().maxCoeff());
  (void)op;
}

// -a Lap d + k d = rhs with d = 0 on Dirichlet nodes
Eigen::VectorXd shifted_solve(const EllipticOperator& opk, const Eigen::VectorXd& rhs) {
  SolveOptions o;
  o.tol = 1e-12;
  return solve(opk, ScalarField(opk.grid, rhs), 0.0, o).values;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

Eigen::VectorXd semilinear_residual(const Semilinear& eq, const Eigen::VectorXd& u) {
  Eigen::VectorXd r = eq.op.diffusion(u);
  r.array() += eq.h.array() * u.array() - eq.H.array() * positive_power(u, eq.m);
  for (Index i = 0; i < r.size(); ++i)
    if (!eq.op.active[i]) r[i] = 0.0;
  return r;
}

double residual_norm(const Semilinear& eq, const ScalarField& u) {
  require(u.grid == eq.op.grid, "field lives on a different grid");
  return active_norm(eq.op, semilinear_residual(eq, u.values));
}

// ---------------------------------------------------------------- local double iteration

const char* to_string(LocalCase c) {
  switch (c) {
    case LocalCase::negative: return "negative";
    case LocalCase::positive: return "positive";
    case LocalCase::neutral: return "neutral";
  }
  return "?";
}

LocalProblem make_local_problem(const MetricField& metric, double lambda, double beta, double c, NodeMask active) {
  LocalProblem prob;
  prob.metric = metric;
  prob.active = std::move(active);
  prob.a = conformal_a(metric.grid.n);
  prob.p = critical_p(metric.grid.n);
  prob.lambda = lambda;
  prob.beta = beta;
  prob.c = c;
  return prob;
}

LocalResult double_iteration_local(const LocalProblem& prob, double tol, int max_iter) {
  require(prob.c >= 0, "boundary constant c must be nonnegative");
  require(prob.beta <= 0, "beta must be nonpositive");
  const MetricField& g = prob.metric;
  NodeMask active = prob.active;
  if (active.empty()) {
    require(!g.grid.periodic(), "a local problem on a periodic grid needs a ball mask");
    active = radial_interior_mask(g.grid);
  }
  const Eigen::VectorXd h = g.scalar_curv.array() + prob.beta;
  const Index N = g.grid.node_count();
  const Semilinear eq = make_semilinear(g, prob.a, h, Eigen::VectorXd::Constant(N, prob.lambda), prob.p - 1, active,
                                        prob.c);
  require(eq.op.has_boundary(), "the local problem needs Dirichlet nodes");

  LocalResult out;
  const double hmax = active_max(eq.op, h), hmin = active_min(eq.op, h);
  const double band = std::abs(prob.lambda) * std::pow(prob.c, prob.p - 2);
  if (prob.lambda == 0.0) {
    out.kind = LocalCase::neutral;
  } else if (hmax < 0) {
    require(prob.lambda < 0, "the negative-curvature local problem needs lambda < 0");
    out.kind = LocalCase::negative;
  } else if (hmin > 0) {
    require(hmax <= prob.a / 2 * (1 + 1e-12), "the positive-curvature local problem needs S + beta <= a/2 on the ball");
    require(prob.lambda < 0, "the positive-curvature local problem needs lambda < 0");
    require(band >= prob.a / 4 * (1 - 1e-12) && band <= prob.a / 2 * (1 + 1e-12),
            "the positive-curvature local problem needs a/4 <= |lambda| c^{p-2} <= a/2");
    out.kind = LocalCase::positive;
  } else {
    throw PreconditionError("the local problem needs S + beta of one sign on the ball (or lambda = 0)");
  }

  ScalarField f0 = prob.f0;
  if (f0.size() == 0) f0 = constant_field(g.grid, out.kind == LocalCase::positive ? 0.0 : prob.c);
  require(f0.grid == g.grid, "seed f0 lives on a different grid");

  const EllipticOperator opa = with_potential(eq.op, Eigen::VectorXd::Constant(N, prob.a));
  SolveOptions o;
  o.tol = 1e-13;
  Eigen::VectorXd u = solve(opa, f0, prob.c, o).values;

  const double neg_tol = 1e-10 * std::max(1.0, prob.c);
  IterationTrace& tr = out.trace;
  for (int k = 0;; ++k) {
    const Eigen::VectorXd R = semilinear_residual(eq, u);
    const double res = active_norm(eq.op, R);
    record(tr, eq.op, u, res, true);
    if (u.minCoeff() < -neg_tol)
      throw IterationFailure("negative intermediate value " + fmt(u.minCoeff()) + " at step " + std::to_string(k) +
                                 ": the stencil violates the maximum principle",
                             tr);
    if (res <= tol) break;
    if (k >= max_iter)
      throw IterationFailure("double iteration did not reach tolerance in " + std::to_string(max_iter) +
                                 " steps (residual " + fmt(res) + ")",
                             tr);
    if (k >= 30 && res > 0.999 * tr.residual[k - 10])
      throw IterationFailure("double iteration is not contracting (residual " + fmt(res) + " at step " +
                                 std::to_string(k) + ")",
                             tr);
    // u_k - u_{k-1} solves (a - a Lap) d = -R(u_{k-1}) with zero data
    u += shifted_solve(opa, -R);
  }
  out.u = ScalarField(g.grid, u);

  const double infNegS = -hmax;
  if (out.kind == LocalCase::negative) {
    out.boundary_extreme_gap = active_min(eq.op, u) - prob.c;
    out.lambda_ok = std::abs(prob.lambda) * std::pow(tr.C_Mn, prob.p - 2) <= infNegS;
  } else if (out.kind == LocalCase::positive) {
    out.boundary_extreme_gap = prob.c - active_max(eq.op, u);
    out.lambda_ok = band >= prob.a / 4 * (1 - 1e-12) && band <= prob.a / 2 * (1 + 1e-12);
  }
  return out;
}

// ---------------------------------------------------------------- monotone iteration

Eigen::VectorXd lipschitz_shift(const MonotoneProblem& prob) {
  const Semilinear& eq = prob.eq;
  const double m = eq.m;
  // d/du (h u - H u^m) = h - m H u^{m-1} is monotone in u >= 0, so the endpoints carry the sup
  const Eigen::ArrayXd lo = eq.h.array() - m * eq.H.array() * positive_power(prob.u_minus.values, m - 1);
  const Eigen::ArrayXd hi = eq.h.array() - m * eq.H.array() * positive_power(prob.u_plus.values, m - 1);
  return lo.max(hi).max(1e-8).matrix();
}

MonotoneResult monotone_iteration(const MonotoneProblem& prob, double tol, int max_iter, double mono_tol) {
  const Semilinear& eq = prob.eq;
  const GridSpec& grid = eq.op.grid;
  require(prob.u_minus.grid == grid && prob.u_plus.grid == grid, "sandwich fields live on a different grid");
  const Eigen::VectorXd& lo = prob.u_minus.values;
  const Eigen::VectorXd& hi = prob.u_plus.values;
  require(lo.minCoeff() >= 0, "the subsolution must be nonnegative");
  require(lo.maxCoeff() > 0, "the subsolution must not vanish identically");
  require(((hi - lo).array() >= -1e-12 * std::max(1.0, hi.cwiseAbs().maxCoeff())).all(),
          "the sandwich needs u_minus <= u_plus at every node");
  if (mono_tol < 0) mono_tol = 1e-10 * std::max(1.0, hi.maxCoeff());

  MonotoneResult out;
  out.k = lipschitz_shift(prob);
  const EllipticOperator opk = with_potential(eq.op, out.k);
  Eigen::VectorXd u = hi;
  for (Index i = 0; i < u.size(); ++i)
    if (!eq.op.active[i]) u[i] = eq.boundary;

  IterationTrace& tr = out.trace;
  Eigen::VectorXd R = semilinear_residual(eq, u);
  record(tr, eq.op, u, active_norm(eq.op, R), true);
  for (int j = 0; tr.residual.back() > tol; ++j) {
    if (j >= max_iter)
      throw IterationFailure("monotone iteration did not reach tolerance in " + std::to_string(max_iter) +
                                 " steps (residual " + fmt(tr.residual.back()) + ")",
                             tr);
    if (j >= 200 && tr.residual.back() > 0.999 * tr.residual[tr.residual.size() - 201])
      throw IterationFailure("monotone iteration stagnated at residual " + fmt(tr.residual.back()) +
                                 " (roundoff floor above the tolerance)",
                             tr);
    // (-a Lap + k)(u_{j+1} - u_j) = -R(u_j), the increment form of the shifted step
    const Eigen::VectorXd d = shifted_solve(opk, -R);
    const Eigen::VectorXd next = u + d;
    bool mono = true;
    Index bad = -1;
    for (Index i : eq.op.unknowns) {
      if (d[i] > mono_tol || next[i] < lo[i] - mono_tol) {
        mono = false;
        bad = i;
        break;
      }
    }
    u = next;
    R = semilinear_residual(eq, u);
    record(tr, eq.op, u, active_norm(eq.op, R), mono);
    if (!mono) {
      std::ostringstream os;
      os << "monotone iteration left the sandwich at step " << j + 1 << ", node " << bad << " (increment " << d[bad]
         << ", u - u_minus " << u[bad] - lo[bad] << ")";
      throw IterationFailure(os.str(), tr);
    }
  }
  out.u = ScalarField(grid, u);
  return out;
}

// ---------------------------------------------------------------- Newton

ScalarField damped_newton(const Semilinear& eq, ScalarField u0, double tol, int max_iter, NewtonReport* report) {
  const EllipticOperator& op = eq.op;
  require(u0.grid == op.grid, "initial guess lives on a different grid");
  const Index na = Index(op.unknowns.size());
  Eigen::VectorXd u = u0.values;
  for (Index i = 0; i < u.size(); ++i)
    if (!op.active[i]) u[i] = eq.boundary;
  Eigen::VectorXd ma(na);
  for (Index s = 0; s < na; ++s) ma[s] = op.mass[op.unknowns[s]];

  NewtonReport rep;
  Eigen::VectorXd R = semilinear_residual(eq, u);
  double res = active_norm(op, R);
  for (; rep.iterations < max_iter && res > tol; ++rep.iterations) {
    SparseMatrix J = op.K_aa;
    Eigen::VectorXd rhs(na), diag(na);
    bool spd = true;
    for (Index s = 0; s < na; ++s) {
      const Index i = op.unknowns[s];
      diag[s] = eq.h[i] - eq.m * eq.H[i] * std::pow(std::max(u[i], 0.0), eq.m - 1);
      if (diag[s] < 0) spd = false;
      J.coeffRef(s, s) += ma[s] * diag[s];
      rhs[s] = -ma[s] * R[i];
    }
    // zero row sums plus a nonnegative, nonzero diagonal shift keep J positive definite
    spd = spd && (diag.array() > 0).any();
    Eigen::VectorXd x;
    bool solved = false;
    if (spd) {
      try {
        x = pcg(J, rhs, Eigen::VectorXd::Zero(na), ma.cwiseInverse(), 1e-12, 20000, false, nullptr);
        solved = true;
        rep.linear_solver = "pcg";
      } catch (const NumericalFailure&) {
      }
    }
    if (!solved) {
      J.makeCompressed();
      Eigen::BiCGSTAB<SparseMatrix, Eigen::IncompleteLUT<double>> bicg;
      bicg.preconditioner().setDroptol(1e-6);
      bicg.setTolerance(1e-12);
      bicg.setMaxIterations(5000);
      bicg.compute(J);
      x = bicg.solve(rhs);
      rep.linear_solver = "bicgstab";
      if (bicg.info() != Eigen::Success && !(bicg.error() < 1e-8))
        throw NumericalFailure("Newton linear solve failed (BiCGSTAB error " + fmt(bicg.error()) + ")");
    }
    Eigen::VectorXd d = Eigen::VectorXd::Zero(u.size());
    for (Index s = 0; s < na; ++s) d[op.unknowns[s]] = x[s];
    double t = 1.0;
    bool accepted = false;
    for (int b = 0; b < 30; ++b, t *= 0.5) {
      const Eigen::VectorXd trial = u + t * d;
      const Eigen::VectorXd Rt = semilinear_residual(eq, trial);
      const double rt = active_norm(op, Rt);
      if (rt <= (1 - 1e-4 * t) * res) {
        u = trial;
        R = Rt;
        res = rt;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  rep.residual = res;
  rep.converged = res <= tol;
  if (report) *report = rep;
  return ScalarField(op.grid, u);
}

// ---------------------------------------------------------------- certificates

namespace {

Certificate certify(const ScalarField& u, const Semilinear& eq, const NodeMask* interface, double rel_tol, bool sub) {
  require(u.grid == eq.op.grid, "field lives on a different grid");
  Certificate c;
  c.kind = sub ? "subsolution" : "supersolution";
  const Eigen::VectorXd D = eq.op.diffusion(u.values);
  const Eigen::VectorXd R = semilinear_residual(eq, u.values);
  const Eigen::ArrayXd nl = eq.H.array() * positive_power(u.values, eq.m);
  c.margin = INFINITY;
  double worst = INFINITY;
  for (Index i : eq.op.unknowns) {
    const double scale = std::abs(D[i]) + std::abs(eq.h[i] * u.values[i]) + std::abs(nl[i]);
    const double tol_i = rel_tol * scale;
    const double slack = sub ? -R[i] : R[i];
    c.margin = std::min(c.margin, slack);
    if (slack + tol_i < worst) {
      worst = slack + tol_i;
      c.worst = i;
      c.worst_residual = R[i];
    }
    if (interface && (*interface)[i]) {
      ++c.interface_nodes;
      c.interface_margin = std::min(c.interface_margin, slack);
    }
  }
  c.ok = worst >= 0;
  return c;
}

}  // namespace

Certificate verify_subsolution(const ScalarField& u, const Semilinear& eq, const NodeMask* interface, double rel_tol) {
  return certify(u, eq, interface, rel_tol, true);
}

Certificate verify_supersolution(const ScalarField& u, const Semilinear& eq, const NodeMask* interface,
                                 double rel_tol) {
  return certify(u, eq, interface, rel_tol, false);
}

NodeMask interface_mask(const GridSpec& grid, const NodeMask& inside) {
  require(Index(inside.size()) == grid.node_count(), "mask size does not match the grid");
  NodeMask out(inside.size(), 0);
  const Index N = grid.node_count();
  for (Index i = 0; i < N; ++i) {
    if (grid.periodic()) {
      for (int d = 0; d < grid.n; ++d)
        for (int s : {-1, 1})
          if (inside[grid.neighbor(i, d, s)] != inside[i]) out[i] = 1;
    } else {
      if ((i > 0 && inside[i - 1] != inside[i]) || (i + 1 < N && inside[i + 1] != inside[i])) out[i] = 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------- builders

namespace {

ScalarField extend(const ScalarField& u_local, double c, const NodeMask& ball) {
  require(Index(ball.size()) == u_local.size(), "mask size does not match the local field");
  ScalarField out = constant_field(u_local.grid, c);
  bool any = false;
  for (Index i = 0; i < u_local.size(); ++i)
    if (ball[i]) out.values[i] = u_local.values[i], any = true;
  require(any, "the ball contains no grid nodes");
  return out;
}

ScalarField embed(const ScalarField& profile, double c, const GridSpec& ambient, const Eigen::VectorXd& center) {
  require(!profile.grid.periodic(), "the local profile must live on a radial grid");
  require(ambient.periodic(), "the ambient grid must be periodic");
  require(profile.grid.n == ambient.n, "profile and ambient grid dimensions differ");
  const double r = profile.grid.extent;
  require(r < 0.5 * ambient.extent, "ball does not fit in the periodic box");
  require(std::abs(profile.values[profile.size() - 1] - c) <= 1e-9 * std::max(1.0, std::abs(c)),
          "the local profile must equal c on the boundary sphere");
  const double hs = profile.grid.spacing();
  return sample(ambient, [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd dx = x - center;
    for (Index k = 0; k < dx.size(); ++k) dx[k] -= ambient.extent * std::round(dx[k] / ambient.extent);
    const double s = dx.norm();
    if (s >= r) return c;
    const double t = s / hs;
    const Index k = std::min(Index(t), profile.size() - 2);
    const double w = t - double(k);
    return (1 - w) * profile.values[k] + w * profile.values[k + 1];
  });
}

}  // namespace

ScalarField build_sub_by_extension(const ScalarField& u_local, double c, const NodeMask& ball) {
  return extend(u_local, c, ball);
}

ScalarField build_sub_by_extension(const ScalarField& radial_profile, double c, const GridSpec& ambient,
                                   const Eigen::VectorXd& center) {
  return embed(radial_profile, c, ambient, center);
}

ScalarField build_super_by_extension(const ScalarField& u_local, double c, const NodeMask& ball) {
  return extend(u_local, c, ball);
}

ScalarField build_super_by_extension(const ScalarField& radial_profile, double c, const GridSpec& ambient,
                                     const Eigen::VectorXd& center) {
  return embed(radial_profile, c, ambient, center);
}

double build_super_constant(double lambda, const ScalarField& h, const ScalarField& u_minus, double p) {
  require(lambda < 0, "the constant supersolution needs lambda < 0");
  const double ratio = h.values.minCoeff() / lambda;
  require(ratio > 0, "the constant supersolution needs inf S / lambda > 0");
  return std::max(std::pow(ratio, 1.0 / (p - 2)), u_minus.values.maxCoeff());
}

ScalarField build_sub_eigen(const ScalarField& phi, double eta1, double lambda, const ScalarField& u_plus) {
  require(lambda <= 0, "the eigenfunction subsolution needs lambda <= 0");
  require(eta1 <= lambda + 1e-14 * std::max(1.0, std::abs(eta1)),
          "the eigenfunction subsolution needs eta1 <= lambda");
  require(phi.values.minCoeff() > 0, "the eigenfunction must be positive");
  require(u_plus.grid == phi.grid, "u_plus lives on a different grid");
  const double delta = std::min(u_plus.values.minCoeff(), 1.0) / phi.values.maxCoeff();
  require(delta > 0, "the supersolution must be positive");
  return ScalarField(phi.grid, delta * phi.values);
}

ThetaScaling scale_eigen_theta(const ScalarField& phi, double eta1, double beta, double lambda_beta, double kappa,
                               double p) {
  require(eta1 + beta > 0, "theta scaling needs eta1 + beta > 0");
  require(lambda_beta - kappa > 0, "theta scaling needs lambda_beta - kappa > 0");
  const double pmin = phi.values.minCoeff(), pmax = phi.values.maxCoeff();
  require(pmin > 0, "the eigenfunction must be positive");
  const double lp = lambda_beta - kappa;
  const double two = std::pow(2.0, p - 2);
  ThetaScaling out;
  out.theta_max = std::pow((eta1 + beta) * pmin / (two * lp * std::pow(pmax, p - 1)), 1.0 / (p - 2));
  // shave 10%; for large n shave further so the recheck keeps its 5% margin
  out.theta = std::min(0.9, std::pow(1.1, -1.0 / (p - 2))) * out.theta_max;
  out.phi = ScalarField(phi.grid, out.theta * phi.values);
  const double lo = out.phi.values.minCoeff(), hi = out.phi.values.maxCoeff();
  out.ratio = (eta1 + beta) * lo / (two * lp * std::pow(hi, p - 1));
  if (!(out.ratio >= 1.05))
    throw NumericalFailure("theta scaling cannot keep a 5% margin (ratio " + fmt(out.ratio) + ")");
  return out;
}

}  // namespace yamabe
