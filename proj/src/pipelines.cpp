#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "yamabe/constants.hpp"
#include "yamabe/iterate.hpp"

namespace yamabe {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(8);
  os << v;
  return os.str();
}

void gate(GlobalReport& rep, const std::string& name, bool ok, double value) {
  rep.gates.push_back({name, ok, value});
  if (!ok) throw GateError(name + " (value " + num(value) + ")");
}

Index argmin(const Eigen::VectorXd& v) {
  Index i;
  v.minCoeff(&i);
  return i;
}

Index argmax(const Eigen::VectorXd& v) {
  Index i;
  v.maxCoeff(&i);
  return i;
}

// distance from center to the nearest node where pred fails
template <typename Pred>
double region_radius(const GridSpec& grid, const Eigen::VectorXd& center, Pred&& pred) {
  double r = 0.5 * grid.extent;
  for (Index i = 0; i < grid.node_count(); ++i)
    if (!pred(i)) r = std::min(r, grid.displacement(i, center).norm());
  return r;
}

SpectralResult conformal_eigenpair(const MetricField& metric, double a, const Eigen::VectorXd& V) {
  return first_eigenpair(assemble_operator(metric, a, ScalarField(metric.grid, V), Boundary::periodic));
}

// Monotone iteration from the sandwich, plus the Newton oracle started at u_plus.
void run_monotone(GlobalReport& rep, const Semilinear& eq, const PipelineConfig& cfg) {
  MonotoneResult mr = monotone_iteration({eq, rep.u_minus, rep.u_plus}, cfg.tol, cfg.max_iter);
  rep.monotone_trace = std::move(mr.trace);
  rep.u = std::move(mr.u);
  if (cfg.newton_oracle) {
    NewtonReport nr;
    const ScalarField un = damped_newton(eq, rep.u_plus, cfg.tol, 60, &nr);
    rep.oracle_difference = nr.converged ? (un.values - rep.u.values).cwiseAbs().maxCoeff() : INFINITY;
  }
}

GlobalReport perturbed_impl(const MetricField& metric, double beta, double kappa, const PipelineConfig& cfg,
                            const LambdaBetaEstimate* known) {
  require(metric.grid.periodic(), "the global pipelines run on a closed (periodic) grid");
  const GridSpec& grid = metric.grid;
  const int n = grid.n;
  const double a = conformal_a(n), p = critical_p(n);
  const Index N = grid.node_count();
  const Eigen::VectorXd& S = metric.scalar_curv;
  const Eigen::VectorXd h = S.array() + beta;

  GlobalReport rep;
  rep.path = "perturbed-positive";
  rep.beta = beta;
  gate(rep, "S < 0 somewhere", S.minCoeff() < 0, S.minCoeff());
  const SpectralResult eig = conformal_eigenpair(metric, a, S);
  rep.eta1 = eig.eigenvalue;
  gate(rep, "eta1 > 0", rep.eta1 > 0, rep.eta1);
  gate(rep, "eta1 + beta > 0", rep.eta1 + beta > 0, rep.eta1 + beta);

  const LambdaBetaEstimate lb = known ? *known : estimate_lambda_beta(metric, beta, cfg.lambda_beta);
  rep.lambda_beta = lb.value;
  gate(rep, "lambda_beta > 0", lb.value > 0, lb.value);
  rep.kappa = kappa < 0 ? 0.1 * lb.value : kappa;
  gate(rep, "kappa > 0", rep.kappa > 0, rep.kappa);
  const double lp = lb.value - rep.kappa;
  gate(rep, "lambda_beta - kappa > 0", lp > 0, lp);
  rep.lambda = lp;
  const double aT = a * best_sobolev_constant(n);
  rep.gates.push_back({"lambda_beta - kappa < aT", lp < aT, lp});

  const ThetaScaling th = scale_eigen_theta(eig.eigenfunction, rep.eta1, beta, lb.value, rep.kappa, p);

  // local Dirichlet problem on a ball inside the negative region of S
  const Index q = argmin(S);
  const Eigen::VectorXd center = grid.coords(q);
  const double rneg = region_radius(grid, center, [&](Index i) { return S[i] < 0; });
  const double radius = cfg.ball_radius > 0 ? cfg.ball_radius : std::min(grid.extent / 8, 0.9 * rneg);
  gate(rep, "ball inside the region S < 0", radius < rneg, radius);
  const NodeMask ball = ball_mask(grid, center, radius);

  const EllipticOperator lap = assemble_operator(metric, 1.0, constant_field(grid, 0.0), ball);
  const double lam1 = first_eigenpair(lap).eigenvalue;
  double negS = 0;
  for (Index i : lap.unknowns) negS = std::max(negS, -S[i]);
  const double small = a / n - ((n - 2.0) / (2.0 * n) + 0.5) * (negS - beta) / lam1;
  gate(rep, "ball small enough: a/n - ((n-2)/(2n) + 1/2)(sup(-S) - beta)/lambda1 > 0", small > 0, small);

  const EllipticOperator opb = assemble_operator(metric, a, ScalarField(grid, h), ball);
  const ScalarField start = sample(grid, [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd d = x - center;
    for (Index k = 0; k < d.size(); ++k) d[k] -= grid.extent * std::round(d[k] / grid.extent);
    const double s = d.norm();
    return s < radius ? std::cos(0.5 * std::numbers::pi * s / radius) : 0.0;
  });
  const LambdaBetaEstimate loc = minimize_dirichlet_quotient(opb, start, cfg.lambda_beta);
  const Eigen::VectorXd lpv = Eigen::VectorXd::Constant(N, lp);
  const Semilinear eq_ball = make_semilinear(metric, a, h, lpv, p - 1, ball, 0.0);
  ScalarField u3(grid, std::pow(loc.value / lp, 1.0 / (p - 2)) * loc.minimizer.values);
  NewtonReport nr;
  u3 = damped_newton(eq_ball, u3, std::min(cfg.tol, 1e-10), 60, &nr);
  if (!nr.converged) throw NumericalFailure("local Dirichlet solution did not converge (residual " + num(nr.residual) + ")");
  for (Index i : eq_ball.op.unknowns)
    if (!(u3.values[i] > 0)) throw NumericalFailure("local Dirichlet solution is not positive on the ball");
  const MountainLevel ml = mountain_level(u3, metric, a, metric.curvature(), beta, lp);
  rep.mountain_level = ml.level;
  rep.mountain_K0 = ml.K0;
  rep.gates.push_back({"mountain-pass level below K0", ml.below, ml.level});

  const Semilinear eq = make_semilinear(metric, a, h, lpv, p - 1);
  rep.u_minus = u3;
  const NodeMask iface = interface_mask(grid, ball);
  rep.sub = verify_subsolution(rep.u_minus, eq, &iface);

  PartitionInputs pin{rep.eta1, beta, lp, cfg.partition_slack};
  rep.partition = build_super_partition(u3, th.phi, ball, eq, pin, cfg.partition);
  rep.u_plus = rep.partition.u_bar;
  rep.super = verify_supersolution(rep.u_plus, eq);

  bool done = false;
  if (rep.sub.ok && rep.super.ok && rep.partition.ok) {
    try {
      run_monotone(rep, eq, cfg);
      done = true;
    } catch (const NumericalFailure& e) {
      rep.fallback_reason = e.what();
    }
  } else {
    rep.fallback_reason = "sub/super certificates failed (sub " + std::string(rep.sub.ok ? "ok" : "fail") +
                          ", super " + (rep.super.ok ? "ok" : "fail") + ", partition " +
                          (rep.partition.ok ? "ok" : "fail") + ")";
  }
  if (!done) {
    // the lambda_beta minimizer v solves op v = lambda_beta v^{p-1}; t v solves the target with t^{p-2} = lambda_beta / lambda'
    rep.fallback = true;
    ScalarField u(grid, std::pow(lb.value / lp, 1.0 / (p - 2)) * lb.minimizer.values);
    NewtonReport fr;
    u = damped_newton(eq, u, cfg.tol, 60, &fr);
    if (!fr.converged)
      throw NumericalFailure("fallback Newton solve did not converge (residual " + num(fr.residual) + ")");
    rep.u = std::move(u);
  }
  if (!(rep.u.values.minCoeff() > 0)) throw NumericalFailure("solution is not positive");
  rep.residual = residual_norm(eq, rep.u);
  return rep;
}

}  // namespace

GlobalReport solve_global_negative(const MetricField& metric, double beta, const PipelineConfig& cfg) {
  require(metric.grid.periodic(), "the global pipelines run on a closed (periodic) grid");
  require(beta <= 0, "beta must be nonpositive");
  const GridSpec& grid = metric.grid;
  const int n = grid.n;
  const double a = conformal_a(n), p = critical_p(n);
  const Index N = grid.node_count();
  const Eigen::VectorXd h = metric.scalar_curv.array() + beta;

  GlobalReport rep;
  rep.beta = beta;
  const SpectralResult eig = conformal_eigenpair(metric, a, metric.scalar_curv);
  rep.eta1 = eig.eigenvalue;
  gate(rep, "eta1 < 0", rep.eta1 < 0, rep.eta1);
  const double etab = rep.eta1 + beta;  // first eigenvalue with S replaced by S + beta
  const double tol_local = cfg.tol;

  if (h.maxCoeff() < 0) {
    rep.path = beta < 0 ? "negative-scalar-perturbed" : "negative-scalar";
    const Eigen::VectorXd center = grid.coords(argmin(h));
    const double radius = cfg.ball_radius > 0 ? cfg.ball_radius : grid.extent / 8;
    const NodeMask ball = ball_mask(grid, center, radius);
    const double c = cfg.c;
    const double infNegS = -h.maxCoeff();
    double C_Mn = 2 * c;
    LocalResult loc;
    for (int attempt = 0;; ++attempt) {
      rep.lambda = select_lambda_negative_scalar(C_Mn, infNegS, p);
      loc = double_iteration_local(make_local_problem(metric, rep.lambda, beta, c, ball), tol_local,
                                   cfg.local_max_iter);
      if (loc.trace.C_Mn <= C_Mn) break;
      if (attempt == 5) gate(rep, "local solution bounded by C_Mn", false, loc.trace.C_Mn);
      C_Mn = 2 * loc.trace.C_Mn;
    }
    rep.gates.push_back({"local solution bounded by C_Mn", true, loc.trace.C_Mn});
    rep.gates.push_back({"local minimum attained on the boundary", loc.boundary_extreme_gap >= -1e-10,
                         loc.boundary_extreme_gap});
    rep.local_trace = loc.trace;
    rep.u_minus = build_sub_by_extension(loc.u, c, ball);
    const double C = build_super_constant(rep.lambda, ScalarField(grid, h), rep.u_minus, p);
    rep.u_plus = constant_field(grid, C);
    const Semilinear eq = make_semilinear(metric, a, h, Eigen::VectorXd::Constant(N, rep.lambda), p - 1);
    const NodeMask iface = interface_mask(grid, ball);
    rep.sub = verify_subsolution(rep.u_minus, eq, &iface);
    rep.super = verify_supersolution(rep.u_plus, eq);
    run_monotone(rep, eq, cfg);
    rep.residual = residual_norm(eq, rep.u);
  } else if (h.maxCoeff() > 0) {
    rep.path = "sign-mixed";
    gate(rep, "S + beta <= a/2", h.maxCoeff() <= a / 2, h.maxCoeff());
    gate(rep, "eta1 + beta < 0", etab < 0, etab);
    const Eigen::VectorXd center = grid.coords(argmax(h));
    const double rpos = region_radius(grid, center, [&](Index i) { return h[i] > 0; });
    const double radius = cfg.ball_radius > 0 ? cfg.ball_radius : 0.9 * rpos;
    gate(rep, "ball inside the region S + beta > 0", radius < rpos, radius);
    const NodeMask ball = ball_mask(grid, center, radius);
    // c large enough that lambda = -(3a/8)/c^{p-2} >= eta1 + beta
    const double c = std::max(cfg.c, 1.05 * std::pow((3 * a / 8) / std::abs(etab), 1.0 / (p - 2)));
    rep.lambda = select_lambda_positive_scalar(c, a, p);
    gate(rep, "lambda >= eta1 + beta", rep.lambda >= etab, rep.lambda - etab);
    gate(rep, "S + beta >= lambda c^{p-2} everywhere", h.minCoeff() >= rep.lambda * std::pow(c, p - 2),
         h.minCoeff());
    const LocalResult loc = double_iteration_local(make_local_problem(metric, rep.lambda, beta, c, ball), tol_local,
                                                   cfg.local_max_iter);
    rep.gates.push_back({"local maximum attained on the boundary", loc.boundary_extreme_gap >= -1e-10,
                         loc.boundary_extreme_gap});
    rep.local_trace = loc.trace;
    rep.u_plus = build_super_by_extension(loc.u, c, ball);
    const SpectralResult eb = conformal_eigenpair(metric, a, h);
    rep.u_minus = build_sub_eigen(eb.eigenfunction, eb.eigenvalue, rep.lambda, rep.u_plus);
    const Semilinear eq = make_semilinear(metric, a, h, Eigen::VectorXd::Constant(N, rep.lambda), p - 1);
    const NodeMask iface = interface_mask(grid, ball);
    rep.sub = verify_subsolution(rep.u_minus, eq);
    rep.super = verify_supersolution(rep.u_plus, eq, &iface);
    run_monotone(rep, eq, cfg);
    rep.residual = residual_norm(eq, rep.u);
  } else {
    gate(rep, "S + beta has a definite sign somewhere", false, h.maxCoeff());
  }
  if (!(rep.u.values.minCoeff() > 0)) throw NumericalFailure("solution is not positive");
  return rep;
}

GlobalReport solve_perturbed_positive(const MetricField& metric, double beta, double kappa, const PipelineConfig& cfg) {
  require(beta < 0, "the perturbed problem needs beta < 0");
  return perturbed_impl(metric, beta, kappa, cfg, nullptr);
}

std::vector<double> continuation_schedule(double beta0, int steps) {
  require(beta0 < 0, "continuation starts from beta0 < 0");
  require(steps >= 2, "continuation needs at least two steps");
  std::vector<double> s;
  for (int j = 0; j + 1 < steps; ++j) s.push_back(beta0 / std::pow(2.0, j));
  s.push_back(0.0);
  return s;
}

ContinuationReport beta_continuation(const MetricField& metric, double beta0, int steps, double kappa,
                                     const PipelineConfig& cfg) {
  const std::vector<double> sched = continuation_schedule(beta0, steps);
  const int n = metric.grid.n;
  const double a = conformal_a(n), p = critical_p(n), aT = a * best_sobolev_constant(n);
  const double delta = 0.05, eps = 0.05;
  ContinuationReport out;

  LambdaBetaEstimate first = estimate_lambda_beta(metric, sched[0], cfg.lambda_beta);
  out.kappa = kappa < 0 ? 0.1 * first.value : kappa;
  double lp_max = 0;
  for (std::size_t j = 0; j < sched.size(); ++j) {
    const double beta = sched[j];
    LambdaBetaEstimate lb = j == 0 ? first : estimate_lambda_beta(metric, beta, cfg.lambda_beta);
    const GlobalReport rep = perturbed_impl(metric, beta, out.kappa, cfg, &lb);
    ContinuationStep st;
    st.beta = beta;
    st.lambda_beta = rep.lambda_beta;
    st.lambda_used = rep.lambda;
    st.lp_norm = lp_norm(rep.u, p, metric);
    const EllipticOperator op = assemble_operator(metric, a, constant_field(metric.grid, 0.0), Boundary::periodic);
    st.h1_norm = std::sqrt(op.energy(rep.u.values) / a + rep.u.values.cwiseAbs2().dot(op.mass));
    st.contraction = (1 + eps) * (rep.lambda / aT) * (1 + delta) * (1 + delta) / (1 + 2 * delta);
    st.residual = rep.residual;
    st.fallback = rep.fallback;
    if (!out.steps.empty() && st.lambda_beta < out.steps.back().lambda_beta - 1e-8) out.lambda_monotone = false;
    if (st.contraction >= 1) out.contraction_ok = false;
    if (rep.lambda >= aT) out.below_aT = false;
    out.steps.push_back(st);
    if (st.lp_norm < 1 - 1e-8) {
      out.lp_lower_bound = false;
      throw GateError("||u_beta||_p = " + num(st.lp_norm) + " < 1 at continuation step " + std::to_string(j));
    }
    lp_max = std::max(lp_max, st.lp_norm);
    out.u = rep.u;
    out.final_residual = rep.residual;
  }
  out.metric_scale = std::pow(lp_max, -4.0 / (n - 2));
  return out;
}

}  // namespace yamabe
