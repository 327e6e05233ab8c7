#pragma once

#include <limits>
#include <string>
#include <vector>

#include "yamabe/elliptic.hpp"
#include "yamabe/quotient.hpp"
#include "yamabe/spectral.hpp"

namespace yamabe {

// ---------------------------------------------------------------- lambda selectors

// lambda = -0.9 infNegS / C^{p-2}, so that |lambda| C^{p-2} < inf(-S)
double select_lambda_negative_scalar(double C_Mn, double infNegS, double p);
// lambda = -(3a/8) / c^{p-2}, the midpoint of a/4 <= |lambda| c^{p-2} <= a/2
double select_lambda_positive_scalar(double c, double a, double p);

// ---------------------------------------------------------------- semilinear problems

// -a Lap u + h u = H max(u,0)^m on the active nodes of op, u = boundary elsewhere.
// op.V is ignored.
struct Semilinear {
  EllipticOperator op;
  Eigen::VectorXd h, H;
  double m = 5.0;
  double boundary = 0.0;
};

Semilinear make_semilinear(const MetricField& metric, double a, const Eigen::VectorXd& h, const Eigen::VectorXd& H,
                           double m, const NodeMask& active, double boundary = 0.0);
// periodic, no Dirichlet nodes
Semilinear make_semilinear(const MetricField& metric, double a, const Eigen::VectorXd& h, const Eigen::VectorXd& H,
                           double m);

// nodal residual, zero on inactive nodes
Eigen::VectorXd semilinear_residual(const Semilinear& eq, const Eigen::VectorXd& u);
// Euclidean norm of the nodal residual over active nodes
double residual_norm(const Semilinear& eq, const ScalarField& u);

struct IterationTrace {
  std::vector<double> residual, umin, umax;
  std::vector<char> monotone;  // step did not increase any node beyond the tolerance
  double C_Mn = 0.0;           // running sup |u_k|
};

struct IterationFailure : NumericalFailure {
  IterationTrace trace;
  IterationFailure(const std::string& msg, IterationTrace t) : NumericalFailure(msg), trace(std::move(t)) {}
};

// ---------------------------------------------------------------- local double iteration

enum class LocalCase { negative, positive, neutral };
const char* to_string(LocalCase c);

struct LocalProblem {
  MetricField metric;   // radial ball, or periodic box with a ball mask
  NodeMask active;      // empty: radial interior
  double a = 8.0, p = 6.0;
  double lambda = 0.0, beta = 0.0, c = 1.0;
  ScalarField f0;       // empty: c for the negative case, 0 otherwise
};

LocalProblem make_local_problem(const MetricField& metric, double lambda, double beta, double c,
                                NodeMask active = {});

struct LocalResult {
  ScalarField u;
  IterationTrace trace;
  LocalCase kind = LocalCase::neutral;
  double boundary_extreme_gap = 0;  // negative case: min u - c; positive case: c - max u
  bool lambda_ok = true;            // |lambda| C_Mn^{p-2} <= inf(-S-beta) (negative) or the band (positive)
};

// u_0 solves a u - a Lap u = f0; then a u_k - a Lap u_k = a u_{k-1} - (S+beta) u_{k-1} + lambda u_{k-1}^{p-1},
// with u = c on the Dirichlet nodes throughout.
LocalResult double_iteration_local(const LocalProblem& prob, double tol = 1e-10, int max_iter = 500);

// ---------------------------------------------------------------- monotone iteration

struct MonotoneProblem {
  Semilinear eq;
  ScalarField u_minus, u_plus;
};

// nodewise sup over [u_minus, u_plus] of h - m H u^{m-1}, floored at 1e-8
Eigen::VectorXd lipschitz_shift(const MonotoneProblem& prob);

struct MonotoneResult {
  ScalarField u;
  IterationTrace trace;
  Eigen::VectorXd k;
};

// u_0 = u_plus; -a Lap u_{j+1} + k u_{j+1} = k u_j - h u_j + H u_j^m.
// mono_tol < 0 selects 1e-10 max(1, sup u_plus).
MonotoneResult monotone_iteration(const MonotoneProblem& prob, double tol = 1e-9, int max_iter = 20000,
                                  double mono_tol = -1.0);

// ---------------------------------------------------------------- Newton oracle

struct NewtonReport {
  int iterations = 0;
  double residual = 0.0;
  std::string linear_solver;  // "pcg" or "bicgstab"
  bool converged = false;
};

// damped Newton on the semilinear residual, backtracking on its norm
ScalarField damped_newton(const Semilinear& eq, ScalarField u0, double tol = 1e-10, int max_iter = 60,
                          NewtonReport* report = nullptr);

// ---------------------------------------------------------------- certificates

struct Certificate {
  std::string kind;  // "subsolution" or "supersolution"
  bool ok = true;
  double margin = 0.0;        // min over active nodes of the signed slack (-R for sub, R for super)
  Index worst = -1;           // node with the largest violation relative to its tolerance
  double worst_residual = 0;  // R at that node
  Index interface_nodes = 0;
  double interface_margin = std::numeric_limits<double>::infinity();
};

// Nodewise R = -a Lap u + h u - H u^m with tolerance rel_tol * scale_i. The nodal residual is the weak
// form tested against the hat function of the node, so marked interface nodes carry the flux jump.
Certificate verify_subsolution(const ScalarField& u, const Semilinear& eq, const NodeMask* interface = nullptr,
                               double rel_tol = 1e-8);
Certificate verify_supersolution(const ScalarField& u, const Semilinear& eq, const NodeMask* interface = nullptr,
                                 double rel_tol = 1e-8);

// nodes on either side of the mask boundary along grid axes
NodeMask interface_mask(const GridSpec& grid, const NodeMask& inside);

// ---------------------------------------------------------------- sub/super builders

// u_local on the mask, c elsewhere (u_local lives on the ambient grid)
ScalarField build_sub_by_extension(const ScalarField& u_local, double c, const NodeMask& ball);
// radial profile placed at center on a periodic grid, c outside the ball
ScalarField build_sub_by_extension(const ScalarField& radial_profile, double c, const GridSpec& ambient,
                                   const Eigen::VectorXd& center);
ScalarField build_super_by_extension(const ScalarField& u_local, double c, const NodeMask& ball);
ScalarField build_super_by_extension(const ScalarField& radial_profile, double c, const GridSpec& ambient,
                                     const Eigen::VectorXd& center);

// C = max{(inf h / lambda)^{1/(p-2)}, sup u_minus}
double build_super_constant(double lambda, const ScalarField& h, const ScalarField& u_minus, double p);

// delta phi with sup delta phi = min{inf u_plus, 1}; needs eta1 <= lambda <= 0
ScalarField build_sub_eigen(const ScalarField& phi, double eta1, double lambda, const ScalarField& u_plus);

struct ThetaScaling {
  double theta = 0, theta_max = 0;
  double ratio = 0;  // (eta1+beta) inf phi~ / (2^{p-2} (lambda_beta-kappa) sup phi~^{p-1})
  ScalarField phi;   // theta phi
};

// theta = 0.9 theta_max; the strict inequality is rechecked with a 5% margin
ThetaScaling scale_eigen_theta(const ScalarField& phi, double eta1, double beta, double lambda_beta, double kappa,
                               double p);

// ---------------------------------------------------------------- partition supersolution

struct PartitionSpec {
  double gamma = 0;     // 0: largest admissible value times 0.9
  double delta = 0;     // 0: largest collar with |u3 - phi| < gamma
  double moll_eps = 0;  // 0: delta / 8
  double beta_prime = 0;
};

struct RegionMargin {
  std::string region;
  Index nodes = 0;
  double margin = std::numeric_limits<double>::infinity();  // min R over the region
  Index worst = -1;
};

struct PartitionResult {
  ScalarField u_bar, chi1, chi2, chi3;
  PartitionSpec used;
  double beta_prime_literal = 0;  // (eta1+beta) sup phi - 2^{p-2} lambda' inf phi^{p-1}
  bool dominance = false;         // phi >= u3 everywhere: phi is returned
  Index crossings = 0;            // edges where u3 - phi changes sign
  std::vector<RegionMargin> regions;
  double slack = 1e-6;
  bool above_u3 = true;
  bool ok = false;                // every region margin >= -slack and chi in [0,1]
};

struct PartitionInputs {
  double eta1 = 0, beta = 0, lambda_prime = 0;  // lambda' = lambda_beta - kappa
  double slack = 1e-6;
};

// u3 vanishes off omega; eq is the periodic problem with h = S + beta, H = lambda'.
PartitionResult build_super_partition(const ScalarField& u3, const ScalarField& phi, const NodeMask& omega,
                                      const Semilinear& eq, const PartitionInputs& in, const PartitionSpec& spec = {});

// ---------------------------------------------------------------- global pipelines

struct PipelineConfig {
  double tol = 1e-9;            // Euclidean nodal residual of returned fields
  int max_iter = 20000;         // monotone iteration cap
  int local_max_iter = 500;
  double ball_radius = 0;       // 0: pipeline default
  double c = 1.0;               // boundary constant for the negative path
  LambdaBetaOptions lambda_beta;
  PartitionSpec partition;
  double partition_slack = 1e-6;
  bool newton_oracle = true;
};

struct Gate {
  std::string name;
  bool ok = false;
  double value = 0;
};

struct GlobalReport {
  std::string path;
  double eta1 = 0, beta = 0, kappa = 0, lambda_beta = 0, lambda = 0;
  ScalarField u, u_minus, u_plus;
  std::vector<Gate> gates;
  IterationTrace local_trace, monotone_trace;
  Certificate sub, super;
  PartitionResult partition;
  bool fallback = false;
  std::string fallback_reason;
  double residual = 0;
  double oracle_difference = std::numeric_limits<double>::quiet_NaN();
  double mountain_level = 0, mountain_K0 = 0;
};

// eta1 < 0: negative S+beta everywhere, or a positive region handled by the bounded local problem
GlobalReport solve_global_negative(const MetricField& metric, double beta, const PipelineConfig& cfg = {});

// eta1 > 0 with S < 0 somewhere: -a Lap u + (S+beta) u = (lambda_beta - kappa) u^{p-1}
// kappa < 0 selects 0.1 lambda_beta
GlobalReport solve_perturbed_positive(const MetricField& metric, double beta, double kappa,
                                      const PipelineConfig& cfg = {});

struct ContinuationStep {
  double beta = 0, lambda_beta = 0, lambda_used = 0, lp_norm = 0, h1_norm = 0, contraction = 0, residual = 0;
  bool fallback = false;
};

struct ContinuationReport {
  std::vector<ContinuationStep> steps;
  ScalarField u;
  double kappa = 0;
  double final_residual = 0;   // unperturbed Yamabe residual at the last step
  double metric_scale = 1;     // gamma with (max ||u_beta||_p) gamma^{(n-2)/4} = 1
  bool lambda_monotone = true;
  bool lp_lower_bound = true;
  bool contraction_ok = true;
  bool below_aT = true;
};

// beta schedule beta0, beta0/2, ..., ending at 0; kappa < 0 selects 0.1 lambda_{beta0}
ContinuationReport beta_continuation(const MetricField& metric, double beta0, int steps, double kappa,
                                     const PipelineConfig& cfg = {});

std::vector<double> continuation_schedule(double beta0, int steps);

}  // namespace yamabe
