#pragma once

#include <string>
#include <vector>

#include "yamabe/elliptic.hpp"

namespace yamabe {

// ---------------------------------------------------------------- discrete quotients

// Q(u) = (u^T K u + sum M S u^2) / (sum M |u|^p)^{2/p}, using the elliptic stiffness and mass.
double yamabe_quotient(const ScalarField& u, const MetricField& metric, double a, const ScalarField& S);
double perturbed_quotient(const ScalarField& u, const MetricField& metric, double a, const ScalarField& S,
                          double beta);

// ---------------------------------------------------------------- Aubin test functions

enum class Cutoff { cosine, plateau_bump };

struct TestFunctionSpec {
  int n = 5;
  double r = 0.1;
  double epsilon = 1e-4;
  Cutoff cutoff = Cutoff::plateau_bump;
};

// cosine on the unit ball for n = 3, plateau bump (== 1 on s <= r/2) for n >= 4
TestFunctionSpec make_test_function_spec(int n, double r, double epsilon);

double cutoff_value(const TestFunctionSpec& spec, double s);
double cutoff_derivative(const TestFunctionSpec& spec, double s);

// u(s) = phi(s) / (epsilon + s^2)^{(n-2)/2} sampled on a radial grid of radius spec.r
ScalarField aubin_test_field(const TestFunctionSpec& spec, const GridSpec& grid);

// Radial integrals of the test function on a ball with density w(s) = 1 - S0 s^2/(6n),
// in the scaled variable y = s / sqrt(epsilon) (common powers of epsilon removed):
//   grad = int v'(y)^2 w y^{n-1},  mass2 = int v^2 w y^{n-1},  pmass = int v^p w y^{n-1}
struct AubinPieces {
  long double grad = 0, mass2 = 0, pmass = 0;
};

AubinPieces aubin_pieces(const TestFunctionSpec& spec, double S0);

// Q_eps = (grad + eps (S0+beta)/a mass2) omega / (omega pmass)^{2/p}
long double aubin_quotient(const AubinPieces& pc, const TestFunctionSpec& spec, double S0, double beta);

struct SlopeFit {
  std::string regime;        // "linear", "eps-log-eps", "sqrt-eps"
  double coefficient = 0;    // fitted leading coefficient of T - Q
  double secondary = 0;      // fitted O(eps) coefficient where a two-term model is used
  double predicted = 0;      // leading coefficient from the asymptotic expansion, when known
  bool ok = false;
};

struct QuotientReport {
  int n = 0;
  double r = 0, beta = 0, S0 = 0, T = 0;
  std::vector<double> epsilons, Q, numerator, denominator;
  double margin = 0;  // min over the scan of T - Q
  SlopeFit fit;
};

QuotientReport quotient_scan(int n, double r, double beta, const CurvatureSpec& curv, std::vector<double> eps);

// ---------------------------------------------------------------- mountain-pass level

struct MountainLevel {
  double V1 = 0, V2 = 0, W = 0, t0 = 0, level = 0, K0 = 0;
  bool below = false;  // level < K0
};

// from the three integrals V1 = int a|grad u|^2, V2 = int (-S-beta) u^2, Wp = int lambda u^p
MountainLevel mountain_level_from_parts(int n, double lambda, double V1, double V2, double Wp);

MountainLevel mountain_level(const ScalarField& u, const MetricField& metric, double a, const ScalarField& S,
                             double beta, double lambda);

// level of the Aubin test function on a geodesic ball with scalar curvature S0
MountainLevel mountain_level_aubin(const TestFunctionSpec& spec, double S0, double beta, double lambda);

// ---------------------------------------------------------------- lambda_beta

struct LambdaBetaOptions {
  int iters = 400;
  double tol = 1e-12;  // relative decrease that stops the descent
};

struct LambdaBetaEstimate {
  double value = 0;
  ScalarField minimizer;       // nonnegative, unit L^p norm
  std::vector<double> trace;   // objective after each accepted step
  std::string start;           // "constant" or "curvature-weighted"
  int iterations = 0;
  bool converged = false;
};

// inf Q_beta by preconditioned projected gradient descent on a periodic metric
LambdaBetaEstimate estimate_lambda_beta(const MetricField& metric, double beta, const LambdaBetaOptions& opts = {});

// inf over u >= 0 vanishing off the active nodes of (u^T K u + sum M V u^2) / (sum M u^p)^{2/p}.
// The minimizer v solves op v = value * v^{p-1} on the active nodes.
LambdaBetaEstimate minimize_dirichlet_quotient(const EllipticOperator& op, const ScalarField& start,
                                               const LambdaBetaOptions& opts = {});

}  // namespace yamabe
