#pragma once

#include "yamabe/elliptic.hpp"

namespace yamabe {

enum class Sign { negative, zero, positive };

const char* to_string(Sign s);

struct SpectralResult {
  double eigenvalue = 0.0;
  ScalarField eigenfunction;  // unit metric L2 norm, positive
  double residual = 0.0;      // metric L2 norm of op phi - eta phi
  Sign sign = Sign::zero;
  int iterations = 0;
  double shift = 0.0;  // diagonal shift used internally
};

struct EigenOptions {
  double tol = 1e-10;     // target residual
  double accept = 1e-8;   // accepted (times max(1,|eta|)) once iteration stagnates at roundoff
  int max_iter = 2000;
  double zero_tol = -1;  // negative: 1e-8 * max|V|
};

// Smallest eigenpair of op phi = eta phi on active nodes, weighted by the operator mass.
SpectralResult first_eigenpair(const EllipticOperator& op, const EigenOptions& opts = {});

// v^T (K + M V) v / v^T M v over active nodes (inactive entries of v are ignored)
double rayleigh_quotient(const EllipticOperator& op, const Eigen::VectorXd& v);

Sign classify_sign(double value, double tol);

struct LiYauInput {
  int n = 3;
  double K = 0.0;      // Ric >= -(n-1) K
  double r_inj = 0.0;  // injectivity radius
  double h_g = 0.0;    // minimum boundary mean curvature
};

struct LiYauBound {
  double gamma = 0.0;
  double bound = 0.0;
};

LiYauBound li_yau_lower_bound(const LiYauInput& in);

}  // namespace yamabe
