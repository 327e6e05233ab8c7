#pragma once

#include <functional>
#include <optional>

#include "yamabe/core.hpp"

namespace yamabe {

// Domain of an improper integral or formula not satisfied (e.g. a divergent integral).
struct DomainError : PreconditionError {
  using PreconditionError::PreconditionError;
};

struct ConstantsTable {
  int n = 0;
  double a = 0, p = 0, T = 0, K1 = 0, K2 = 0;
  std::optional<double> K3;  // finite only for n >= 5
  double omega_n = 0;
  double quadrature_discrepancy = 0;  // max relative gap between closed forms and quadrature
};

double beta_function(double x, double y);

// T = pi n (n-2) (Gamma(n/2)/Gamma(n))^{2/n}
double best_sobolev_constant(int n);

// int_0^inf s^{n-1} f(s) ds through s = tan(theta) and tanh-sinh refinement to rel_tol.
// Throws DomainError when s^{n-1} f(s) decays no faster than s^{-1.25}.
long double improper_radial_quadrature(const std::function<long double(long double)>& f, int n,
                                       long double rel_tol = 1e-12L);

// K-constants by quadrature (K3 throws DomainError for n <= 4)
double quadrature_K1(int n);
double quadrature_K2(int n);
double quadrature_K3(int n);

ConstantsTable constants_for(int n);

// | int |y|^2 (1+|y|^2)^{-n} / (c_n int (1+|y|^2)^{2-n}) - 1 |,  c_n = n(n-4)/(4(n-1)(n-2))
double moment_ratio_check(int n);
double moment_ratio_coefficient(int n);

// | (n-2) - T K2^{-2/(n-2)} / n |
double closure_identity_check(int n);

// relative gap in Gamma(z+1/2) Gamma(z) = 2^{1-2z} sqrt(pi) Gamma(2z)
double legendre_duplication_residual(double z);

}  // namespace yamabe
