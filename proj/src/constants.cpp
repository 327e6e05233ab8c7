#include "yamabe/constants.hpp"

#include <cmath>
#include <sstream>

#include "yamabe/quadrature.hpp"

namespace yamabe {

double beta_function(double x, double y) {
  return std::exp(std::lgamma(x) + std::lgamma(y) - std::lgamma(x + y));
}

double best_sobolev_constant(int n) {
  require(n >= 3, "dimension n must be at least 3");
  const double pi = std::numbers::pi;
  return pi * n * (n - 2) * std::pow(std::tgamma(0.5 * n) / std::tgamma(double(n)), 2.0 / n);
}

long double improper_radial_quadrature(const std::function<long double(long double)>& f, int n,
                                       long double rel_tol) {
  auto measure = [&](long double s) { return std::pow(s, (long double)(n - 1)) * f(s); };

  // tail rate from two far samples of s^{n-1} f(s)
  const long double s1 = 1e4L, s2 = 1e6L;
  const long double f1 = std::abs(measure(s1)), f2 = std::abs(measure(s2));
  if (f1 > 0) {
    const long double rate = f2 > 0 ? -std::log(f2 / f1) / std::log(s2 / s1) : INFINITY;
    if (!(rate > 1.25L)) {
      std::ostringstream os;
      os << "improper integral diverges: integrand decays like s^-" << double(rate) << " at infinity";
      throw DomainError(os.str());
    }
  }

  // s = tan(theta); near pi/2 use the exact distance to the endpoint
  auto g = [&](long double, long double dl, long double dr) -> long double {
    long double s, jac;
    if (dr < dl) {
      const long double sn = std::sin(dr);
      s = std::cos(dr) / sn;
      jac = 1.0L / (sn * sn);
    } else {
      const long double c = std::cos(dl);
      s = std::tan(dl);
      jac = 1.0L / (c * c);
    }
    if (!std::isfinite(s)) return 0.0L;
    const long double v = measure(s) * jac;
    return std::isfinite(v) ? v : 0.0L;
  };
  const long double half_pi = std::numbers::pi_v<long double> / 2;
  return tanh_sinh<long double>(g, 0.0L, half_pi, rel_tol, 14).value;
}

double quadrature_K1(int n) {
  require(n >= 3, "dimension n must be at least 3");
  const long double I = improper_radial_quadrature(
      [n](long double s) { return s * s * std::pow(1 + s * s, (long double)-n); }, n);
  return double((n - 2.0L) * (n - 2.0L) * sphere_area<long double>(n) * I);
}

double quadrature_K2(int n) {
  require(n >= 3, "dimension n must be at least 3");
  const long double I =
      improper_radial_quadrature([n](long double s) { return std::pow(1 + s * s, (long double)-n); }, n);
  return double(std::pow(sphere_area<long double>(n) * I, 2.0L / critical_p<long double>(n)));
}

double quadrature_K3(int n) {
  require(n >= 3, "dimension n must be at least 3");
  const long double I =
      improper_radial_quadrature([n](long double s) { return std::pow(1 + s * s, (long double)(2 - n)); }, n);
  return double(sphere_area<long double>(n) * I);
}

ConstantsTable constants_for(int n) {
  require(n >= 3, "dimension n must be at least 3");
  ConstantsTable t;
  t.n = n;
  t.a = conformal_a(n);
  t.p = critical_p(n);
  t.omega_n = sphere_area(n);
  t.T = best_sobolev_constant(n);
  const double h = 0.5 * n;
  // int_0^inf s^{2x-1} (1+s^2)^{-(x+y)} ds = B(x,y)/2
  t.K1 = (n - 2.0) * (n - 2.0) * t.omega_n * beta_function(h + 1, h - 1) / 2;
  t.K2 = std::pow(t.omega_n * beta_function(h, h) / 2, 2.0 / t.p);
  if (n >= 5) t.K3 = t.omega_n * beta_function(h, h - 2) / 2;

  auto rel = [](double x, double y) { return std::abs(x - y) / std::abs(y); };
  double gap = std::max(rel(quadrature_K1(n), t.K1), rel(quadrature_K2(n), t.K2));
  if (t.K3) gap = std::max(gap, rel(quadrature_K3(n), *t.K3));
  t.quadrature_discrepancy = gap;
  return t;
}

double moment_ratio_coefficient(int n) { return n * (n - 4.0) / (4.0 * (n - 1) * (n - 2)); }

double moment_ratio_check(int n) {
  require(n >= 5, "moment identity needs n >= 5");
  const long double om = sphere_area<long double>(n);
  const long double lhs =
      om * improper_radial_quadrature([n](long double s) { return s * s * std::pow(1 + s * s, (long double)-n); }, n);
  const long double rhs =
      moment_ratio_coefficient(n) * om *
      improper_radial_quadrature([n](long double s) { return std::pow(1 + s * s, (long double)(2 - n)); }, n);
  return double(std::abs(lhs / rhs - 1));
}

double closure_identity_check(int n) {
  require(n >= 5, "closure identity needs n >= 5");
  const double T = best_sobolev_constant(n);
  return std::abs((n - 2.0) - T * std::pow(quadrature_K2(n), -2.0 / (n - 2)) / n);
}

double legendre_duplication_residual(double z) {
  const double lhs = std::tgamma(z + 0.5) * std::tgamma(z);
  const double rhs = std::pow(2.0, 1 - 2 * z) * std::sqrt(std::numbers::pi) * std::tgamma(2 * z);
  return std::abs(lhs / rhs - 1);
}

}  // namespace yamabe
