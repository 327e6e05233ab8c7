#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include "yamabe/core.hpp"

namespace yamabe {

template <typename Scalar>
struct QuadratureResult {
  Scalar value = 0;
  Scalar change = 0;  // difference between the last two levels
  int levels = 0;
};

// Double-exponential (tanh-sinh) rule on [a,b]. The integrand is called as
// f(x, x - a, b - x) so that endpoint singularities can use the exact distances.
// Levels halve the step until successive estimates agree to rel_tol.
template <typename Scalar, typename F>
QuadratureResult<Scalar> tanh_sinh(F&& f, Scalar a, Scalar b, Scalar rel_tol, int max_level = 12) {
  using std::cosh;
  using std::exp;
  using std::sinh;
  const Scalar half = (b - a) / 2;
  const Scalar pi2 = std::numbers::pi_v<Scalar> / 2;
  // abscissa cutoff where the complementary weight underflows the working precision
  const Scalar tmax = std::numeric_limits<Scalar>::digits > 53 ? Scalar(3.6) : Scalar(3.2);

  auto node = [&](Scalar t, Scalar& acc) {
    const Scalar u = pi2 * sinh(t);
    const Scalar e = exp(2 * u);
    const Scalar dist = 2 * half / (e + 1);  // distance of the right abscissa from b
    const Scalar ch = cosh(u);
    const Scalar w = half * pi2 * cosh(t) / (ch * ch);
    if (!(dist > 0) || w == 0) return;
    acc += w * f(b - dist, b - a - dist, dist);
    const Scalar xl = a + dist;
    acc += w * f(xl, dist, b - a - dist);
  };

  Scalar h = 1;
  Scalar sum = half * pi2 * f(a + half, half, half);
  for (int k = 1; Scalar(k) * h <= tmax; ++k) node(Scalar(k) * h, sum);
  Scalar est = h * sum;
  QuadratureResult<Scalar> out;
  for (int level = 1; level <= max_level; ++level) {
    h /= 2;
    for (int k = 1; Scalar(k) * h <= tmax; k += 2) node(Scalar(k) * h, sum);
    const Scalar next = h * sum;
    out.change = next - est;
    est = next;
    out.levels = level;
    using std::abs;
    if (level >= 3 && abs(out.change) <= rel_tol * abs(est)) {
      out.value = est;
      return out;
    }
  }
  throw NumericalFailure("tanh-sinh quadrature did not converge to the requested tolerance");
}

// Convenience overload for integrands without endpoint information.
template <typename Scalar, typename F>
QuadratureResult<Scalar> tanh_sinh_plain(F&& f, Scalar a, Scalar b, Scalar rel_tol, int max_level = 12) {
  return tanh_sinh<Scalar>([&](Scalar x, Scalar, Scalar) { return f(x); }, a, b, rel_tol, max_level);
}

}  // namespace yamabe
