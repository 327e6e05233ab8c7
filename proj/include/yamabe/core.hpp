#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace yamabe {

// Bad input or violated precondition.
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A numerical procedure failed to converge or hit an indefinite system.
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A hypothesis gate of an existence pipeline is not met.
struct GateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw PreconditionError(msg);
}

// a = 4(n-1)/(n-2), the conformal Laplacian weight
template <typename Scalar = double>
inline Scalar conformal_a(int n) { return Scalar(4 * (n - 1)) / Scalar(n - 2); }

// p = 2n/(n-2), the critical Sobolev exponent
template <typename Scalar = double>
inline Scalar critical_p(int n) { return Scalar(2 * n) / Scalar(n - 2); }

// area of the unit sphere S^{n-1} in R^n
template <typename Scalar = double>
inline Scalar sphere_area(int n) {
  using std::pow;
  using std::tgamma;
  const Scalar pi = std::numbers::pi_v<Scalar>;
  return Scalar(2) * pow(pi, Scalar(n) / 2) / tgamma(Scalar(n) / 2);
}

}  // namespace yamabe
