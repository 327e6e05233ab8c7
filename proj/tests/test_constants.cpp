#include <doctest.h>

#include <cmath>

#include "yamabe/constants.hpp"

using namespace yamabe;

namespace {
// reference values from tests/oracles/constants_oracle.py (40-digit mpmath)
struct Ref {
  int n;
  double T, K1, K2, K3;
};
const Ref refs[] = {
    {3, 5.4779040895313319, 7.402203300817019, 1.3512838450317451, NAN},
    {4, 10.260398641294913, 13.159472534785811, 1.2825498301618641, NAN},
    {5, 14.811911720005934, 14.534192193890541, 0.98125025780836331, 15.50313834014991},
    {6, 19.259456665473206, 12.402510672119928, 0.6439699150160422, 5.16771278004997},
    {7, 23.65151570098242, 8.8784327765366805, 0.37538536171565082, 2.0293560632083841},
    {8, 28.010527560039571, 5.5662337733715678, 0.19871934798230928, 0.81174242528335364},
};
}  // namespace

TEST_CASE("a and p in low dimensions") {
  const auto t = constants_for(3);
  CHECK(t.a == 8.0);
  CHECK(t.p == 6.0);
  CHECK_FALSE(t.K3.has_value());
  CHECK(constants_for(4).a == 6.0);
  CHECK(constants_for(4).p == 4.0);
}

TEST_CASE("table matches high-precision references") {
  for (const auto& r : refs) {
    const auto t = constants_for(r.n);
    CHECK(t.T == doctest::Approx(r.T).epsilon(1e-12));
    CHECK(t.K1 == doctest::Approx(r.K1).epsilon(1e-12));
    CHECK(t.K2 == doctest::Approx(r.K2).epsilon(1e-12));
    if (r.n >= 5) CHECK(*t.K3 == doctest::Approx(r.K3).epsilon(1e-12));
    CHECK(t.quadrature_discrepancy < 1e-10);
  }
}

TEST_CASE("T for n = 4 is 8 pi / sqrt 6") {
  CHECK(best_sobolev_constant(4) == doctest::Approx(8 * std::numbers::pi / std::sqrt(6.0)).epsilon(1e-14));
}

TEST_CASE("aT equals the Yamabe invariant of the round 3-sphere") {
  const auto t = constants_for(3);
  CHECK(std::abs(t.a * t.T / 43.823232716250655 - 1) < 1e-6);
}

TEST_CASE("T = K1/K2 with quadrature on both sides") {
  for (int n = 3; n <= 8; ++n) {
    const double ratio = quadrature_K1(n) / quadrature_K2(n);
    CHECK(std::abs(best_sobolev_constant(n) - ratio) <= 1e-8 * best_sobolev_constant(n));
  }
}

TEST_CASE("improper radial quadrature") {
  const double pi = std::numbers::pi;
  // int s^2 (1+s^2)^-3 and int s^4 (1+s^2)^-3
  const auto I2 = improper_radial_quadrature([](long double s) { return 1 / std::pow(1 + s * s, 3.0L); }, 3);
  const auto I4 = improper_radial_quadrature([](long double s) { return s * s / std::pow(1 + s * s, 3.0L); }, 3);
  CHECK(double(I2) == doctest::Approx(pi / 16).epsilon(1e-12));
  CHECK(double(I4) == doctest::Approx(3 * pi / 16).epsilon(1e-12));
  CHECK(double(I4 / I2) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("K3 diverges for n = 3 and n = 4") {
  CHECK_THROWS_AS(quadrature_K3(3), DomainError);
  CHECK_THROWS_AS(quadrature_K3(4), DomainError);
  CHECK_NOTHROW(quadrature_K3(5));
}

TEST_CASE("moment identity") {
  CHECK(moment_ratio_coefficient(5) == doctest::Approx(5.0 / 48).epsilon(1e-15));
  CHECK(moment_ratio_coefficient(6) == doctest::Approx(3.0 / 20).epsilon(1e-15));
  for (int n = 5; n <= 8; ++n) CHECK(moment_ratio_check(n) <= 1e-8);
  CHECK_THROWS_AS(moment_ratio_check(4), PreconditionError);
}

TEST_CASE("closure identity") {
  for (int n = 5; n <= 8; ++n) CHECK(closure_identity_check(n) <= 1e-8 * (n - 2));
  for (int n = 3; n <= 8; ++n) CHECK(legendre_duplication_residual(0.5 * n) <= 1e-12);
}

TEST_CASE("sphere area against the recursion omega_{n+2} = 2 pi omega_n / n") {
  double w3 = 4 * std::numbers::pi, w4 = 2 * std::numbers::pi * std::numbers::pi;
  double w[9] = {};
  w[3] = w3;
  w[4] = w4;
  for (int n = 5; n <= 8; ++n) w[n] = 2 * std::numbers::pi * w[n - 2] / (n - 2);
  for (int n = 3; n <= 8; ++n) CHECK(std::abs(sphere_area(n) / w[n] - 1) <= 1e-12);
}

TEST_CASE("Beta moment: int |y|^2 (1+|y|^2)^-n dy is half of omega_n B(n/2+1, n/2-1)") {
  for (int n = 5; n <= 8; ++n) {
    const long double I = improper_radial_quadrature(
        [n](long double s) { return s * s * std::pow(1 + s * s, (long double)-n); }, n);
    const double moment = double(sphere_area<long double>(n) * I);
    const double wb = sphere_area(n) * beta_function(0.5 * n + 1, 0.5 * n - 1);
    CHECK(std::abs(moment / (wb / 2) - 1) <= 1e-8);
    // the unhalved product is twice the moment
    CHECK(wb / moment == doctest::Approx(2.0).epsilon(1e-8));
  }
}
