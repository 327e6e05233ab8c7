#pragma once

#include "yamabe/elliptic.hpp"

namespace yamabe {

enum class BumpSign { negative, positive };
const char* to_string(BumpSign s);

struct BumpSpec {
  Index center = 0;     // node q
  double radius = 0.1;  // r
  double depth = 2.0;   // C > 1
  BumpSign sign = BumpSign::negative;
};

struct BalancedBump {
  ScalarField f, F;  // F = f + eps
  double eps = 0;
  double integral_F = 0;
  double l1_F = 0;
};

// f = -+C exp(1 - 1/(1 - (|x-q|/r)^2)) on the ball, 0 outside; eps = -(1/Vol) int f
BalancedBump build_balanced_bump(const MetricField& metric, const BumpSpec& spec);

struct PrescribeOptions {
  int max_halvings = 5;     // shrink r while sup|u'| >= C/8
  double solve_tol = 1e-12;
};

struct PrescribeResult {
  ScalarField u, u_prime, H, F;
  BumpSpec used;            // radius after halvings
  int halvings = 0;
  double eps = 0;
  double integral_F = 0, l1_F = 0;
  double sup_u_prime = 0;
  double H_q = 0;
  double u_min = 0, u_max = 0;
  bool band_ok = false;     // u in [C/8, 3C/8]
  bool flipped = false;     // H(q) has the requested sign
};

// S >= 0 with sup S <= 1: -a Lap u' = F (mean zero), u = u' + C/4, H = u^{1-p}(-a Lap u + S u), H(q) < 0
PrescribeResult flip_curvature_negative(const MetricField& metric, const BumpSpec& spec,
                                        const PrescribeOptions& opts = {});
// S <= 0 with inf S >= -1: the mirror construction with a positive bump, H(q) > 0
PrescribeResult flip_curvature_positive(const MetricField& metric, const BumpSpec& spec,
                                        const PrescribeOptions& opts = {});

// same construction from a caller-supplied mean-zero F; no halving
PrescribeResult flip_from_field(const MetricField& metric, const ScalarField& F, double C, Index q, BumpSign sign,
                                const PrescribeOptions& opts = {});

}  // namespace yamabe
