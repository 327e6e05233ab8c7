#pragma once

// Closed-form data for manufactured-solution tests on the synthesized
// normal-coordinate metric in three dimensions. Curvature here is built from
// sectional curvatures, independently of the library's Ricci-to-Riemann map.

#include <array>
#include <cmath>

#include <Eigen/Core>

namespace manufactured {

struct Metric3 {
  std::array<double, 3> ricci;  // diagonal Ricci at the center
  double K(int i, int j) const {
    // diagonal Ricci in 3D: rho_i = K_ij + K_ik
    const int k = 3 - i - j;
    return 0.5 * (ricci[i] + ricci[j] - ricci[k]);
  }
  // g^{ij} = delta + (1/3) R_ikjl x^k x^l with R_ikik = K_ik, R_ikki = -K_ik
  Eigen::Matrix3d inv(const Eigen::Vector3d& x) const {
    Eigen::Matrix3d g = Eigen::Matrix3d::Identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        if (i == j) {
          for (int k = 0; k < 3; ++k)
            if (k != i) g(i, i) += K(i, k) * x[k] * x[k] / 3.0;
        } else {
          g(i, j) -= K(i, j) * x[i] * x[j] / 3.0;
        }
      }
    return g;
  }
  double vol(const Eigen::Vector3d& x) const {
    double r = 0;
    for (int i = 0; i < 3; ++i) r += ricci[i] * x[i] * x[i];
    return 1.0 - r / 6.0;
  }
  // flux field F^i = sqrt(g) g^{ij} d_j u ; divergence by exact differentiation of the
  // polynomial coefficients (derivatives of g^{ij} and sqrt g are linear in x)
  template <typename U, typename DU, typename D2U>
  double laplacian(const Eigen::Vector3d& x, U&&, DU&& du, D2U&& d2u) const {
    const Eigen::Matrix3d gi = inv(x);
    const double sg = vol(x);
    Eigen::Vector3d grad = du(x);
    Eigen::Matrix3d hess = d2u(x);
    // d_m sqrt g
    Eigen::Vector3d dsg;
    for (int m = 0; m < 3; ++m) dsg[m] = -ricci[m] * x[m] / 3.0;
    // d_m g^{ij}
    double div = 0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double dg = 0;  // d_i g^{ij}
        if (i == j) {
          dg = 0;  // g^{ii} has no x_i dependence
        } else {
          dg = -K(i, j) * x[j] / 3.0;
        }
        div += dsg[i] * gi(i, j) * grad[j] + sg * dg * grad[j] + sg * gi(i, j) * hess(i, j);
      }
    }
    return div / sg;
  }
};

}  // namespace manufactured
