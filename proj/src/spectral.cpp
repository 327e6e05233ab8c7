#include "yamabe/spectral.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>
#include <sstream>

namespace yamabe {

const char* to_string(Sign s) {
  switch (s) {
    case Sign::negative: return "negative";
    case Sign::zero: return "zero";
    case Sign::positive: return "positive";
  }
  return "?";
}

Sign classify_sign(double value, double tol) {
  require(tol > 0, "sign tolerance must be positive");
  if (std::abs(value) <= tol) return Sign::zero;
  return value < 0 ? Sign::negative : Sign::positive;
}

double rayleigh_quotient(const EllipticOperator& op, const Eigen::VectorXd& v) {
  const Index na = Index(op.unknowns.size());
  Eigen::VectorXd x(na), m(na), V(na);
  for (Index s = 0; s < na; ++s) {
    const Index i = op.unknowns[s];
    x[s] = v[i];
    m[s] = op.mass[i];
    V[s] = op.V[i];
  }
  const double num = x.dot(op.K_aa * x) + (m.array() * V.array() * x.array().square()).sum();
  return num / (m.array() * x.array().square()).sum();
}

SpectralResult first_eigenpair(const EllipticOperator& op, const EigenOptions& opts) {
  const Index na = Index(op.unknowns.size());
  Eigen::VectorXd m(na), V(na);
  for (Index s = 0; s < na; ++s) {
    m[s] = op.mass[op.unknowns[s]];
    V[s] = op.V[op.unknowns[s]];
  }
  // A + sigma M is SPD once sigma > -min V (the stiffness is semidefinite)
  const double vmin = V.minCoeff();
  const double vscale = std::max(1.0, V.cwiseAbs().maxCoeff());
  const double sigma = -vmin + 1e-3 * vscale;

  SparseMatrix A = op.K_aa;
  for (Index s = 0; s < na; ++s) A.coeffRef(s, s) += m[s] * V[s];
  SparseMatrix B = A;
  for (Index s = 0; s < na; ++s) B.coeffRef(s, s) += sigma * m[s];

  const bool direct = !op.grid.periodic();
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  if (direct) {
    ldlt.compute(B);
    if (ldlt.info() != Eigen::Success) throw NumericalFailure("shifted eigen operator could not be factored");
  }

  auto mnorm = [&](const Eigen::VectorXd& x) { return std::sqrt((m.array() * x.array().square()).sum()); };
  Eigen::VectorXd x = Eigen::VectorXd::Ones(na);
  x /= mnorm(x);
  Eigen::VectorXd y = x;
  double eta = 0, res = INFINITY, best = INFINITY;
  int it = 0, stalled = 0;
  for (; it < opts.max_iter; ++it) {
    const Eigen::VectorXd b = m.cwiseProduct(x);
    if (direct) {
      y = ldlt.solve(b);
    } else {
      y = pcg(B, b, y, m.cwiseInverse(), 1e-14, 20000, false, nullptr);
    }
    x = y / mnorm(y);
    const Eigen::VectorXd Ax = A * x;
    eta = x.dot(Ax);  // x is M-normalised
    const Eigen::VectorXd r = Ax.cwiseQuotient(m) - eta * x;
    res = mnorm(r);
    if (res <= opts.tol) break;
    // roundoff floor: accept once the residual stops improving below the accept level
    if (res < 0.5 * best) {
      best = res;
      stalled = 0;
    } else if (++stalled >= 20 && res <= opts.accept * std::max(1.0, std::abs(eta))) {
      break;
    }
  }
  if (res > opts.accept * std::max(1.0, std::abs(eta))) {
    std::ostringstream os;
    os << "inverse iteration did not converge: residual " << res << " after " << it << " iterations";
    throw NumericalFailure(os.str());
  }
  if (x.sum() < 0) x = -x;
  const double xmax = x.maxCoeff();
  if (x.minCoeff() < -1e-6 * xmax)
    throw NumericalFailure("first eigenfunction changes sign; the lowest mode is not simple or not resolved");

  SpectralResult out;
  out.eigenvalue = eta;
  out.residual = res;
  out.iterations = it + 1;
  out.shift = sigma;
  out.eigenfunction = constant_field(op.grid, 0.0);
  for (Index s = 0; s < na; ++s) out.eigenfunction[op.unknowns[s]] = x[s];
  const double vinf = op.V.cwiseAbs().maxCoeff();
  const double zt = opts.zero_tol > 0 ? opts.zero_tol : 1e-8 * (vinf > 0 ? vinf : 1.0);
  out.sign = classify_sign(eta, zt);
  return out;
}

LiYauBound li_yau_lower_bound(const LiYauInput& in) {
  require(in.n >= 2, "dimension must be at least 2");
  require(in.K >= 0, "Ricci parameter K must be nonnegative");
  require(in.r_inj > 0, "injectivity radius must be positive");
  const double n1 = in.n - 1.0, r = in.r_inj;
  const double disc = 1.0 - 4.0 * n1 * n1 * r * r * in.K;
  if (disc < 0)
    throw PreconditionError("Li-Yau bound needs 4(n-1)^2 r^2 K <= 1 (the square root would be complex)");
  LiYauBound out;
  out.gamma = std::max(std::exp(1.0 + std::sqrt(disc)), std::exp(-2.0 * n1 * in.h_g * r));
  const double lg = std::log(out.gamma);
  out.bound = (lg * lg / (4.0 * n1 * r * r) - n1 * in.K) / out.gamma;
  return out;
}

}  // namespace yamabe
