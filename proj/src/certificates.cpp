#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>

#include "yamabe/iterate.hpp"

namespace yamabe {

namespace {

using Triplet = Eigen::Triplet<double>;

// minimum-image distance between node i and the point x (box coordinates)
double periodic_distance(const GridSpec& grid, Index i, const Eigen::VectorXd& x) {
  Eigen::VectorXd d = grid.coords(i) - x;
  for (Index k = 0; k < d.size(); ++k) d[k] -= grid.extent * std::round(d[k] / grid.extent);
  return d.norm();
}

// Solve sum_j w_ij (v_i - v_j) = 0 on the unknown nodes with w_ij = -K_ij s_i s_j and the fixed values
// elsewhere. With s = d this is div(d^2 grad v) = 0, the conservative form of the drift equation.
Eigen::VectorXd harmonic_fill(const SparseMatrix& K, const std::vector<char>& unknown, const Eigen::VectorXd& fixed,
                              const Eigen::VectorXd& s) {
  const Index N = K.rows();
  std::vector<Index> slot(N, -1);
  Index nu = 0;
  for (Index i = 0; i < N; ++i)
    if (unknown[i]) slot[i] = nu++;
  Eigen::VectorXd out = fixed;
  if (nu == 0) return out;
  std::vector<Triplet> t;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(nu);
  for (Index j = 0; j < K.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(K, j); it; ++it) {
      const Index i = it.row();
      if (i == j || slot[i] < 0) continue;
      const double w = -it.value() * s[i] * s[j];
      t.emplace_back(slot[i], slot[i], w);
      if (slot[j] >= 0)
        t.emplace_back(slot[i], slot[j], -w);
      else
        b[slot[i]] += w * fixed[j];
    }
  SparseMatrix A(nu, nu);
  A.setFromTriplets(t.begin(), t.end());
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw NumericalFailure("partition collar problem is singular");
  const Eigen::VectorXd x = ldlt.solve(b);
  for (Index i = 0; i < N; ++i)
    if (slot[i] >= 0) out[i] = x[slot[i]];
  return out;
}

struct Kernel {
  std::vector<std::vector<int>> offsets;
  std::vector<double> weights;
};

// normalized discrete mollifier exp(-1/(1-t^2)) on the lattice ball of radius eps
Kernel make_kernel(const GridSpec& grid, double eps) {
  Kernel k;
  const double h = grid.spacing();
  const int R = int(std::floor(eps / h));
  const int n = grid.n;
  std::vector<int> o(n, -R);
  while (true) {
    double r2 = 0;
    for (int v : o) r2 += double(v) * v * h * h;
    const double t2 = r2 / (eps * eps);
    if (t2 < 1) {
      k.offsets.push_back(o);
      k.weights.push_back(std::exp(-1.0 / (1.0 - t2)));
    }
    int d = 0;
    while (d < n && ++o[d] > R) o[d++] = -R;
    if (d == n) break;
  }
  return k;
}

Eigen::VectorXd mollify(const GridSpec& grid, const Kernel& k, const Eigen::VectorXd& v, const NodeMask& where) {
  Eigen::VectorXd out = v;
  for (Index i = 0; i < v.size(); ++i) {
    if (!where[i]) continue;
    double acc = 0, wsum = 0;
    for (std::size_t q = 0; q < k.offsets.size(); ++q) {
      Index j = i;
      for (int d = 0; d < grid.n; ++d)
        if (k.offsets[q][d] != 0) j = grid.neighbor(j, d, k.offsets[q][d]);
      acc += k.weights[q] * v[j];
      wsum += k.weights[q];
    }
    out[i] = acc / wsum;
  }
  return out;
}

}  // namespace

PartitionResult build_super_partition(const ScalarField& u3, const ScalarField& phi, const NodeMask& omega,
                                      const Semilinear& eq, const PartitionInputs& in, const PartitionSpec& spec) {
  const GridSpec& grid = eq.op.grid;
  require(grid.periodic(), "the partition supersolution lives on a periodic grid");
  require(u3.grid == grid && phi.grid == grid, "fields live on a different grid");
  require(Index(omega.size()) == grid.node_count(), "mask size does not match the grid");
  require(phi.values.minCoeff() > 0, "the scaled eigenfunction must be positive");
  require(in.lambda_prime > 0, "lambda_beta - kappa must be positive");
  const Index N = grid.node_count();
  for (Index i = 0; i < N; ++i)
    require(omega[i] || u3.values[i] == 0.0, "u3 must vanish outside the ball");

  const double p = eq.m + 1, lp = in.lambda_prime, two = std::pow(2.0, p - 2);
  const Eigen::ArrayXd ph = phi.values.array();
  PartitionResult out;
  out.slack = in.slack;

  // beta' as a pointwise lower bound of (eta1+beta) phi - 2^{p-2} lambda' phi^{p-1}
  const Eigen::ArrayXd pointwise = (in.eta1 + in.beta) * ph - two * lp * ph.pow(p - 1);
  out.beta_prime_literal = (in.eta1 + in.beta) * ph.maxCoeff() - two * lp * std::pow(ph.minCoeff(), p - 1);
  PartitionSpec used = spec;
  used.beta_prime = spec.beta_prime > 0 ? spec.beta_prime : pointwise.minCoeff();
  if (!(used.beta_prime > 0)) throw GateError("beta' <= 0: the scaled eigenfunction is not a strict supersolution");

  const double supS = (eq.h.array() - in.beta).abs().maxCoeff() + std::abs(in.beta);
  const double supphi = ph.maxCoeff();
  auto gamma_ok = [&](double g) {
    return 20 * lp * g + 2 * g * supS < used.beta_prime / 2 &&
           31 * lp * std::pow(supphi + g, p - 2) * g < used.beta_prime / 2;
  };
  if (spec.gamma > 0) {
    require(gamma_ok(spec.gamma), "gamma violates the collar inequalities");
  } else {
    double lo = 0, hi = used.beta_prime / (2 * (20 * lp + 2 * supS));
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (gamma_ok(mid) ? lo : hi) = mid;
    }
    used.gamma = 0.9 * lo;
  }
  const double gamma = used.gamma;

  Eigen::VectorXd e = u3.values - phi.values;
  bool dominated = true;
  for (Index i = 0; i < N; ++i)
    if (e[i] > 0) dominated = false;

  Eigen::VectorXd chi1 = Eigen::VectorXd::Zero(N), chi2 = Eigen::VectorXd::Zero(N), chi3 = Eigen::VectorXd::Zero(N);
  std::vector<int> region(N, 0);  // 0 outside the ball, 1..5 the five region types
  if (dominated) {
    out.dominance = true;
    out.u_bar = phi;
    for (Index i = 0; i < N; ++i)
      if (omega[i]) chi2[i] = 1, region[i] = 2;
  } else {
    // D0 from sign changes of e along grid edges
    const double h = grid.spacing();
    std::vector<Eigen::VectorXd> pts;
    for (Index i = 0; i < N; ++i) {
      if (!omega[i]) continue;
      if (e[i] == 0) pts.push_back(grid.coords(i));
      for (int d = 0; d < grid.n; ++d) {
        const Index j = grid.neighbor(i, d, 1);
        if (e[i] * e[j] < 0) {
          Eigen::VectorXd x = grid.coords(i);
          x[d] += h * e[i] / (e[i] - e[j]);
          pts.push_back(x);
        }
      }
    }
    out.crossings = Index(pts.size());
    Eigen::VectorXd dist = Eigen::VectorXd::Constant(N, INFINITY);
    for (Index i = 0; i < N; ++i) {
      if (!omega[i]) continue;
      for (const auto& x : pts) dist[i] = std::min(dist[i], periodic_distance(grid, i, x));
    }
    if (spec.delta > 0) {
      used.delta = spec.delta;
    } else {
      double dmax = 0;
      used.delta = INFINITY;
      for (Index i = 0; i < N; ++i) {
        if (!omega[i] || !std::isfinite(dist[i])) continue;
        dmax = std::max(dmax, dist[i]);
        if (std::abs(e[i]) >= gamma) used.delta = std::min(used.delta, dist[i]);
      }
      if (!std::isfinite(used.delta)) used.delta = dmax + h;
    }
    const double delta = used.delta;
    used.moll_eps = spec.moll_eps > 0 ? spec.moll_eps : delta / 8;
    const double eps = used.moll_eps;

    // region types: 1 = Omega1 \ Omega3, 2 = Omega2 \ Omega3, 3 = Omega3 \ (Omega1 u Omega2),
    // 4 = Omega1 n Omega3, 5 = Omega2 n Omega3
    for (Index i = 0; i < N; ++i) {
      if (!omega[i]) continue;
      const bool V = e[i] > 0, Vp = e[i] < 0;
      if (dist[i] >= delta && (V || Vp))
        region[i] = V ? 1 : 2;
      else if (dist[i] <= delta / 2 || !(V || Vp))
        region[i] = 3;
      else
        region[i] = V ? 4 : 5;
    }

    // collar problems on F1 (in V) and F2 (in V')
    std::vector<char> unk1(N, 0), unk2(N, 0);
    Eigen::VectorXd fix1 = Eigen::VectorXd::Zero(N), fix2 = Eigen::VectorXd::Zero(N);
    for (Index i = 0; i < N; ++i) {
      if (!omega[i]) {
        fix2[i] = 1.0;  // phi continues outside the ball
        continue;
      }
      const bool band = dist[i] > delta / 2 + eps && dist[i] < delta - eps;
      if (e[i] > 0) {
        if (band) unk1[i] = 1;
        else if (dist[i] >= delta - eps) fix1[i] = 1.0;
      } else if (e[i] < 0) {
        if (band) unk2[i] = 1;
        else if (dist[i] >= delta - eps) fix2[i] = 1.0;
      }
    }
    const Eigen::VectorXd d1 = (e.array() - gamma).matrix();
    Eigen::VectorXd v1 = harmonic_fill(eq.op.stiffness, unk1, fix1, d1);
    Eigen::VectorXd v2 = harmonic_fill(eq.op.stiffness, unk2, fix2, Eigen::VectorXd::Ones(N));
    v1 = v1.cwiseMax(0.0).cwiseMin(1.0);
    v2 = v2.cwiseMax(0.0).cwiseMin(1.0);
    const Kernel ker = make_kernel(grid, eps);
    v1 = mollify(grid, ker, v1, omega);
    v2 = mollify(grid, ker, v2, omega);
    for (Index i = 0; i < N; ++i) {
      if (!omega[i]) continue;
      switch (region[i]) {
        case 1: chi1[i] = 1; break;
        case 2: chi2[i] = 1; break;
        case 4: chi1[i] = v1[i]; break;
        case 5: chi2[i] = v2[i]; break;
        default: break;
      }
      chi3[i] = 1 - chi1[i] - chi2[i];
    }
    Eigen::VectorXd ub = phi.values;
    for (Index i = 0; i < N; ++i)
      if (omega[i]) ub[i] = chi1[i] * u3.values[i] + chi2[i] * phi.values[i] + chi3[i] * (phi.values[i] + gamma);
    out.u_bar = ScalarField(grid, ub);
  }
  out.used = used;
  out.chi1 = ScalarField(grid, chi1);
  out.chi2 = ScalarField(grid, chi2);
  out.chi3 = ScalarField(grid, chi3);

  bool chi_ok = true;
  for (const Eigen::VectorXd* c : {&chi1, &chi2, &chi3})
    if (c->minCoeff() < -1e-14 || c->maxCoeff() > 1 + 1e-14) chi_ok = false;
  out.above_u3 = ((out.u_bar.values - u3.values).array() >= -1e-14).all();

  static const char* names[] = {"outside", "omega1-only", "omega2-only", "omega3-only", "omega1-omega3",
                                "omega2-omega3"};
  out.regions.resize(6);
  for (int r = 0; r < 6; ++r) out.regions[r].region = names[r];
  const Eigen::VectorXd R = semilinear_residual(eq, out.u_bar.values);
  for (Index i = 0; i < N; ++i) {
    RegionMargin& m = out.regions[region[i]];
    ++m.nodes;
    if (R[i] < m.margin) m.margin = R[i], m.worst = i;
  }
  out.ok = chi_ok && out.above_u3;
  for (const auto& m : out.regions)
    if (m.nodes > 0 && m.margin < -out.slack) out.ok = false;
  return out;
}

}  // namespace yamabe
