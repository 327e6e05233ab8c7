#include "yamabe/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "yamabe/elliptic.hpp"

namespace yamabe {

Index GridSpec::node_count() const {
  if (!periodic()) return m;
  Index c = 1;
  for (int d = 0; d < n; ++d) c *= m;
  return c;
}

double GridSpec::spacing() const { return periodic() ? extent / m : extent / (m - 1); }

Index GridSpec::stride(int axis) const {
  Index s = 1;
  for (int d = 0; d < axis; ++d) s *= m;
  return s;
}

int GridSpec::axis_index(Index node, int axis) const { return int((node / stride(axis)) % m); }

Index GridSpec::neighbor(Index node, int axis, int step) const {
  const int i = axis_index(node, axis);
  const int j = ((i + step) % m + m) % m;
  return node + Index(j - i) * stride(axis);
}

Eigen::VectorXd GridSpec::coords(Index node) const {
  const double h = spacing();
  if (!periodic()) return Eigen::VectorXd::Constant(1, node * h);
  Eigen::VectorXd x(n);
  for (int d = 0; d < n; ++d) x[d] = axis_index(node, d) * h;
  return x;
}

Index GridSpec::center_node() const {
  if (!periodic()) return 0;
  Index c = 0;
  for (int d = 0; d < n; ++d) c += Index(m / 2) * stride(d);
  return c;
}

Eigen::VectorXd GridSpec::center() const { return coords(center_node()); }

Eigen::VectorXd GridSpec::displacement(Index node, const Eigen::VectorXd& c) const {
  Eigen::VectorXd x = coords(node);
  if (!periodic()) return x;
  for (int d = 0; d < n; ++d) {
    x[d] -= c[d];
    x[d] -= extent * std::round(x[d] / extent);
  }
  return x;
}

double GridSpec::volume() const {
  return periodic() ? std::pow(extent, n) : sphere_area(n) * std::pow(extent, n) / n;
}

GridSpec build_periodic_grid(int n, double L, int m, std::size_t budget) {
  require(n >= 3, "dimension n must be at least 3");
  require(L > 0, "box side must be positive");
  require(m >= 4, "periodic grid needs at least 4 nodes per axis");
  long double count = std::pow((long double)m, n);
  if (count > (long double)budget) {
    std::ostringstream os;
    os << "periodic grid " << m << "^" << n << " exceeds the node budget of " << budget;
    throw PreconditionError(os.str());
  }
  return GridSpec{GridKind::periodic_box, n, L, m};
}

GridSpec build_radial_grid(int n, double r, int m) {
  require(n >= 3, "dimension n must be at least 3");
  require(r > 0, "ball radius must be positive");
  require(m >= 4, "radial grid needs at least 4 nodes");
  return GridSpec{GridKind::radial_ball, n, r, m};
}

MetricField flat_metric(const GridSpec& grid) {
  MetricField g;
  g.grid = grid;
  const int n = grid.n;
  const Index N = grid.node_count();
  g.inv_metric = Eigen::MatrixXd::Zero(N, n * n);
  for (int i = 0; i < n; ++i) g.inv_metric.col(i * n + i).setOnes();
  g.vol_density = Eigen::VectorXd::Ones(N);
  g.scalar_curv = Eigen::VectorXd::Zero(N);
  return g;
}

namespace {

// Riemann tensor with vanishing Weyl part, orthonormal frame at the center.
struct Riemann {
  int n;
  std::vector<double> R;
  double operator()(int i, int k, int j, int l) const { return R[((i * n + k) * n + j) * n + l]; }
};

Riemann riemann_from_ricci(const Eigen::MatrixXd& Ric) {
  const int n = int(Ric.rows());
  const double S = Ric.trace();
  const Eigen::MatrixXd g = Eigen::MatrixXd::Identity(n, n);
  Riemann rm{n, std::vector<double>(std::size_t(n) * n * n * n)};
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) {
          double v = (g(i, j) * Ric(k, l) - g(i, l) * Ric(k, j) + g(k, l) * Ric(i, j) - g(k, j) * Ric(i, l)) /
                     (n - 2);
          v -= S / ((n - 1.0) * (n - 2.0)) * (g(i, j) * g(k, l) - g(i, l) * g(k, j));
          rm.R[((i * n + k) * n + j) * n + l] = v;
        }
  return rm;
}

}  // namespace

MetricField synthesize_normal_metric(const GridSpec& grid, const CurvatureSpec& curv) {
  const int n = grid.n;
  Eigen::VectorXd ric(n);
  if (curv.ricci_diag.empty()) {
    ric.setConstant(curv.S0 / n);
  } else {
    require(int(curv.ricci_diag.size()) == n, "ricci_diag must have n entries");
    for (int i = 0; i < n; ++i) ric[i] = curv.ricci_diag[i];
    require(std::abs(ric.sum() - curv.S0) <= 1e-12 * std::max(1.0, std::abs(curv.S0)),
            "ricci_diag must sum to S0");
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
  if (!curv.first_order.empty()) {
    require(int(curv.first_order.size()) == n, "first_order must have n entries");
    for (int i = 0; i < n; ++i) grad[i] = curv.first_order[i];
  }

  MetricField g = flat_metric(grid);
  const Index N = grid.node_count();

  if (!grid.periodic()) {
    // geodesic ball: g^{rr} = 1, angular mean of sqrt g is 1 - S0 s^2/(6n)
    for (Index k = 0; k < N; ++k) {
      const double s = grid.coords(k)[0];
      g.vol_density[k] = 1.0 - curv.S0 * s * s / (6.0 * n);
      if (g.vol_density[k] <= 0.5)
        throw PreconditionError("ball radius exceeds the normal-coordinate validity radius (volume density <= 1/2)");
    }
    g.scalar_curv.setConstant(curv.S0);
    return g;
  }

  const Eigen::MatrixXd Ric = ric.asDiagonal();
  const Riemann rm = riemann_from_ricci(Ric);
  const Eigen::VectorXd c = grid.center();
  Eigen::MatrixXd gi(n, n);
  for (Index node = 0; node < N; ++node) {
    const Eigen::VectorXd x = grid.displacement(node, c);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = (i == j) ? 1.0 : 0.0;
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) acc += rm(i, k, j, l) * x[k] * x[l] / 3.0;
        gi(i, j) = acc;
      }
    const double vol = 1.0 - x.dot(Ric * x) / 6.0;
    if (vol <= 0.5)
      throw PreconditionError("box extent exceeds the normal-coordinate validity radius (volume density <= 1/2)");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gi, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 0.0)
      throw PreconditionError("box extent exceeds the normal-coordinate validity radius (inverse metric not positive)");
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) g.inv_metric(node, i * n + j) = gi(i, j);
    g.vol_density[node] = vol;
    g.scalar_curv[node] = curv.S0 + grad.dot(x);
  }
  return g;
}

MetricField with_scalar_curvature(MetricField metric, const Eigen::VectorXd& S) {
  require(S.size() == metric.grid.node_count(), "scalar curvature size does not match the grid");
  metric.scalar_curv = S;
  return metric;
}

MetricField conformal_metric(const MetricField& base, const ScalarField& u) {
  require(u.grid == base.grid, "conformal factor lives on a different grid");
  require(u.values.minCoeff() > 0.0, "conformal factor must be positive");
  const int n = base.grid.n;
  const double p = critical_p(n);
  const double a = conformal_a(n);

  const Boundary bc = base.grid.periodic() ? Boundary::periodic : Boundary::dirichlet;
  const EllipticOperator op = assemble_operator(base, a, base.curvature(), bc);
  const Eigen::VectorXd Lu = op.apply(u.values);

  MetricField g = base;
  const Index N = base.grid.node_count();
  for (Index i = 0; i < N; ++i) {
    const double ui = u.values[i];
    g.vol_density[i] *= std::pow(ui, p);
    g.inv_metric.row(i) *= std::pow(ui, -(p - 2.0));
    g.scalar_curv[i] = std::pow(ui, 1.0 - p) * Lu[i];
  }
  if (!base.grid.periodic()) {
    // the outer node has no stencil; extrapolate quadratically
    const Index k = N - 1;
    g.scalar_curv[k] = 3.0 * g.scalar_curv[k - 1] - 3.0 * g.scalar_curv[k - 2] + g.scalar_curv[k - 3];
  }
  return g;
}

Eigen::VectorXd conformal_scalar_curvature_fd(const MetricField& base, const ScalarField& u) {
  const GridSpec& grid = base.grid;
  require(grid.periodic(), "finite-difference conformal curvature needs a periodic grid");
  require(u.grid == grid, "conformal factor lives on a different grid");
  require(u.values.minCoeff() > 0.0, "conformal factor must be positive");
  const int n = grid.n;
  const Index N = grid.node_count();
  for (Index i = 0; i < N; ++i) {
    require(std::abs(base.vol_density[i] - 1.0) < 1e-14, "finite-difference conformal curvature needs a flat base");
  }
  const double h = grid.spacing();
  const Eigen::VectorXd f = (2.0 / (n - 2)) * u.values.array().log().matrix();
  Eigen::VectorXd out(N);
  for (Index i = 0; i < N; ++i) {
    double lap = 0.0, grad2 = 0.0;
    for (int d = 0; d < n; ++d) {
      const double fp = f[grid.neighbor(i, d, 1)], fm = f[grid.neighbor(i, d, -1)];
      lap += (fp - 2.0 * f[i] + fm) / (h * h);
      const double g = (fp - fm) / (2.0 * h);
      grad2 += g * g;
    }
    out[i] = std::exp(-2.0 * f[i]) * (base.scalar_curv[i] - 2.0 * (n - 1) * lap - (n - 2.0) * (n - 1.0) * grad2);
  }
  return out;
}

Eigen::VectorXd quadrature_weights(const MetricField& metric) {
  const GridSpec& grid = metric.grid;
  const Index N = grid.node_count();
  const double h = grid.spacing();
  Eigen::VectorXd w(N);
  if (grid.periodic()) {
    w = std::pow(h, grid.n) * metric.vol_density;
    return w;
  }
  const double om = sphere_area(grid.n);
  for (Index k = 0; k < N; ++k) {
    const double s = k * h;
    const double tw = (k == 0 || k == N - 1) ? 0.5 * h : h;
    w[k] = tw * om * std::pow(s, grid.n - 1) * metric.vol_density[k];
  }
  return w;
}

}  // namespace yamabe
