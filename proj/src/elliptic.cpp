#include "yamabe/elliptic.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>
#include <sstream>

namespace yamabe {

namespace {

using Triplet = Eigen::Triplet<double>;

void periodic_stiffness(const MetricField& g, double a, std::vector<Triplet>& t, Eigen::VectorXd& mass) {
  const GridSpec& grid = g.grid;
  const int n = grid.n;
  const Index N = grid.node_count();
  const double h = grid.spacing();
  const double hn2 = std::pow(h, n - 2);
  mass = std::pow(h, n) * g.vol_density;
  t.reserve(std::size_t(N) * (4 * n + 8 * n * (n - 1)));
  for (Index i = 0; i < N; ++i) {
    for (int d = 0; d < n; ++d) {
      // compact flux across the face between i and its + neighbor
      const Index j = grid.neighbor(i, d, 1);
      const double c = a * hn2 * 0.5 * (g.vol_density[i] * g.inv(i, d, d) + g.vol_density[j] * g.inv(j, d, d));
      t.emplace_back(i, i, c);
      t.emplace_back(j, j, c);
      t.emplace_back(i, j, -c);
      t.emplace_back(j, i, -c);
    }
    for (int d = 0; d < n; ++d)
      for (int e = 0; e < n; ++e) {
        if (d == e) continue;
        const double gde = g.inv(i, d, e);
        if (gde == 0.0) continue;
        // central-difference form  c (D_d u)(D_e u), symmetrised
        const double c = 0.5 * a * hn2 * 0.25 * g.vol_density[i] * gde;
        const Index dp = grid.neighbor(i, d, 1), dm = grid.neighbor(i, d, -1);
        const Index ep = grid.neighbor(i, e, 1), em = grid.neighbor(i, e, -1);
        const Index al[2] = {dp, dm};
        const Index be[2] = {ep, em};
        const double sg[2] = {1.0, -1.0};
        for (int x = 0; x < 2; ++x)
          for (int y = 0; y < 2; ++y) {
            const double v = c * sg[x] * sg[y];
            t.emplace_back(al[x], be[y], v);
            t.emplace_back(be[y], al[x], v);
          }
      }
  }
}

void radial_stiffness(const MetricField& g, double a, std::vector<Triplet>& t, Eigen::VectorXd& mass) {
  const GridSpec& grid = g.grid;
  const int n = grid.n;
  const Index N = grid.node_count();
  const double h = grid.spacing();
  const double r = grid.extent;
  const double om = sphere_area(n);
  mass.resize(N);
  for (Index k = 0; k < N; ++k) {
    const double lo = (k == 0) ? 0.0 : (k - 0.5) * h;
    const double hi = (k == N - 1) ? r : (k + 0.5) * h;
    mass[k] = g.vol_density[k] * om * (std::pow(hi, n) - std::pow(lo, n)) / n;
  }
  for (Index k = 0; k + 1 < N; ++k) {
    const double s = (k + 0.5) * h;
    const double w = 0.5 * (g.vol_density[k] * g.inv(k, 0, 0) + g.vol_density[k + 1] * g.inv(k + 1, 0, 0));
    const double c = a * om * std::pow(s, n - 1) * w / h;
    t.emplace_back(k, k, c);
    t.emplace_back(k + 1, k + 1, c);
    t.emplace_back(k, k + 1, -c);
    t.emplace_back(k + 1, k, -c);
  }
}

void build_reduced(EllipticOperator& op) {
  const Index N = op.grid.node_count();
  op.unknowns.clear();
  op.slot.assign(N, -1);
  for (Index i = 0; i < N; ++i)
    if (op.active[i]) {
      op.slot[i] = Index(op.unknowns.size());
      op.unknowns.push_back(i);
    }
  const Index na = Index(op.unknowns.size());
  require(na > 0, "operator has no active nodes");
  std::vector<Triplet> t;
  t.reserve(op.stiffness.nonZeros());
  op.boundary_coupling = Eigen::VectorXd::Zero(na);
  for (Index col = 0; col < op.stiffness.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(op.stiffness, col); it; ++it) {
      const Index si = op.slot[it.row()];
      if (si < 0) continue;
      const Index sj = op.slot[it.col()];
      if (sj >= 0)
        t.emplace_back(si, sj, it.value());
      else
        op.boundary_coupling[si] += it.value();
    }
  op.K_aa.resize(na, na);
  op.K_aa.setFromTriplets(t.begin(), t.end());
}

EllipticOperator assemble_impl(const MetricField& metric, double a, const ScalarField& V, NodeMask active) {
  require(a > 0, "diffusion weight a must be positive");
  require(V.grid == metric.grid, "potential lives on a different grid");
  require(Index(active.size()) == metric.grid.node_count(), "mask size does not match the grid");
  EllipticOperator op;
  op.grid = metric.grid;
  op.a = a;
  op.V = V.values;
  op.active = std::move(active);
  std::vector<Triplet> t;
  if (metric.grid.periodic())
    periodic_stiffness(metric, a, t, op.mass);
  else
    radial_stiffness(metric, a, t, op.mass);
  const Index N = metric.grid.node_count();
  op.stiffness.resize(N, N);
  op.stiffness.setFromTriplets(t.begin(), t.end());
  op.stiffness.prune(0.0);
  build_reduced(op);
  return op;
}

std::string shift_message(const EllipticOperator& op) {
  double vmin = INFINITY;
  for (Index i : op.unknowns) vmin = std::min(vmin, op.V[i]);
  std::ostringstream os;
  os << "operator is not positive definite: zeroth-order shift min V = " << vmin
     << " is below the first Dirichlet/periodic eigenvalue of -a Lap";
  return os.str();
}

}  // namespace

NodeMask full_mask(const GridSpec& grid) { return NodeMask(grid.node_count(), 1); }

NodeMask radial_interior_mask(const GridSpec& grid) {
  require(!grid.periodic(), "radial mask needs a radial grid");
  NodeMask m(grid.node_count(), 1);
  m.back() = 0;
  return m;
}

NodeMask ball_mask(const GridSpec& grid, const Eigen::VectorXd& center, double radius) {
  NodeMask m(grid.node_count(), 0);
  if (!grid.periodic()) {
    for (Index k = 0; k < grid.node_count(); ++k) m[k] = grid.coords(k)[0] < radius ? 1 : 0;
    return m;
  }
  require(radius < 0.5 * grid.extent, "ball does not fit in the periodic box");
  for (Index i = 0; i < grid.node_count(); ++i) m[i] = grid.displacement(i, center).norm() < radius ? 1 : 0;
  return m;
}

EllipticOperator assemble_operator(const MetricField& metric, double a, const ScalarField& V, Boundary bc) {
  if (metric.grid.periodic()) {
    require(bc == Boundary::periodic, "a periodic grid needs periodic boundary conditions or an explicit mask");
    return assemble_impl(metric, a, V, full_mask(metric.grid));
  }
  require(bc == Boundary::dirichlet, "a radial grid needs Dirichlet data at s = r");
  return assemble_impl(metric, a, V, radial_interior_mask(metric.grid));
}

EllipticOperator assemble_operator(const MetricField& metric, double a, const ScalarField& V, const NodeMask& active) {
  return assemble_impl(metric, a, V, active);
}

EllipticOperator with_potential(const EllipticOperator& op, const Eigen::VectorXd& V) {
  require(V.size() == op.grid.node_count(), "potential size does not match the grid");
  EllipticOperator out = op;
  out.V = V;
  return out;
}

Eigen::VectorXd EllipticOperator::diffusion(const Eigen::VectorXd& u) const {
  return ((stiffness * u).array() / mass.array()).matrix();
}

Eigen::VectorXd EllipticOperator::apply(const Eigen::VectorXd& u) const {
  return diffusion(u) + (V.array() * u.array()).matrix();
}

Eigen::VectorXd pcg(const SparseMatrix& A, const Eigen::VectorXd& b_in, const Eigen::VectorXd& x0,
                    const Eigen::VectorXd& scale, double tol, int max_iter, bool project_mean, SolveReport* report,
                    double ref_norm) {
  const Index n = b_in.size();
  Eigen::VectorXd b = b_in;
  if (project_mean) b.array() -= b.mean();
  const double bnorm = (b.array() * scale.array()).matrix().norm();
  Eigen::VectorXd x = x0;
  if (report) report->method = "jacobi-pcg";
  if (bnorm == 0.0 && x0.isZero()) {
    if (report) report->iterations = 0, report->relative_residual = 0.0;
    return Eigen::VectorXd::Zero(n);
  }
  const Eigen::VectorXd dinv = A.diagonal().cwiseInverse();
  Eigen::VectorXd r = b - A * x;
  if (project_mean) r.array() -= r.mean();
  Eigen::VectorXd z = dinv.cwiseProduct(r);
  if (project_mean) z.array() -= z.mean();
  Eigen::VectorXd p = z, Ap(n);
  double rz = r.dot(z);
  const double ref = ref_norm > 0 ? ref_norm : bnorm > 0 ? bnorm : 1.0;
  double rel = (r.array() * scale.array()).matrix().norm() / ref;
  int it = 0;
  for (; it < max_iter && rel > tol; ++it) {
    Ap.noalias() = A * p;
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) throw NumericalFailure("indefinite");
    const double alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    if (project_mean) r.array() -= r.mean();
    z = dinv.cwiseProduct(r);
    if (project_mean) z.array() -= z.mean();
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
    rel = (r.array() * scale.array()).matrix().norm() / ref;
    if ((it + 1) % 200 == 0) {
      // guard against drift of the recursive residual
      r = b - A * x;
      if (project_mean) r.array() -= r.mean();
      rel = (r.array() * scale.array()).matrix().norm() / ref;
    }
  }
  if (report) report->iterations = it, report->relative_residual = rel;
  if (rel > tol) {
    std::ostringstream os;
    os << "conjugate gradients did not reach tolerance " << tol << " in " << max_iter << " iterations (residual "
       << rel << ")";
    throw NumericalFailure(os.str());
  }
  return x;
}

ScalarField solve(const EllipticOperator& op, const ScalarField& rhs, double boundary_value, const SolveOptions& opts,
                  SolveReport* report) {
  require(rhs.grid == op.grid, "right-hand side lives on a different grid");
  const Index na = Index(op.unknowns.size());
  Eigen::VectorXd b(na), ma(na), Va(na);
  for (Index s = 0; s < na; ++s) {
    const Index i = op.unknowns[s];
    ma[s] = op.mass[i];
    Va[s] = op.V[i];
    b[s] = op.mass[i] * rhs.values[i] - boundary_value * op.boundary_coupling[s];
  }
  SparseMatrix A = op.K_aa;
  for (Index s = 0; s < na; ++s) A.coeffRef(s, s) += ma[s] * Va[s];

  Eigen::VectorXd x;
  SolveReport rep;
  const bool mean_zero = opts.mean_zero;
  require(!mean_zero || !op.has_boundary(), "mean-zero solve needs a closed (periodic) domain");

  if (!op.grid.periodic()) {
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
      throw NumericalFailure(shift_message(op));
    x = ldlt.solve(b);
    rep.method = "ldlt";
    rep.iterations = 1;
    rep.relative_residual = ((b - A * x).array() / ma.array()).matrix().norm() /
                            std::max((b.array() / ma.array()).matrix().norm(), 1e-300);
  } else {
    try {
      // relative to the nodal right-hand side, not to the lifted one (which carries a/h^2 times the boundary data)
      double ref = 0.0;
      for (Index i : op.unknowns) ref += rhs.values[i] * rhs.values[i];
      x = pcg(A, b, Eigen::VectorXd::Zero(na), ma.cwiseInverse(), opts.tol, opts.max_iter, mean_zero, &rep,
              std::sqrt(ref));
    } catch (const NumericalFailure& e) {
      if (std::string(e.what()) == "indefinite") throw NumericalFailure(shift_message(op));
      throw;
    }
  }
  if (report) *report = rep;

  ScalarField u = constant_field(op.grid, boundary_value);
  for (Index s = 0; s < na; ++s) u.values[op.unknowns[s]] = x[s];
  if (mean_zero) u.values.array() -= u.values.dot(op.mass) / op.mass.sum();
  return u;
}

double residual(const EllipticOperator& op, const ScalarField& u, const ScalarField& rhs) {
  require(u.grid == op.grid && rhs.grid == op.grid, "residual: fields live on a different grid");
  const Eigen::VectorXd Lu = op.apply(u.values);
  double acc = 0.0;
  for (Index i : op.unknowns) {
    const double d = Lu[i] - rhs.values[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

MaximumCheck weak_maximum_check(const EllipticOperator& op, const ScalarField& u) {
  MaximumCheck out;
  const Eigen::VectorXd Lu = op.apply(u.values);
  const Eigen::VectorXd Du = op.diffusion(u.values);
  double scale = 0.0;
  for (Index i : op.unknowns) scale = std::max(scale, std::abs(Du[i]));
  bool applicable = true;
  double sup = -INFINITY;
  Index arg = -1;
  for (Index i : op.unknowns) {
    if (op.V[i] < 0.0 || Lu[i] > 1e-10 * (1.0 + scale)) applicable = false;
    if (u.values[i] > sup) sup = u.values[i], arg = i;
  }
  double bound = 0.0;
  for (Index i = 0; i < op.grid.node_count(); ++i)
    if (!op.active[i]) bound = std::max(bound, u.values[i]);
  out.applicable = applicable;
  out.excess = sup - bound;
  if (applicable && out.excess > 1e-12 * (1.0 + std::abs(bound))) {
    out.ok = false;
    out.node = arg;
  }
  return out;
}

}  // namespace yamabe
