#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "yamabe/core.hpp"

namespace yamabe {

using Eigen::Index;

enum class GridKind { periodic_box, radial_ball };

// Periodic grids larger than this are refused unless the caller raises the budget.
inline constexpr std::size_t default_node_budget = std::size_t(1) << 25;

struct GridSpec {
  GridKind kind = GridKind::periodic_box;
  int n = 3;
  double extent = 1.0;  // box side L, or ball radius r
  int m = 0;            // nodes per axis, or radial nodes including s = 0 and s = r

  bool periodic() const { return kind == GridKind::periodic_box; }
  int axes() const { return periodic() ? n : 1; }
  Index node_count() const;
  double spacing() const;
  Index stride(int axis) const;
  int axis_index(Index node, int axis) const;
  Index neighbor(Index node, int axis, int step) const;  // periodic wrap
  Eigen::VectorXd coords(Index node) const;              // box position, or (s)
  Index center_node() const;                             // node used as the normal-coordinate origin
  Eigen::VectorXd center() const;
  // minimum-image displacement from c (periodic); (s) for radial grids
  Eigen::VectorXd displacement(Index node, const Eigen::VectorXd& c) const;
  double volume() const;

  bool operator==(const GridSpec&) const = default;
};

GridSpec build_periodic_grid(int n, double L, int m, std::size_t budget = default_node_budget);
GridSpec build_radial_grid(int n, double r, int m);

template <typename Scalar>
struct Field {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  GridSpec grid;
  Vector values;

  Field() = default;
  Field(GridSpec g, Vector v) : grid(std::move(g)), values(std::move(v)) {
    require(values.size() == grid.node_count(), "field size does not match the grid node count");
  }
  Index size() const { return values.size(); }
  Scalar operator[](Index i) const { return values[i]; }
  Scalar& operator[](Index i) { return values[i]; }
};

using ScalarField = Field<double>;

template <typename Scalar = double>
Field<Scalar> constant_field(const GridSpec& g, Scalar c) {
  return Field<Scalar>(g, Field<Scalar>::Vector::Constant(g.node_count(), c));
}

// f receives the node coordinates (box position or (s)).
template <typename Scalar = double, typename F>
Field<Scalar> sample(const GridSpec& g, F&& f) {
  typename Field<Scalar>::Vector v(g.node_count());
  for (Index i = 0; i < v.size(); ++i) v[i] = Scalar(f(g.coords(i)));
  return Field<Scalar>(g, std::move(v));
}

struct CurvatureSpec {
  double S0 = 0.0;
  std::vector<double> ricci_diag;   // orthonormal Ricci eigenvalues at the center; empty means S0/n each
  std::vector<double> first_order;  // gradient of S at the center; empty means zero
};

struct MetricField {
  GridSpec grid;
  Eigen::MatrixXd inv_metric;   // node x (n*n), row-major g^{ij}
  Eigen::VectorXd vol_density;  // sqrt(det g)
  Eigen::VectorXd scalar_curv;

  double inv(Index node, int i, int j) const { return inv_metric(node, i * grid.n + j); }
  ScalarField curvature() const { return ScalarField(grid, scalar_curv); }
};

MetricField flat_metric(const GridSpec& grid);
MetricField synthesize_normal_metric(const GridSpec& grid, const CurvatureSpec& curv);
MetricField with_scalar_curvature(MetricField metric, const Eigen::VectorXd& S);

// g~ = u^{p-2} g with S~ = u^{1-p}(-a Lap u + S u) from the discrete operator
MetricField conformal_metric(const MetricField& base, const ScalarField& u);

// S~ via f = 2 ln(u)/(n-2) and S~ = e^{-2f}(S - 2(n-1) Lap f - (n-2)(n-1)|grad f|^2),
// central differences on a flat periodic base. Used as an independent check.
Eigen::VectorXd conformal_scalar_curvature_fd(const MetricField& base, const ScalarField& u);

// Nodal quadrature weights: h^n sqrt(g) on boxes, trapezoid on omega s^{n-1} sqrt(g) for balls.
Eigen::VectorXd quadrature_weights(const MetricField& metric);

template <typename Scalar>
Scalar integrate(const Field<Scalar>& f, const MetricField& metric) {
  require(f.grid == metric.grid, "integrate: field and metric live on different grids");
  const Eigen::VectorXd w = quadrature_weights(metric);
  Scalar acc(0);
  for (Index i = 0; i < w.size(); ++i) acc += Scalar(w[i]) * f.values[i];
  return acc;
}

template <typename Scalar>
Scalar lp_norm(const Field<Scalar>& f, double q, const MetricField& metric) {
  using std::abs;
  using std::pow;
  require(q >= 1.0, "lp_norm: exponent q must be at least 1");
  Field<Scalar> g(f.grid, f.values.array().abs().pow(Scalar(q)).matrix());
  return pow(integrate(g, metric), Scalar(1.0 / q));
}

}  // namespace yamabe
