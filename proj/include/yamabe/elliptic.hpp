#pragma once

#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "yamabe/geometry.hpp"

namespace yamabe {

enum class Boundary { dirichlet, periodic };

// 1 marks an unknown; 0 marks a node carrying Dirichlet data.
using NodeMask = std::vector<unsigned char>;

using SparseMatrix = Eigen::SparseMatrix<double>;

// Discrete  -a Lap_g + V  in weak form: (K u)_i / M_i + V_i u_i.
// K is the symmetric stiffness with zero row sums, M the nodal mass.
struct EllipticOperator {
  GridSpec grid;
  double a = 1.0;
  SparseMatrix stiffness;
  Eigen::VectorXd mass;
  Eigen::VectorXd V;
  NodeMask active;

  // reduced system over active nodes
  std::vector<Index> unknowns;   // active node ids
  std::vector<Index> slot;       // node -> position in unknowns, or -1
  SparseMatrix K_aa;
  Eigen::VectorXd boundary_coupling;  // K_ab * 1, per unknown

  bool has_boundary() const { return Index(unknowns.size()) < grid.node_count(); }
  Eigen::VectorXd diffusion(const Eigen::VectorXd& u) const;  // -a Lap u
  Eigen::VectorXd apply(const Eigen::VectorXd& u) const;      // -a Lap u + V u
  double energy(const Eigen::VectorXd& u) const { return u.dot(stiffness * u); }
};

EllipticOperator assemble_operator(const MetricField& metric, double a, const ScalarField& V, Boundary bc);
// Dirichlet outside the mask (the mask may be any node set on either grid kind)
EllipticOperator assemble_operator(const MetricField& metric, double a, const ScalarField& V,
                                   const NodeMask& active);
// same stiffness and mass, new zeroth-order coefficient
EllipticOperator with_potential(const EllipticOperator& op, const Eigen::VectorXd& V);

NodeMask full_mask(const GridSpec& grid);
NodeMask radial_interior_mask(const GridSpec& grid);
// nodes strictly inside the ball |x - c| < radius (minimum image)
NodeMask ball_mask(const GridSpec& grid, const Eigen::VectorXd& center, double radius);

struct SolveOptions {
  double tol = 1e-12;     // nodal residual relative to the nodal right-hand side
  int max_iter = 50000;
  bool mean_zero = false;  // periodic operator without zeroth-order term: solve on the mean-zero subspace
};

struct SolveReport {
  std::string method;
  int iterations = 0;
  double relative_residual = 0.0;
};

// Solve op u = rhs on active nodes with u = boundary_value elsewhere.
ScalarField solve(const EllipticOperator& op, const ScalarField& rhs, double boundary_value,
                  const SolveOptions& opts = {}, SolveReport* report = nullptr);

// Euclidean norm of the nodal residual op u - rhs over active nodes.
double residual(const EllipticOperator& op, const ScalarField& u, const ScalarField& rhs);

struct MaximumCheck {
  bool ok = true;
  bool applicable = false;  // V >= 0 and op u <= 0 on active nodes
  Index node = -1;          // worst interior node when violated
  double excess = 0.0;      // sup u - sup_boundary max(u,0)
};

// sup over active nodes of u must not exceed sup over Dirichlet nodes of max(u,0)
MaximumCheck weak_maximum_check(const EllipticOperator& op, const ScalarField& u);

// Preconditioned CG on an SPD sparse system; throws NumericalFailure when p^T A p <= 0.
// Stops when |scale * r| <= tol * ref_norm (ref_norm <= 0: |scale * b|).
Eigen::VectorXd pcg(const SparseMatrix& A, const Eigen::VectorXd& b, const Eigen::VectorXd& x0,
                    const Eigen::VectorXd& residual_scale, double tol, int max_iter, bool project_mean,
                    SolveReport* report, double ref_norm = 0.0);

}  // namespace yamabe
