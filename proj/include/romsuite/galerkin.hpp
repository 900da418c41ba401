#pragma once

#include <vector>

#include <Eigen/Core>

#include "romsuite/fom.hpp"
#include "romsuite/pod.hpp"

namespace romsuite {

/// First-difference operator used on the Galerkin side: central stencil in
/// the interior, pinned inflow row, ghost-equal-neighbor outflow row. The
/// full-order solver upwinds instead; that mismatch is part of the model
/// error the closure corrects.
Eigen::MatrixXd first_difference_matrix(const Grid1D& grid);

/// Second-difference operator with the same boundary rows as the full-order
/// solver (pinned inflow, ghost-equal-neighbor outflow).
Eigen::MatrixXd second_difference_matrix(const Grid1D& grid);

/// Precomputed Galerkin tensors for the reducible dynamics: projected
/// diffusion (diffusivity folded in) and one projected advection slice per
/// velocity mode.
struct ReducedOperators {
  Eigen::MatrixXd L_red;                  // n_T x n_T
  std::vector<Eigen::MatrixXd> A_red;     // n_u slices, each n_T x n_T
  int n_T = 0;
  int n_u = 0;
};

ReducedOperators build_reduced_operators(const PodBasis& basis_T, const PodBasis& basis_u,
                                         const Grid1D& grid, const PhysicalParams& params);

/// d(alpha_T)/dt of the reducible part:
/// L_red * alpha_T - sum_k alpha_u[k] * A_red[k] * alpha_T.
Eigen::VectorXd eval_reduced_rhs(const Eigen::VectorXd& alpha_T, const Eigen::VectorXd& alpha_u,
                                 const ReducedOperators& ops);

/// Affine ridge-regression map alpha_u = W [alpha_T; S] + b.
struct VelocityMap {
  Eigen::MatrixXd W;  // n_u x (n_T + 1)
  Eigen::VectorXd b;  // n_u
  double ridge_lambda = 0.0;
};

/// Solves the penalized normal equations with an unpenalized intercept,
/// via an in-house Cholesky factorization.
VelocityMap fit_velocity_map(const std::vector<Eigen::VectorXd>& alpha_T_features,
                             const std::vector<double>& signal_features,
                             const std::vector<Eigen::VectorXd>& targets, double ridge_lambda);

Eigen::VectorXd predict_velocity(const VelocityMap& map, const Eigen::VectorXd& alpha_T,
                                 double S);

/// SPD solve by in-house Cholesky; throws on a non-positive pivot.
Eigen::MatrixXd cholesky_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& rhs);

}  // namespace romsuite
