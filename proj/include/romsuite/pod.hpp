#pragma once

#include <optional>
#include <variant>

#include <Eigen/Core>

namespace romsuite {

/// Truncate to a fixed number of modes.
struct RankTruncation {
  int rank;
};

/// Keep the smallest rank whose cumulative squared singular values reach the
/// given fraction of the total.
struct EnergyTruncation {
  double fraction;
};

using Truncation = std::variant<RankTruncation, EnergyTruncation>;

/// Orthonormal spatial modes extracted from a snapshot matrix.
struct PodBasis {
  Eigen::MatrixXd modes;            // n_c x r, columns orthonormal
  Eigen::VectorXd singular_values;  // r, non-increasing, positive
  double energy_captured = 1.0;     // sum_{i<=r} s_i^2 / sum_i s_i^2
  long total_snapshots = 0;
  std::optional<Eigen::VectorXd> mean;  // temporal mean, when centering is on

  int rank() const { return static_cast<int>(modes.cols()); }
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix, iterated until the
/// off-diagonal Frobenius norm falls below 1e-14 relative. Eigenvalues are
/// returned in decreasing order with matching eigenvector columns.
void jacobi_eigensymmetric(const Eigen::MatrixXd& A, Eigen::VectorXd& eigenvalues,
                           Eigen::MatrixXd& eigenvectors);

/// POD via the method of snapshots: eigendecompose the Gram matrix on the
/// smaller of the two dimensions of X (n_c x n_s), then form the modes.
/// Eigenvalues below 1e-12 of the largest count as numerical rank deficiency.
/// Modes are sign-canonicalized so the largest-magnitude entry is positive.
PodBasis compute_pod(const Eigen::MatrixXd& snapshot_matrix, const Truncation& truncation,
                     bool center = false);

/// Largest rank compute_pod can return for this matrix.
int numerical_rank(const Eigen::MatrixXd& snapshot_matrix, bool center = false);

Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& field);
Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& coords);

}  // namespace romsuite
