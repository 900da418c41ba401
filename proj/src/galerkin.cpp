#include "romsuite/galerkin.hpp"

#include <cmath>
#include <stdexcept>

namespace romsuite {

Eigen::MatrixXd first_difference_matrix(const Grid1D& grid) {
  const int n = grid.n_c;
  const double inv2dx = 1.0 / (2.0 * grid.dx);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (int j = 1; j + 1 < n; ++j) {
    D(j, j - 1) = -inv2dx;
    D(j, j + 1) = inv2dx;
  }
  // Outflow row: ghost node equals the last node.
  D(n - 1, n - 2) = -inv2dx;
  D(n - 1, n - 1) = inv2dx;
  return D;
}

Eigen::MatrixXd second_difference_matrix(const Grid1D& grid) {
  const int n = grid.n_c;
  const double inv_dx2 = 1.0 / (grid.dx * grid.dx);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (int j = 1; j + 1 < n; ++j) {
    D(j, j - 1) = inv_dx2;
    D(j, j) = -2.0 * inv_dx2;
    D(j, j + 1) = inv_dx2;
  }
  D(n - 1, n - 2) = inv_dx2;
  D(n - 1, n - 1) = -inv_dx2;
  return D;
}

ReducedOperators build_reduced_operators(const PodBasis& basis_T, const PodBasis& basis_u,
                                         const Grid1D& grid, const PhysicalParams& params) {
  if (basis_T.modes.rows() != grid.n_c || basis_u.modes.rows() != grid.n_c)
    throw std::invalid_argument("build_reduced_operators: basis/grid size mismatch");

  const Eigen::MatrixXd D1 = first_difference_matrix(grid);
  const Eigen::MatrixXd D2 = second_difference_matrix(grid);
  const Eigen::MatrixXd& VT = basis_T.modes;

  ReducedOperators ops;
  ops.n_T = basis_T.rank();
  ops.n_u = basis_u.rank();
  ops.L_red = params.diffusivity * VT.transpose() * D2 * VT;
  ops.A_red.reserve(static_cast<std::size_t>(ops.n_u));
  const Eigen::MatrixXd D1VT = D1 * VT;
  for (int k = 0; k < ops.n_u; ++k)
    ops.A_red.push_back(VT.transpose() * basis_u.modes.col(k).asDiagonal() * D1VT);
  return ops;
}

Eigen::VectorXd eval_reduced_rhs(const Eigen::VectorXd& alpha_T, const Eigen::VectorXd& alpha_u,
                                 const ReducedOperators& ops) {
  if (alpha_T.size() != ops.n_T || alpha_u.size() != ops.n_u)
    throw std::invalid_argument("eval_reduced_rhs: dimension mismatch");
  Eigen::VectorXd out = ops.L_red * alpha_T;
  for (int k = 0; k < ops.n_u; ++k) out.noalias() -= alpha_u[k] * (ops.A_red[static_cast<std::size_t>(k)] * alpha_T);
  return out;
}

Eigen::MatrixXd cholesky_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& rhs) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || rhs.rows() != n)
    throw std::invalid_argument("cholesky_solve: dimension mismatch");

  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = A(j, j) - L.row(j).head(j).squaredNorm();
    if (d <= 0.0) throw std::runtime_error("cholesky_solve: matrix not positive definite");
    L(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i)
      L(i, j) = (A(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
  }

  Eigen::MatrixXd X = rhs;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    for (Eigen::Index i = 0; i < n; ++i)  // forward substitution
      X(i, c) = (X(i, c) - L.row(i).head(i).dot(X.col(c).head(i))) / L(i, i);
    for (Eigen::Index i = n - 1; i >= 0; --i) {  // backward substitution
      double s = X(i, c);
      for (Eigen::Index k = i + 1; k < n; ++k) s -= L(k, i) * X(k, c);
      X(i, c) = s / L(i, i);
    }
  }
  return X;
}

VelocityMap fit_velocity_map(const std::vector<Eigen::VectorXd>& alpha_T_features,
                             const std::vector<double>& signal_features,
                             const std::vector<Eigen::VectorXd>& targets, double ridge_lambda) {
  const std::size_t n = alpha_T_features.size();
  if (n < 2) throw std::invalid_argument("fit_velocity_map: need at least 2 samples");
  if (signal_features.size() != n || targets.size() != n)
    throw std::invalid_argument("fit_velocity_map: feature/target count mismatch");
  if (ridge_lambda < 0.0) throw std::invalid_argument("fit_velocity_map: negative ridge_lambda");

  const Eigen::Index n_T = alpha_T_features.front().size();
  const Eigen::Index n_u = targets.front().size();
  const Eigen::Index p = n_T + 1;  // [alpha_T; S]

  Eigen::MatrixXd Phi(static_cast<Eigen::Index>(n), p + 1);  // augmented with intercept column
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(n), n_u);
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha_T_features[i].size() != n_T || targets[i].size() != n_u)
      throw std::invalid_argument("fit_velocity_map: ragged sample dimensions");
    Phi.row(static_cast<Eigen::Index>(i)).head(n_T) = alpha_T_features[i].transpose();
    Phi(static_cast<Eigen::Index>(i), n_T) = signal_features[i];
    Phi(static_cast<Eigen::Index>(i), p) = 1.0;
    Y.row(static_cast<Eigen::Index>(i)) = targets[i].transpose();
  }

  Eigen::MatrixXd normal = Phi.transpose() * Phi;
  normal.topLeftCorner(p, p).diagonal().array() += ridge_lambda;  // intercept unpenalized

  Eigen::MatrixXd coeffs;
  try {
    coeffs = cholesky_solve(normal, Phi.transpose() * Y);
  } catch (const std::runtime_error&) {
    throw std::runtime_error("fit_velocity_map: singular normal equations (rank-deficient "
                             "features with ridge_lambda = 0?)");
  }

  VelocityMap map;
  map.W = coeffs.topRows(p).transpose();
  map.b = coeffs.row(p).transpose();
  map.ridge_lambda = ridge_lambda;
  return map;
}

Eigen::VectorXd predict_velocity(const VelocityMap& map, const Eigen::VectorXd& alpha_T,
                                 double S) {
  if (alpha_T.size() + 1 != map.W.cols())
    throw std::invalid_argument("predict_velocity: dimension mismatch");
  Eigen::VectorXd features(map.W.cols());
  features.head(alpha_T.size()) = alpha_T;
  features[alpha_T.size()] = S;
  return map.W * features + map.b;
}

}  // namespace romsuite
