#include "romsuite/pod.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace romsuite {

namespace {

double offdiag_norm(const Eigen::MatrixXd& A) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      if (i != j) s += A(i, j) * A(i, j);
  return std::sqrt(s);
}

// Eigen-decomposition of the Gram matrix on the smaller dimension, shared by
// compute_pod and numerical_rank.
struct GramEigen {
  bool gram_is_snapshot_side;  // true when G = X^T X
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  double cutoff;
  int num_rank;
};

GramEigen decompose(const Eigen::MatrixXd& X) {
  if (X.size() == 0) throw std::invalid_argument("compute_pod: empty snapshot matrix");
  if (!X.allFinite()) throw std::invalid_argument("compute_pod: non-finite snapshot matrix");

  GramEigen g;
  g.gram_is_snapshot_side = X.cols() <= X.rows();
  const Eigen::MatrixXd gram =
      g.gram_is_snapshot_side ? Eigen::MatrixXd(X.transpose() * X) : Eigen::MatrixXd(X * X.transpose());
  jacobi_eigensymmetric(gram, g.eigenvalues, g.eigenvectors);

  const double lambda_max = g.eigenvalues.size() ? std::max(g.eigenvalues[0], 0.0) : 0.0;
  g.cutoff = 1e-12 * lambda_max;
  g.num_rank = 0;
  for (Eigen::Index i = 0; i < g.eigenvalues.size(); ++i)
    if (g.eigenvalues[i] > g.cutoff && g.eigenvalues[i] > 0.0) ++g.num_rank;
  return g;
}

}  // namespace

void jacobi_eigensymmetric(const Eigen::MatrixXd& A, Eigen::VectorXd& eigenvalues,
                           Eigen::MatrixXd& eigenvectors) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n) throw std::invalid_argument("jacobi_eigensymmetric: matrix not square");

  Eigen::MatrixXd S = 0.5 * (A + A.transpose());  // symmetrize roundoff
  Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);
  const double tol = 1e-14 * std::max(S.norm(), 1e-300);

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps && offdiag_norm(S) > tol; ++sweep) {
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = S(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (S(q, q) - S(p, p)) / (2.0 * apq);
        const double t = ((theta >= 0.0) ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // Givens rotation on rows/columns p and q.
        for (Eigen::Index k = 0; k < n; ++k) {
          const double skp = S(k, p), skq = S(k, q);
          S(k, p) = c * skp - s * skq;
          S(k, q) = s * skp + c * skq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double spk = S(p, k), sqk = S(q, k);
          S(p, k) = c * spk - s * sqk;
          S(q, k) = s * spk + c * sqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  // Sort decreasing.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return S(a, a) > S(b, b); });
  eigenvalues.resize(n);
  eigenvectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    eigenvalues[i] = S(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    eigenvectors.col(i) = V.col(order[static_cast<std::size_t>(i)]);
  }
}

int numerical_rank(const Eigen::MatrixXd& snapshot_matrix, bool center) {
  Eigen::MatrixXd X = snapshot_matrix;
  if (center) X.colwise() -= Eigen::VectorXd(X.rowwise().mean());
  return decompose(X).num_rank;
}

PodBasis compute_pod(const Eigen::MatrixXd& snapshot_matrix, const Truncation& truncation,
                     bool center) {
  Eigen::MatrixXd X = snapshot_matrix;
  std::optional<Eigen::VectorXd> mean;
  if (center) {
    mean = Eigen::VectorXd(X.rowwise().mean());
    X.colwise() -= *mean;
  }
  const GramEigen g = decompose(X);

  const double total_energy = g.eigenvalues.head(g.num_rank).cwiseMax(0.0).sum();

  int r = 0;
  if (const auto* rt = std::get_if<RankTruncation>(&truncation)) {
    if (rt->rank < 1) throw std::invalid_argument("compute_pod: rank must be at least 1");
    if (rt->rank > g.num_rank)
      throw std::invalid_argument("compute_pod: requested rank " + std::to_string(rt->rank) +
                                  " exceeds numerical rank " + std::to_string(g.num_rank));
    r = rt->rank;
  } else {
    const double e = std::get<EnergyTruncation>(truncation).fraction;
    if (e <= 0.0 || e > 1.0)
      throw std::invalid_argument("compute_pod: energy fraction must lie in (0, 1]");
    double acc = 0.0;
    for (r = 0; r < g.num_rank; ++r) {
      acc += g.eigenvalues[r];
      if (acc >= e * total_energy) {
        ++r;
        break;
      }
    }
    if (r == 0) r = g.num_rank;  // e.g. all energy below threshold by roundoff
  }

  PodBasis basis;
  basis.total_snapshots = snapshot_matrix.cols();
  basis.mean = mean;
  basis.singular_values.resize(r);
  basis.modes.resize(X.rows(), r);
  for (int i = 0; i < r; ++i) {
    const double sigma = std::sqrt(g.eigenvalues[i]);
    basis.singular_values[i] = sigma;
    if (g.gram_is_snapshot_side)
      basis.modes.col(i) = X * g.eigenvectors.col(i) / sigma;
    else
      basis.modes.col(i) = g.eigenvectors.col(i);
  }
  basis.energy_captured = g.eigenvalues.head(r).sum() / total_energy;

  // Sign canonicalization: largest-magnitude entry of each mode positive.
  for (int i = 0; i < r; ++i) {
    Eigen::Index imax = 0;
    basis.modes.col(i).cwiseAbs().maxCoeff(&imax);
    if (basis.modes(imax, i) < 0.0) {
      basis.modes.col(i) = -basis.modes.col(i);
    }
  }
  return basis;
}

Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& field) {
  if (field.size() != basis.modes.rows())
    throw std::invalid_argument("project: field length mismatch");
  if (basis.mean) return basis.modes.transpose() * (field - *basis.mean);
  return basis.modes.transpose() * field;
}

Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& coords) {
  if (coords.size() != basis.modes.cols())
    throw std::invalid_argument("reconstruct: coordinate length mismatch");
  if (basis.mean) return basis.modes * coords + *basis.mean;
  return basis.modes * coords;
}

}  // namespace romsuite
