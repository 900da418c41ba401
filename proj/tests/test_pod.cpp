#include <cmath>

#include <doctest.h>
#include <Eigen/SVD>

#include "romsuite/pod.hpp"

using namespace romsuite;

namespace {

std::uint64_t mix(std::uint64_t& s) {
  s += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::uint64_t s = seed;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = 2.0 * (static_cast<double>(mix(s) >> 11) * 0x1.0p-53) - 1.0;
  return m;
}

}  // namespace

TEST_CASE("rank-1 analytic SVD: duplicated column") {
  Eigen::VectorXd q(4);
  q << 2.0, 0.0, 0.0, 0.0;  // ||q|| = 2
  Eigen::MatrixXd X(4, 2);
  X.col(0) = q;
  X.col(1) = q;
  const PodBasis b = compute_pod(X, RankTruncation{1});
  REQUIRE(b.rank() == 1);
  CHECK(b.singular_values[0] == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-13));
  CHECK((b.modes.col(0) - q / 2.0).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(numerical_rank(X) == 1);
}

TEST_CASE("energy truncation arithmetic") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(5, 2);
  X(0, 0) = 3.0;  // orthogonal columns with norms 3 and 1
  X(1, 1) = 1.0;
  const PodBasis b = compute_pod(X, EnergyTruncation{0.95});
  CHECK(b.rank() == 2);  // 9/10 < 0.95 forces both
  const PodBasis b90 = compute_pod(X, EnergyTruncation{0.90});
  CHECK(b90.rank() == 1);
}

TEST_CASE("random matrix matches a dense SVD oracle") {
  const Eigen::MatrixXd X = random_matrix(8, 5, 314159);
  const PodBasis b = compute_pod(X, RankTruncation{5});
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU);
  REQUIRE(b.rank() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(b.singular_values[i] == doctest::Approx(svd.singularValues()[i]).epsilon(1e-10));
    const double direct = (b.modes.col(i) - svd.matrixU().col(i)).cwiseAbs().maxCoeff();
    const double flipped = (b.modes.col(i) + svd.matrixU().col(i)).cwiseAbs().maxCoeff();
    CHECK(std::min(direct, flipped) < 1e-10);
  }

  // Wide matrix exercises the other Gram side.
  const Eigen::MatrixXd W = random_matrix(6, 11, 2721);
  const PodBasis bw = compute_pod(W, RankTruncation{6});
  Eigen::JacobiSVD<Eigen::MatrixXd> svdw(W, Eigen::ComputeThinU);
  for (int i = 0; i < 6; ++i)
    CHECK(bw.singular_values[i] == doctest::Approx(svdw.singularValues()[i]).epsilon(1e-10));
}

TEST_CASE("projection and reconstruction") {
  const Eigen::MatrixXd X = random_matrix(12, 6, 99);
  const PodBasis b = compute_pod(X, RankTruncation{4});

  for (int j = 0; j < 4; ++j) {
    const Eigen::VectorXd e = project(b, b.modes.col(j));
    for (int i = 0; i < 4; ++i)
      CHECK(e[i] == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
  }

  // Field orthogonal to every mode projects to zero.
  Eigen::VectorXd field = random_matrix(12, 1, 7).col(0);
  field -= b.modes * (b.modes.transpose() * field);
  CHECK(project(b, field).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(reconstruct(b, Eigen::VectorXd::Zero(4)).cwiseAbs().maxCoeff() == 0.0);

  // project -> reconstruct -> project idempotence.
  const Eigen::VectorXd f = random_matrix(12, 1, 42).col(0);
  const Eigen::VectorXd a1 = project(b, f);
  const Eigen::VectorXd a2 = project(b, reconstruct(b, a1));
  CHECK((a1 - a2).cwiseAbs().maxCoeff() < 1e-12);

  // Dense oracle for both directions.
  CHECK((project(b, f) - Eigen::VectorXd(b.modes.transpose() * f)).cwiseAbs().maxCoeff() <
        1e-14);
  const Eigen::VectorXd coords = random_matrix(4, 1, 5).col(0);
  CHECK((reconstruct(b, coords) - Eigen::VectorXd(b.modes * coords)).cwiseAbs().maxCoeff() <
        1e-14);

  CHECK_THROWS_AS(project(b, Eigen::VectorXd::Zero(5)), std::invalid_argument);
  CHECK_THROWS_AS(reconstruct(b, Eigen::VectorXd::Zero(7)), std::invalid_argument);
}

TEST_CASE("orthonormality, energy identity and sign convention") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL}) {
    const Eigen::MatrixXd X = random_matrix(20, 9, seed);
    const int full_rank = numerical_rank(X);
    for (int r = 1; r <= full_rank; r += 3) {
      const PodBasis b = compute_pod(X, RankTruncation{r});
      const Eigen::MatrixXd gram = b.modes.transpose() * b.modes;
      CHECK((gram - Eigen::MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff() < 1e-10);

      // Eckart-Young: ||X - V V^T X||_F^2 = sum_{i>r} sigma_i^2.
      const PodBasis full = compute_pod(X, RankTruncation{full_rank});
      const double residual = (X - b.modes * (b.modes.transpose() * X)).squaredNorm();
      const double tail =
          full.singular_values.squaredNorm() - b.singular_values.squaredNorm();
      CHECK(residual ==
            doctest::Approx(tail).epsilon(1e-8).scale(full.singular_values.squaredNorm()));

      for (int i = 0; i < r; ++i) {
        Eigen::Index imax;
        b.modes.col(i).cwiseAbs().maxCoeff(&imax);
        CHECK(b.modes(imax, i) > 0.0);
      }
    }
  }
}

TEST_CASE("compute_pod error paths") {
  CHECK_THROWS_AS(compute_pod(Eigen::MatrixXd(), RankTruncation{1}), std::invalid_argument);
  Eigen::MatrixXd X(3, 2);
  X.col(0) << 1, 0, 0;
  X.col(1) << 2, 0, 0;  // rank 1
  CHECK_THROWS_AS(compute_pod(X, RankTruncation{2}), std::invalid_argument);
  CHECK_THROWS_AS(compute_pod(X, EnergyTruncation{0.0}), std::invalid_argument);
  CHECK_THROWS_AS(compute_pod(X, EnergyTruncation{1.5}), std::invalid_argument);
}

TEST_CASE("centering stores and reapplies the temporal mean") {
  const Eigen::MatrixXd X = random_matrix(10, 6, 77).array() + 3.0;
  const PodBasis b = compute_pod(X, RankTruncation{3}, /*center=*/true);
  REQUIRE(b.mean.has_value());
  const Eigen::VectorXd f = X.col(2);
  const Eigen::VectorXd back = reconstruct(b, project(b, f));
  // Reconstruction error orthogonal to the basis, but the mean must return.
  CHECK((b.modes.transpose() * (back - f)).cwiseAbs().maxCoeff() < 1e-10);
}
