#include <cmath>

#include <doctest.h>
#include <Eigen/Dense>

#include "romsuite/galerkin.hpp"

using namespace romsuite;

namespace {

std::uint64_t mix(std::uint64_t& s) {
  s += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double rnd(std::uint64_t& s) { return 2.0 * (static_cast<double>(mix(s) >> 11) * 0x1.0p-53) - 1.0; }

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::uint64_t s = seed;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rnd(s);
  return m;
}

PodBasis orthonormal_basis(int n, int r, std::uint64_t seed) {
  const Eigen::MatrixXd M = random_matrix(n, r, seed);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  PodBasis b;
  b.modes = Eigen::MatrixXd(qr.householderQ()).leftCols(r);
  b.singular_values = Eigen::VectorXd::Ones(r);
  return b;
}

}  // namespace

TEST_CASE("identity basis reproduces the raw stencils") {
  const Grid1D grid = Grid1D::uniform(32);
  PhysicalParams p;
  PodBasis identity;
  identity.modes = Eigen::MatrixXd::Identity(32, 32);
  identity.singular_values = Eigen::VectorXd::Ones(32);
  PodBasis zero_vel;
  zero_vel.modes = Eigen::MatrixXd::Zero(32, 1);
  zero_vel.singular_values = Eigen::VectorXd::Ones(1);

  const ReducedOperators ops = build_reduced_operators(identity, zero_vel, grid, p);
  const Eigen::MatrixXd expected = p.diffusivity * second_difference_matrix(grid);
  CHECK((ops.L_red - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(ops.A_red[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reduced operators match brute-force triple products") {
  const Grid1D grid = Grid1D::uniform(24);
  PhysicalParams p;
  const PodBasis VT = orthonormal_basis(24, 4, 11);
  const PodBasis Vu = orthonormal_basis(24, 3, 12);
  const ReducedOperators ops = build_reduced_operators(VT, Vu, grid, p);

  const Eigen::MatrixXd D1 = first_difference_matrix(grid);
  const Eigen::MatrixXd D2 = second_difference_matrix(grid);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) {
      double l = 0.0;
      for (int a = 0; a < 24; ++a)
        for (int b = 0; b < 24; ++b) l += VT.modes(a, j) * D2(a, b) * VT.modes(b, i);
      CHECK(ops.L_red(j, i) == doctest::Approx(p.diffusivity * l).epsilon(1e-12));
      for (int k = 0; k < 3; ++k) {
        double adv = 0.0;
        for (int a = 0; a < 24; ++a)
          for (int b = 0; b < 24; ++b)
            adv += VT.modes(a, j) * Vu.modes(a, k) * D1(a, b) * VT.modes(b, i);
        CHECK(ops.A_red[static_cast<std::size_t>(k)](j, i) ==
              doctest::Approx(adv).epsilon(1e-12).scale(1.0));
      }
    }
}

TEST_CASE("orthogonal change of basis transforms L_red correctly") {
  const Grid1D grid = Grid1D::uniform(30);
  PhysicalParams p;
  const PodBasis VT = orthonormal_basis(30, 5, 21);
  const PodBasis Vu = orthonormal_basis(30, 2, 22);
  const Eigen::MatrixXd Q =
      Eigen::HouseholderQR<Eigen::MatrixXd>(random_matrix(5, 5, 23)).householderQ();

  PodBasis rotated = VT;
  rotated.modes = VT.modes * Q;
  const ReducedOperators ops = build_reduced_operators(VT, Vu, grid, p);
  const ReducedOperators rops = build_reduced_operators(rotated, Vu, grid, p);
  const Eigen::MatrixXd expected = Q.transpose() * ops.L_red * Q;
  CHECK((rops.L_red - expected).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("eval_reduced_rhs basics and bilinearity") {
  const Grid1D grid = Grid1D::uniform(24);
  PhysicalParams p;
  const PodBasis VT = orthonormal_basis(24, 4, 31);
  const PodBasis Vu = orthonormal_basis(24, 3, 32);
  const ReducedOperators ops = build_reduced_operators(VT, Vu, grid, p);

  CHECK(eval_reduced_rhs(Eigen::VectorXd::Zero(4), random_matrix(3, 1, 1).col(0), ops)
            .cwiseAbs()
            .maxCoeff() == 0.0);

  const Eigen::VectorXd a = random_matrix(4, 1, 2).col(0);
  CHECK((eval_reduced_rhs(a, Eigen::VectorXd::Zero(3), ops) - ops.L_red * a)
            .cwiseAbs()
            .maxCoeff() < 1e-15);

  // Bilinearity by superposition.
  const Eigen::VectorXd a1 = random_matrix(4, 1, 3).col(0), a2 = random_matrix(4, 1, 4).col(0);
  const Eigen::VectorXd u1 = random_matrix(3, 1, 5).col(0);
  const Eigen::VectorXd lin =
      eval_reduced_rhs(a1 + 2.0 * a2, u1, ops) -
      (eval_reduced_rhs(a1, u1, ops) + 2.0 * eval_reduced_rhs(a2, u1, ops));
  CHECK(lin.cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(eval_reduced_rhs(Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(3), ops),
                  std::invalid_argument);
}

TEST_CASE("Galerkin consistency through the full space") {
  const Grid1D grid = Grid1D::uniform(40);
  PhysicalParams p;
  const Eigen::MatrixXd D1 = first_difference_matrix(grid);
  const Eigen::MatrixXd D2 = second_difference_matrix(grid);

  for (int r : {1, 3, 6}) {
    const PodBasis VT = orthonormal_basis(40, r, 100 + static_cast<std::uint64_t>(r));
    const PodBasis Vu = orthonormal_basis(40, 3, 200 + static_cast<std::uint64_t>(r));
    const ReducedOperators ops = build_reduced_operators(VT, Vu, grid, p);
    std::uint64_t s = 7;
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd alpha(r), alpha_u(3);
      for (int i = 0; i < r; ++i) alpha[i] = rnd(s);
      for (int i = 0; i < 3; ++i) alpha_u[i] = rnd(s);
      const Eigen::VectorXd T = VT.modes * alpha;
      const Eigen::VectorXd u = Vu.modes * alpha_u;
      const Eigen::VectorXd full = p.diffusivity * (D2 * T) - u.cwiseProduct(D1 * T);
      const Eigen::VectorXd expected = VT.modes.transpose() * full;
      CHECK((eval_reduced_rhs(alpha, alpha_u, ops) - expected).cwiseAbs().maxCoeff() < 1e-11);
    }
  }
}

TEST_CASE("ridge regression recovers an exact affine relation") {
  std::uint64_t s = 55;
  const Eigen::MatrixXd W_true = random_matrix(3, 5, 56);
  const Eigen::VectorXd b_true = random_matrix(3, 1, 57).col(0);
  std::vector<Eigen::VectorXd> feats, targets;
  std::vector<double> Ss;
  for (int i = 0; i < 30; ++i) {
    Eigen::VectorXd a(4);
    for (int j = 0; j < 4; ++j) a[j] = rnd(s);
    const double S = rnd(s);
    Eigen::VectorXd x(5);
    x << a, S;
    feats.push_back(a);
    Ss.push_back(S);
    targets.push_back(W_true * x + b_true);
  }
  const VelocityMap map = fit_velocity_map(feats, Ss, targets, 0.0);
  CHECK((map.W - W_true).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((map.b - b_true).cwiseAbs().maxCoeff() < 1e-10);

  for (std::size_t i = 0; i < feats.size(); ++i)
    CHECK((predict_velocity(map, feats[i], Ss[i]) - targets[i]).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("huge ridge penalty shrinks W to zero, intercept to the target mean") {
  std::uint64_t s = 66;
  std::vector<Eigen::VectorXd> feats, targets;
  std::vector<double> Ss;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  for (int i = 0; i < 40; ++i) {
    Eigen::VectorXd a(3);
    for (int j = 0; j < 3; ++j) a[j] = rnd(s);
    feats.push_back(a);
    Ss.push_back(rnd(s));
    Eigen::VectorXd y(2);
    y << rnd(s), rnd(s);
    targets.push_back(y);
    mean += y;
  }
  mean /= 40.0;
  const VelocityMap map = fit_velocity_map(feats, Ss, targets, 1e12);
  CHECK(map.W.cwiseAbs().maxCoeff() < 1e-6);
  CHECK((map.b - mean).cwiseAbs().maxCoeff() < 1e-6);

  // W = 0 map returns b for any input.
  VelocityMap zero;
  zero.W = Eigen::MatrixXd::Zero(2, 4);
  zero.b = mean;
  CHECK((predict_velocity(zero, feats[0], Ss[0]) - mean).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ridge fit matches an independent normal-equation oracle") {
  std::uint64_t s = 77;
  std::vector<Eigen::VectorXd> feats, targets;
  std::vector<double> Ss;
  const int n = 12, p = 3;
  Eigen::MatrixXd Phi(n, p + 2);
  Eigen::MatrixXd Y(n, 2);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd a(p);
    for (int j = 0; j < p; ++j) a[j] = rnd(s);
    const double S = rnd(s);
    Eigen::VectorXd y(2);
    y << rnd(s), rnd(s);
    feats.push_back(a);
    Ss.push_back(S);
    targets.push_back(y);
    Phi.row(i).head(p) = a.transpose();
    Phi(i, p) = S;
    Phi(i, p + 1) = 1.0;
    Y.row(i) = y.transpose();
  }
  const double lambda = 0.37;
  Eigen::MatrixXd normal = Phi.transpose() * Phi;
  normal.topLeftCorner(p + 1, p + 1).diagonal().array() += lambda;
  const Eigen::MatrixXd coeffs = normal.ldlt().solve(Phi.transpose() * Y);  // oracle solver

  const VelocityMap map = fit_velocity_map(feats, Ss, targets, lambda);
  CHECK((map.W - coeffs.topRows(p + 1).transpose()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((map.b - coeffs.row(p + 1).transpose()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("training residual is monotone in the ridge penalty") {
  std::uint64_t s = 88;
  std::vector<Eigen::VectorXd> feats, targets;
  std::vector<double> Ss;
  for (int i = 0; i < 25; ++i) {
    Eigen::VectorXd a(3);
    for (int j = 0; j < 3; ++j) a[j] = rnd(s);
    feats.push_back(a);
    Ss.push_back(rnd(s));
    Eigen::VectorXd y(2);
    y << rnd(s), rnd(s);
    targets.push_back(y);
  }
  double prev_rss = -1.0;
  for (double lambda : {1e2, 1e0, 1e-2, 1e-4, 1e-6, 0.0}) {
    const VelocityMap map = fit_velocity_map(feats, Ss, targets, lambda);
    double rss = 0.0;
    for (std::size_t i = 0; i < feats.size(); ++i)
      rss += (predict_velocity(map, feats[i], Ss[i]) - targets[i]).squaredNorm();
    if (prev_rss >= 0.0) CHECK(rss <= prev_rss + 1e-12);
    prev_rss = rss;
  }
}

TEST_CASE("rank-deficient features without penalty fail loudly") {
  std::vector<Eigen::VectorXd> feats, targets;
  std::vector<double> Ss;
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd a(3);
    a << 1.0, 1.0, static_cast<double>(i);  // first two features identical
    feats.push_back(a);
    Ss.push_back(0.5);
    targets.push_back(Eigen::VectorXd::Constant(1, static_cast<double>(i)));
  }
  CHECK_THROWS_AS(fit_velocity_map(feats, Ss, targets, 0.0), std::runtime_error);
  CHECK_NOTHROW(fit_velocity_map(feats, Ss, targets, 1e-6));
  CHECK_THROWS_AS(fit_velocity_map({feats[0]}, {0.0}, {targets[0]}, 0.0),
                  std::invalid_argument);
}
