#include <cmath>

#include <doctest.h>
#include <Eigen/Dense>

#include "romsuite/training.hpp"

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

Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed) {
  std::uint64_t s = seed;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rnd(s);
  return v;
}

PodBasis orthonormal_basis(int n_c, int r, std::uint64_t seed) {
  const Eigen::MatrixXd raw = random_matrix(n_c, r, seed);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  PodBasis basis;
  basis.modes = qr.householderQ() * Eigen::MatrixXd::Identity(n_c, r);
  basis.singular_values = Eigen::VectorXd::LinSpaced(r, 2.0, 1.0);
  basis.total_snapshots = n_c;
  return basis;
}

std::vector<SnapshotSet> synthetic_snapshots(int count, int n_c, int n_s, std::uint64_t seed) {
  std::vector<SnapshotSet> sets;
  for (int k = 0; k < count; ++k) {
    SnapshotSet set;
    set.times = Eigen::VectorXd::LinSpaced(n_s, 0.0, 0.25 * (n_s - 1));
    set.temps = random_matrix(n_s, n_c, seed + 100 * static_cast<std::uint64_t>(k));
    set.vels = set.temps;
    set.controls = Eigen::VectorXd::Ones(n_s);
    set.coeffs.c0 = 1.0 + 0.01 * k;
    sets.push_back(std::move(set));
  }
  return sets;
}

// Shared small problem: n_T = 2, n_u = 1, smooth two-mode targets.
struct TrainFixture {
  ReducedOperators ops;
  VelocityMap vmap;
  RomDataset dataset;
  double rom_dt = 0.05;

  explicit TrainFixture(int n_traj = 3, int n_test = 1, long n_rows = 9) {
    ops.n_T = 2;
    ops.n_u = 1;
    ops.L_red = 0.1 * random_matrix(2, 2, 1);
    ops.A_red = {0.1 * random_matrix(2, 2, 2)};
    vmap.W = 0.2 * random_matrix(1, 3, 3);
    vmap.b = 0.2 * random_vector(1, 4);

    dataset.n_T = 2;
    dataset.snap_dt = 0.25;
    for (int k = 0; k < n_traj; ++k) {
      TrajectoryRecord rec;
      rec.coeffs.c0 = 0.9 + 0.05 * k;
      rec.coeffs.c[0] = 0.1;
      rec.times = Eigen::VectorXd::LinSpaced(n_rows, 0.0, 0.25 * (n_rows - 1));
      rec.targets.resize(n_rows, 2);
      for (long i = 0; i < n_rows; ++i) {
        const double t = rec.times[i];
        rec.targets(i, 0) = 0.5 * std::sin(0.7 * t + k);
        rec.targets(i, 1) = 0.3 * std::cos(0.4 * t) + 0.05 * k;
      }
      dataset.trajectories.push_back(std::move(rec));
    }
    for (int k = 0; k < n_traj - n_test; ++k) dataset.train_indices.push_back(k);
    for (int k = n_traj - n_test; k < n_traj; ++k) dataset.test_indices.push_back(k);
  }
};

}  // namespace

TEST_CASE("build_dataset splits whole trajectories") {
  const PodBasis basis = orthonormal_basis(10, 3, 7);

  SUBCASE("20 trajectories at 0.8 give 16/4") {
    const auto sets = synthetic_snapshots(20, 10, 5, 11);
    const RomDataset ds = build_dataset(sets, basis, 0.8, 42);
    CHECK(ds.train_indices.size() == 16);
    CHECK(ds.test_indices.size() == 4);
    CHECK(ds.n_T == 3);
    CHECK(ds.snap_dt == doctest::Approx(0.25));

    // Every trajectory appears exactly once across the two sides.
    std::vector<int> seen(20, 0);
    for (int i : ds.train_indices) seen[static_cast<std::size_t>(i)] += 1;
    for (int i : ds.test_indices) seen[static_cast<std::size_t>(i)] += 1;
    for (int c : seen) CHECK(c == 1);

    // Targets are the basis projection of the temperature rows.
    const Eigen::MatrixXd expect = sets[3].temps * basis.modes;
    CHECK((ds.trajectories[3].targets - expect).cwiseAbs().maxCoeff() == 0.0);

    // Same seed reproduces the split; a different seed changes it.
    const RomDataset again = build_dataset(sets, basis, 0.8, 42);
    CHECK(again.train_indices == ds.train_indices);
    const RomDataset other = build_dataset(sets, basis, 0.8, 43);
    CHECK(other.train_indices != ds.train_indices);
  }

  SUBCASE("two trajectories split 1/1") {
    const auto sets = synthetic_snapshots(2, 10, 5, 13);
    const RomDataset ds = build_dataset(sets, basis, 0.5, 0);
    CHECK(ds.train_indices.size() == 1);
    CHECK(ds.test_indices.size() == 1);
  }

  SUBCASE("error paths") {
    const auto sets = synthetic_snapshots(4, 10, 5, 17);
    CHECK_THROWS_AS(build_dataset({sets[0]}, basis, 0.8, 0), std::invalid_argument);
    CHECK_THROWS_AS(build_dataset(sets, basis, 0.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(build_dataset(sets, basis, 1.0, 0), std::invalid_argument);
    // split so high the test side would be empty
    CHECK_THROWS_AS(build_dataset(sets, basis, 0.99, 0), std::invalid_argument);
  }
}

TEST_CASE("trajectory_loss on hand-computed cases") {
  Eigen::MatrixXd pred(1, 2), target(1, 2);
  pred << 3.0, 4.0;
  target << 0.0, 0.0;
  CHECK(trajectory_loss(pred, target) == 25.0);

  Eigen::MatrixXd p3(3, 1), t3(3, 1);
  p3 << 1.0, 2.0, -2.0;
  t3 << 0.0, 0.0, 0.0;
  CHECK(trajectory_loss(p3, t3) == 3.0);  // (1 + 4 + 4) / 3

  CHECK_THROWS_AS(trajectory_loss(pred, t3), std::invalid_argument);
}

TEST_CASE("adam_step behavior") {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;

  SUBCASE("zero gradient leaves parameters in place") {
    Eigen::VectorXd params = random_vector(5, 21);
    const Eigen::VectorXd before = params;
    AdamState st = AdamState::zeros(5);
    for (int i = 0; i < 3; ++i) adam_step(params, Eigen::VectorXd::Zero(5), st, cfg);
    CHECK((params - before).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("first step moves by about -lr * sign(g)") {
    Eigen::VectorXd params = Eigen::VectorXd::Zero(1);
    AdamState st = AdamState::zeros(1);
    adam_step(params, Eigen::VectorXd::Ones(1), st, cfg);
    CHECK(params[0] == doctest::Approx(-0.1).epsilon(1e-6));
  }

  SUBCASE("ten steps on a quadratic match an independent oracle") {
    // Oracle keeps explicit bias-corrected first/second moments.
    Eigen::VectorXd params = Eigen::VectorXd::Constant(2, 1.5);
    Eigen::VectorXd oracle = params;
    AdamState st = AdamState::zeros(2);
    double m0 = 0.0, m1 = 0.0, v0 = 0.0, v1 = 0.0;
    for (int k = 1; k <= 10; ++k) {
      const Eigen::VectorXd grad = params;  // f = |x|^2 / 2
      adam_step(params, grad, st, cfg);

      const Eigen::Vector2d g(oracle[0], oracle[1]);
      m0 = 0.9 * m0 + 0.1 * g[0];
      m1 = 0.9 * m1 + 0.1 * g[1];
      v0 = 0.999 * v0 + 0.001 * g[0] * g[0];
      v1 = 0.999 * v1 + 0.001 * g[1] * g[1];
      const double mc = 1.0 - std::pow(0.9, k), vc = 1.0 - std::pow(0.999, k);
      oracle[0] -= 0.1 * (m0 / mc) / (std::sqrt(v0 / vc) + 1e-8);
      oracle[1] -= 0.1 * (m1 / mc) / (std::sqrt(v1 / vc) + 1e-8);
    }
    CHECK((params - oracle).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("nrmse hand cases and scale invariance") {
  Eigen::MatrixXd target(2, 1), pred(2, 1);
  target << 0.0, 2.0;
  pred << 1.0, 3.0;
  CHECK(nrmse(pred, target) == doctest::Approx(1.0).epsilon(1e-14));

  const Eigen::MatrixXd t = random_matrix(7, 3, 31);
  const Eigen::MatrixXd p = random_matrix(7, 3, 32);
  CHECK(nrmse(100.0 * p, 100.0 * t) == doctest::Approx(nrmse(p, t)).epsilon(1e-13));

  CHECK_THROWS_AS(nrmse(p, Eigen::MatrixXd::Ones(7, 3)), std::invalid_argument);
}

TEST_CASE("zero-weight closure rolls out exactly like the plain ROM") {
  TrainFixture fx;
  ClosureParams closure = make_closure(2, 1, {8}, 2, 5);
  for (auto& W : closure.mlp.weights) W.setZero();
  for (auto& b : closure.mlp.biases) b.setZero();

  for (const auto& traj : fx.dataset.trajectories) {
    const Eigen::MatrixXd corrected =
        rollout_corrected(closure, fx.ops, fx.vmap, traj, fx.rom_dt);
    const Eigen::MatrixXd plain = rollout_uncorrected(fx.ops, fx.vmap, traj, fx.rom_dt);
    CHECK((corrected - plain).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("uncorrected evaluation never reads closure parameters") {
  TrainFixture fx;
  const long before = CoupledSystem::parameter_read_count();
  const EvalReport report = evaluate_model(fx.dataset, fx.ops, fx.vmap, nullptr, fx.rom_dt);
  CHECK(CoupledSystem::parameter_read_count() == before);
  REQUIRE(report.trajectories.size() == 1);
  CHECK(report.trajectories[0].nrmse_corrected == report.trajectories[0].nrmse_uncorrected);
}

TEST_CASE("train_closure with zero epochs returns the initial parameters") {
  TrainFixture fx;
  const ClosureParams init = make_closure(2, 1, {4}, 2, 9);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 2;
  const TrainResult result =
      train_closure(fx.dataset, fx.ops, fx.vmap, init, cfg, fx.rom_dt, CheckpointPolicy{8});
  CHECK(result.history.empty());
  CHECK((result.params.flatten() - init.flatten()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training is a fixed point when targets come from the model itself") {
  TrainFixture fx;
  ClosureParams truth = make_closure(2, 1, {6}, 2, 77);
  // Replace every trajectory's targets with the model's own rollout.
  for (auto& traj : fx.dataset.trajectories)
    traj.targets = rollout_corrected(truth, fx.ops, fx.vmap, traj, fx.rom_dt);

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.learning_rate = 1e-3;
  const TrainResult result =
      train_closure(fx.dataset, fx.ops, fx.vmap, truth, cfg, fx.rom_dt, CheckpointPolicy{8});
  REQUIRE(result.history.size() == 2);
  CHECK(result.history[0].train_loss < 1e-20);
  CHECK(result.history[0].val_loss < 1e-20);
  // Zero loss means zero gradient, so Adam must not move the parameters.
  CHECK((result.params.flatten() - truth.flatten()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("training reduces the loss on a learnable problem") {
  TrainFixture fx;
  ClosureParams init = make_closure(2, 1, {8}, 2, 12);
  fit_normalizer(fx.dataset, fx.ops, fx.vmap, fx.rom_dt, init);

  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 2;
  cfg.learning_rate = 1e-2;
  cfg.seed = 3;
  cfg.threads = 1;
  const TrainResult result =
      train_closure(fx.dataset, fx.ops, fx.vmap, init, cfg, fx.rom_dt, CheckpointPolicy{8});
  REQUIRE(result.history.size() == 150);
  double min_train = result.history.front().train_loss;
  for (const auto& rec : result.history) min_train = std::min(min_train, rec.train_loss);
  CHECK(min_train < 0.5 * result.history.front().train_loss);

  // Best-validation selection: the stored parameters achieve the minimum
  // recorded validation loss.
  double best = result.history.front().val_loss;
  for (const auto& rec : result.history) best = std::min(best, rec.val_loss);
  double check = 0.0;
  for (int ti : fx.dataset.test_indices) {
    const auto& traj = fx.dataset.trajectories[static_cast<std::size_t>(ti)];
    check += trajectory_loss(rollout_corrected(result.params, fx.ops, fx.vmap, traj, fx.rom_dt),
                             traj.targets);
  }
  check /= static_cast<double>(fx.dataset.test_indices.size());
  CHECK(check == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("training is bit-reproducible and thread-count independent") {
  TrainFixture fx(4, 1);
  ClosureParams init = make_closure(2, 1, {6}, 2, 8);
  fit_normalizer(fx.dataset, fx.ops, fx.vmap, fx.rom_dt, init);

  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 3;
  cfg.seed = 99;
  cfg.rollout_length = 4;  // several segments per trajectory, so threads matter

  cfg.threads = 1;
  const TrainResult a =
      train_closure(fx.dataset, fx.ops, fx.vmap, init, cfg, fx.rom_dt, CheckpointPolicy{8});
  cfg.threads = 4;
  const TrainResult b =
      train_closure(fx.dataset, fx.ops, fx.vmap, init, cfg, fx.rom_dt, CheckpointPolicy{8});

  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
  CHECK((a.params.flatten() - b.params.flatten()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit_normalizer freezes sane statistics") {
  TrainFixture fx;
  ClosureParams closure = make_closure(2, 1, {4}, 2, 15);
  fit_normalizer(fx.dataset, fx.ops, fx.vmap, fx.rom_dt, closure);

  const auto& nm = closure.normalizer;
  CHECK(nm.in_shift.size() == closure.mlp.input_dim());
  CHECK(nm.out_shift.size() == 2);
  CHECK((nm.in_scale.array() > 0.0).all());
  CHECK((nm.out_scale.array() > 0.0).all());
  CHECK(nm.in_shift.allFinite());
  CHECK(nm.out_shift.allFinite());

  // The signal input channel (index n_T + n_u) averages S over the snapshots,
  // which for these coefficients stays near c0.
  const int s_channel = 3;
  CHECK(nm.in_shift[s_channel] == doctest::Approx(0.95).epsilon(0.2));
}

TEST_CASE("rollout shapes and initial rows") {
  TrainFixture fx;
  const auto& traj = fx.dataset.trajectories[0];
  const Eigen::MatrixXd plain = rollout_uncorrected(fx.ops, fx.vmap, traj, fx.rom_dt);
  CHECK(plain.rows() == traj.times.size());
  CHECK(plain.cols() == 2);
  CHECK((plain.row(0) - traj.targets.row(0)).cwiseAbs().maxCoeff() == 0.0);

  const ClosureParams closure = make_closure(2, 1, {4}, 2, 33);
  const Eigen::MatrixXd corrected = rollout_corrected(closure, fx.ops, fx.vmap, traj, fx.rom_dt);
  CHECK(corrected.rows() == traj.times.size());
  CHECK((corrected.row(0) - traj.targets.row(0)).cwiseAbs().maxCoeff() == 0.0);

  // rom_dt must divide the snapshot spacing.
  CHECK_THROWS_AS(rollout_uncorrected(fx.ops, fx.vmap, traj, 0.06), std::invalid_argument);
}
