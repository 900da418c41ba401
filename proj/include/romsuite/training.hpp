#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "romsuite/closure.hpp"
#include "romsuite/fom.hpp"
#include "romsuite/galerkin.hpp"
#include "romsuite/odeint.hpp"
#include "romsuite/pod.hpp"

namespace romsuite {

/// One trajectory's worth of reduced training data: snapshot times and the
/// projected full-order coordinates alpha_T* at those times.
struct TrajectoryRecord {
  ControlCoeffs coeffs;
  Eigen::VectorXd times;    // n_t + 1 snapshot instants
  Eigen::MatrixXd targets;  // (n_t + 1) x n_T, rows are alpha_T*(t_i)
};

struct RomDataset {
  std::vector<TrajectoryRecord> trajectories;
  std::vector<int> train_indices;
  std::vector<int> test_indices;
  int n_T = 0;
  double snap_dt = 0.0;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long epochs = 500;
  long batch_size = 4;  // in trajectories
  long rollout_length = 0;  // snapshots per rollout segment; 0 = full trajectory
  bool curriculum = false;  // start at 16 snapshots, double every 100 epochs
  long curriculum_start = 16;
  long curriculum_double_every = 100;
  double clip_norm = 100.0;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency
};

struct AdamState {
  Eigen::VectorXd m, v;
  long step = 0;

  static AdamState zeros(Eigen::Index n);
};

struct EpochRecord {
  long epoch;
  double train_loss;
  double val_loss;
  double wall_seconds;
};

/// Projects FOM snapshots onto the temperature basis and splits whole
/// trajectories 80/20 (or as configured) with a seeded shuffle.
RomDataset build_dataset(const std::vector<SnapshotSet>& snapshot_sets, const PodBasis& basis_T,
                         double split_fraction, std::uint64_t seed);

/// Mean squared Euclidean distance over the sampled instants.
double trajectory_loss(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& target);

/// Standard Adam with bias correction, in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               const TrainConfig& config);

/// RMSE over all entries divided by the population standard deviation of the
/// target entries.
double nrmse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& target);

/// Freezes input/output normalization statistics from the training split:
/// input channels from (alpha_T*, alpha_u, S, y) along the target
/// trajectories, output channels from the finite-difference residual
/// d(alpha_T*)/dt - R that the network must represent.
void fit_normalizer(const RomDataset& dataset, const ReducedOperators& ops,
                    const VelocityMap& vmap, double rom_dt, ClosureParams& closure);

/// Rollout of the coupled closure model over a trajectory's snapshot grid,
/// starting from the projected true initial state. Returns the alpha_T rows
/// at snapshot times.
Eigen::MatrixXd rollout_corrected(const ClosureParams& closure, const ReducedOperators& ops,
                                  const VelocityMap& vmap, const TrajectoryRecord& traj,
                                  double rom_dt);

/// Same rollout without closure or memory (the reducible dynamics alone).
Eigen::MatrixXd rollout_uncorrected(const ReducedOperators& ops, const VelocityMap& vmap,
                                    const TrajectoryRecord& traj, double rom_dt);

struct TrainResult {
  ClosureParams params;  // best end-of-epoch validation loss
  std::vector<EpochRecord> history;
};

TrainResult train_closure(const RomDataset& dataset, const ReducedOperators& ops,
                          const VelocityMap& vmap, const ClosureParams& init,
                          const TrainConfig& config, double rom_dt,
                          const CheckpointPolicy& policy);

struct TrajectoryEval {
  int trajectory_index;
  double nrmse_corrected;
  double nrmse_uncorrected;
  Eigen::MatrixXd corrected;    // alpha_T rollout
  Eigen::MatrixXd uncorrected;  // alpha_T rollout
};

struct EvalReport {
  std::vector<TrajectoryEval> trajectories;
  double mean_nrmse_corrected = 0.0;
  double mean_nrmse_uncorrected = 0.0;
};

/// Rolls out the test split with and without the closure. closure == nullptr
/// evaluates the uncorrected model only (corrected columns mirror it).
EvalReport evaluate_model(const RomDataset& dataset, const ReducedOperators& ops,
                          const VelocityMap& vmap, const ClosureParams* closure, double rom_dt);

}  // namespace romsuite
