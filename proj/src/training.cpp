#include "romsuite/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

namespace romsuite {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void parallel_for(long n, int threads, const std::function<void(long)>& body) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<long>(threads, n) > 0 ? std::min<int>(threads, static_cast<int>(n)) : 1);
  if (threads == 1 || n <= 1) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<long> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&]() {
      for (long i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  for (auto& th : pool) th.join();
}

// Snapshot spacing and the RK4 substep grid matching it.
struct RolloutGrid {
  double dt;          // actual integrator step (exact divisor of snap_dt)
  long stride;        // substeps per snapshot interval
};

RolloutGrid make_rollout_grid(double snap_dt, double rom_dt) {
  if (snap_dt <= 0.0 || rom_dt <= 0.0)
    throw std::invalid_argument("rollout: time steps must be positive");
  const long stride = std::lround(snap_dt / rom_dt);
  if (stride < 1 || std::abs(stride * rom_dt - snap_dt) > 1e-9 * snap_dt)
    throw std::invalid_argument("rollout: rom_dt must divide the snapshot spacing");
  return {snap_dt / static_cast<double>(stride), stride};
}

TimeGrid segment_time_grid(const TrajectoryRecord& traj, long first_row, long n_rows,
                           double rom_dt) {
  const double snap_dt = traj.times[1] - traj.times[0];
  const RolloutGrid rg = make_rollout_grid(snap_dt, rom_dt);
  TimeGrid grid;
  grid.t0 = traj.times[first_row];
  grid.dt = rg.dt;
  grid.sample_stride = rg.stride;
  grid.n_steps = (n_rows - 1) * rg.stride;
  return grid;
}

Eigen::MatrixXd alpha_rows(const Eigen::MatrixXd& sampled_states, int n_T) {
  return sampled_states.leftCols(n_T);
}

}  // namespace

AdamState AdamState::zeros(Eigen::Index n) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  s.step = 0;
  return s;
}

RomDataset build_dataset(const std::vector<SnapshotSet>& snapshot_sets, const PodBasis& basis_T,
                         double split_fraction, std::uint64_t seed) {
  if (snapshot_sets.size() < 2)
    throw std::invalid_argument("build_dataset: need at least 2 trajectories");
  if (split_fraction <= 0.0 || split_fraction >= 1.0)
    throw std::invalid_argument("build_dataset: split fraction must lie in (0, 1)");

  RomDataset ds;
  ds.n_T = basis_T.rank();
  for (const auto& set : snapshot_sets) {
    TrajectoryRecord rec;
    rec.coeffs = set.coeffs;
    rec.times = set.times;
    rec.targets = set.temps * basis_T.modes;  // rows are V_T^T T(t_i)
    ds.trajectories.push_back(std::move(rec));
  }
  const auto& t = ds.trajectories.front().times;
  if (t.size() >= 2) ds.snap_dt = t[1] - t[0];

  // Seeded Fisher-Yates over trajectory order; leading ceil(split*N) train.
  const int n = static_cast<int>(ds.trajectories.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t state = seed ^ 0x8d1f5c2b9ULL;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(splitmix64(state) % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  const int n_train = static_cast<int>(std::ceil(split_fraction * n));
  if (n_train < 1 || n_train >= n)
    throw std::invalid_argument("build_dataset: split leaves an empty train or test side");
  ds.train_indices.assign(order.begin(), order.begin() + n_train);
  ds.test_indices.assign(order.begin() + n_train, order.end());
  return ds;
}

double trajectory_loss(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols())
    throw std::invalid_argument("trajectory_loss: shape mismatch");
  return (predicted - target).squaredNorm() / static_cast<double>(predicted.rows());
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               const TrainConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: length mismatch");
  state.step += 1;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grads.cwiseProduct(grads);
  const double mc = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double vc = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  params.array() -= config.learning_rate * (state.m.array() / mc) /
                    ((state.v.array() / vc).sqrt() + config.epsilon);
}

double nrmse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols())
    throw std::invalid_argument("nrmse: shape mismatch");
  const double n = static_cast<double>(target.size());
  const double rmse = std::sqrt((predicted - target).squaredNorm() / n);
  const double mean = target.mean();
  const double var = (target.array() - mean).square().sum() / n;
  if (var <= 0.0) throw std::invalid_argument("nrmse: zero-variance target");
  return rmse / std::sqrt(var);
}

void fit_normalizer(const RomDataset& dataset, const ReducedOperators& ops,
                    const VelocityMap& vmap, double rom_dt, ClosureParams& closure) {
  const int n_T = ops.n_T;
  const int m = closure.memory.dim();
  const int d = closure.memory.input_dim;
  const int in_dim = closure.mlp.input_dim();

  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> residuals;

  for (int ti : dataset.train_indices) {
    const TrajectoryRecord& traj = dataset.trajectories[static_cast<std::size_t>(ti)];
    const long n_rows = traj.times.size();
    if (n_rows < 2) continue;
    const double snap_dt = traj.times[1] - traj.times[0];
    const RolloutGrid rg = make_rollout_grid(snap_dt, rom_dt);
    const SignalFn signal = make_signal(traj.coeffs);

    // alpha_T*(t) by linear interpolation between snapshots.
    const auto alpha_at = [&](double t) -> Eigen::VectorXd {
      const double s = (t - traj.times[0]) / snap_dt;
      const long i = std::clamp<long>(static_cast<long>(std::floor(s)), 0, n_rows - 2);
      const double w = std::clamp(s - static_cast<double>(i), 0.0, 1.0);
      return (1.0 - w) * traj.targets.row(i).transpose() +
             w * traj.targets.row(i + 1).transpose();
    };
    const auto x_at = [&](double t) {
      Eigen::VectorXd x(d);
      x << alpha_at(t), signal(t);
      return x;
    };

    Eigen::VectorXd y = init_memory(x_at(traj.times[0]), closure.memory);
    for (long i = 0; i < n_rows; ++i) {
      const double t_i = traj.times[i];
      const Eigen::VectorXd alpha = traj.targets.row(i).transpose();
      const double S = signal(t_i);
      const Eigen::VectorXd alpha_u = predict_velocity(vmap, alpha, S);

      Eigen::VectorXd in(in_dim);
      in << alpha, alpha_u, S, y;
      inputs.push_back(std::move(in));
      if (i > 0 && i + 1 < n_rows) {
        const Eigen::VectorXd dalpha =
            (traj.targets.row(i + 1) - traj.targets.row(i - 1)).transpose() / (2.0 * snap_dt);
        residuals.push_back(dalpha - eval_reduced_rhs(alpha, alpha_u, ops));
      }

      // Advance the memory to the next snapshot.
      if (i + 1 < n_rows) {
        for (long s = 0; s < rg.stride; ++s) {
          const double t = t_i + s * rg.dt;
          const auto f = [&](double tt, const Eigen::VectorXd& yy) {
            return memory_rhs(yy, x_at(tt), closure.memory);
          };
          const Eigen::VectorXd k1 = f(t, y);
          const Eigen::VectorXd k2 = f(t + 0.5 * rg.dt, y + 0.5 * rg.dt * k1);
          const Eigen::VectorXd k3 = f(t + 0.5 * rg.dt, y + 0.5 * rg.dt * k2);
          const Eigen::VectorXd k4 = f(t + rg.dt, y + rg.dt * k3);
          y += (rg.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
      }
    }
  }
  if (inputs.empty() || residuals.empty())
    throw std::invalid_argument("fit_normalizer: not enough training data");

  const auto stats = [](const std::vector<Eigen::VectorXd>& rows, Eigen::VectorXd& mean,
                        Eigen::VectorXd& stdev) {
    const double n = static_cast<double>(rows.size());
    mean = Eigen::VectorXd::Zero(rows.front().size());
    for (const auto& r : rows) mean += r;
    mean /= n;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(mean.size());
    for (const auto& r : rows) var += (r - mean).cwiseAbs2();
    stdev = (var / n).cwiseSqrt().cwiseMax(1e-8);
  };
  stats(inputs, closure.normalizer.in_shift, closure.normalizer.in_scale);
  stats(residuals, closure.normalizer.out_shift, closure.normalizer.out_scale);
  (void)n_T;
  (void)m;
}

Eigen::MatrixXd rollout_corrected(const ClosureParams& closure, const ReducedOperators& ops,
                                  const VelocityMap& vmap, const TrajectoryRecord& traj,
                                  double rom_dt) {
  const CoupledSystem system(closure, ops, vmap, make_signal(traj.coeffs));
  const TimeGrid grid = segment_time_grid(traj, 0, traj.times.size(), rom_dt);
  const Eigen::VectorXd z0 = system.initial_state(traj.targets.row(0).transpose(),
                                                  evaluate_signal(traj.coeffs, grid.t0));
  const ForwardResult fwd =
      integrate_forward(system, z0, grid, CheckpointPolicy{std::max<long>(grid.n_steps, 1)});
  return alpha_rows(fwd.sampled_states, ops.n_T);
}

Eigen::MatrixXd rollout_uncorrected(const ReducedOperators& ops, const VelocityMap& vmap,
                                    const TrajectoryRecord& traj, double rom_dt) {
  const RomOnlySystem system(ops, vmap, make_signal(traj.coeffs));
  const TimeGrid grid = segment_time_grid(traj, 0, traj.times.size(), rom_dt);
  const Eigen::VectorXd z0 = traj.targets.row(0).transpose();
  const ForwardResult fwd =
      integrate_forward(system, z0, grid, CheckpointPolicy{std::max<long>(grid.n_steps, 1)});
  return fwd.sampled_states;
}

namespace {

struct Segment {
  int trajectory;
  long first_row;
  long n_rows;
};

// Loss and parameter gradient of one rollout segment starting from the
// teacher state at its first snapshot.
std::pair<double, Eigen::VectorXd> segment_gradient(const ClosureParams& closure,
                                                    const ReducedOperators& ops,
                                                    const VelocityMap& vmap,
                                                    const TrajectoryRecord& traj,
                                                    const Segment& seg, double rom_dt,
                                                    const CheckpointPolicy& policy) {
  const CoupledSystem system(closure, ops, vmap, make_signal(traj.coeffs));
  const TimeGrid grid = segment_time_grid(traj, seg.first_row, seg.n_rows, rom_dt);
  const Eigen::VectorXd z0 = system.initial_state(
      traj.targets.row(seg.first_row).transpose(), evaluate_signal(traj.coeffs, grid.t0));

  const ForwardResult fwd = integrate_forward(system, z0, grid, policy);
  const Eigen::MatrixXd pred = alpha_rows(fwd.sampled_states, ops.n_T);
  const Eigen::MatrixXd target = traj.targets.middleRows(seg.first_row, seg.n_rows);

  const double inv_n = 1.0 / static_cast<double>(seg.n_rows);
  Eigen::MatrixXd cotangents = Eigen::MatrixXd::Zero(seg.n_rows, system.dim());
  cotangents.leftCols(ops.n_T) = 2.0 * inv_n * (pred - target);

  auto [grad_z0, grad_params] =
      backward_checkpointed(system, grid, policy, fwd.checkpoints, cotangents);
  (void)grad_z0;  // initial state is data, not a parameter
  return {trajectory_loss(pred, target), std::move(grad_params)};
}

std::vector<Segment> make_segments(const std::vector<int>& trajectory_ids,
                                   const RomDataset& dataset, long rollout_length) {
  std::vector<Segment> segments;
  for (int ti : trajectory_ids) {
    const long n_rows = dataset.trajectories[static_cast<std::size_t>(ti)].times.size();
    if (rollout_length <= 0 || rollout_length >= n_rows) {
      segments.push_back({ti, 0, n_rows});
      continue;
    }
    for (long first = 0; first + 1 < n_rows; first += rollout_length - 1) {
      const long n = std::min(rollout_length, n_rows - first);
      if (n >= 2) segments.push_back({ti, first, n});
      if (first + n >= n_rows) break;
    }
  }
  return segments;
}

}  // namespace

TrainResult train_closure(const RomDataset& dataset, const ReducedOperators& ops,
                          const VelocityMap& vmap, const ClosureParams& init,
                          const TrainConfig& config, double rom_dt,
                          const CheckpointPolicy& policy) {
  if (config.batch_size < 1 ||
      config.batch_size > static_cast<long>(dataset.train_indices.size()))
    throw std::invalid_argument("train_closure: batch_size must fit the training split");

  TrainResult result;
  result.params = init;
  if (config.epochs == 0) return result;

  Eigen::VectorXd params = init.flatten();
  AdamState adam = AdamState::zeros(params.size());
  ClosureParams work = init;

  double best_val = std::numeric_limits<double>::infinity();
  const auto t_start = std::chrono::steady_clock::now();

  const auto validation_loss = [&](const ClosureParams& cp) {
    double total = 0.0;
    for (int ti : dataset.test_indices) {
      const auto& traj = dataset.trajectories[static_cast<std::size_t>(ti)];
      total += trajectory_loss(rollout_corrected(cp, ops, vmap, traj, rom_dt), traj.targets);
    }
    return total / static_cast<double>(dataset.test_indices.size());
  };

  for (long epoch = 0; epoch < config.epochs; ++epoch) {
    long rollout_length = config.rollout_length;
    if (config.curriculum) {
      rollout_length = config.curriculum_start;
      for (long e = config.curriculum_double_every; e <= epoch;
           e += config.curriculum_double_every)
        rollout_length *= 2;
    }

    // Seeded per-epoch shuffle of the training trajectories.
    std::vector<int> order = dataset.train_indices;
    std::uint64_t state = config.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1));
    for (long i = static_cast<long>(order.size()) - 1; i > 0; --i) {
      const long j = static_cast<long>(splitmix64(state) % static_cast<std::uint64_t>(i + 1));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    double epoch_loss = 0.0;
    long epoch_segments = 0;
    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t batch_end =
          std::min(order.size(), batch_start + static_cast<std::size_t>(config.batch_size));
      const std::vector<int> batch(order.begin() + static_cast<long>(batch_start),
                                   order.begin() + static_cast<long>(batch_end));
      const std::vector<Segment> segments = make_segments(batch, dataset, rollout_length);

      work.unflatten(params);
      std::vector<double> losses(segments.size());
      std::vector<Eigen::VectorXd> grads(segments.size());
      parallel_for(static_cast<long>(segments.size()), config.threads, [&](long i) {
        auto [loss, grad] =
            segment_gradient(work, ops, vmap,
                             dataset.trajectories[static_cast<std::size_t>(
                                 segments[static_cast<std::size_t>(i)].trajectory)],
                             segments[static_cast<std::size_t>(i)], rom_dt, policy);
        losses[static_cast<std::size_t>(i)] = loss;
        grads[static_cast<std::size_t>(i)] = std::move(grad);
      });

      // Fixed-order reduction keeps runs bit-reproducible.
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
      double batch_loss = 0.0;
      for (std::size_t i = 0; i < segments.size(); ++i) {
        grad += grads[i];
        batch_loss += losses[i];
      }
      const double inv = 1.0 / static_cast<double>(segments.size());
      grad *= inv;
      batch_loss *= inv;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train_closure: diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch));
      epoch_loss += batch_loss * static_cast<double>(segments.size());
      epoch_segments += static_cast<long>(segments.size());

      const double gnorm = grad.norm();
      if (gnorm > config.clip_norm) grad *= config.clip_norm / gnorm;
      adam_step(params, grad, adam, config);
    }

    work.unflatten(params);
    const double val = validation_loss(work);
    if (val < best_val) {
      best_val = val;
      result.params = work;
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.history.push_back(
        {epoch, epoch_loss / static_cast<double>(epoch_segments), val, wall});
  }
  return result;
}

EvalReport evaluate_model(const RomDataset& dataset, const ReducedOperators& ops,
                          const VelocityMap& vmap, const ClosureParams* closure,
                          double rom_dt) {
  EvalReport report;
  for (int ti : dataset.test_indices) {
    const auto& traj = dataset.trajectories[static_cast<std::size_t>(ti)];
    TrajectoryEval ev;
    ev.trajectory_index = ti;
    ev.uncorrected = rollout_uncorrected(ops, vmap, traj, rom_dt);
    ev.corrected = closure ? rollout_corrected(*closure, ops, vmap, traj, rom_dt)
                           : ev.uncorrected;
    ev.nrmse_uncorrected = nrmse(ev.uncorrected, traj.targets);
    ev.nrmse_corrected = nrmse(ev.corrected, traj.targets);
    report.trajectories.push_back(std::move(ev));
  }
  if (!report.trajectories.empty()) {
    for (const auto& ev : report.trajectories) {
      report.mean_nrmse_corrected += ev.nrmse_corrected;
      report.mean_nrmse_uncorrected += ev.nrmse_uncorrected;
    }
    report.mean_nrmse_corrected /= static_cast<double>(report.trajectories.size());
    report.mean_nrmse_uncorrected /= static_cast<double>(report.trajectories.size());
  }
  return report;
}

}  // namespace romsuite
