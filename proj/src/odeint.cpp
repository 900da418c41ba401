#include "romsuite/odeint.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace romsuite {

void TimeGrid::validate() const {
  if (dt <= 0.0) throw std::invalid_argument("TimeGrid: dt must be positive");
  if (n_steps < 0) throw std::invalid_argument("TimeGrid: negative step count");
  if (sample_stride < 1) throw std::invalid_argument("TimeGrid: sample_stride must be >= 1");
  if (n_steps % sample_stride != 0)
    throw std::invalid_argument("TimeGrid: n_steps must be divisible by sample_stride");
}

namespace {

void check_finite(const Eigen::VectorXd& z, double t) {
  if (!z.allFinite())
    throw std::runtime_error("ode integration: non-finite state at t = " + std::to_string(t));
}

struct Stages {
  Eigen::VectorXd k1, k2, k3, k4;
};

Eigen::VectorXd step_with_stages(const OdeSystem& f, const Eigen::VectorXd& z, double t,
                                 double dt, Stages& s) {
  f.rhs(t, z, s.k1);
  f.rhs(t + 0.5 * dt, z + (0.5 * dt) * s.k1, s.k2);
  f.rhs(t + 0.5 * dt, z + (0.5 * dt) * s.k2, s.k3);
  f.rhs(t + dt, z + dt * s.k3, s.k4);
  return z + (dt / 6.0) * (s.k1 + 2.0 * s.k2 + 2.0 * s.k3 + s.k4);
}

}  // namespace

Eigen::VectorXd rk4_step(const OdeSystem& system, const Eigen::VectorXd& z, double t, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("rk4_step: dt must be positive");
  Stages s;
  Eigen::VectorXd out = step_with_stages(system, z, t, dt, s);
  check_finite(out, t + dt);
  return out;
}

ForwardResult integrate_forward(const OdeSystem& system, const Eigen::VectorXd& z0,
                                const TimeGrid& grid, const CheckpointPolicy& policy) {
  grid.validate();
  if (policy.segment_length < 1)
    throw std::invalid_argument("integrate_forward: segment_length must be >= 1");

  ForwardResult result;
  result.sampled_states.resize(grid.n_samples(), z0.size());
  result.sampled_states.row(0) = z0.transpose();
  result.checkpoints.emplace_back(0, z0);

  Eigen::VectorXd z = z0;
  Stages s;
  for (long step = 0; step < grid.n_steps; ++step) {
    const double t = grid.t0 + step * grid.dt;
    z = step_with_stages(system, z, t, grid.dt, s);
    check_finite(z, t + grid.dt);
    const long next = step + 1;
    if (next % policy.segment_length == 0 && next < grid.n_steps)
      result.checkpoints.emplace_back(next, z);
    if (next % grid.sample_stride == 0)
      result.sampled_states.row(next / grid.sample_stride) = z.transpose();
  }
  return result;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> backward_checkpointed(
    const OdeSystem& system, const TimeGrid& grid, const CheckpointPolicy& policy,
    const std::vector<std::pair<long, Eigen::VectorXd>>& checkpoints,
    const Eigen::MatrixXd& loss_cotangents) {
  grid.validate();
  if (checkpoints.empty() || checkpoints.front().first != 0)
    throw std::invalid_argument("backward_checkpointed: missing initial checkpoint");
  if (loss_cotangents.rows() != grid.n_samples())
    throw std::invalid_argument("backward_checkpointed: cotangent/sample count mismatch");

  const Eigen::Index dim = checkpoints.front().second.size();
  Eigen::VectorXd adj = Eigen::VectorXd::Zero(dim);             // dL/dz at current step
  Eigen::VectorXd grad_params = Eigen::VectorXd::Zero(system.param_count());

  if (grid.n_steps > 0) adj = loss_cotangents.row(loss_cotangents.rows() - 1).transpose();

  Stages s;
  Eigen::VectorXd gz(dim);

  // Walk checkpoint segments in reverse; recompute the states inside each
  // segment, then apply the RK4 stage adjoints step by step.
  long seg_end = grid.n_steps;
  for (long ci = static_cast<long>(checkpoints.size()) - 1; ci >= 0; --ci) {
    const long seg_start = checkpoints[static_cast<std::size_t>(ci)].first;
    const Eigen::VectorXd& z_start = checkpoints[static_cast<std::size_t>(ci)].second;

    std::vector<Eigen::VectorXd> states;
    states.reserve(static_cast<std::size_t>(seg_end - seg_start) + 1);
    states.push_back(z_start);
    for (long step = seg_start; step < seg_end; ++step) {
      const double t = grid.t0 + step * grid.dt;
      states.push_back(step_with_stages(system, states.back(), t, grid.dt, s));
    }

    for (long step = seg_end - 1; step >= seg_start; --step) {
      const double t = grid.t0 + step * grid.dt;
      const double dt = grid.dt;
      const Eigen::VectorXd& z = states[static_cast<std::size_t>(step - seg_start)];

      // Recompute the stage inputs of this step.
      system.rhs(t, z, s.k1);
      const Eigen::VectorXd z2 = z + (0.5 * dt) * s.k1;
      system.rhs(t + 0.5 * dt, z2, s.k2);
      const Eigen::VectorXd z3 = z + (0.5 * dt) * s.k2;
      system.rhs(t + 0.5 * dt, z3, s.k3);
      const Eigen::VectorXd z4 = z + dt * s.k3;

      // Reverse the combination z' = z + dt/6 (k1 + 2 k2 + 2 k3 + k4).
      const Eigen::VectorXd w = adj;
      Eigen::VectorXd grad_z = w;

      Eigen::VectorXd gk4 = (dt / 6.0) * w;
      system.vjp(t + dt, z4, gk4, gz, grad_params);
      grad_z += gz;
      Eigen::VectorXd gk3 = (dt / 3.0) * w + dt * gz;
      system.vjp(t + 0.5 * dt, z3, gk3, gz, grad_params);
      grad_z += gz;
      Eigen::VectorXd gk2 = (dt / 3.0) * w + (0.5 * dt) * gz;
      system.vjp(t + 0.5 * dt, z2, gk2, gz, grad_params);
      grad_z += gz;
      Eigen::VectorXd gk1 = (dt / 6.0) * w + (0.5 * dt) * gz;
      system.vjp(t, z, gk1, gz, grad_params);
      grad_z += gz;

      adj = grad_z;
      if (step % grid.sample_stride == 0 && step > 0)
        adj += loss_cotangents.row(step / grid.sample_stride).transpose();
    }
    seg_end = seg_start;
  }

  adj += loss_cotangents.row(0).transpose();
  return {adj, grad_params};
}

}  // namespace romsuite
