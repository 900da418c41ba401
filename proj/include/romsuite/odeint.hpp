#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

namespace romsuite {

/// Dynamics with parameters, exposing the right-hand side and its exact
/// reverse-mode vector-Jacobian products.
class OdeSystem {
 public:
  virtual ~OdeSystem() = default;
  virtual int dim() const = 0;
  virtual long param_count() const { return 0; }
  virtual void rhs(double t, const Eigen::VectorXd& z, Eigen::VectorXd& out) const = 0;

  /// grad_z += nothing (overwritten); grad_params accumulated in the flat
  /// parameter layout.
  virtual void vjp(double t, const Eigen::VectorXd& z, const Eigen::VectorXd& cotangent,
                   Eigen::VectorXd& grad_z, Eigen::Ref<Eigen::VectorXd> grad_params) const = 0;
};

struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.05;
  long n_steps = 0;
  long sample_stride = 1;  // loss sampled every sample_stride steps

  long n_samples() const { return n_steps / sample_stride + 1; }
  void validate() const;
};

/// Fixed-interval checkpointing between stored states during the forward
/// pass; the reverse sweep recomputes within each segment.
struct CheckpointPolicy {
  long segment_length = 16;
};

struct ForwardResult {
  Eigen::MatrixXd sampled_states;                          // n_samples x dim
  std::vector<std::pair<long, Eigen::VectorXd>> checkpoints;  // (step index, state)
};

Eigen::VectorXd rk4_step(const OdeSystem& system, const Eigen::VectorXd& z, double t, double dt);

ForwardResult integrate_forward(const OdeSystem& system, const Eigen::VectorXd& z0,
                                const TimeGrid& grid, const CheckpointPolicy& policy);

/// Reverse sweep over the discrete RK4 rollout. loss_cotangents holds one row
/// per sampled state (same order as ForwardResult::sampled_states). Returns
/// the exact gradient of the discrete forward computation.
std::pair<Eigen::VectorXd, Eigen::VectorXd> backward_checkpointed(
    const OdeSystem& system, const TimeGrid& grid, const CheckpointPolicy& policy,
    const std::vector<std::pair<long, Eigen::VectorXd>>& checkpoints,
    const Eigen::MatrixXd& loss_cotangents);

}  // namespace romsuite
