#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "romsuite/galerkin.hpp"
#include "romsuite/odeint.hpp"
#include "romsuite/signals.hpp"

namespace romsuite {

/// Trainable decay rates of the memory channels. The effective time-horizon
/// matrix is Lambda = diag(exp(theta_lambda)), positive for every parameter
/// value. The memory input x = [alpha_T, S] is tiled across `horizons`
/// channel groups, each with its own rates.
struct MemoryParams {
  Eigen::VectorXd theta_lambda;  // m = horizons * input_dim entries
  int horizons = 0;
  int input_dim = 0;  // n_T + 1

  int dim() const { return static_cast<int>(theta_lambda.size()); }

  /// Initial rates log-spaced so channel timescales 1/lambda cover
  /// 4^0 .. 4^(horizons-1) time units (1, 4, 16, 64 for the default k=4),
  /// matching the control signal's period range.
  static MemoryParams log_spaced(int horizons, int input_dim);
};

/// Dense tanh network, identity output layer.
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  long param_count() const;

  static MlpParams zeros(const std::vector<int>& widths);
};

/// Per-channel shift/scale for the network inputs and outputs; scales must
/// stay strictly positive.
struct Normalizer {
  Eigen::VectorXd in_shift, in_scale, out_shift, out_scale;

  static Normalizer identity(int in_dim, int out_dim);
};

struct ClosureParams {
  MlpParams mlp;
  MemoryParams memory;
  Normalizer normalizer;

  long param_count() const { return mlp.param_count() + memory.dim(); }

  /// Flat layout: per layer W (row-major) then b, layers in order, then
  /// theta_lambda.
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);
};

/// Small random initial network (Xavier-uniform, seeded) with the default
/// log-spaced memory rates and identity normalizer.
ClosureParams make_closure(int n_T, int n_u, const std::vector<int>& hidden, int horizons,
                           std::uint64_t seed);

/// dy/dt = -exp(theta) .* y + tile(x).
Eigen::VectorXd memory_rhs(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                           const MemoryParams& memory);

/// Steady state of the memory ODE under x(s) = x0 for all s < 0.
Eigen::VectorXd init_memory(const Eigen::VectorXd& x0, const MemoryParams& memory);

Eigen::VectorXd mlp_forward(const MlpParams& mlp, const Normalizer& normalizer,
                            const Eigen::VectorXd& alpha_T, const Eigen::VectorXd& alpha_u,
                            double S, const Eigen::VectorXd& y);

/// Reducible Galerkin dynamics alone (no closure, no memory); state is
/// alpha_T. Carries no trainable parameters by construction.
class RomOnlySystem final : public OdeSystem {
 public:
  RomOnlySystem(const ReducedOperators& ops, const VelocityMap& vmap, SignalFn signal);

  int dim() const override { return ops_.n_T; }
  void rhs(double t, const Eigen::VectorXd& z, Eigen::VectorXd& out) const override;
  void vjp(double t, const Eigen::VectorXd& z, const Eigen::VectorXd& cotangent,
           Eigen::VectorXd& grad_z, Eigen::Ref<Eigen::VectorXd> grad_params) const override;

 private:
  const ReducedOperators& ops_;
  const VelocityMap& vmap_;
  SignalFn signal_;
};

/// Coupled closure dynamics of the state z = [alpha_T; y]:
///   d(alpha_T)/dt = R(alpha_T, alpha_u, S) + NN(alpha_T, alpha_u, S, y)
///   dy/dt         = -Lambda y + tile([alpha_T, S])
/// with alpha_u = vmap(alpha_T, S) and S = signal(t). vjp() returns exact
/// hand-derived reverse-mode products for the state and the flat closure
/// parameter vector.
class CoupledSystem final : public OdeSystem {
 public:
  CoupledSystem(const ClosureParams& closure, const ReducedOperators& ops,
                const VelocityMap& vmap, SignalFn signal);

  int dim() const override { return ops_.n_T + closure_.memory.dim(); }
  long param_count() const override { return closure_.param_count(); }
  void rhs(double t, const Eigen::VectorXd& z, Eigen::VectorXd& out) const override;
  void vjp(double t, const Eigen::VectorXd& z, const Eigen::VectorXd& cotangent,
           Eigen::VectorXd& grad_z, Eigen::Ref<Eigen::VectorXd> grad_params) const override;

  Eigen::VectorXd initial_state(const Eigen::VectorXd& alpha_T0, double S0) const;

  /// Diagnostic: closure-parameter reads since process start (rhs/vjp calls
  /// on any CoupledSystem).
  static long parameter_read_count();

 private:
  const ClosureParams& closure_;
  const ReducedOperators& ops_;
  const VelocityMap& vmap_;
  SignalFn signal_;
};

}  // namespace romsuite
