#pragma once

#include <array>
#include <cstdint>
#include <functional>

#include <Eigen/Core>

namespace romsuite {

/// Control signal S(t) = c0 + sum_{i=4..7} c_i sin(2*pi*t / 2^i).
/// The four amplitude slots map to periods 16, 32, 64, 128 time units.
struct ControlCoeffs {
  double c0 = 0.0;
  std::array<double, 4> c{0.0, 0.0, 0.0, 0.0};
};

/// Sampling distribution for randomized control trajectories:
/// c0 ~ N(mean_loc, mean_scale), c_i ~ N(0, amp_scale), scales read as
/// standard deviations. Each trajectory draws from an independent stream
/// keyed by (seed, trajectory_index).
struct SignalSpec {
  std::uint64_t seed = 0;
  double mean_loc = 1.0;
  double mean_scale = 0.25;
  double amp_scale = 0.25;
};

/// Deterministic draw for one trajectory. The generator is SplitMix64 over a
/// mixed (seed, index) key, normals via Box-Muller; documented so coefficient
/// streams reproduce bit-for-bit across runs and platforms.
ControlCoeffs sample_coefficients(const SignalSpec& spec, std::uint64_t trajectory_index);

double evaluate_signal(const ControlCoeffs& coeffs, double t);

/// |S(t)| <= this bound for all t; used for CFL checks.
double signal_bound(const ControlCoeffs& coeffs);

Eigen::VectorXd signal_grid(const ControlCoeffs& coeffs, double t0, double dt, int n);

/// Everything downstream of data generation consumes signals through this
/// interface, not the sum-of-sines family directly.
using SignalFn = std::function<double(double)>;

inline SignalFn make_signal(const ControlCoeffs& coeffs) {
  return [coeffs](double t) { return evaluate_signal(coeffs, t); };
}

}  // namespace romsuite
