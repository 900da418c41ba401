#include "romsuite/signals.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace romsuite {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double uniform01(std::uint64_t& state) {
  // 53 random bits into (0, 1]; never returns 0 so log() below is safe.
  return (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
}

// Box-Muller, one normal per call (the sine partner is discarded to keep the
// draw order independent of call pairing).
double standard_normal(std::uint64_t& state) {
  const double u1 = uniform01(state);
  const double u2 = uniform01(state);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

ControlCoeffs sample_coefficients(const SignalSpec& spec, std::uint64_t trajectory_index) {
  if (spec.mean_scale < 0.0 || spec.amp_scale < 0.0)
    throw std::invalid_argument("signal scales must be non-negative");
  // Stream key mixes seed and index through one SplitMix64 round each so
  // trajectories are independent of generation order.
  std::uint64_t state = spec.seed;
  splitmix64(state);
  state ^= 0x51c64b365eb9d1a5ULL * (trajectory_index + 1);
  splitmix64(state);
  ControlCoeffs out;
  out.c0 = spec.mean_loc + spec.mean_scale * standard_normal(state);
  for (auto& a : out.c) a = spec.amp_scale * standard_normal(state);
  return out;
}

double evaluate_signal(const ControlCoeffs& coeffs, double t) {
  double s = coeffs.c0;
  for (int i = 0; i < 4; ++i) {
    const double period = static_cast<double>(1 << (i + 4));
    s += coeffs.c[static_cast<std::size_t>(i)] *
         std::sin(2.0 * std::numbers::pi * t / period);
  }
  return s;
}

double signal_bound(const ControlCoeffs& coeffs) {
  double b = std::abs(coeffs.c0);
  for (double a : coeffs.c) b += std::abs(a);
  return b;
}

Eigen::VectorXd signal_grid(const ControlCoeffs& coeffs, double t0, double dt, int n) {
  if (dt <= 0.0) throw std::invalid_argument("signal_grid: dt must be positive");
  if (n < 1) throw std::invalid_argument("signal_grid: n must be at least 1");
  Eigen::VectorXd out(n);
  for (int j = 0; j < n; ++j) out[j] = evaluate_signal(coeffs, t0 + j * dt);
  return out;
}

}  // namespace romsuite
