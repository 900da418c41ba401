#include "romsuite/fom.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace romsuite {

Grid1D Grid1D::uniform(int n_c) {
  if (n_c < 3) throw std::invalid_argument("Grid1D: need at least 3 nodes");
  Grid1D g;
  g.n_c = n_c;
  g.dx = 1.0 / (n_c - 1);
  g.x = Eigen::VectorXd::LinSpaced(n_c, 0.0, 1.0);
  return g;
}

double channel_gap(const PhysicalParams& params, double x) {
  return 1.0 - (1.0 - params.channel_min) * std::sin(std::numbers::pi * x);
}

Eigen::VectorXd velocity_field(const Grid1D& grid, const PhysicalParams& params, double S) {
  if (!std::isfinite(S)) throw std::invalid_argument("velocity_field: S must be finite");
  Eigen::VectorXd u(grid.n_c);
  for (int j = 0; j < grid.n_c; ++j) u[j] = S / channel_gap(params, grid.x[j]);
  return u;
}

Eigen::VectorXd rhs_full(const Eigen::VectorXd& T, double S, const Grid1D& grid,
                         const PhysicalParams& params) {
  const int n = grid.n_c;
  if (T.size() != n) throw std::invalid_argument("rhs_full: field length mismatch");
  if (!T.allFinite()) throw std::invalid_argument("rhs_full: non-finite temperature field");

  const double dx = grid.dx;
  const Eigen::VectorXd u = velocity_field(grid, params, S);

  // Deformation rate |du/dx|: central in the interior, one-sided at the ends.
  Eigen::VectorXd gamma(n);
  gamma[0] = std::abs((u[1] - u[0]) / dx);
  for (int j = 1; j + 1 < n; ++j) gamma[j] = std::abs((u[j + 1] - u[j - 1]) / (2.0 * dx));
  gamma[n - 1] = std::abs((u[n - 1] - u[n - 2]) / dx);

  Eigen::VectorXd dT = Eigen::VectorXd::Zero(n);
  const double inv_dx2 = 1.0 / (dx * dx);
  for (int j = 1; j < n; ++j) {
    // Diffusion; the outflow row sees a ghost node equal to its neighbor.
    double lap;
    if (j + 1 < n)
      lap = (T[j + 1] - 2.0 * T[j] + T[j - 1]) * inv_dx2;
    else
      lap = (T[j - 1] - T[j]) * inv_dx2;

    // First-order upwind advection, direction per the local velocity sign.
    double adv = 0.0;
    if (u[j] > 0.0)
      adv = u[j] * (T[j] - T[j - 1]) / dx;
    else if (u[j] < 0.0)
      adv = (j + 1 < n) ? u[j] * (T[j + 1] - T[j]) / dx : 0.0;

    const double source = params.eta0 * std::exp(-params.beta * T[j]) * gamma[j] * gamma[j];
    dT[j] = params.diffusivity * lap - adv + source;
  }
  return dT;  // row 0 stays pinned at T = 0
}

SnapshotSet simulate_fom(const ControlCoeffs& coeffs, const Grid1D& grid,
                         const PhysicalParams& params, double t_end, double dt,
                         double snap_every) {
  if (dt <= 0.0) throw std::invalid_argument("simulate_fom: dt must be positive");
  if (t_end < 0.0) throw std::invalid_argument("simulate_fom: t_end must be non-negative");

  // Advective CFL over the trajectory's worst case, |S| <= c0 + sum|c_i|.
  const double u_max = signal_bound(coeffs) / params.channel_min;
  if (u_max > 0.0) {
    const double dt_bound = 0.5 * grid.dx / u_max;
    if (dt > dt_bound)
      throw std::invalid_argument("simulate_fom: CFL violation, dt = " + std::to_string(dt) +
                                  " exceeds bound " + std::to_string(dt_bound));
  }

  const double stride_real = snap_every / dt;
  const long stride = std::lround(stride_real);
  if (snap_every <= 0.0 || stride < 1 || std::abs(stride_real - stride) > 1e-9 * stride_real)
    throw std::invalid_argument("simulate_fom: snap_every must be an integer multiple of dt");

  const long n_steps = (t_end > 0.0) ? std::lround(t_end / dt) : 0;
  const long n_snaps = n_steps / stride + 1;

  SnapshotSet out;
  out.coeffs = coeffs;
  out.times.resize(n_snaps);
  out.temps.resize(n_snaps, grid.n_c);
  out.vels.resize(n_snaps, grid.n_c);
  out.controls.resize(n_snaps);

  Eigen::VectorXd T = Eigen::VectorXd::Zero(grid.n_c);
  const auto record = [&](long snap, double t) {
    const double S = evaluate_signal(coeffs, t);
    out.times[snap] = t;
    out.temps.row(snap) = T.transpose();
    out.vels.row(snap) = velocity_field(grid, params, S).transpose();
    out.controls[snap] = S;
  };
  record(0, 0.0);

  for (long step = 0; step < n_steps; ++step) {
    const double t = step * dt;
    const Eigen::VectorXd k1 = rhs_full(T, evaluate_signal(coeffs, t), grid, params);
    const Eigen::VectorXd k2 =
        rhs_full(T + 0.5 * dt * k1, evaluate_signal(coeffs, t + 0.5 * dt), grid, params);
    const Eigen::VectorXd k3 =
        rhs_full(T + 0.5 * dt * k2, evaluate_signal(coeffs, t + 0.5 * dt), grid, params);
    const Eigen::VectorXd k4 =
        rhs_full(T + dt * k3, evaluate_signal(coeffs, t + dt), grid, params);
    T += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!T.allFinite())
      throw std::runtime_error("simulate_fom: non-finite state at t = " +
                               std::to_string((step + 1) * dt));
    if ((step + 1) % stride == 0) record((step + 1) / stride, (step + 1) * dt);
  }
  return out;
}

}  // namespace romsuite
