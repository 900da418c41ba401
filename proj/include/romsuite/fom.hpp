#pragma once

#include <vector>

#include <Eigen/Core>

#include "romsuite/signals.hpp"

namespace romsuite {

/// Material/transport constants of the 1D calendering surrogate.
struct PhysicalParams {
  double diffusivity = 1e-3;  // lambda / (rho Cp)
  double eta0 = 0.5;          // reference viscosity
  double beta = 0.2;          // viscosity-temperature sensitivity
  double channel_min = 0.25;  // narrowest gap, at mid-domain
};

/// Uniform 1D grid of n_c nodes on [0, 1].
struct Grid1D {
  int n_c = 256;
  double dx = 0.0;
  Eigen::VectorXd x;

  static Grid1D uniform(int n_c);
};

/// One trajectory of full-order fields sampled at the snapshot instants.
struct SnapshotSet {
  Eigen::VectorXd times;     // n_s, strictly increasing
  Eigen::MatrixXd temps;     // n_s x n_c
  Eigen::MatrixXd vels;      // n_s x n_c
  Eigen::VectorXd controls;  // n_s, S at snapshot times
  ControlCoeffs coeffs;      // provenance
};

/// Channel gap h(x) = 1 - (1 - channel_min) sin(pi x).
double channel_gap(const PhysicalParams& params, double x);

/// Quasi-steady plug flow, u(x) = S / h(x).
Eigen::VectorXd velocity_field(const Grid1D& grid, const PhysicalParams& params, double S);

/// Full-order right-hand side: central diffusion, sign-aware upwind
/// advection, shear-heating source eta0 exp(-beta T) * |du/dx|^2.
/// Row 0 is pinned (Dirichlet T=0); the last row sees a ghost node equal to
/// its neighbor (zero-gradient outflow).
Eigen::VectorXd rhs_full(const Eigen::VectorXd& T, double S, const Grid1D& grid,
                         const PhysicalParams& params);

/// Explicit RK4 from T(x,0)=0, recording snapshots every snap_every time
/// units. dt is validated against the advective CFL bound derived from the
/// coefficient bound on |S|.
SnapshotSet simulate_fom(const ControlCoeffs& coeffs, const Grid1D& grid,
                         const PhysicalParams& params, double t_end, double dt,
                         double snap_every);

}  // namespace romsuite
