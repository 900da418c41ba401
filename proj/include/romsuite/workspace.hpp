#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "romsuite/closure.hpp"
#include "romsuite/fom.hpp"
#include "romsuite/galerkin.hpp"
#include "romsuite/pod.hpp"
#include "romsuite/training.hpp"

namespace romsuite {

/// Everything a pipeline run needs, loaded from one JSON config file.
/// CLI --set key=value overrides individual dotted keys.
struct WorkspaceConfig {
  std::filesystem::path root = "workspace";
  std::uint64_t seed = 2024;

  PhysicalParams fom_params;
  int n_c = 256;
  double t_end = 64.0;
  double fom_dt = 1e-4;
  double snap_every = 0.25;

  SignalSpec signal_spec;
  int n_trajectories = 20;

  int n_T = 6;
  int n_u = 4;
  double energy_report = 0.95;
  bool center = false;

  std::vector<double> ridge_grid{1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2};

  std::vector<int> hidden_widths{64, 64};
  int horizons = 4;

  TrainConfig train;
  double rom_dt = 0.05;
  long checkpoint_segment = 16;
  double split_fraction = 0.8;

  std::filesystem::path dataset_dir() const { return root / "dataset"; }
  std::filesystem::path basis_dir() const { return root / "basis"; }
  std::filesystem::path rom_dir() const { return root / "rom"; }
  std::filesystem::path closure_dir() const { return root / "closure"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }

  static WorkspaceConfig from_json_text(const std::string& text);
  static WorkspaceConfig load(const std::filesystem::path& file,
                              const std::vector<std::string>& overrides = {});
  std::string to_json_text() const;
};

// Artifact persistence (shared binary array format + JSON metadata).
void save_snapshot_set(const std::filesystem::path& dir, const SnapshotSet& set,
                       const Grid1D& grid, const PhysicalParams& params);
SnapshotSet load_snapshot_set(const std::filesystem::path& dir);

void save_pod_basis(const std::filesystem::path& dir, const PodBasis& basis);
PodBasis load_pod_basis(const std::filesystem::path& dir);

void save_rom(const std::filesystem::path& dir, const ReducedOperators& ops,
              const VelocityMap& vmap);
ReducedOperators load_reduced_operators(const std::filesystem::path& dir);
VelocityMap load_velocity_map(const std::filesystem::path& dir);

void save_closure(const std::filesystem::path& dir, const ClosureParams& closure);
ClosureParams load_closure(const std::filesystem::path& dir);

std::string coeffs_to_json(const ControlCoeffs& coeffs, std::uint64_t seed, std::uint64_t index);
ControlCoeffs coeffs_from_json(const std::string& text);

// Pipeline stages. Each validates its stage ordering and snapshots the
// effective config into its output directory.
void cmd_generate(const WorkspaceConfig& config);
void cmd_pod(const WorkspaceConfig& config);
void cmd_build_rom(const WorkspaceConfig& config, bool identity_basis_debug = false);
void cmd_train(const WorkspaceConfig& config);
void cmd_eval(const WorkspaceConfig& config);

struct SimulateOptions {
  int batch = 1;
  std::filesystem::path coeff_file;  // empty: sample from the signal spec
  std::filesystem::path out_dir;
};
void cmd_simulate(const WorkspaceConfig& config, const SimulateOptions& options);

}  // namespace romsuite
