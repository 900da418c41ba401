#include "romsuite/workspace.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "romsuite/array_io.hpp"

namespace romsuite {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

json coeffs_json(const ControlCoeffs& c) {
  return json{{"c0", c.c0}, {"c", {c.c[0], c.c[1], c.c[2], c.c[3]}}};
}

ControlCoeffs coeffs_from(const json& j) {
  ControlCoeffs c;
  c.c0 = j.at("c0").get<double>();
  for (int i = 0; i < 4; ++i) c.c[static_cast<std::size_t>(i)] = j.at("c")[static_cast<std::size_t>(i)].get<double>();
  return c;
}

void require_artifact(const fs::path& p, const std::string& produced_by) {
  if (!fs::exists(p))
    throw std::invalid_argument("missing artifact " + p.string() + " (run `romsuite " +
                                produced_by + "` first)");
}

void snapshot_config(const WorkspaceConfig& config, const fs::path& dir) {
  write_text_file(dir / "config.json", config.to_json_text());
}

fs::path trajectory_dir(const WorkspaceConfig& config, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "traj_%04d", index);
  return config.dataset_dir() / name;
}

// Leading-r slice of a full basis, energy recomputed against the full
// spectrum.
PodBasis truncate_basis(const PodBasis& full, int r) {
  PodBasis b;
  b.modes = full.modes.leftCols(r);
  b.singular_values = full.singular_values.head(r);
  const double total = full.singular_values.squaredNorm() / full.energy_captured;
  b.energy_captured = b.singular_values.squaredNorm() / total;
  b.total_snapshots = full.total_snapshots;
  b.mean = full.mean;
  return b;
}

int smallest_rank_reaching(const PodBasis& full, double fraction) {
  const double total = full.singular_values.squaredNorm() / full.energy_captured;
  double acc = 0.0;
  for (int i = 0; i < full.rank(); ++i) {
    acc += full.singular_values[i] * full.singular_values[i];
    if (acc >= fraction * total) return i + 1;
  }
  return full.rank();
}

}  // namespace

WorkspaceConfig WorkspaceConfig::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  WorkspaceConfig c;
  if (j.contains("workspace")) c.root = j["workspace"].get<std::string>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("fom")) {
    const auto& f = j["fom"];
    if (f.contains("diffusivity")) c.fom_params.diffusivity = f["diffusivity"].get<double>();
    if (f.contains("eta0")) c.fom_params.eta0 = f["eta0"].get<double>();
    if (f.contains("beta")) c.fom_params.beta = f["beta"].get<double>();
    if (f.contains("channel_min")) c.fom_params.channel_min = f["channel_min"].get<double>();
    if (f.contains("n_c")) c.n_c = f["n_c"].get<int>();
    if (f.contains("t_end")) c.t_end = f["t_end"].get<double>();
    if (f.contains("dt")) c.fom_dt = f["dt"].get<double>();
    if (f.contains("snap_every")) c.snap_every = f["snap_every"].get<double>();
  }
  if (j.contains("signals")) {
    const auto& s = j["signals"];
    if (s.contains("mean_loc")) c.signal_spec.mean_loc = s["mean_loc"].get<double>();
    if (s.contains("mean_scale")) c.signal_spec.mean_scale = s["mean_scale"].get<double>();
    if (s.contains("amp_scale")) c.signal_spec.amp_scale = s["amp_scale"].get<double>();
    if (s.contains("n_trajectories")) c.n_trajectories = s["n_trajectories"].get<int>();
  }
  c.signal_spec.seed = c.seed;
  if (j.contains("pod")) {
    const auto& p = j["pod"];
    if (p.contains("n_T")) c.n_T = p["n_T"].get<int>();
    if (p.contains("n_u")) c.n_u = p["n_u"].get<int>();
    if (p.contains("energy_report")) c.energy_report = p["energy_report"].get<double>();
    if (p.contains("center")) c.center = p["center"].get<bool>();
  }
  if (j.contains("rom") && j["rom"].contains("ridge_grid"))
    c.ridge_grid = j["rom"]["ridge_grid"].get<std::vector<double>>();
  if (j.contains("closure")) {
    const auto& cl = j["closure"];
    if (cl.contains("hidden")) c.hidden_widths = cl["hidden"].get<std::vector<int>>();
    if (cl.contains("horizons")) c.horizons = cl["horizons"].get<int>();
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    if (t.contains("learning_rate")) c.train.learning_rate = t["learning_rate"].get<double>();
    if (t.contains("beta1")) c.train.beta1 = t["beta1"].get<double>();
    if (t.contains("beta2")) c.train.beta2 = t["beta2"].get<double>();
    if (t.contains("epsilon")) c.train.epsilon = t["epsilon"].get<double>();
    if (t.contains("epochs")) c.train.epochs = t["epochs"].get<long>();
    if (t.contains("batch_size")) c.train.batch_size = t["batch_size"].get<long>();
    if (t.contains("rollout_length")) c.train.rollout_length = t["rollout_length"].get<long>();
    if (t.contains("curriculum")) c.train.curriculum = t["curriculum"].get<bool>();
    if (t.contains("curriculum_start")) c.train.curriculum_start = t["curriculum_start"].get<long>();
    if (t.contains("curriculum_double_every"))
      c.train.curriculum_double_every = t["curriculum_double_every"].get<long>();
    if (t.contains("clip_norm")) c.train.clip_norm = t["clip_norm"].get<double>();
    if (t.contains("threads")) c.train.threads = t["threads"].get<int>();
    if (t.contains("rom_dt")) c.rom_dt = t["rom_dt"].get<double>();
    if (t.contains("checkpoint_segment")) c.checkpoint_segment = t["checkpoint_segment"].get<long>();
    if (t.contains("split_fraction")) c.split_fraction = t["split_fraction"].get<double>();
  }
  c.train.seed = c.seed;
  return c;
}

std::string WorkspaceConfig::to_json_text() const {
  json j;
  j["workspace"] = root.string();
  j["seed"] = seed;
  j["fom"] = {{"diffusivity", fom_params.diffusivity}, {"eta0", fom_params.eta0},
              {"beta", fom_params.beta}, {"channel_min", fom_params.channel_min},
              {"n_c", n_c}, {"t_end", t_end}, {"dt", fom_dt}, {"snap_every", snap_every}};
  j["signals"] = {{"mean_loc", signal_spec.mean_loc}, {"mean_scale", signal_spec.mean_scale},
                  {"amp_scale", signal_spec.amp_scale}, {"n_trajectories", n_trajectories}};
  j["pod"] = {{"n_T", n_T}, {"n_u", n_u}, {"energy_report", energy_report}, {"center", center}};
  j["rom"] = {{"ridge_grid", ridge_grid}};
  j["closure"] = {{"hidden", hidden_widths}, {"horizons", horizons}};
  j["train"] = {{"learning_rate", train.learning_rate}, {"beta1", train.beta1},
                {"beta2", train.beta2}, {"epsilon", train.epsilon}, {"epochs", train.epochs},
                {"batch_size", train.batch_size}, {"rollout_length", train.rollout_length},
                {"curriculum", train.curriculum}, {"curriculum_start", train.curriculum_start},
                {"curriculum_double_every", train.curriculum_double_every},
                {"clip_norm", train.clip_norm}, {"threads", train.threads},
                {"rom_dt", rom_dt}, {"checkpoint_segment", checkpoint_segment},
                {"split_fraction", split_fraction}};
  return j.dump(2) + "\n";
}

WorkspaceConfig WorkspaceConfig::load(const fs::path& file,
                                      const std::vector<std::string>& overrides) {
  json j = json::parse(read_text_file(file));
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got: " + kv);
    const std::string value = kv.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::parse_error&) {
      parsed = value;  // bare string
    }
    json* node = &j;
    std::istringstream path(kv.substr(0, eq));
    std::string key, next;
    std::getline(path, key, '.');
    while (std::getline(path, next, '.')) {
      node = &(*node)[key];
      key = next;
    }
    (*node)[key] = parsed;
  }
  return from_json_text(j.dump());
}

std::string coeffs_to_json(const ControlCoeffs& coeffs, std::uint64_t seed,
                           std::uint64_t index) {
  json j = coeffs_json(coeffs);
  j["seed"] = seed;
  j["index"] = index;
  return j.dump(2) + "\n";
}

ControlCoeffs coeffs_from_json(const std::string& text) {
  try {
    return coeffs_from(json::parse(text));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("invalid coefficient file: ") + e.what());
  }
}

void save_snapshot_set(const fs::path& dir, const SnapshotSet& set, const Grid1D& grid,
                       const PhysicalParams& params) {
  fs::create_directories(dir);
  json meta;
  meta["grid"] = {{"n_c", grid.n_c}};
  meta["params"] = {{"diffusivity", params.diffusivity}, {"eta0", params.eta0},
                    {"beta", params.beta}, {"channel_min", params.channel_min}};
  meta["coeffs"] = coeffs_json(set.coeffs);
  meta["times"] = vector_to_json(set.times);
  meta["controls"] = vector_to_json(set.controls);
  write_text_file(dir / "meta.json", meta.dump(2) + "\n");
  write_matrix(dir / "temps.bin", set.temps);
  write_matrix(dir / "vels.bin", set.vels);
}

SnapshotSet load_snapshot_set(const fs::path& dir) {
  require_artifact(dir / "meta.json", "generate");
  const json meta = json::parse(read_text_file(dir / "meta.json"));
  SnapshotSet set;
  set.coeffs = coeffs_from(meta.at("coeffs"));
  set.times = vector_from_json(meta.at("times"));
  set.controls = vector_from_json(meta.at("controls"));
  set.temps = read_matrix(dir / "temps.bin");
  set.vels = read_matrix(dir / "vels.bin");
  return set;
}

void save_pod_basis(const fs::path& dir, const PodBasis& basis) {
  fs::create_directories(dir);
  json meta;
  meta["rank"] = basis.rank();
  meta["singular_values"] = vector_to_json(basis.singular_values);
  meta["energy_captured"] = basis.energy_captured;
  meta["total_snapshots"] = basis.total_snapshots;
  meta["centered"] = basis.mean.has_value();
  write_text_file(dir / "basis_meta.json", meta.dump(2) + "\n");
  write_matrix(dir / "modes.bin", basis.modes);
  if (basis.mean) write_vector(dir / "mean.bin", *basis.mean);
}

PodBasis load_pod_basis(const fs::path& dir) {
  require_artifact(dir / "basis_meta.json", "pod");
  const json meta = json::parse(read_text_file(dir / "basis_meta.json"));
  PodBasis basis;
  basis.modes = read_matrix(dir / "modes.bin");
  basis.singular_values = vector_from_json(meta.at("singular_values"));
  basis.energy_captured = meta.at("energy_captured").get<double>();
  basis.total_snapshots = meta.at("total_snapshots").get<long>();
  if (meta.at("centered").get<bool>()) basis.mean = read_vector(dir / "mean.bin");
  return basis;
}

void save_rom(const fs::path& dir, const ReducedOperators& ops, const VelocityMap& vmap) {
  fs::create_directories(dir);
  json meta;
  meta["n_T"] = ops.n_T;
  meta["n_u"] = ops.n_u;
  meta["ridge_lambda"] = vmap.ridge_lambda;
  write_text_file(dir / "rom_meta.json", meta.dump(2) + "\n");
  write_matrix(dir / "L_red.bin", ops.L_red);
  Eigen::MatrixXd stacked(static_cast<Eigen::Index>(ops.n_u) * ops.n_T, ops.n_T);
  for (int k = 0; k < ops.n_u; ++k)
    stacked.middleRows(static_cast<Eigen::Index>(k) * ops.n_T, ops.n_T) =
        ops.A_red[static_cast<std::size_t>(k)];
  write_matrix(dir / "A_red.bin", stacked);
  write_matrix(dir / "vmap_W.bin", vmap.W);
  write_vector(dir / "vmap_b.bin", vmap.b);
}

ReducedOperators load_reduced_operators(const fs::path& dir) {
  require_artifact(dir / "rom_meta.json", "build-rom");
  const json meta = json::parse(read_text_file(dir / "rom_meta.json"));
  ReducedOperators ops;
  ops.n_T = meta.at("n_T").get<int>();
  ops.n_u = meta.at("n_u").get<int>();
  ops.L_red = read_matrix(dir / "L_red.bin");
  const Eigen::MatrixXd stacked = read_matrix(dir / "A_red.bin");
  for (int k = 0; k < ops.n_u; ++k)
    ops.A_red.push_back(stacked.middleRows(static_cast<Eigen::Index>(k) * ops.n_T, ops.n_T));
  return ops;
}

VelocityMap load_velocity_map(const fs::path& dir) {
  require_artifact(dir / "rom_meta.json", "build-rom");
  const json meta = json::parse(read_text_file(dir / "rom_meta.json"));
  VelocityMap vmap;
  vmap.W = read_matrix(dir / "vmap_W.bin");
  vmap.b = read_vector(dir / "vmap_b.bin");
  vmap.ridge_lambda = meta.at("ridge_lambda").get<double>();
  return vmap;
}

void save_closure(const fs::path& dir, const ClosureParams& closure) {
  fs::create_directories(dir);
  json meta;
  json widths = json::array();
  widths.push_back(closure.mlp.input_dim());
  for (std::size_t l = 0; l + 1 < closure.mlp.weights.size(); ++l)
    widths.push_back(closure.mlp.weights[l].rows());
  widths.push_back(closure.mlp.output_dim());
  meta["widths"] = widths;
  meta["horizons"] = closure.memory.horizons;
  meta["memory_input_dim"] = closure.memory.input_dim;
  meta["theta_lambda"] = vector_to_json(closure.memory.theta_lambda);
  meta["normalizer"] = {{"in_shift", vector_to_json(closure.normalizer.in_shift)},
                        {"in_scale", vector_to_json(closure.normalizer.in_scale)},
                        {"out_shift", vector_to_json(closure.normalizer.out_shift)},
                        {"out_scale", vector_to_json(closure.normalizer.out_scale)}};
  write_text_file(dir / "closure.json", meta.dump(2) + "\n");
  write_vector(dir / "weights.bin", closure.flatten());
}

ClosureParams load_closure(const fs::path& dir) {
  require_artifact(dir / "closure.json", "train");
  const json meta = json::parse(read_text_file(dir / "closure.json"));
  ClosureParams closure;
  closure.mlp = MlpParams::zeros(meta.at("widths").get<std::vector<int>>());
  closure.memory.horizons = meta.at("horizons").get<int>();
  closure.memory.input_dim = meta.at("memory_input_dim").get<int>();
  closure.memory.theta_lambda = vector_from_json(meta.at("theta_lambda"));
  const auto& n = meta.at("normalizer");
  closure.normalizer.in_shift = vector_from_json(n.at("in_shift"));
  closure.normalizer.in_scale = vector_from_json(n.at("in_scale"));
  closure.normalizer.out_shift = vector_from_json(n.at("out_shift"));
  closure.normalizer.out_scale = vector_from_json(n.at("out_scale"));
  closure.unflatten(read_vector(dir / "weights.bin"));
  return closure;
}

void cmd_generate(const WorkspaceConfig& config) {
  const Grid1D grid = Grid1D::uniform(config.n_c);
  fs::create_directories(config.dataset_dir());

  json manifest;
  manifest["n_trajectories"] = config.n_trajectories;

  // Trajectories are independent; run them across a small pool, each writing
  // into its own directory.
  const int n = config.n_trajectories;
  std::vector<json> entries(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  const unsigned n_threads = std::max(
      1u, std::min<unsigned>(std::thread::hardware_concurrency(), static_cast<unsigned>(n)));
  std::vector<std::thread> pool;
  for (unsigned th = 0; th < n_threads; ++th)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        const ControlCoeffs coeffs =
            sample_coefficients(config.signal_spec, static_cast<std::uint64_t>(i));
        try {
          const SnapshotSet set = simulate_fom(coeffs, grid, config.fom_params, config.t_end,
                                               config.fom_dt, config.snap_every);
          const fs::path dir = trajectory_dir(config, i);
          save_snapshot_set(dir, set, grid, config.fom_params);
          json entry = coeffs_json(coeffs);
          entry["index"] = i;
          entry["dir"] = dir.filename().string();
          entry["n_snapshots"] = set.times.size();
          entries[static_cast<std::size_t>(i)] = std::move(entry);
        } catch (const std::exception& e) {
          errors[static_cast<std::size_t>(i)] = e.what();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (int i = 0; i < n; ++i)
    if (!errors[static_cast<std::size_t>(i)].empty())
      throw std::runtime_error("generate: trajectory " + std::to_string(i) +
                               " failed: " + errors[static_cast<std::size_t>(i)]);

  json trajectories = json::array();
  for (const auto& entry : entries) trajectories.push_back(entry);
  manifest["trajectories"] = trajectories;
  write_text_file(config.dataset_dir() / "dataset.json", manifest.dump(2) + "\n");
  snapshot_config(config, config.dataset_dir());
}

namespace {

std::vector<SnapshotSet> load_dataset(const WorkspaceConfig& config) {
  require_artifact(config.dataset_dir() / "dataset.json", "generate");
  const json manifest = json::parse(read_text_file(config.dataset_dir() / "dataset.json"));
  std::vector<SnapshotSet> sets;
  for (const auto& entry : manifest.at("trajectories"))
    sets.push_back(load_snapshot_set(config.dataset_dir() / entry.at("dir").get<std::string>()));
  return sets;
}

}  // namespace

void cmd_pod(const WorkspaceConfig& config) {
  const std::vector<SnapshotSet> sets = load_dataset(config);
  long total = 0;
  for (const auto& s : sets) total += s.times.size();

  const int n_c = static_cast<int>(sets.front().temps.cols());
  Eigen::MatrixXd X_T(n_c, total), X_u(n_c, total);
  long col = 0;
  for (const auto& s : sets) {
    X_T.middleCols(col, s.times.size()) = s.temps.transpose();
    X_u.middleCols(col, s.times.size()) = s.vels.transpose();
    col += s.times.size();
  }

  json report;
  const auto build = [&](const Eigen::MatrixXd& X, int requested, const char* name) {
    const int available = numerical_rank(X, config.center);
    const int r = std::min(requested, available);
    if (r < requested)
      std::cerr << "pod: " << name << " basis clamped to numerical rank " << r
                << " (requested " << requested << ")\n";
    const PodBasis full = compute_pod(X, RankTruncation{available}, config.center);
    const PodBasis basis = truncate_basis(full, r);

    // Eckart-Young residual check at the chosen rank.
    const Eigen::MatrixXd Xc =
        basis.mean ? Eigen::MatrixXd(X.colwise() - *basis.mean) : X;
    const double residual = (Xc - basis.modes * (basis.modes.transpose() * Xc)).squaredNorm();
    const double tail = full.singular_values.squaredNorm() - basis.singular_values.squaredNorm();

    json rj;
    rj["requested_rank"] = requested;
    rj["rank"] = r;
    rj["numerical_rank"] = available;
    rj["energy_captured"] = basis.energy_captured;
    rj["rank_reaching_threshold"] = smallest_rank_reaching(full, config.energy_report);
    rj["energy_threshold"] = config.energy_report;
    rj["eckart_young_residual"] = residual;
    rj["discarded_energy"] = tail;
    report[name] = rj;
    return basis;
  };

  const PodBasis basis_T = build(X_T, config.n_T, "temperature");
  const PodBasis basis_u = build(X_u, config.n_u, "velocity");
  save_pod_basis(config.basis_dir() / "temperature", basis_T);
  save_pod_basis(config.basis_dir() / "velocity", basis_u);
  write_text_file(config.basis_dir() / "energy_report.json", report.dump(2) + "\n");
  snapshot_config(config, config.basis_dir());
}

void cmd_build_rom(const WorkspaceConfig& config, bool identity_basis_debug) {
  const Grid1D grid = Grid1D::uniform(config.n_c);
  PodBasis basis_T, basis_u;
  if (identity_basis_debug) {
    basis_T.modes = Eigen::MatrixXd::Identity(config.n_c, config.n_c);
    basis_T.singular_values = Eigen::VectorXd::Ones(config.n_c);
    basis_u.modes = Eigen::MatrixXd::Zero(config.n_c, 1);
    basis_u.singular_values = Eigen::VectorXd::Ones(1);
  } else {
    basis_T = load_pod_basis(config.basis_dir() / "temperature");
    basis_u = load_pod_basis(config.basis_dir() / "velocity");
  }
  const ReducedOperators ops = build_reduced_operators(basis_T, basis_u, grid, config.fom_params);

  // Training samples for the velocity map: all snapshots of all trajectories.
  const std::vector<SnapshotSet> sets = identity_basis_debug
                                            ? std::vector<SnapshotSet>{}
                                            : load_dataset(config);
  std::vector<Eigen::VectorXd> feats_alpha, targets;
  std::vector<double> feats_S;
  for (const auto& s : sets) {
    for (Eigen::Index i = 0; i < s.times.size(); ++i) {
      feats_alpha.push_back(project(basis_T, s.temps.row(i).transpose()));
      feats_S.push_back(s.controls[i]);
      targets.push_back(project(basis_u, s.vels.row(i).transpose()));
    }
  }

  VelocityMap vmap;
  double chosen_lambda = config.ridge_grid.empty() ? 1e-6 : config.ridge_grid.front();
  json cv_report = json::array();
  if (!feats_alpha.empty()) {
    // 5-fold cross-validation over the configured grid, interleaved folds.
    const std::size_t n = feats_alpha.size();
    const int n_folds = 5;
    double best_mse = std::numeric_limits<double>::infinity();
    for (double lambda : config.ridge_grid) {
      double mse_sum = 0.0;
      bool ok = true;
      for (int fold = 0; fold < n_folds && ok; ++fold) {
        std::vector<Eigen::VectorXd> fa, ft;
        std::vector<double> fS;
        std::vector<std::size_t> held;
        for (std::size_t i = 0; i < n; ++i) {
          if (static_cast<int>(i % n_folds) == fold) {
            held.push_back(i);
          } else {
            fa.push_back(feats_alpha[i]);
            fS.push_back(feats_S[i]);
            ft.push_back(targets[i]);
          }
        }
        try {
          const VelocityMap m = fit_velocity_map(fa, fS, ft, lambda);
          double mse = 0.0;
          for (std::size_t i : held)
            mse += (predict_velocity(m, feats_alpha[i], feats_S[i]) - targets[i]).squaredNorm();
          mse_sum += mse / static_cast<double>(held.size());
        } catch (const std::runtime_error&) {
          ok = false;
        }
      }
      const double mean_mse = ok ? mse_sum / n_folds : std::numeric_limits<double>::infinity();
      cv_report.push_back({{"lambda", lambda}, {"cv_mse", ok ? json(mean_mse) : json(nullptr)}});
      if (mean_mse < best_mse) {
        best_mse = mean_mse;
        chosen_lambda = lambda;
      }
    }
    vmap = fit_velocity_map(feats_alpha, feats_S, targets, chosen_lambda);
  } else {
    vmap.W = Eigen::MatrixXd::Zero(ops.n_u, ops.n_T + 1);
    vmap.b = Eigen::VectorXd::Zero(ops.n_u);
    vmap.ridge_lambda = chosen_lambda;
  }

  // Galerkin consistency spot check through the full space.
  std::uint64_t rng = config.seed ^ 0xb10c5ULL;
  const auto unit_rand = [&rng]() {
    rng += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = rng;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return 2.0 * (static_cast<double>((z ^ (z >> 31)) >> 11) * 0x1.0p-53) - 1.0;
  };
  const Eigen::MatrixXd D1 = first_difference_matrix(grid);
  const Eigen::MatrixXd D2 = second_difference_matrix(grid);
  double max_err = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd a(ops.n_T), au(ops.n_u);
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = unit_rand();
    for (Eigen::Index i = 0; i < au.size(); ++i) au[i] = unit_rand();
    const Eigen::VectorXd T_full = basis_T.modes * a;
    const Eigen::VectorXd u_full = basis_u.modes * au;
    const Eigen::VectorXd full_rhs = config.fom_params.diffusivity * (D2 * T_full) -
                                     u_full.cwiseProduct(D1 * T_full);
    const Eigen::VectorXd projected = basis_T.modes.transpose() * full_rhs;
    max_err = std::max(max_err, (eval_reduced_rhs(a, au, ops) - projected).lpNorm<Eigen::Infinity>());
  }
  if (max_err > 1e-11)
    throw std::runtime_error("build-rom: Galerkin consistency check failed, max error " +
                             std::to_string(max_err));

  save_rom(config.rom_dir(), ops, vmap);
  json meta = json::parse(read_text_file(config.rom_dir() / "rom_meta.json"));
  meta["ridge_cv"] = cv_report;
  meta["chosen_ridge_lambda"] = chosen_lambda;
  meta["galerkin_consistency_max_error"] = max_err;
  write_text_file(config.rom_dir() / "rom_meta.json", meta.dump(2) + "\n");
  snapshot_config(config, config.rom_dir());
  std::cerr << "build-rom: ridge_lambda = " << chosen_lambda
            << ", galerkin consistency max error = " << max_err << "\n";
}

void cmd_train(const WorkspaceConfig& config) {
  const PodBasis basis_T = load_pod_basis(config.basis_dir() / "temperature");
  const ReducedOperators ops = load_reduced_operators(config.rom_dir());
  const VelocityMap vmap = load_velocity_map(config.rom_dir());
  const RomDataset dataset =
      build_dataset(load_dataset(config), basis_T, config.split_fraction, config.seed);

  ClosureParams closure =
      make_closure(ops.n_T, ops.n_u, config.hidden_widths, config.horizons, config.seed);
  fit_normalizer(dataset, ops, vmap, config.rom_dt, closure);

  const TrainResult result = train_closure(dataset, ops, vmap, closure, config.train,
                                           config.rom_dt, CheckpointPolicy{config.checkpoint_segment});

  fs::create_directories(config.closure_dir());
  save_closure(config.closure_dir(), result.params);
  std::ostringstream csv;
  csv << "epoch,train_loss,val_loss,wall_seconds\n";
  csv.precision(17);
  for (const auto& rec : result.history)
    csv << rec.epoch << ',' << rec.train_loss << ',' << rec.val_loss << ','
        << rec.wall_seconds << '\n';
  write_text_file(config.closure_dir() / "history.csv", csv.str());
  snapshot_config(config, config.closure_dir());
  if (!result.history.empty())
    std::cerr << "train: final train loss " << result.history.back().train_loss
              << ", best val loss " << [&] {
                   double best = result.history.front().val_loss;
                   for (const auto& r : result.history) best = std::min(best, r.val_loss);
                   return best;
                 }() << "\n";
}

void cmd_eval(const WorkspaceConfig& config) {
  const PodBasis basis_T = load_pod_basis(config.basis_dir() / "temperature");
  const ReducedOperators ops = load_reduced_operators(config.rom_dir());
  const VelocityMap vmap = load_velocity_map(config.rom_dir());
  const ClosureParams closure = load_closure(config.closure_dir());
  const RomDataset dataset =
      build_dataset(load_dataset(config), basis_T, config.split_fraction, config.seed);

  const EvalReport report = evaluate_model(dataset, ops, vmap, &closure, config.rom_dt);

  fs::create_directories(config.eval_dir());
  json j;
  j["mean_nrmse_corrected"] = report.mean_nrmse_corrected;
  j["mean_nrmse_uncorrected"] = report.mean_nrmse_uncorrected;
  json per = json::array();
  for (const auto& ev : report.trajectories) {
    per.push_back({{"trajectory", ev.trajectory_index},
                   {"nrmse_corrected", ev.nrmse_corrected},
                   {"nrmse_uncorrected", ev.nrmse_uncorrected}});
    const auto& traj = dataset.trajectories[static_cast<std::size_t>(ev.trajectory_index)];
    char dirname[32];
    std::snprintf(dirname, sizeof(dirname), "traj_%04d", ev.trajectory_index);
    const fs::path tdir = config.eval_dir() / dirname;
    fs::create_directories(tdir);
    for (int k = 0; k < ops.n_T; ++k) {
      std::ostringstream csv;
      csv << "t,truth,corrected,uncorrected\n";
      csv.precision(17);
      for (Eigen::Index i = 0; i < traj.times.size(); ++i)
        csv << traj.times[i] << ',' << traj.targets(i, k) << ',' << ev.corrected(i, k) << ','
            << ev.uncorrected(i, k) << '\n';
      write_text_file(tdir / ("mode_" + std::to_string(k) + ".csv"), csv.str());
    }
  }
  j["trajectories"] = per;
  write_text_file(config.eval_dir() / "eval.json", j.dump(2) + "\n");
  snapshot_config(config, config.eval_dir());
  std::cout << "eval: mean NRMSE corrected = " << report.mean_nrmse_corrected
            << ", uncorrected = " << report.mean_nrmse_uncorrected << "\n";
}

void cmd_simulate(const WorkspaceConfig& config, const SimulateOptions& options) {
  const ReducedOperators ops = load_reduced_operators(config.rom_dir());
  const VelocityMap vmap = load_velocity_map(config.rom_dir());
  const ClosureParams closure = load_closure(config.closure_dir());
  if (options.batch < 1) throw std::invalid_argument("simulate: batch must be >= 1");

  std::vector<ControlCoeffs> coeff_list;
  if (!options.coeff_file.empty()) {
    const ControlCoeffs c = coeffs_from_json(read_text_file(options.coeff_file));
    coeff_list.assign(static_cast<std::size_t>(options.batch), c);
  } else {
    for (int i = 0; i < options.batch; ++i)
      coeff_list.push_back(
          sample_coefficients(config.signal_spec, static_cast<std::uint64_t>(i)));
  }

  const long n_snaps = std::lround(config.t_end / config.snap_every) + 1;
  const fs::path out =
      options.out_dir.empty() ? config.root / "simulate" : options.out_dir;
  fs::create_directories(out);

  const auto t_start = std::chrono::steady_clock::now();
  std::vector<Eigen::MatrixXd> rollouts(coeff_list.size());
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  const unsigned n_threads =
      std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                      static_cast<unsigned>(coeff_list.size())));
  for (unsigned th = 0; th < n_threads; ++th)
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < coeff_list.size(); i = next.fetch_add(1)) {
        TrajectoryRecord traj;
        traj.coeffs = coeff_list[i];
        traj.times = Eigen::VectorXd::LinSpaced(n_snaps, 0.0,
                                                static_cast<double>(n_snaps - 1) *
                                                    config.snap_every);
        traj.targets = Eigen::MatrixXd::Zero(n_snaps, ops.n_T);  // only row 0 (zero field) used
        rollouts[i] = rollout_corrected(closure, ops, vmap, traj, config.rom_dt);
      }
    });
  for (auto& th : pool) th.join();
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    std::ostringstream csv;
    csv << "t";
    for (int k = 0; k < ops.n_T; ++k) csv << ",alpha_" << k;
    csv << "\n";
    csv.precision(17);
    for (Eigen::Index r = 0; r < rollouts[i].rows(); ++r) {
      csv << r * config.snap_every;
      for (int k = 0; k < ops.n_T; ++k) csv << ',' << rollouts[i](r, k);
      csv << '\n';
    }
    char name[32];
    std::snprintf(name, sizeof(name), "traj_%04zu.csv", i);
    write_text_file(out / name, csv.str());
  }
  std::cout << "simulate: " << coeff_list.size() << " trajectories in " << wall
            << " s (" << static_cast<double>(coeff_list.size()) / wall
            << " trajectories/s)\n";
}

}  // namespace romsuite
