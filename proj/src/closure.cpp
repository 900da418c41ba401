#include "romsuite/closure.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace romsuite {

namespace {

std::atomic<long> g_param_reads{0};

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double uniform_pm1(std::uint64_t& state) {
  return 2.0 * (static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53) - 1.0;
}

Eigen::VectorXd tile(const Eigen::VectorXd& x, int horizons) {
  Eigen::VectorXd out(x.size() * horizons);
  for (int c = 0; c < horizons; ++c) out.segment(c * x.size(), x.size()) = x;
  return out;
}

}  // namespace

MemoryParams MemoryParams::log_spaced(int horizons, int input_dim) {
  if (horizons < 1 || input_dim < 1)
    throw std::invalid_argument("MemoryParams: horizons and input_dim must be positive");
  MemoryParams m;
  m.horizons = horizons;
  m.input_dim = input_dim;
  m.theta_lambda.resize(horizons * input_dim);
  for (int c = 0; c < horizons; ++c) {
    const double timescale = std::pow(4.0, c);
    m.theta_lambda.segment(c * input_dim, input_dim).setConstant(-std::log(timescale));
  }
  return m;
}

long MlpParams::param_count() const {
  long n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += weights[l].size() + biases[l].size();
  return n;
}

MlpParams MlpParams::zeros(const std::vector<int>& widths) {
  if (widths.size() < 2) throw std::invalid_argument("MlpParams: need input and output widths");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    p.weights.emplace_back(Eigen::MatrixXd::Zero(widths[l + 1], widths[l]));
    p.biases.emplace_back(Eigen::VectorXd::Zero(widths[l + 1]));
  }
  return p;
}

Normalizer Normalizer::identity(int in_dim, int out_dim) {
  Normalizer n;
  n.in_shift = Eigen::VectorXd::Zero(in_dim);
  n.in_scale = Eigen::VectorXd::Ones(in_dim);
  n.out_shift = Eigen::VectorXd::Zero(out_dim);
  n.out_scale = Eigen::VectorXd::Ones(out_dim);
  return n;
}

Eigen::VectorXd ClosureParams::flatten() const {
  Eigen::VectorXd flat(param_count());
  long pos = 0;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    const auto& W = mlp.weights[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) flat[pos++] = W(i, j);
    flat.segment(pos, mlp.biases[l].size()) = mlp.biases[l];
    pos += mlp.biases[l].size();
  }
  flat.segment(pos, memory.dim()) = memory.theta_lambda;
  return flat;
}

void ClosureParams::unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != param_count())
    throw std::invalid_argument("ClosureParams::unflatten: length mismatch");
  long pos = 0;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    auto& W = mlp.weights[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = flat[pos++];
    mlp.biases[l] = flat.segment(pos, mlp.biases[l].size());
    pos += mlp.biases[l].size();
  }
  memory.theta_lambda = flat.segment(pos, memory.dim());
}

ClosureParams make_closure(int n_T, int n_u, const std::vector<int>& hidden, int horizons,
                           std::uint64_t seed) {
  ClosureParams cp;
  cp.memory = MemoryParams::log_spaced(horizons, n_T + 1);
  const int in_dim = n_T + n_u + 1 + cp.memory.dim();

  std::vector<int> widths;
  widths.push_back(in_dim);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(n_T);
  cp.mlp = MlpParams::zeros(widths);

  std::uint64_t state = seed ^ 0xA3C59AC2ED9B81ULL;
  splitmix64(state);
  for (std::size_t l = 0; l < cp.mlp.weights.size(); ++l) {
    auto& W = cp.mlp.weights[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = bound * uniform_pm1(state);
  }
  cp.normalizer = Normalizer::identity(in_dim, n_T);
  return cp;
}

Eigen::VectorXd memory_rhs(const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                           const MemoryParams& memory) {
  if (y.size() != memory.dim() || x.size() != memory.input_dim)
    throw std::invalid_argument("memory_rhs: dimension mismatch");
  return (-memory.theta_lambda.array().exp() * y.array()).matrix() + tile(x, memory.horizons);
}

Eigen::VectorXd init_memory(const Eigen::VectorXd& x0, const MemoryParams& memory) {
  if (x0.size() != memory.input_dim)
    throw std::invalid_argument("init_memory: dimension mismatch");
  return (tile(x0, memory.horizons).array() * (-memory.theta_lambda).array().exp()).matrix();
}

namespace {

// Forward pass keeping post-activation values for the backward sweep.
struct MlpTrace {
  Eigen::VectorXd normalized_input;
  std::vector<Eigen::VectorXd> hidden;  // tanh outputs, one per hidden layer
  Eigen::VectorXd output;               // after output rescaling
};

MlpTrace mlp_forward_trace(const MlpParams& mlp, const Normalizer& norm,
                           const Eigen::VectorXd& input) {
  if (input.size() != mlp.input_dim())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  if (!input.allFinite()) throw std::invalid_argument("mlp_forward: non-finite input");
  MlpTrace tr;
  tr.normalized_input =
      ((input - norm.in_shift).array() / norm.in_scale.array()).matrix();
  const Eigen::VectorXd* h = &tr.normalized_input;
  const std::size_t n_layers = mlp.weights.size();
  tr.hidden.reserve(n_layers - 1);
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    tr.hidden.push_back((mlp.weights[l] * (*h) + mlp.biases[l]).array().tanh().matrix());
    h = &tr.hidden.back();
  }
  const Eigen::VectorXd raw = mlp.weights.back() * (*h) + mlp.biases.back();
  tr.output = (norm.out_scale.array() * raw.array()).matrix() + norm.out_shift;
  return tr;
}

// Reverse pass: writes d(cot . output)/d(input) and accumulates parameter
// gradients into the leading MLP block of grad_params (flat layout).
Eigen::VectorXd mlp_vjp(const MlpParams& mlp, const Normalizer& norm, const MlpTrace& tr,
                        const Eigen::VectorXd& cotangent,
                        Eigen::Ref<Eigen::VectorXd> grad_params) {
  const std::size_t n_layers = mlp.weights.size();

  // Byte offsets of each layer inside the flat layout.
  std::vector<long> offsets(n_layers);
  long pos = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offsets[l] = pos;
    pos += mlp.weights[l].size() + mlp.biases[l].size();
  }

  Eigen::VectorXd g = (norm.out_scale.array() * cotangent.array()).matrix();
  for (std::size_t l = n_layers; l-- > 0;) {
    const Eigen::VectorXd& layer_in =
        (l == 0) ? tr.normalized_input : tr.hidden[l - 1];
    // grad W (row-major) then grad b.
    long w_pos = offsets[l];
    for (Eigen::Index i = 0; i < mlp.weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < mlp.weights[l].cols(); ++j)
        grad_params[w_pos++] += g[i] * layer_in[j];
    grad_params.segment(w_pos, g.size()) += g;

    Eigen::VectorXd g_in = mlp.weights[l].transpose() * g;
    if (l > 0)  // through tanh of the producing layer
      g = (g_in.array() * (1.0 - tr.hidden[l - 1].array().square())).matrix();
    else
      g = g_in;
  }
  return (g.array() / norm.in_scale.array()).matrix();
}

}  // namespace

Eigen::VectorXd mlp_forward(const MlpParams& mlp, const Normalizer& normalizer,
                            const Eigen::VectorXd& alpha_T, const Eigen::VectorXd& alpha_u,
                            double S, const Eigen::VectorXd& y) {
  Eigen::VectorXd input(alpha_T.size() + alpha_u.size() + 1 + y.size());
  input << alpha_T, alpha_u, S, y;
  return mlp_forward_trace(mlp, normalizer, input).output;
}

RomOnlySystem::RomOnlySystem(const ReducedOperators& ops, const VelocityMap& vmap,
                             SignalFn signal)
    : ops_(ops), vmap_(vmap), signal_(std::move(signal)) {}

void RomOnlySystem::rhs(double t, const Eigen::VectorXd& z, Eigen::VectorXd& out) const {
  const double S = signal_(t);
  out = eval_reduced_rhs(z, predict_velocity(vmap_, z, S), ops_);
}

void RomOnlySystem::vjp(double t, const Eigen::VectorXd& z, const Eigen::VectorXd& cotangent,
                        Eigen::VectorXd& grad_z, Eigen::Ref<Eigen::VectorXd>) const {
  const double S = signal_(t);
  const Eigen::VectorXd alpha_u = predict_velocity(vmap_, z, S);
  grad_z = ops_.L_red.transpose() * cotangent;
  Eigen::VectorXd g_alpha_u(ops_.n_u);
  for (int k = 0; k < ops_.n_u; ++k) {
    const auto& A = ops_.A_red[static_cast<std::size_t>(k)];
    grad_z.noalias() -= alpha_u[k] * (A.transpose() * cotangent);
    g_alpha_u[k] = -cotangent.dot(A * z);
  }
  grad_z.noalias() += vmap_.W.leftCols(ops_.n_T).transpose() * g_alpha_u;
}

CoupledSystem::CoupledSystem(const ClosureParams& closure, const ReducedOperators& ops,
                             const VelocityMap& vmap, SignalFn signal)
    : closure_(closure), ops_(ops), vmap_(vmap), signal_(std::move(signal)) {
  if (closure.memory.input_dim != ops.n_T + 1)
    throw std::invalid_argument("CoupledSystem: memory input_dim must be n_T + 1");
  if (closure.mlp.input_dim() != ops.n_T + ops.n_u + 1 + closure.memory.dim() ||
      closure.mlp.output_dim() != ops.n_T)
    throw std::invalid_argument("CoupledSystem: network width inconsistent with ROM dims");
}

Eigen::VectorXd CoupledSystem::initial_state(const Eigen::VectorXd& alpha_T0, double S0) const {
  Eigen::VectorXd x0(ops_.n_T + 1);
  x0 << alpha_T0, S0;
  Eigen::VectorXd z(dim());
  z << alpha_T0, init_memory(x0, closure_.memory);
  return z;
}

void CoupledSystem::rhs(double t, const Eigen::VectorXd& z, Eigen::VectorXd& out) const {
  g_param_reads.fetch_add(1, std::memory_order_relaxed);
  const int n_T = ops_.n_T;
  const int m = closure_.memory.dim();
  if (z.size() != n_T + m) throw std::invalid_argument("CoupledSystem::rhs: state size mismatch");

  const double S = signal_(t);
  const auto alpha = z.head(n_T);
  const auto y = z.tail(m);
  const Eigen::VectorXd alpha_u = predict_velocity(vmap_, alpha, S);

  Eigen::VectorXd nn_in(closure_.mlp.input_dim());
  nn_in << alpha, alpha_u, S, y;
  const MlpTrace tr = mlp_forward_trace(closure_.mlp, closure_.normalizer, nn_in);

  Eigen::VectorXd x(n_T + 1);
  x << alpha, S;
  out.resize(n_T + m);
  out.head(n_T) = eval_reduced_rhs(alpha, alpha_u, ops_) + tr.output;
  out.tail(m) = memory_rhs(y, x, closure_.memory);
}

void CoupledSystem::vjp(double t, const Eigen::VectorXd& z, const Eigen::VectorXd& cotangent,
                        Eigen::VectorXd& grad_z, Eigen::Ref<Eigen::VectorXd> grad_params) const {
  g_param_reads.fetch_add(1, std::memory_order_relaxed);
  const int n_T = ops_.n_T;
  const int n_u = ops_.n_u;
  const int m = closure_.memory.dim();
  const int d = closure_.memory.input_dim;
  if (z.size() != n_T + m || cotangent.size() != n_T + m)
    throw std::invalid_argument("CoupledSystem::vjp: dimension mismatch");

  const double S = signal_(t);
  const Eigen::VectorXd alpha = z.head(n_T);
  const Eigen::VectorXd y = z.tail(m);
  const Eigen::VectorXd alpha_u = predict_velocity(vmap_, alpha, S);
  const Eigen::VectorXd a = cotangent.head(n_T);  // cotangent on d(alpha)/dt
  const Eigen::VectorXd b = cotangent.tail(m);    // cotangent on dy/dt

  // Reducible part: bilinear in (alpha, alpha_u).
  Eigen::VectorXd g_alpha = ops_.L_red.transpose() * a;
  Eigen::VectorXd g_alpha_u(n_u);
  for (int k = 0; k < n_u; ++k) {
    const auto& A = ops_.A_red[static_cast<std::size_t>(k)];
    g_alpha.noalias() -= alpha_u[k] * (A.transpose() * a);
    g_alpha_u[k] = -a.dot(A * alpha);
  }

  // Network: input grads split back onto alpha, alpha_u and y.
  Eigen::VectorXd nn_in(closure_.mlp.input_dim());
  nn_in << alpha, alpha_u, S, y;
  const MlpTrace tr = mlp_forward_trace(closure_.mlp, closure_.normalizer, nn_in);
  const Eigen::VectorXd g_nn_in =
      mlp_vjp(closure_.mlp, closure_.normalizer, tr, a, grad_params);
  g_alpha += g_nn_in.head(n_T);
  g_alpha_u += g_nn_in.segment(n_T, n_u);
  Eigen::VectorXd g_y = g_nn_in.tail(m);

  // alpha_u = W [alpha; S] + b is itself a function of alpha.
  g_alpha.noalias() += vmap_.W.leftCols(n_T).transpose() * g_alpha_u;

  // Memory block: decay term plus the tiled-input adjoint.
  const Eigen::VectorXd lambda = closure_.memory.theta_lambda.array().exp().matrix();
  g_y.array() += -lambda.array() * b.array();
  for (int c = 0; c < closure_.memory.horizons; ++c)
    g_alpha += b.segment(c * d, n_T);

  grad_z.resize(n_T + m);
  grad_z << g_alpha, g_y;

  // theta_lambda gradient, at the tail of the flat layout.
  grad_params.tail(m).array() += -lambda.array() * y.array() * b.array();
}

long CoupledSystem::parameter_read_count() { return g_param_reads.load(); }

}  // namespace romsuite
