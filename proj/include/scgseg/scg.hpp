// Self-constructing graph: pool the deep feature map onto a node grid, encode
// a variational latent embedding per node, and decode a weighted adjacency
// with a KL and a diagonal-log regularizer. The KL keeps the source's exact
// form including its (log sigma)^2 term, which differs from the classical VAE
// expression log(sigma^2); kl_loss therefore has no non-negativity guarantee.
#pragma once

#include <string>

#include "scgseg/cnn.hpp"  // RunMode
#include "scgseg/ops_core.hpp"
#include "scgseg/ops_nn.hpp"

namespace scgseg {

struct ScgConfig {
  int node_h = 16, node_w = 16;  // n = node_h * node_w
  int latent_dim = 128;
  double epsilon = 1e-7;

  int node_count() const { return node_h * node_w; }
};

// Bound on |log sigma| before exponentiation; beyond it exp would leave
// single-precision range anyway and gradients are dead.
inline constexpr double kLogSigmaClamp = 10.0;

template <typename S>
void build_scg(const ScgConfig& cfg, int deep_channels, ParamStore<S>& store,
               Rng& rng) {
  if (cfg.node_h < 1 || cfg.node_w < 1 || cfg.latent_dim < 1)
    throw ValidationError("scg: node grid and latent_dim must be positive");
  if (cfg.epsilon <= 0.0)
    throw ValidationError("scg: epsilon must be positive");
  const int c = cfg.latent_dim, d = deep_channels;
  store.add("scg.mu.w", kaiming_normal<S>({c, d, 3, 3}, d * 9, rng));
  store.add("scg.mu.b", Tensor<S>::zeros({c}));
  store.add("scg.logsig.w", kaiming_normal<S>({c, d, 1, 1}, d, rng));
  store.add("scg.logsig.b", Tensor<S>::zeros({c}));
}

template <typename S>
Var pool_features(Tape<S>& t, Var deep, const ScgConfig& cfg) {
  return adaptive_avg_pool(t, deep, cfg.node_h, cfg.node_w);
}

// 3x3 conv for the mean, 1x1 conv for log sigma, both flattened to node rows.
template <typename S>
std::pair<Var, Var> encode_latent(Tape<S>& t, Var pooled,
                                  ParamStore<S>& store) {
  Var m = conv2d(t, pooled, t.param(store, "scg.mu.w"),
                 t.param(store, "scg.mu.b"));
  Var ls = conv2d(t, pooled, t.param(store, "scg.logsig.w"),
                  t.param(store, "scg.logsig.b"));
  return {grid_to_nodes(t, m), grid_to_nodes(t, ls)};
}

// Z = M + exp(log_sigma) * noise in training; Z = M at evaluation.
template <typename S>
Var reparameterize(Tape<S>& t, Var M, Var log_sigma, Var noise,
                   bool train_mode) {
  if (!train_mode) return M;
  if (!t.val(noise).same_shape(t.val(M)))
    throw ShapeError("reparameterize: noise " + shape_str(t.val(noise).shape) +
                     " vs M " + shape_str(t.val(M).shape));
  Var sig = exp(t, clamp(t, log_sigma, -kLogSigmaClamp, kLogSigmaClamp));
  return add(t, M, mul(t, sig, noise));
}

// -(1/(2nc)) * sum_ij (1 + log(S_ij)^2 - M_ij^2 - S_ij^2), batch-averaged.
template <typename S>
Var kl_loss(Tape<S>& t, Var M, Var log_sigma) {
  const auto& vm = t.val(M);
  require_rank(vm, 3, "kl_loss M");
  if (!vm.same_shape(t.val(log_sigma)))
    throw ShapeError("kl_loss: M " + shape_str(vm.shape) + " vs log_sigma " +
                     shape_str(t.val(log_sigma).shape));
  const int n = vm.dim(1), c = vm.dim(2);
  Var ls = clamp(t, log_sigma, -kLogSigmaClamp, kLogSigmaClamp);
  Var term = sub(t, add_const(t, square(t, ls), 1.0),
                 add(t, square(t, M), exp(t, scale(t, ls, 2.0))));
  Var per_b = scale(t, sum_batch(t, term), -1.0 / (2.0 * n * c));
  return mean(t, per_b);
}

template <typename S>
Var build_adjacency(Tape<S>& t, Var Z) {
  require_rank(t.val(Z), 3, "build_adjacency Z");
  return relu(t, bmm_nt(t, Z, Z));
}

// factor = sqrt(1 + n/(trace + eps)); dl = -(factor/n^2) * sum_i
// log(clamp(A_ii,0,1) + eps). Returned per batch element; the scalar loss
// averages them.
template <typename S>
struct DiagLogResult {
  Var dl;        // scalar, batch mean
  Var factor;    // scalar, batch mean (reported in GraphState)
  Var factor_b;  // {B}, per-element factors feeding the enhancement
};

template <typename S>
DiagLogResult<S> diagonal_log_loss(Tape<S>& t, Var A_raw, double epsilon) {
  const auto& va = t.val(A_raw);
  require_rank(va, 3, "diagonal_log_loss A");
  if (va.dim(1) != va.dim(2))
    throw ShapeError("diagonal_log_loss: adjacency must be square, got " +
                     shape_str(va.shape));
  const int n = va.dim(1);
  Var diag = diag_part(t, A_raw);                    // {B,n}
  Var trace = sum_batch(t, diag);                    // {B}
  Var factor_b = sqrt(
      t, add_const(t, scale(t, reciprocal(t, add_const(t, trace, epsilon)),
                            double(n)),
                   1.0));
  Var logs = log(t, add_const(t, clamp(t, diag, 0.0, 1.0), epsilon));
  Var dl_b = scale(t, mul(t, factor_b, sum_batch(t, logs)),
                   -1.0 / (double(n) * n));
  return {mean(t, dl_b), mean(t, factor_b), factor_b};
}

// A = A_raw + factor * diag_matrix(diag(A_raw)); off-diagonals untouched.
template <typename S>
Var enhance_adjacency(Tape<S>& t, Var A_raw, Var factor_b) {
  Var de = diag_embed(t, diag_part(t, A_raw));
  return add(t, A_raw, mul_bscalar(t, de, factor_b));
}

struct GraphVars {
  Var Z;          // {B,n,c}
  Var A_raw;      // {B,n,n}, pre-enhancement
  Var A;          // {B,n,n}, enhanced
  Var M;          // {B,n,c}
  Var log_sigma;  // {B,n,c}
  Var kl;         // scalar
  Var dl;         // scalar
  Var factor;     // scalar (batch mean of the adaptive factors)
};

template <typename S>
GraphVars scg_forward(Tape<S>& t, Var deep, ParamStore<S>& store,
                      const ScgConfig& cfg, const RunMode& mode) {
  GraphVars g;
  Var pooled = pool_features(t, deep, cfg);
  auto [M, ls] = encode_latent(t, pooled, store);
  g.M = M;
  g.log_sigma = ls;
  if (mode.train) {
    if (mode.rng == nullptr)
      throw ValidationError("training-mode forward requires an RNG");
    const auto& vm = t.val(M);
    Tensor<S> noise(vm.shape);
    for (std::int64_t i = 0; i < noise.size(); ++i)
      noise.data[i] = static_cast<S>(mode.rng->normal());
    g.Z = reparameterize(t, M, ls, t.constant(std::move(noise)), true);
  } else {
    g.Z = reparameterize(t, M, ls, Var{}, false);
  }
  g.A_raw = build_adjacency(t, g.Z);
  g.kl = kl_loss(t, M, ls);
  auto dl = diagonal_log_loss(t, g.A_raw, cfg.epsilon);
  g.dl = dl.dl;
  g.factor = dl.factor;
  g.A = enhance_adjacency(t, g.A_raw, dl.factor_b);
  return g;
}

}  // namespace scgseg
