// Fusion head: project node embeddings back onto the spatial grid and climb
// from 1/8 scale to full resolution through three concat-and-convolve stages.
//
// The stage pattern "concat -> conv -> ReLU -> 2x upsample -> dropout" only
// meets the skip sizes (1/4, 1/2, 1/1) if the graph map is first doubled to
// 1/4 scale, so the head applies one bilinear pre-upsample, runs the full
// pattern twice, and omits the upsample in the last stage, which already sits
// at full resolution. A final 1x1 convolution and sigmoid produce the mask
// probabilities.
#pragma once

#include <string>

#include "scgseg/cnn.hpp"
#include "scgseg/ops_nn.hpp"

namespace scgseg {

struct HeadConfig {
  int fuse_channels = 16;
  double dropout_p = 0.6;
  double threshold = 0.5;
};

// skip3/skip2/skip1 channel widths come from the encoder (4b, 2b, b).
template <typename S>
void build_head(const HeadConfig& cfg, int graph_channels, int skip3_ch,
                int skip2_ch, int skip1_ch, ParamStore<S>& store, Rng& rng) {
  if (cfg.fuse_channels < 1)
    throw ValidationError("head: fuse_channels must be positive");
  if (cfg.threshold <= 0.0 || cfg.threshold >= 1.0)
    throw ValidationError("head: threshold must lie in (0,1)");
  const int fc = cfg.fuse_channels;
  const int ins[3] = {graph_channels + skip3_ch, fc + skip2_ch,
                      fc + skip1_ch};
  for (int i = 0; i < 3; ++i) {
    const std::string name = "head.fuse" + std::to_string(i + 1);
    store.add(name + ".w", kaiming_normal<S>({fc, ins[i], 3, 3},
                                             ins[i] * 9, rng));
    store.add(name + ".b", Tensor<S>::zeros({fc}));
  }
  store.add("head.out.w", kaiming_normal<S>({1, fc, 1, 1}, fc, rng));
  store.add("head.out.b", Tensor<S>::zeros({1}));
}

namespace detail {
template <typename S>
Var fuse_stage(Tape<S>& t, Var x, Var skip, ParamStore<S>& store, int stage) {
  const auto& vx = t.val(x);
  const auto& vs = t.val(skip);
  if (vx.dim(2) != vs.dim(2) || vx.dim(3) != vs.dim(3))
    throw ShapeError("head stage " + std::to_string(stage) + ": feature " +
                     std::to_string(vx.dim(2)) + "x" +
                     std::to_string(vx.dim(3)) + " vs skip " +
                     std::to_string(vs.dim(2)) + "x" +
                     std::to_string(vs.dim(3)));
  const std::string name = "head.fuse" + std::to_string(stage);
  Var y = concat_channels(t, x, skip);
  y = conv2d(t, y, t.param(store, name + ".w"),
             t.param(store, name + ".b"));
  return relu(t, y);
}
}  // namespace detail

// graph_map: {B,c,hg,wg} node features on their grid; skips deepest-first
// consumption (skip3 at 1/4, skip2 at 1/2, skip1 at full scale).
template <typename S>
Var head_forward(Tape<S>& t, Var graph_map, Var skip1, Var skip2, Var skip3,
                 ParamStore<S>& store, const HeadConfig& cfg,
                 const RunMode& mode) {
  using detail::fuse_stage;
  using detail::maybe_dropout;
  const int S_ = t.val(skip1).dim(2);
  if (S_ % 8 != 0)
    throw ShapeError("head: full-resolution skip size " + std::to_string(S_) +
                     " is not divisible by 8");

  // Align a coarse node grid to 1/8 scale, then double into stage 1.
  Var x = graph_map;
  if (t.val(x).dim(2) != S_ / 8 || t.val(x).dim(3) != S_ / 8)
    x = bilinear_resize(t, x, S_ / 8, S_ / 8);
  x = bilinear_resize(t, x, S_ / 4, S_ / 4);

  x = fuse_stage(t, x, skip3, store, 1);
  x = bilinear_resize(t, x, S_ / 2, S_ / 2);
  x = maybe_dropout(t, x, cfg.dropout_p, mode);

  x = fuse_stage(t, x, skip2, store, 2);
  x = bilinear_resize(t, x, S_, S_);
  x = maybe_dropout(t, x, cfg.dropout_p, mode);

  x = fuse_stage(t, x, skip1, store, 3);
  x = maybe_dropout(t, x, cfg.dropout_p, mode);

  x = conv2d(t, x, t.param(store, "head.out.w"),
             t.param(store, "head.out.b"));
  return sigmoid(t, x);
}

// prob >= threshold -> 1, else 0; {B,1,S,S} -> {B,S,S}.
template <typename S>
Tensor<S> predict_mask(const Tensor<S>& prob, double threshold) {
  require_rank(prob, 4, "predict_mask prob");
  if (prob.dim(1) != 1)
    throw ShapeError("predict_mask expects 1 channel, got " +
                     std::to_string(prob.dim(1)));
  Tensor<S> mask({prob.dim(0), prob.dim(2), prob.dim(3)});
  for (std::int64_t i = 0; i < mask.size(); ++i)
    mask.data[i] = prob.data[i] >= static_cast<S>(threshold) ? S(1) : S(0);
  return mask;
}

}  // namespace scgseg
