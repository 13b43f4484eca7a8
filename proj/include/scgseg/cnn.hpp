// Convolutional encoder: a VGG-flavoured trunk that emits three skip features
// (full, 1/2, 1/4 scale), a deep feature map at 1/8 scale for the graph
// module, and a coarse auxiliary probability map used for deep supervision.
//
// Block map (base b = 16): 14 convolutions, 3 pools.
//   block 1  conv1 1->b,  conv2 b->b,   conv3 b->b    | dropout -> skip1 | pool
//   block 2  conv4 b->2b, conv5 2b->2b, conv6 2b->2b  | dropout -> skip2 | pool
//   block 3  conv7 2b->4b, conv8..conv10 4b->4b       | dropout -> skip3 | pool
//   block 4  conv11 4b->8b                            -> deep (1/8 scale)
//   aux path conv12 1x1 8b->b, bilinear x8, concat skip1,
//            conv13 3x3 2b->b, conv14 1x1 b->1, sigmoid -> aux_prob
// Every conv except the final 1-channel conv14 is followed by ReLU then batch
// norm; conv14's activation is the sigmoid itself.
#pragma once

#include <string>
#include <vector>

#include "scgseg/ops_nn.hpp"
#include "scgseg/params.hpp"
#include "scgseg/tape.hpp"

namespace scgseg {

struct CnnConfig {
  int base_channels = 16;
  int input_size = 512;
  double dropout_p = 0.6;
};

// Per-forward switches shared by every module: dropout and batch-norm batch
// statistics follow `train`; running-stat writes can be pinned off so that
// gradient checks may replay a training-mode forward without side effects.
struct RunMode {
  bool train = false;
  bool update_running = true;
  Rng* rng = nullptr;  // noise source; required when train is true

  static RunMode eval() { return {false, false, nullptr}; }
  static RunMode training(Rng& r) { return {true, true, &r}; }
};

struct ConvSpec {
  std::string name;
  int in_ch, out_ch, kernel;
  bool bn;  // conv14 carries the sigmoid instead
};

// Single source of truth for the encoder architecture; build and forward both
// walk this table, and the structural tests count it.
inline std::vector<ConvSpec> cnn_conv_table(const CnnConfig& cfg) {
  const int b = cfg.base_channels;
  return {
      {"conv1", 1, b, 3, true},          {"conv2", b, b, 3, true},
      {"conv3", b, b, 3, true},          {"conv4", b, 2 * b, 3, true},
      {"conv5", 2 * b, 2 * b, 3, true},  {"conv6", 2 * b, 2 * b, 3, true},
      {"conv7", 2 * b, 4 * b, 3, true},  {"conv8", 4 * b, 4 * b, 3, true},
      {"conv9", 4 * b, 4 * b, 3, true},  {"conv10", 4 * b, 4 * b, 3, true},
      {"conv11", 4 * b, 8 * b, 3, true}, {"conv12", 8 * b, b, 1, true},
      {"conv13", 2 * b, b, 3, true},     {"conv14", b, 1, 1, false},
  };
}

inline int cnn_conv_count(const CnnConfig& cfg) {
  return static_cast<int>(cnn_conv_table(cfg).size());
}
inline int cnn_pool_count(const CnnConfig&) { return 3; }

template <typename S>
void build_cnn(const CnnConfig& cfg, ParamStore<S>& store, Rng& rng) {
  if (cfg.base_channels < 1)
    throw ValidationError("base_channels must be >= 1, got " +
                          std::to_string(cfg.base_channels));
  if (cfg.dropout_p < 0.0 || cfg.dropout_p >= 1.0)
    throw ValidationError("dropout_p must lie in [0,1)");
  for (const auto& c : cnn_conv_table(cfg)) {
    const int fan_in = c.in_ch * c.kernel * c.kernel;
    store.add("cnn." + c.name + ".w",
              kaiming_normal<S>({c.out_ch, c.in_ch, c.kernel, c.kernel},
                                fan_in, rng));
    store.add("cnn." + c.name + ".b", Tensor<S>::zeros({c.out_ch}));
    if (c.bn) {
      store.add("cnn." + c.name + ".bn.gamma",
                Tensor<S>::full({c.out_ch}, S(1)));
      store.add("cnn." + c.name + ".bn.beta", Tensor<S>::zeros({c.out_ch}));
      store.add("cnn." + c.name + ".bn.rmean", Tensor<S>::zeros({c.out_ch}),
                /*trainable=*/false);
      store.add("cnn." + c.name + ".bn.rvar",
                Tensor<S>::full({c.out_ch}, S(1)), /*trainable=*/false);
    }
  }
}

namespace detail {
// conv -> ReLU -> batch norm; normalization deliberately follows the
// activation here, unlike the more common conv-bn-relu ordering.
template <typename S>
Var conv_block(Tape<S>& t, Var x, ParamStore<S>& store,
               const std::string& name, const RunMode& mode) {
  Var y = conv2d(t, x, t.param(store, "cnn." + name + ".w"),
                 t.param(store, "cnn." + name + ".b"));
  y = relu(t, y);
  return batch_norm2d(t, y, t.param(store, "cnn." + name + ".bn.gamma"),
                      t.param(store, "cnn." + name + ".bn.beta"), store,
                      store.id("cnn." + name + ".bn.rmean"),
                      store.id("cnn." + name + ".bn.rvar"), mode.train,
                      mode.train && mode.update_running);
}

template <typename S>
Var maybe_dropout(Tape<S>& t, Var x, double p, const RunMode& mode) {
  if (!mode.train || p == 0.0) return x;
  if (mode.rng == nullptr)
    throw ValidationError("training-mode forward requires an RNG");
  return dropout(t, x, p, *mode.rng, true);
}
}  // namespace detail

struct CnnOutputs {
  Var skip1, skip2, skip3;  // full, 1/2, 1/4 scale
  Var deep;                 // 1/8 scale, 8*base channels
  Var aux_prob;             // full scale, 1 channel, sigmoid
};

template <typename S>
CnnOutputs cnn_forward(Tape<S>& t, Var batch, ParamStore<S>& store,
                       const CnnConfig& cfg, const RunMode& mode) {
  const auto& v = t.val(batch);
  require_rank(v, 4, "cnn input");
  if (v.dim(1) != 1)
    throw ShapeError("cnn input must have 1 channel, got " +
                     std::to_string(v.dim(1)));
  const int S_ = v.dim(2);
  if (v.dim(3) != S_)
    throw ShapeError("cnn input must be square, got " +
                     std::to_string(S_) + "x" + std::to_string(v.dim(3)));
  if (S_ % 8 != 0)
    throw ShapeError("cnn input size " + std::to_string(S_) +
                     " is not divisible by 8");

  using detail::conv_block;
  using detail::maybe_dropout;
  CnnOutputs out;

  Var x = conv_block(t, batch, store, "conv1", mode);
  x = conv_block(t, x, store, "conv2", mode);
  x = conv_block(t, x, store, "conv3", mode);
  x = maybe_dropout(t, x, cfg.dropout_p, mode);
  out.skip1 = x;
  x = max_pool2(t, x);

  x = conv_block(t, x, store, "conv4", mode);
  x = conv_block(t, x, store, "conv5", mode);
  x = conv_block(t, x, store, "conv6", mode);
  x = maybe_dropout(t, x, cfg.dropout_p, mode);
  out.skip2 = x;
  x = max_pool2(t, x);

  x = conv_block(t, x, store, "conv7", mode);
  x = conv_block(t, x, store, "conv8", mode);
  x = conv_block(t, x, store, "conv9", mode);
  x = conv_block(t, x, store, "conv10", mode);
  x = maybe_dropout(t, x, cfg.dropout_p, mode);
  out.skip3 = x;
  x = max_pool2(t, x);

  out.deep = conv_block(t, x, store, "conv11", mode);

  // Auxiliary supervision path: squeeze channels first so the x8 upsample and
  // full-resolution convolutions stay cheap.
  Var a = conv_block(t, out.deep, store, "conv12", mode);
  a = bilinear_resize(t, a, S_, S_);
  a = concat_channels(t, a, out.skip1);
  a = conv_block(t, a, store, "conv13", mode);
  a = conv2d(t, a, t.param(store, "cnn.conv14.w"),
             t.param(store, "cnn.conv14.b"));
  out.aux_prob = sigmoid(t, a);
  return out;
}

}  // namespace scgseg
