// Full segmentation model: encoder -> self-constructing graph -> graph
// convolution -> fusion head, all sharing one parameter store and one tape.
#pragma once

#include "scgseg/cnn.hpp"
#include "scgseg/gcn.hpp"
#include "scgseg/head.hpp"
#include "scgseg/scg.hpp"

namespace scgseg {

struct ModelConfig {
  CnnConfig cnn;
  ScgConfig scg;
  HeadConfig head;
  GcnNorm gcn_norm = GcnNorm::symmetric;

  int deep_channels() const { return 8 * cnn.base_channels; }
};

template <typename S>
void build_model(const ModelConfig& cfg, ParamStore<S>& store, Rng& rng) {
  build_cnn(cfg.cnn, store, rng);
  build_scg(cfg.scg, cfg.deep_channels(), store, rng);
  build_gcn(cfg.scg.latent_dim, cfg.head.fuse_channels, store, rng);
  const int b = cfg.cnn.base_channels;
  build_head(cfg.head, cfg.head.fuse_channels, 4 * b, 2 * b, b, store, rng);
}

struct ModelOutputs {
  Var prob;      // {B,1,S,S} in (0,1)
  Var aux_prob;  // {B,1,S,S} in (0,1), encoder's deep-supervision map
  GraphVars graph;
};

template <typename S>
ModelOutputs model_forward(Tape<S>& t, Var batch, ParamStore<S>& store,
                           const ModelConfig& cfg, const RunMode& mode) {
  ModelOutputs out;
  CnnOutputs enc = cnn_forward(t, batch, store, cfg.cnn, mode);
  out.aux_prob = enc.aux_prob;
  out.graph = scg_forward(t, enc.deep, store, cfg.scg, mode);
  Var a_hat = normalize_adjacency(t, out.graph.A, cfg.gcn_norm);
  Var nodes = gcn_forward(t, a_hat, out.graph.Z, store, Activation::relu);
  Var grid = nodes_to_grid(t, nodes, cfg.scg.node_h, cfg.scg.node_w);
  out.prob = head_forward(t, grid, enc.skip1, enc.skip2, enc.skip3, store,
                          cfg.head, mode);
  return out;
}

}  // namespace scgseg
