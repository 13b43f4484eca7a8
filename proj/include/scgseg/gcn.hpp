// One graph-convolution layer over the self-constructed adjacency:
// Z' = activation(A_hat * Z * theta + bias).
//
// The default normalization is the symmetric D^(-1/2) (A+I) D^(-1/2) of the
// standard GCN formulation. The source text prints a trailing D^(+1/2); that
// form is exposed as `literal` for comparison rather than silently dropped,
// and a row-stochastic D^(-1) (A+I) variant serves as a degree-computation
// cross-check in the tests.
#pragma once

#include <string>

#include "scgseg/cnn.hpp"  // RunMode
#include "scgseg/ops_core.hpp"

namespace scgseg {

enum class GcnNorm { symmetric, literal, row_stochastic };

inline GcnNorm parse_gcn_norm(const std::string& s) {
  if (s == "symmetric") return GcnNorm::symmetric;
  if (s == "literal") return GcnNorm::literal;
  if (s == "row_stochastic") return GcnNorm::row_stochastic;
  throw ConfigError("unknown gcn normalization '" + s +
                    "' (expected symmetric, literal, or row_stochastic)");
}

inline const char* gcn_norm_name(GcnNorm n) {
  switch (n) {
    case GcnNorm::symmetric: return "symmetric";
    case GcnNorm::literal: return "literal";
    default: return "row_stochastic";
  }
}

enum class Activation { relu, identity };

template <typename S>
void build_gcn(int c_in, int c_out, ParamStore<S>& store, Rng& rng) {
  if (c_in < 1 || c_out < 1)
    throw ValidationError("gcn: channel counts must be positive");
  store.add("gcn.theta", kaiming_normal<S>({c_in, c_out}, c_in, rng));
  store.add("gcn.bias", Tensor<S>::zeros({c_out}));
}

// A_hat from A (batched {B,n,n}): degrees are row sums of A+I.
template <typename S>
Var normalize_adjacency(Tape<S>& t, Var A,
                        GcnNorm norm = GcnNorm::symmetric) {
  const auto& va = t.val(A);
  require_rank(va, 3, "normalize_adjacency A");
  if (va.dim(1) != va.dim(2))
    throw ShapeError("normalize_adjacency: adjacency must be square, got " +
                     shape_str(va.shape));
  for (std::int64_t i = 0; i < va.size(); ++i)
    if (va.data[i] < S(0))
      throw ValidationError(
          "normalize_adjacency: negative adjacency entry " +
          std::to_string(static_cast<double>(va.data[i])));
  Var P = add_eye(t, A);
  Var d = row_sum(t, P);  // >= 1 elementwise thanks to +I
  switch (norm) {
    case GcnNorm::symmetric: {
      Var dis = reciprocal(t, sqrt(t, d));
      return scale_cols(t, scale_rows(t, P, dis), dis);
    }
    case GcnNorm::literal: {
      Var ds = sqrt(t, d);
      return scale_cols(t, scale_rows(t, P, reciprocal(t, ds)), ds);
    }
    default:
      return scale_rows(t, P, reciprocal(t, d));
  }
}

template <typename S>
Var gcn_forward(Tape<S>& t, Var A_hat, Var Z, ParamStore<S>& store,
                Activation act = Activation::relu) {
  const auto& vz = t.val(Z);
  require_rank(vz, 3, "gcn_forward Z");
  const auto& va = t.val(A_hat);
  if (va.rank() != 3 || va.dim(1) != va.dim(2) || va.dim(1) != vz.dim(1))
    throw ShapeError("gcn_forward: A_hat " + shape_str(va.shape) +
                     " vs Z " + shape_str(vz.shape));
  Var y = matmul_param(t, bmm(t, A_hat, Z), t.param(store, "gcn.theta"));
  y = add_bias_last(t, y, t.param(store, "gcn.bias"));
  return act == Activation::relu ? relu(t, y) : y;
}

}  // namespace scgseg
