// Differentiable primitives: elementwise math, reductions, and batched
// matrix/graph operations. Each op computes its value eagerly and, when any
// operand tracks gradients, records a closure with the analytic backward
// rule. Batched tensors put the batch in dim 0; matrix slices are processed
// per batch element through Eigen maps.
#pragma once

#include <cmath>
#include <string>

#include "scgseg/tape.hpp"
#include "scgseg/tensor.hpp"

namespace scgseg {

namespace detail {
template <typename S>
void check_same_shape(const Tape<S>& t, Var a, Var b, const char* op) {
  if (t.val(a).shape != t.val(b).shape)
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(t.val(a).shape) + " vs " +
                     shape_str(t.val(b).shape));
}
}  // namespace detail

// ---- elementwise binary ----

template <typename S>
Var add(Tape<S>& t, Var a, Var b) {
  detail::check_same_shape(t, a, b, "add");
  Tensor<S> out = t.val(a);
  out.data += t.val(b).data;
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, a, b](Tape<S>& tt) {
      const auto& g = tt.grad(o).data;
      tt.accum(a, g);
      tt.accum(b, g);
    });
  return o;
}

template <typename S>
Var sub(Tape<S>& t, Var a, Var b) {
  detail::check_same_shape(t, a, b, "sub");
  Tensor<S> out = t.val(a);
  out.data -= t.val(b).data;
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, a, b](Tape<S>& tt) {
      const auto& g = tt.grad(o).data;
      tt.accum(a, g);
      tt.accum(b, (-g).eval());
    });
  return o;
}

template <typename S>
Var mul(Tape<S>& t, Var a, Var b) {
  detail::check_same_shape(t, a, b, "mul");
  Tensor<S> out = t.val(a);
  out.data *= t.val(b).data;
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, a, b](Tape<S>& tt) {
      const auto& g = tt.grad(o).data;
      tt.accum(a, (g * tt.val(b).data).eval());
      tt.accum(b, (g * tt.val(a).data).eval());
    });
  return o;
}

// Elementwise quotient of two scalars or same-shape tensors.
template <typename S>
Var divide(Tape<S>& t, Var a, Var b) {
  detail::check_same_shape(t, a, b, "divide");
  Tensor<S> out = t.val(a);
  out.data /= t.val(b).data;
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, a, b](Tape<S>& tt) {
      const auto& g = tt.grad(o).data;
      const auto& vb = tt.val(b).data;
      tt.accum(a, (g / vb).eval());
      tt.accum(b, (-g * tt.val(a).data / (vb * vb)).eval());
    });
  return o;
}

// ---- elementwise with constants ----

template <typename S>
Var scale(Tape<S>& t, Var x, double c) {
  Tensor<S> out = t.val(x);
  out.data *= static_cast<S>(c);
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, c](Tape<S>& tt) {
      tt.accum(x, (tt.grad(o).data * static_cast<S>(c)).eval());
    });
  return o;
}

template <typename S>
Var add_const(Tape<S>& t, Var x, double c) {
  Tensor<S> out = t.val(x);
  out.data += static_cast<S>(c);
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x](Tape<S>& tt) { tt.accum(x, tt.grad(o).data); });
  return o;
}

template <typename S>
Var neg(Tape<S>& t, Var x) {
  return scale(t, x, -1.0);
}

// ---- elementwise unary ----

template <typename S>
Var exp(Tape<S>& t, Var x) {
  Tensor<S> out = t.val(x);
  out.data = out.data.exp();
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x](Tape<S>& tt) {
      tt.accum(x, (tt.grad(o).data * tt.val(o).data).eval());
    });
  return o;
}

template <typename S>
Var log(Tape<S>& t, Var x) {
  Tensor<S> out = t.val(x);
  out.data = out.data.log();
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x](Tape<S>& tt) {
      tt.accum(x, (tt.grad(o).data / tt.val(x).data).eval());
    });
  return o;
}

template <typename S>
Var sqrt(Tape<S>& t, Var x) {
  Tensor<S> out = t.val(x);
  out.data = out.data.sqrt();
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x](Tape<S>& tt) {
      tt.accum(x, (tt.grad(o).data * S(0.5) / tt.val(o).data).eval());
    });
  return o;
}

template <typename S>
Var square(Tape<S>& t, Var x) {
  Tensor<S> out = t.val(x);
  out.data = out.data.square();
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x](Tape<S>& tt) {
      tt.accum(x, (tt.grad(o).data * S(2) * tt.val(x).data).eval());
    });
  return o;
}

template <typename S>
Var reciprocal(Tape<S>& t, Var x) {
  Tensor<S> out = t.val(x);
  out.data = out.data.inverse();
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x](Tape<S>& tt) {
      const auto& v = tt.val(o).data;
      tt.accum(x, (-tt.grad(o).data * v * v).eval());
    });
  return o;
}

template <typename S>
Var pow_const(Tape<S>& t, Var x, double p) {
  Tensor<S> out = t.val(x);
  out.data = out.data.pow(static_cast<S>(p));
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, p](Tape<S>& tt) {
      tt.accum(x, (tt.grad(o).data * static_cast<S>(p) *
                   tt.val(x).data.pow(static_cast<S>(p - 1.0)))
                      .eval());
    });
  return o;
}

template <typename S>
Var relu(Tape<S>& t, Var x) {
  Tensor<S> out = t.val(x);
  out.data = out.data.max(S(0));
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x](Tape<S>& tt) {
      tt.accum(x, (tt.grad(o).data *
                   (tt.val(x).data > S(0)).template cast<S>())
                      .eval());
    });
  return o;
}

template <typename S>
Var sigmoid(Tape<S>& t, Var x) {
  Tensor<S> out = t.val(x);
  // Branch on sign for numerical stability at large |x|.
  out.data = out.data.unaryExpr([](S v) {
    if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
    const S e = std::exp(v);
    return e / (S(1) + e);
  });
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x](Tape<S>& tt) {
      const auto& s = tt.val(o).data;
      tt.accum(x, (tt.grad(o).data * s * (S(1) - s)).eval());
    });
  return o;
}

// Gradient passes where lo <= x <= hi and is zero outside, matching the
// subgradient convention of the saturating regions.
template <typename S>
Var clamp(Tape<S>& t, Var x, double lo, double hi) {
  Tensor<S> out = t.val(x);
  out.data = out.data.max(static_cast<S>(lo)).min(static_cast<S>(hi));
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, lo, hi](Tape<S>& tt) {
      const auto& v = tt.val(x).data;
      auto mask = (v >= static_cast<S>(lo) && v <= static_cast<S>(hi))
                      .template cast<S>();
      tt.accum(x, (tt.grad(o).data * mask).eval());
    });
  return o;
}

// ---- reductions ----

template <typename S>
Var sum(Tape<S>& t, Var x) {
  Tensor<S> out = Tensor<S>::scalar(t.val(x).data.sum());
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x](Tape<S>& tt) {
      if (!tt.needs_grad(x)) return;
      tt.grad(x).data += tt.grad(o).data[0];
    });
  return o;
}

template <typename S>
Var mean(Tape<S>& t, Var x) {
  const double inv = 1.0 / static_cast<double>(t.val(x).size());
  return scale(t, sum(t, x), inv);
}

// Sum over every non-batch dimension: {B, ...} -> {B}.
template <typename S>
Var sum_batch(Tape<S>& t, Var x) {
  const auto& v = t.val(x);
  const int B = v.dim(0);
  const std::int64_t per = v.size() / B;
  Tensor<S> out({B});
  for (int b = 0; b < B; ++b)
    out.data[b] = v.data.segment(per * b, per).sum();
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, B, per](Tape<S>& tt) {
      if (!tt.needs_grad(x)) return;
      auto& gx = tt.grad(x);
      const auto& g = tt.grad(o).data;
      for (int b = 0; b < B; ++b) gx.data.segment(per * b, per) += g[b];
    });
  return o;
}

// Broadcast-multiply a per-batch scalar over all remaining dims.
template <typename S>
Var mul_bscalar(Tape<S>& t, Var x, Var s) {
  const auto& vx = t.val(x);
  const auto& vs = t.val(s);
  const int B = vx.dim(0);
  if (vs.rank() != 1 || vs.dim(0) != B)
    throw ShapeError("mul_bscalar: scalar batch " + shape_str(vs.shape) +
                     " does not match " + shape_str(vx.shape));
  const std::int64_t per = vx.size() / B;
  Tensor<S> out = vx;
  for (int b = 0; b < B; ++b) out.data.segment(per * b, per) *= vs.data[b];
  const bool ng = t.needs_grad(x) || t.needs_grad(s);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, s, B, per](Tape<S>& tt) {
      const auto& g = tt.grad(o).data;
      if (tt.needs_grad(x)) {
        auto& gx = tt.grad(x);
        const auto& vs2 = tt.val(s).data;
        for (int b = 0; b < B; ++b)
          gx.data.segment(per * b, per) += g.segment(per * b, per) * vs2[b];
      }
      if (tt.needs_grad(s)) {
        auto& gs = tt.grad(s);
        const auto& vx2 = tt.val(x).data;
        for (int b = 0; b < B; ++b)
          gs.data[b] +=
              (g.segment(per * b, per) * vx2.segment(per * b, per)).sum();
      }
    });
  return o;
}

// ---- batched matrix ops ----

// x: {B,n,k} times y: {B,k,m} -> {B,n,m}
template <typename S>
Var bmm(Tape<S>& t, Var x, Var y) {
  const auto& vx = t.val(x);
  const auto& vy = t.val(y);
  require_rank(vx, 3, "bmm lhs");
  require_rank(vy, 3, "bmm rhs");
  const int B = vx.dim(0), n = vx.dim(1), k = vx.dim(2), m = vy.dim(2);
  if (vy.dim(0) != B || vy.dim(1) != k)
    throw ShapeError("bmm: " + shape_str(vx.shape) + " x " +
                     shape_str(vy.shape));
  Tensor<S> out({B, n, m});
  for (int b = 0; b < B; ++b)
    out.slice_matrix(b, n, m).noalias() =
        vx.slice_matrix(b, n, k) * vy.slice_matrix(b, k, m);
  const bool ng = t.needs_grad(x) || t.needs_grad(y);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, y, B, n, k, m](Tape<S>& tt) {
      auto& go = tt.grad(o);
      for (int b = 0; b < B; ++b) {
        auto g = go.slice_matrix(b, n, m);
        if (tt.needs_grad(x))
          tt.grad(x).slice_matrix(b, n, k).noalias() +=
              g * tt.val(y).slice_matrix(b, k, m).transpose();
        if (tt.needs_grad(y))
          tt.grad(y).slice_matrix(b, k, m).noalias() +=
              tt.val(x).slice_matrix(b, n, k).transpose() * g;
      }
    });
  return o;
}

// x: {B,n,k} times y^T for y: {B,m,k} -> {B,n,m}. Passing the same Var for x
// and y yields the Gram product x x^T with both gradient paths accumulated.
template <typename S>
Var bmm_nt(Tape<S>& t, Var x, Var y) {
  const auto& vx = t.val(x);
  const auto& vy = t.val(y);
  require_rank(vx, 3, "bmm_nt lhs");
  require_rank(vy, 3, "bmm_nt rhs");
  const int B = vx.dim(0), n = vx.dim(1), k = vx.dim(2), m = vy.dim(1);
  if (vy.dim(0) != B || vy.dim(2) != k)
    throw ShapeError("bmm_nt: " + shape_str(vx.shape) + " x " +
                     shape_str(vy.shape) + "^T");
  Tensor<S> out({B, n, m});
  for (int b = 0; b < B; ++b)
    out.slice_matrix(b, n, m).noalias() =
        vx.slice_matrix(b, n, k) * vy.slice_matrix(b, m, k).transpose();
  const bool ng = t.needs_grad(x) || t.needs_grad(y);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, y, B, n, k, m](Tape<S>& tt) {
      auto& go = tt.grad(o);
      for (int b = 0; b < B; ++b) {
        auto g = go.slice_matrix(b, n, m);
        if (tt.needs_grad(x))
          tt.grad(x).slice_matrix(b, n, k).noalias() +=
              g * tt.val(y).slice_matrix(b, m, k);
        if (tt.needs_grad(y))
          tt.grad(y).slice_matrix(b, m, k).noalias() +=
              g.transpose() * tt.val(x).slice_matrix(b, n, k);
      }
    });
  return o;
}

// x: {B,n,k} times shared weight w: {k,m} -> {B,n,m}
template <typename S>
Var matmul_param(Tape<S>& t, Var x, Var w) {
  const auto& vx = t.val(x);
  const auto& vw = t.val(w);
  require_rank(vx, 3, "matmul_param input");
  require_rank(vw, 2, "matmul_param weight");
  const int B = vx.dim(0), n = vx.dim(1), k = vx.dim(2), m = vw.dim(1);
  if (vw.dim(0) != k)
    throw ShapeError("matmul_param: " + shape_str(vx.shape) + " x " +
                     shape_str(vw.shape));
  Tensor<S> out({B, n, m});
  {
    auto W = vw.matrix(k, m);
    for (int b = 0; b < B; ++b)
      out.slice_matrix(b, n, m).noalias() = vx.slice_matrix(b, n, k) * W;
  }
  const bool ng = t.needs_grad(x) || t.needs_grad(w);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, w, B, n, k, m](Tape<S>& tt) {
      auto& go = tt.grad(o);
      auto W = tt.val(w).matrix(k, m);
      for (int b = 0; b < B; ++b) {
        auto g = go.slice_matrix(b, n, m);
        if (tt.needs_grad(x))
          tt.grad(x).slice_matrix(b, n, k).noalias() += g * W.transpose();
        if (tt.needs_grad(w))
          tt.grad(w).matrix(k, m).noalias() +=
              tt.val(x).slice_matrix(b, n, k).transpose() * g;
      }
    });
  return o;
}

// x: {B,n,m} plus bias {m} broadcast over batch and rows.
template <typename S>
Var add_bias_last(Tape<S>& t, Var x, Var bias) {
  const auto& vx = t.val(x);
  const auto& vb = t.val(bias);
  require_rank(vx, 3, "add_bias_last input");
  const int B = vx.dim(0), n = vx.dim(1), m = vx.dim(2);
  if (vb.rank() != 1 || vb.dim(0) != m)
    throw ShapeError("add_bias_last: bias " + shape_str(vb.shape) +
                     " vs input " + shape_str(vx.shape));
  Tensor<S> out = vx;
  for (int b = 0; b < B; ++b)
    out.slice_matrix(b, n, m).rowwise() +=
        vb.matrix(1, m).row(0);
  const bool ng = t.needs_grad(x) || t.needs_grad(bias);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, bias, B, n, m](Tape<S>& tt) {
      auto& go = tt.grad(o);
      if (tt.needs_grad(x)) tt.grad(x).data += go.data;
      if (tt.needs_grad(bias)) {
        auto gb = tt.grad(bias).matrix(1, m);
        for (int b = 0; b < B; ++b)
          gb.row(0) += go.slice_matrix(b, n, m).colwise().sum();
      }
    });
  return o;
}

// ---- square-matrix helpers for graph work ----

template <typename S>
Var diag_part(Tape<S>& t, Var x) {
  const auto& v = t.val(x);
  require_rank(v, 3, "diag_part");
  const int B = v.dim(0), n = v.dim(1);
  if (v.dim(2) != n) throw ShapeError("diag_part: matrix not square");
  Tensor<S> out({B, n});
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i) out.at(b, i) = v.at(b, i, i);
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, B, n](Tape<S>& tt) {
      if (!tt.needs_grad(x)) return;
      auto& gx = tt.grad(x);
      const auto& g = tt.grad(o);
      for (int b = 0; b < B; ++b)
        for (int i = 0; i < n; ++i) gx.at(b, i, i) += g.at(b, i);
    });
  return o;
}

template <typename S>
Var diag_embed(Tape<S>& t, Var v) {
  const auto& vv = t.val(v);
  require_rank(vv, 2, "diag_embed");
  const int B = vv.dim(0), n = vv.dim(1);
  Tensor<S> out({B, n, n});
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i) out.at(b, i, i) = vv.at(b, i);
  const bool ng = t.needs_grad(v);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, v, B, n](Tape<S>& tt) {
      if (!tt.needs_grad(v)) return;
      auto& gv = tt.grad(v);
      const auto& g = tt.grad(o);
      for (int b = 0; b < B; ++b)
        for (int i = 0; i < n; ++i) gv.at(b, i) += g.at(b, i, i);
    });
  return o;
}

template <typename S>
Var row_sum(Tape<S>& t, Var x) {
  const auto& v = t.val(x);
  require_rank(v, 3, "row_sum");
  const int B = v.dim(0), n = v.dim(1), m = v.dim(2);
  Tensor<S> out({B, n});
  for (int b = 0; b < B; ++b)
    out.slice_matrix(b, n, 1).col(0) = v.slice_matrix(b, n, m).rowwise().sum();
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, B, n, m](Tape<S>& tt) {
      if (!tt.needs_grad(x)) return;
      auto& gx = tt.grad(x);
      const auto& g = tt.grad(o);
      for (int b = 0; b < B; ++b)
        gx.slice_matrix(b, n, m).colwise() +=
            g.slice_matrix(b, n, 1).col(0);
    });
  return o;
}

// out[b,i,j] = x[b,i,j] * v[b,i]
template <typename S>
Var scale_rows(Tape<S>& t, Var x, Var v) {
  const auto& vx = t.val(x);
  const auto& vv = t.val(v);
  require_rank(vx, 3, "scale_rows");
  const int B = vx.dim(0), n = vx.dim(1), m = vx.dim(2);
  if (vv.rank() != 2 || vv.dim(0) != B || vv.dim(1) != n)
    throw ShapeError("scale_rows: vector " + shape_str(vv.shape) +
                     " vs matrix " + shape_str(vx.shape));
  Tensor<S> out({B, n, m});
  for (int b = 0; b < B; ++b)
    out.slice_matrix(b, n, m) =
        vx.slice_matrix(b, n, m).array().colwise() *
        vv.slice_matrix(b, n, 1).col(0).array();
  const bool ng = t.needs_grad(x) || t.needs_grad(v);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, v, B, n, m](Tape<S>& tt) {
      auto& go = tt.grad(o);
      for (int b = 0; b < B; ++b) {
        auto g = go.slice_matrix(b, n, m);
        if (tt.needs_grad(x))
          tt.grad(x).slice_matrix(b, n, m).array() +=
              g.array().colwise() *
              tt.val(v).slice_matrix(b, n, 1).col(0).array();
        if (tt.needs_grad(v))
          tt.grad(v).slice_matrix(b, n, 1).col(0).array() +=
              (g.array() * tt.val(x).slice_matrix(b, n, m).array())
                  .rowwise()
                  .sum();
      }
    });
  return o;
}

// out[b,i,j] = x[b,i,j] * v[b,j]
template <typename S>
Var scale_cols(Tape<S>& t, Var x, Var v) {
  const auto& vx = t.val(x);
  const auto& vv = t.val(v);
  require_rank(vx, 3, "scale_cols");
  const int B = vx.dim(0), n = vx.dim(1), m = vx.dim(2);
  if (vv.rank() != 2 || vv.dim(0) != B || vv.dim(1) != m)
    throw ShapeError("scale_cols: vector " + shape_str(vv.shape) +
                     " vs matrix " + shape_str(vx.shape));
  Tensor<S> out({B, n, m});
  for (int b = 0; b < B; ++b)
    out.slice_matrix(b, n, m) =
        vx.slice_matrix(b, n, m).array().rowwise() *
        vv.slice_matrix(b, 1, m).row(0).array();
  const bool ng = t.needs_grad(x) || t.needs_grad(v);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, v, B, n, m](Tape<S>& tt) {
      auto& go = tt.grad(o);
      for (int b = 0; b < B; ++b) {
        auto g = go.slice_matrix(b, n, m);
        if (tt.needs_grad(x))
          tt.grad(x).slice_matrix(b, n, m).array() +=
              g.array().rowwise() *
              tt.val(v).slice_matrix(b, 1, m).row(0).array();
        if (tt.needs_grad(v))
          tt.grad(v).slice_matrix(b, 1, m).row(0).array() +=
              (g.array() * tt.val(x).slice_matrix(b, n, m).array())
                  .colwise()
                  .sum();
      }
    });
  return o;
}

// x + I per batch element.
template <typename S>
Var add_eye(Tape<S>& t, Var x) {
  const auto& v = t.val(x);
  require_rank(v, 3, "add_eye");
  const int B = v.dim(0), n = v.dim(1);
  if (v.dim(2) != n) throw ShapeError("add_eye: matrix not square");
  Tensor<S> out = v;
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i) out.at(b, i, i) += S(1);
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x](Tape<S>& tt) { tt.accum(x, tt.grad(o).data); });
  return o;
}

template <typename S>
Var reshape(Tape<S>& t, Var x, Shape s) {
  Tensor<S> out = t.val(x).reshaped(std::move(s));
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x](Tape<S>& tt) { tt.accum(x, tt.grad(o).data); });
  return o;
}

}  // namespace scgseg
