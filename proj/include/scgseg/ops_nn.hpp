// Differentiable layers over (B, C, H, W) feature maps. Convolutions lower to
// im2col + GEMM; the column matrix is rebuilt in backward instead of stored,
// trading a cheap memory copy for a much smaller tape.
#pragma once

#include <algorithm>
#include <cstring>
#include <memory>
#include <vector>

#include "scgseg/ops_core.hpp"
#include "scgseg/rng.hpp"
#include "scgseg/tape.hpp"

namespace scgseg {

namespace detail {

// Row r = (c*kh + ky)*kw + kx of `cols` holds input channel c shifted by
// (ky - pad, kx - pad), one column per output position. Row-major so each
// (r, oy) span is contiguous.
template <typename S>
void im2col(const S* x, int C, int H, int W, int kh, int kw, int pad,
            Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>&
                cols) {
  const int Ho = H, Wo = W;  // stride 1, same padding
  cols.resize(C * kh * kw, static_cast<Eigen::Index>(Ho) * Wo);
  for (int c = 0; c < C; ++c) {
    const S* xc = x + static_cast<std::int64_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const int r = (c * kh + ky) * kw + kx;
        S* row = cols.data() + static_cast<std::int64_t>(r) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy + ky - pad;
          S* dst = row + static_cast<std::int64_t>(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, S(0));
            continue;
          }
          const int ix0 = kx - pad;  // input x for ox = 0
          const int lo = std::max(0, -ix0);
          const int hi = std::min(Wo, W - ix0);
          std::fill(dst, dst + std::min(lo, Wo), S(0));
          if (hi > lo)
            std::memcpy(dst + lo, xc + static_cast<std::int64_t>(iy) * W +
                                      ix0 + lo,
                        sizeof(S) * static_cast<std::size_t>(hi - lo));
          std::fill(dst + std::max(hi, 0), dst + Wo, S(0));
        }
      }
    }
  }
}

// Scatter-add of a column-matrix gradient back onto the input image.
template <typename S>
void col2im_add(const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic,
                                    Eigen::RowMajor>& colsg,
                int C, int H, int W, int kh, int kw, int pad, S* gx) {
  const int Ho = H, Wo = W;
  for (int c = 0; c < C; ++c) {
    S* gc = gx + static_cast<std::int64_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const int r = (c * kh + ky) * kw + kx;
        const S* row = colsg.data() + static_cast<std::int64_t>(r) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy + ky - pad;
          if (iy < 0 || iy >= H) continue;
          const int ix0 = kx - pad;
          const int lo = std::max(0, -ix0);
          const int hi = std::min(Wo, W - ix0);
          const S* src = row + static_cast<std::int64_t>(oy) * Wo;
          S* dst = gc + static_cast<std::int64_t>(iy) * W + ix0;
          for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
        }
      }
    }
  }
}

}  // namespace detail

// Stride-1 "same" convolution for odd kernels (3x3 pad 1, 1x1 pad 0).
// x: {B,Cin,H,W}, w: {Cout,Cin,k,k}, bias: {Cout} -> {B,Cout,H,W}
template <typename S>
Var conv2d(Tape<S>& t, Var x, Var w, Var bias) {
  const auto& vx = t.val(x);
  const auto& vw = t.val(w);
  const auto& vb = t.val(bias);
  require_rank(vx, 4, "conv2d input");
  require_rank(vw, 4, "conv2d weight");
  const int B = vx.dim(0), Cin = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
  const int Cout = vw.dim(0), k = vw.dim(2);
  if (vw.dim(1) != Cin)
    throw ShapeError("conv2d: weight expects " + std::to_string(vw.dim(1)) +
                     " input channels, got " + std::to_string(Cin));
  if (vw.dim(3) != k || k % 2 == 0)
    throw ShapeError("conv2d: kernel must be square and odd, got " +
                     shape_str(vw.shape));
  if (vb.rank() != 1 || vb.dim(0) != Cout)
    throw ShapeError("conv2d: bias " + shape_str(vb.shape) + " vs Cout " +
                     std::to_string(Cout));
  const int pad = (k - 1) / 2;
  const int CK = Cin * k * k;
  const std::int64_t HW = static_cast<std::int64_t>(H) * W;

  Tensor<S> out({B, Cout, H, W});
  {
    typename Tensor<S>::MatrixRM cols;
    auto Wm = vw.matrix(Cout, CK);
    for (int b = 0; b < B; ++b) {
      detail::im2col(vx.data.data() + b * Cin * HW, Cin, H, W, k, k, pad,
                     cols);
      auto Y = out.slice_matrix(b, Cout, static_cast<int>(HW));
      Y.noalias() = Wm * cols;
      Y.colwise() += vb.matrix(Cout, 1).col(0);
    }
  }
  const bool ng = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(bias);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, w, bias, B, Cin, Cout, H, W, k, pad, CK,
                       HW](Tape<S>& tt) {
      auto& go = tt.grad(o);
      auto Wm = tt.val(w).matrix(Cout, CK);
      typename Tensor<S>::MatrixRM cols, colsg;
      for (int b = 0; b < B; ++b) {
        auto g = go.slice_matrix(b, Cout, static_cast<int>(HW));
        if (tt.needs_grad(w) || tt.needs_grad(bias)) {
          if (tt.needs_grad(w)) {
            detail::im2col(tt.val(x).data.data() + b * Cin * HW, Cin, H, W, k,
                           k, pad, cols);
            tt.grad(w).matrix(Cout, CK).noalias() += g * cols.transpose();
          }
          if (tt.needs_grad(bias))
            tt.grad(bias).matrix(Cout, 1).col(0) += g.rowwise().sum();
        }
        if (tt.needs_grad(x)) {
          colsg.noalias() = Wm.transpose() * g;
          detail::col2im_add(colsg, Cin, H, W, k, k, pad,
                             tt.grad(x).data.data() + b * Cin * HW);
        }
      }
    });
  return o;
}

// Batch normalization over (B, H, W) per channel. Running statistics live in
// the ParamStore as non-trainable entries and are only written when both
// use_batch_stats and update_running are set. Biased variance throughout.
template <typename S>
Var batch_norm2d(Tape<S>& t, Var x, Var gamma, Var beta,
                 ParamStore<S>& store, int rmean_id, int rvar_id,
                 bool use_batch_stats, bool update_running,
                 double momentum = 0.1, double eps = 1e-5) {
  const auto& vx = t.val(x);
  require_rank(vx, 4, "batch_norm2d input");
  const int B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
  if (t.val(gamma).size() != C || t.val(beta).size() != C)
    throw ShapeError("batch_norm2d: gamma/beta size vs channels " +
                     std::to_string(C));
  const std::int64_t HW = static_cast<std::int64_t>(H) * W;
  const std::int64_t N = static_cast<std::int64_t>(B) * HW;

  Eigen::Array<S, Eigen::Dynamic, 1> mean_c(C), inv_c(C);
  if (use_batch_stats) {
    for (int c = 0; c < C; ++c) {
      S s = 0, s2 = 0;
      for (int b = 0; b < B; ++b) {
        auto seg = vx.data.segment((static_cast<std::int64_t>(b) * C + c) * HW,
                                   HW);
        s += seg.sum();
        s2 += seg.square().sum();
      }
      const S mu = s / static_cast<S>(N);
      const S var = s2 / static_cast<S>(N) - mu * mu;
      mean_c[c] = mu;
      inv_c[c] = S(1) / std::sqrt(var + static_cast<S>(eps));
      if (update_running) {
        auto& rm = store.value(rmean_id);
        auto& rv = store.value(rvar_id);
        rm.data[c] = static_cast<S>((1.0 - momentum) * rm.data[c] +
                                    momentum * mu);
        rv.data[c] = static_cast<S>((1.0 - momentum) * rv.data[c] +
                                    momentum * var);
      }
    }
  } else {
    const auto& rm = store.value(rmean_id);
    const auto& rv = store.value(rvar_id);
    for (int c = 0; c < C; ++c) {
      mean_c[c] = rm.data[c];
      inv_c[c] = S(1) / std::sqrt(rv.data[c] + static_cast<S>(eps));
    }
  }

  // xhat is kept for backward (and to apply gamma/beta cheaply).
  auto xhat = std::make_shared<Tensor<S>>(vx.shape);
  Tensor<S> out(vx.shape);
  {
    const auto& vg = t.val(gamma);
    const auto& vbta = t.val(beta);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const std::int64_t off = (static_cast<std::int64_t>(b) * C + c) * HW;
        auto xin = vx.data.segment(off, HW);
        auto xh = xhat->data.segment(off, HW);
        xh = (xin - mean_c[c]) * inv_c[c];
        out.data.segment(off, HW) = xh * vg.data[c] + vbta.data[c];
      }
  }
  const bool ng =
      t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, gamma, beta, xhat, inv_c, B, C, HW, N,
                       use_batch_stats](Tape<S>& tt) {
      auto& go = tt.grad(o);
      const auto& vg = tt.val(gamma).data;
      for (int c = 0; c < C; ++c) {
        S sum_g = 0, sum_gx = 0;
        for (int b = 0; b < B; ++b) {
          const std::int64_t off = (static_cast<std::int64_t>(b) * C + c) * HW;
          auto g = go.data.segment(off, HW);
          sum_g += g.sum();
          sum_gx += (g * xhat->data.segment(off, HW)).sum();
        }
        if (tt.needs_grad(beta)) tt.grad(beta).data[c] += sum_g;
        if (tt.needs_grad(gamma)) tt.grad(gamma).data[c] += sum_gx;
        if (tt.needs_grad(x)) {
          const S gi = vg[c] * inv_c[c];
          const S mg = sum_g / static_cast<S>(N);
          const S mgx = sum_gx / static_cast<S>(N);
          for (int b = 0; b < B; ++b) {
            const std::int64_t off =
                (static_cast<std::int64_t>(b) * C + c) * HW;
            auto g = go.data.segment(off, HW);
            auto xh = xhat->data.segment(off, HW);
            if (use_batch_stats)
              tt.grad(x).data.segment(off, HW) += gi * (g - mg - xh * mgx);
            else
              tt.grad(x).data.segment(off, HW) += gi * g;
          }
        }
      }
    });
  return o;
}

// 2x2 max pooling with stride 2. Ties resolve to the first element scanned
// (row-major), which keeps backward deterministic.
template <typename S>
Var max_pool2(Tape<S>& t, Var x) {
  const auto& vx = t.val(x);
  require_rank(vx, 4, "max_pool2 input");
  const int B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw ShapeError("max_pool2: spatial size " + std::to_string(H) + "x" +
                     std::to_string(W) + " not divisible by 2");
  const int Ho = H / 2, Wo = W / 2;
  Tensor<S> out({B, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  std::int64_t oi = 0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const std::int64_t base = (static_cast<std::int64_t>(b) * C + c) * H * W;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++oi) {
          std::int64_t best = base + (2 * oy) * W + 2 * ox;
          S bv = vx.data[best];
          const std::int64_t cand[3] = {best + 1, best + W, best + W + 1};
          for (std::int64_t ci : cand)
            if (vx.data[ci] > bv) {
              bv = vx.data[ci];
              best = ci;
            }
          out.data[oi] = bv;
          (*argmax)[oi] = best;
        }
    }
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, argmax](Tape<S>& tt) {
      if (!tt.needs_grad(x)) return;
      auto& gx = tt.grad(x);
      const auto& g = tt.grad(o);
      for (std::int64_t i = 0; i < g.size(); ++i)
        gx.data[(*argmax)[i]] += g.data[i];
    });
  return o;
}

namespace detail {
struct LerpCoef {
  int i0, i1;
  double w1;  // weight of i1; i0 gets (1 - w1)
};
// Half-pixel-center source coordinate (align_corners = false).
inline LerpCoef lerp_coef(int o, int in_size, int out_size) {
  const double src =
      (o + 0.5) * static_cast<double>(in_size) / out_size - 0.5;
  const double s = std::max(0.0, std::min(src, in_size - 1.0));
  const int i0 = static_cast<int>(s);
  const int i1 = std::min(i0 + 1, in_size - 1);
  return {i0, i1, s - i0};
}
}  // namespace detail

// Bilinear resize to (oh, ow); backward scatters the interpolation weights.
template <typename S>
Var bilinear_resize(Tape<S>& t, Var x, int oh, int ow) {
  const auto& vx = t.val(x);
  require_rank(vx, 4, "bilinear_resize input");
  const int B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
  if (oh < 1 || ow < 1)
    throw ValidationError("bilinear_resize: non-positive target size");
  std::vector<detail::LerpCoef> ys(oh), xs(ow);
  for (int i = 0; i < oh; ++i) ys[i] = detail::lerp_coef(i, H, oh);
  for (int i = 0; i < ow; ++i) xs[i] = detail::lerp_coef(i, W, ow);
  Tensor<S> out({B, C, oh, ow});
  std::int64_t oi = 0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const S* p = vx.data.data() + (static_cast<std::int64_t>(b) * C + c) * H * W;
      for (int oy = 0; oy < oh; ++oy) {
        const auto& cy = ys[oy];
        const S* r0 = p + static_cast<std::int64_t>(cy.i0) * W;
        const S* r1 = p + static_cast<std::int64_t>(cy.i1) * W;
        for (int ox = 0; ox < ow; ++ox, ++oi) {
          const auto& cx = xs[ox];
          const double top = r0[cx.i0] * (1.0 - cx.w1) + r0[cx.i1] * cx.w1;
          const double bot = r1[cx.i0] * (1.0 - cx.w1) + r1[cx.i1] * cx.w1;
          out.data[oi] = static_cast<S>(top * (1.0 - cy.w1) + bot * cy.w1);
        }
      }
    }
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, ys, xs, B, C, H, W, oh, ow](Tape<S>& tt) {
      if (!tt.needs_grad(x)) return;
      auto& gx = tt.grad(x);
      const auto& g = tt.grad(o);
      std::int64_t oi = 0;
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          S* p = gx.data.data() +
                 (static_cast<std::int64_t>(b) * C + c) * H * W;
          for (int oy = 0; oy < oh; ++oy) {
            const auto& cy = ys[oy];
            S* r0 = p + static_cast<std::int64_t>(cy.i0) * W;
            S* r1 = p + static_cast<std::int64_t>(cy.i1) * W;
            for (int ox = 0; ox < ow; ++ox, ++oi) {
              const auto& cx = xs[ox];
              const S gv = g.data[oi];
              r0[cx.i0] += static_cast<S>(gv * (1.0 - cy.w1) * (1.0 - cx.w1));
              r0[cx.i1] += static_cast<S>(gv * (1.0 - cy.w1) * cx.w1);
              r1[cx.i0] += static_cast<S>(gv * cy.w1 * (1.0 - cx.w1));
              r1[cx.i1] += static_cast<S>(gv * cy.w1 * cx.w1);
            }
          }
        }
    });
  return o;
}

// Adaptive average pooling to (oh, ow); each output is the mean of its bin
// [floor(i*H/oh), ceil((i+1)*H/oh)).
template <typename S>
Var adaptive_avg_pool(Tape<S>& t, Var x, int oh, int ow) {
  const auto& vx = t.val(x);
  require_rank(vx, 4, "adaptive_avg_pool input");
  const int B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
  if (oh > H || ow > W)
    throw ValidationError("adaptive_avg_pool: target " + std::to_string(oh) +
                          "x" + std::to_string(ow) + " exceeds source " +
                          std::to_string(H) + "x" + std::to_string(W));
  auto bin = [](int i, int in, int out) {
    const int lo = (i * in) / out;
    const int hi = ((i + 1) * in + out - 1) / out;
    return std::pair<int, int>{lo, hi};
  };
  Tensor<S> out({B, C, oh, ow});
  std::int64_t oi = 0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const S* p = vx.data.data() + (static_cast<std::int64_t>(b) * C + c) * H * W;
      for (int oy = 0; oy < oh; ++oy) {
        auto [y0, y1] = bin(oy, H, oh);
        for (int ox = 0; ox < ow; ++ox, ++oi) {
          auto [x0, x1] = bin(ox, W, ow);
          S s = 0;
          for (int iy = y0; iy < y1; ++iy)
            for (int ix = x0; ix < x1; ++ix)
              s += p[static_cast<std::int64_t>(iy) * W + ix];
          out.data[oi] = s / static_cast<S>((y1 - y0) * (x1 - x0));
        }
      }
    }
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, B, C, H, W, oh, ow, bin](Tape<S>& tt) {
      if (!tt.needs_grad(x)) return;
      auto& gx = tt.grad(x);
      const auto& g = tt.grad(o);
      std::int64_t oi = 0;
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          S* p = gx.data.data() +
                 (static_cast<std::int64_t>(b) * C + c) * H * W;
          for (int oy = 0; oy < oh; ++oy) {
            auto [y0, y1] = bin(oy, H, oh);
            for (int ox = 0; ox < ow; ++ox, ++oi) {
              auto [x0, x1] = bin(ox, W, ow);
              const S gv =
                  g.data[oi] / static_cast<S>((y1 - y0) * (x1 - x0));
              for (int iy = y0; iy < y1; ++iy)
                for (int ix = x0; ix < x1; ++ix)
                  p[static_cast<std::int64_t>(iy) * W + ix] += gv;
            }
          }
        }
    });
  return o;
}

// Inverted dropout; identity when inactive. The mask combines the keep
// decision and the 1/(1-p) rescale.
template <typename S>
Var dropout(Tape<S>& t, Var x, double p, Rng& rng, bool active) {
  if (p < 0.0 || p >= 1.0)
    throw ValidationError("dropout: probability must be in [0,1), got " +
                          std::to_string(p));
  if (!active || p == 0.0) return x;
  const auto& vx = t.val(x);
  auto mask = std::make_shared<Tensor<S>>(vx.shape);
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  for (std::int64_t i = 0; i < vx.size(); ++i)
    mask->data[i] = rng.uniform() < p ? S(0) : keep_scale;
  Tensor<S> out = vx;
  out.data *= mask->data;
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, mask](Tape<S>& tt) {
      tt.accum(x, (tt.grad(o).data * mask->data).eval());
    });
  return o;
}

template <typename S>
Var concat_channels(Tape<S>& t, Var a, Var b) {
  const auto& va = t.val(a);
  const auto& vb = t.val(b);
  require_rank(va, 4, "concat_channels lhs");
  require_rank(vb, 4, "concat_channels rhs");
  const int B = va.dim(0), Ca = va.dim(1), H = va.dim(2), W = va.dim(3);
  const int Cb = vb.dim(1);
  if (vb.dim(0) != B || vb.dim(2) != H || vb.dim(3) != W)
    throw ShapeError("concat_channels: " + shape_str(va.shape) + " vs " +
                     shape_str(vb.shape));
  const std::int64_t HW = static_cast<std::int64_t>(H) * W;
  Tensor<S> out({B, Ca + Cb, H, W});
  for (int bb = 0; bb < B; ++bb) {
    out.data.segment(static_cast<std::int64_t>(bb) * (Ca + Cb) * HW, Ca * HW) =
        va.data.segment(static_cast<std::int64_t>(bb) * Ca * HW, Ca * HW);
    out.data.segment(static_cast<std::int64_t>(bb) * (Ca + Cb) * HW + Ca * HW,
                     Cb * HW) =
        vb.data.segment(static_cast<std::int64_t>(bb) * Cb * HW, Cb * HW);
  }
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, a, b, B, Ca, Cb, HW](Tape<S>& tt) {
      const auto& g = tt.grad(o);
      for (int bb = 0; bb < B; ++bb) {
        if (tt.needs_grad(a))
          tt.grad(a).data.segment(static_cast<std::int64_t>(bb) * Ca * HW,
                                  Ca * HW) +=
              g.data.segment(static_cast<std::int64_t>(bb) * (Ca + Cb) * HW,
                             Ca * HW);
        if (tt.needs_grad(b))
          tt.grad(b).data.segment(static_cast<std::int64_t>(bb) * Cb * HW,
                                  Cb * HW) +=
              g.data.segment(
                  static_cast<std::int64_t>(bb) * (Ca + Cb) * HW + Ca * HW,
                  Cb * HW);
      }
    });
  return o;
}

// {B,C,h,w} -> {B, h*w, C}; node k = y*w + x (row-major spatial order).
template <typename S>
Var grid_to_nodes(Tape<S>& t, Var x) {
  const auto& vx = t.val(x);
  require_rank(vx, 4, "grid_to_nodes input");
  const int B = vx.dim(0), C = vx.dim(1), h = vx.dim(2), w = vx.dim(3);
  const int n = h * w;
  Tensor<S> out({B, n, C});
  for (int b = 0; b < B; ++b)
    // (C, n) block transposed into (n, C).
    out.slice_matrix(b, n, C).noalias() =
        vx.slice_matrix(b, C, n).transpose();
  const bool ng = t.needs_grad(x);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, x, B, C, n](Tape<S>& tt) {
      if (!tt.needs_grad(x)) return;
      const auto& g = tt.grad(o);
      for (int b = 0; b < B; ++b)
        tt.grad(x).slice_matrix(b, C, n).noalias() +=
            g.slice_matrix(b, n, C).transpose();
    });
  return o;
}

// Exact inverse of grid_to_nodes: {B,n,C} -> {B,C,h,w} with n = h*w.
template <typename S>
Var nodes_to_grid(Tape<S>& t, Var z, int h, int w) {
  const auto& vz = t.val(z);
  require_rank(vz, 3, "nodes_to_grid input");
  const int B = vz.dim(0), n = vz.dim(1), C = vz.dim(2);
  if (n != h * w)
    throw ShapeError("nodes_to_grid: " + std::to_string(n) +
                     " nodes cannot fill a " + std::to_string(h) + "x" +
                     std::to_string(w) + " grid");
  Tensor<S> out({B, C, h, w});
  for (int b = 0; b < B; ++b)
    out.slice_matrix(b, C, n).noalias() =
        vz.slice_matrix(b, n, C).transpose();
  const bool ng = t.needs_grad(z);
  Var o = t.push(std::move(out), ng, nullptr);
  if (ng)
    t.set_backward(o, [o, z, B, C, n](Tape<S>& tt) {
      if (!tt.needs_grad(z)) return;
      const auto& g = tt.grad(o);
      for (int b = 0; b < B; ++b)
        tt.grad(z).slice_matrix(b, n, C).noalias() +=
            g.slice_matrix(b, C, n).transpose();
    });
  return o;
}

}  // namespace scgseg
