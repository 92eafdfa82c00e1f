#pragma once

// Neural building blocks on top of the autodiff tape: 1-D and 2-D
// convolutions (im2col + GEMM), transposed convolution, LSTM with full
// backpropagation through time, multi-head self-attention, weight
// initializers and sinusoidal position codes.

#include <cmath>
#include <vector>

#include "vts/autodiff.hpp"
#include "vts/rng.hpp"
#include "vts/tensor.hpp"

namespace vts::nn {

using ad::Var;

// ---------------------------------------------------------------------------
// conv1d over (B,T,C) with explicit asymmetric padding
// ---------------------------------------------------------------------------

/// How out-of-range taps are filled. Feature convs use `replicate` so a
/// constant sequence stays constant through the stack; the zero mode is
/// what transposed convolution requires internally.
enum class PadMode { zero, replicate };

namespace detail {

// maps a (possibly out-of-range) source index to [-1 == skip, 0..t-1]
inline std::ptrdiff_t pad_src(std::ptrdiff_t src, std::ptrdiff_t t, PadMode mode) {
  if (src >= 0 && src < t) return src;
  if (mode == PadMode::replicate) return src < 0 ? 0 : t - 1;
  return -1;
}

template <class T>
Tensor<T> im2col_1d(const Tensor<T>& x, std::size_t k, std::size_t pad_l, std::size_t t_out, PadMode mode) {
  const std::size_t b = x.dim(0), t = x.dim(1), c = x.dim(2);
  Tensor<T> col({b * t_out, k * c}, T(0));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < t_out; ++j) {
      T* row = col.data() + (i * t_out + j) * k * c;
      const std::ptrdiff_t first = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(pad_l);
      if (first >= 0 && first + static_cast<std::ptrdiff_t>(k) <= static_cast<std::ptrdiff_t>(t)) {
        // interior row: the whole K*C window is contiguous in the input
        std::copy(x.data() + (i * t + static_cast<std::size_t>(first)) * c,
                  x.data() + (i * t + static_cast<std::size_t>(first) + k) * c, row);
        continue;
      }
      for (std::size_t kk = 0; kk < k; ++kk) {
        const std::ptrdiff_t src = pad_src(first + static_cast<std::ptrdiff_t>(kk),
                                           static_cast<std::ptrdiff_t>(t), mode);
        if (src >= 0) {
          const T* in = x.data() + (i * t + static_cast<std::size_t>(src)) * c;
          std::copy(in, in + c, row + kk * c);
        }
      }
    }
  return col;
}

}  // namespace detail

/// Weight layout (K*Cin, Cout), kernel-major rows. Output length
/// T + pad_l + pad_r - K + 1.
template <class T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t k, std::size_t pad_l,
              std::size_t pad_r, PadMode mode = PadMode::zero) {
  const std::size_t b = x.value().dim(0), t = x.value().dim(1), c = x.value().dim(2);
  const std::size_t cout = w.value().dim(1);
  if (w.value().dim(0) != k * c)
    throw ShapeError("conv1d: weight " + w.value().shape_str() + " does not match kernel " + std::to_string(k) +
                     " x channels " + std::to_string(c));
  if (bias.value().numel() != cout) throw ShapeError("conv1d: bias size mismatch");
  if (t + pad_l + pad_r < k) throw ShapeError("conv1d: input shorter than kernel");
  const std::size_t t_out = t + pad_l + pad_r - k + 1;

  Tensor<T> col = detail::im2col_1d(x.value(), k, pad_l, t_out, mode);
  Tensor<T> out({b, t_out, cout});
  as_matrix(out, b * t_out, cout).noalias() =
      as_matrix(col, b * t_out, k * c) * as_matrix(w.value(), k * c, cout);
  for (std::size_t r = 0; r < b * t_out; ++r)
    for (std::size_t j = 0; j < cout; ++j) out[r * cout + j] += bias.value()[j];

  auto xn = x.node(), wn = w.node(), bn = bias.node();
  return Var<T>(ad::detail::make_node<T>(
      std::move(out), {xn, wn, bn}, [xn, wn, bn, k, pad_l, mode, b, t, c, cout, t_out](ad::Node<T>& n) {
        auto g = as_matrix(n.grad, b * t_out, cout);
        if (wn->requires_grad) {
          // im2col is rebuilt rather than stored; trades FLOPs for memory
          Tensor<T> col2 = detail::im2col_1d(xn->val, k, pad_l, t_out, mode);
          as_matrix(wn->ensure_grad(), k * c, cout).noalias() +=
              as_matrix(col2, b * t_out, k * c).transpose() * g;
        }
        if (bn->requires_grad) {
          auto& bg = bn->ensure_grad();
          for (std::size_t r = 0; r < b * t_out; ++r)
            for (std::size_t j = 0; j < cout; ++j) bg[j] += n.grad[r * cout + j];
        }
        if (xn->requires_grad) {
          Tensor<T> dcol({b * t_out, k * c});
          as_matrix(dcol, b * t_out, k * c).noalias() = g * as_matrix(wn->val, k * c, cout).transpose();
          auto& xg = xn->ensure_grad();
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < t_out; ++j) {
              const T* row = dcol.data() + (i * t_out + j) * k * c;
              const std::ptrdiff_t first = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(pad_l);
              if (first >= 0 && first + static_cast<std::ptrdiff_t>(k) <= static_cast<std::ptrdiff_t>(t)) {
                T* dst = xg.data() + (i * t + static_cast<std::size_t>(first)) * c;
                for (std::size_t u = 0; u < k * c; ++u) dst[u] += row[u];
                continue;
              }
              for (std::size_t kk = 0; kk < k; ++kk) {
                const std::ptrdiff_t src =
                    detail::pad_src(first + static_cast<std::ptrdiff_t>(kk), static_cast<std::ptrdiff_t>(t), mode);
                if (src >= 0) {
                  T* dst = xg.data() + (i * t + static_cast<std::size_t>(src)) * c;
                  const T* s = row + kk * c;
                  for (std::size_t u = 0; u < c; ++u) dst[u] += s[u];
                }
              }
            }
        }
      }));
}

/// Same-length convolution with edge replication; even kernels pad one
/// short on the left.
template <class T>
Var<T> conv1d_same(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t k) {
  const std::size_t pad_l = (k - 1) / 2;
  return conv1d(x, w, bias, k, pad_l, k - 1 - pad_l, PadMode::replicate);
}

/// Transposed convolution expressed as zero-stuffing plus convolution:
/// output length (T-1)*stride - 2*pad + K. With k=4, s=2, p=1 this is an
/// exact 2x upsampler.
template <class T>
Var<T> conv_transpose1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t k,
                        std::size_t stride, std::size_t pad) {
  if (k < 1 + pad) throw ShapeError("conv_transpose1d: pad too large");
  return conv1d(ad::zero_stuff_time(x, stride), w, bias, k, k - 1 - pad, k - 1 - pad);
}

// ---------------------------------------------------------------------------
// conv2d over channels-last images (B,H,W,C)
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
Tensor<T> im2col_2d(const Tensor<T>& x, std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw,
                    std::size_t ph, std::size_t pw, std::size_t h_out, std::size_t w_out) {
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor<T> col({b * h_out * w_out, kh * kw * c}, T(0));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t oy = 0; oy < h_out; ++oy)
      for (std::size_t ox = 0; ox < w_out; ++ox) {
        T* row = col.data() + ((i * h_out + oy) * w_out + ox) * kh * kw * c;
        const std::ptrdiff_t sx0 = static_cast<std::ptrdiff_t>(ox * sw) - static_cast<std::ptrdiff_t>(pw);
        const bool x_interior = sx0 >= 0 && sx0 + static_cast<std::ptrdiff_t>(kw) <= static_cast<std::ptrdiff_t>(w);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(oy * sh + ky) - static_cast<std::ptrdiff_t>(ph);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          if (x_interior) {
            // one contiguous kw*c run per kernel row
            const T* in = x.data() + ((i * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx0)) * c;
            std::copy(in, in + kw * c, row + ky * kw * c);
            continue;
          }
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t sx = sx0 + static_cast<std::ptrdiff_t>(kx);
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            const T* in = x.data() + ((i * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)) * c;
            std::copy(in, in + c, row + (ky * kw + kx) * c);
          }
        }
      }
  return col;
}

}  // namespace detail

/// x (B,H,W,Cin), weight (KH*KW*Cin, Cout) -> (B,H',W',Cout).
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t kh, std::size_t kw,
              std::size_t sh, std::size_t sw, std::size_t ph, std::size_t pw) {
  const std::size_t b = x.value().dim(0), h = x.value().dim(1), ww = x.value().dim(2), c = x.value().dim(3);
  const std::size_t cout = w.value().dim(1);
  if (w.value().dim(0) != kh * kw * c) throw ShapeError("conv2d: weight shape mismatch");
  if (h + 2 * ph < kh || ww + 2 * pw < kw) throw ShapeError("conv2d: input smaller than kernel");
  const std::size_t h_out = (h + 2 * ph - kh) / sh + 1;
  const std::size_t w_out = (ww + 2 * pw - kw) / sw + 1;

  Tensor<T> col = detail::im2col_2d(x.value(), kh, kw, sh, sw, ph, pw, h_out, w_out);
  const std::size_t rows = b * h_out * w_out;
  Tensor<T> out({b, h_out, w_out, cout});
  as_matrix(out, rows, cout).noalias() = as_matrix(col, rows, kh * kw * c) * as_matrix(w.value(), kh * kw * c, cout);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cout; ++j) out[r * cout + j] += bias.value()[j];

  auto xn = x.node(), wn = w.node(), bn = bias.node();
  return Var<T>(ad::detail::make_node<T>(
      std::move(out), {xn, wn, bn},
      [xn, wn, bn, kh, kw, sh, sw, ph, pw, b, h, ww, c, cout, h_out, w_out](ad::Node<T>& n) {
        const std::size_t rows2 = b * h_out * w_out;
        auto g = as_matrix(n.grad, rows2, cout);
        if (wn->requires_grad) {
          Tensor<T> col2 = detail::im2col_2d(xn->val, kh, kw, sh, sw, ph, pw, h_out, w_out);
          as_matrix(wn->ensure_grad(), kh * kw * c, cout).noalias() +=
              as_matrix(col2, rows2, kh * kw * c).transpose() * g;
        }
        if (bn->requires_grad) {
          auto& bg = bn->ensure_grad();
          for (std::size_t r = 0; r < rows2; ++r)
            for (std::size_t j = 0; j < cout; ++j) bg[j] += n.grad[r * cout + j];
        }
        if (xn->requires_grad) {
          Tensor<T> dcol({rows2, kh * kw * c});
          as_matrix(dcol, rows2, kh * kw * c).noalias() = g * as_matrix(wn->val, kh * kw * c, cout).transpose();
          auto& xg = xn->ensure_grad();
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t oy = 0; oy < h_out; ++oy)
              for (std::size_t ox = 0; ox < w_out; ++ox) {
                const T* row = dcol.data() + ((i * h_out + oy) * w_out + ox) * kh * kw * c;
                const std::ptrdiff_t sx0 = static_cast<std::ptrdiff_t>(ox * sw) - static_cast<std::ptrdiff_t>(pw);
                const bool x_interior =
                    sx0 >= 0 && sx0 + static_cast<std::ptrdiff_t>(kw) <= static_cast<std::ptrdiff_t>(ww);
                for (std::size_t ky = 0; ky < kh; ++ky) {
                  const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(oy * sh + ky) - static_cast<std::ptrdiff_t>(ph);
                  if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                  if (x_interior) {
                    T* dst = xg.data() + ((i * h + static_cast<std::size_t>(sy)) * ww + static_cast<std::size_t>(sx0)) * c;
                    const T* s = row + ky * kw * c;
                    for (std::size_t u = 0; u < kw * c; ++u) dst[u] += s[u];
                    continue;
                  }
                  for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::ptrdiff_t sx = sx0 + static_cast<std::ptrdiff_t>(kx);
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(ww)) continue;
                    T* dst = xg.data() + ((i * h + static_cast<std::size_t>(sy)) * ww + static_cast<std::size_t>(sx)) * c;
                    const T* s = row + (ky * kw + kx) * c;
                    for (std::size_t u = 0; u < c; ++u) dst[u] += s[u];
                  }
                }
              }
        }
      }));
}

// ---------------------------------------------------------------------------
// LSTM (single direction) with explicit BPTT
// ---------------------------------------------------------------------------

/// x (B,T,D), w_ih (D,4H), w_hh (H,4H), bias (4H) -> hidden sequence (B,T,H).
/// Gate column order: input, forget, cell, output. Initial state is zero.
template <class T>
Var<T> lstm_seq(const Var<T>& x, const Var<T>& w_ih, const Var<T>& w_hh, const Var<T>& bias) {
  const std::size_t b = x.value().dim(0), t = x.value().dim(1), d = x.value().dim(2);
  const std::size_t h4 = w_ih.value().dim(1);
  const std::size_t hh = h4 / 4;
  if (w_ih.value().dim(0) != d || h4 % 4 != 0) throw ShapeError("lstm: w_ih shape mismatch");
  if (w_hh.value().dim(0) != hh || w_hh.value().dim(1) != h4) throw ShapeError("lstm: w_hh shape mismatch");
  if (bias.value().numel() != h4) throw ShapeError("lstm: bias size mismatch");

  // one GEMM for all input projections
  Tensor<T> xw({b, t, h4});
  as_matrix(xw, b * t, h4).noalias() = as_matrix(x.value(), b * t, d) * as_matrix(w_ih.value(), d, h4);

  Tensor<T> gates({b, t, h4});   // post-activation i,f,g,o
  Tensor<T> cells({b, t, hh});   // c_t
  Tensor<T> tanh_c({b, t, hh});  // tanh(c_t)
  Tensor<T> out({b, t, hh});

  Tensor<T> h_prev({b, hh}, T(0)), c_prev({b, hh}, T(0));
  EigenRowMat<T> z(b, h4);
  for (std::size_t step = 0; step < t; ++step) {
    z.noalias() = as_matrix(h_prev, b, hh) * as_matrix(w_hh.value(), hh, h4);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < h4; ++j) z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +=
          xw(i, step, j) + bias.value()[j];
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t u = 0; u < hh; ++u) {
        const T zi = z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(u));
        const T zf = z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(hh + u));
        const T zg = z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(2 * hh + u));
        const T zo = z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(3 * hh + u));
        const T gi = T(1) / (T(1) + std::exp(-zi));
        const T gf = T(1) / (T(1) + std::exp(-zf));
        const T gg = std::tanh(zg);
        const T go = T(1) / (T(1) + std::exp(-zo));
        const T cc = gf * c_prev(i, u) + gi * gg;
        const T tc = std::tanh(cc);
        gates(i, step, u) = gi;
        gates(i, step, hh + u) = gf;
        gates(i, step, 2 * hh + u) = gg;
        gates(i, step, 3 * hh + u) = go;
        cells(i, step, u) = cc;
        tanh_c(i, step, u) = tc;
        out(i, step, u) = go * tc;
        h_prev(i, u) = go * tc;
        c_prev(i, u) = cc;
      }
    }
  }

  auto xn = x.node(), win = w_ih.node(), whn = w_hh.node(), bn = bias.node();
  return Var<T>(ad::detail::make_node<T>(
      std::move(out), {xn, win, whn, bn},
      [xn, win, whn, bn, gates = std::move(gates), cells = std::move(cells), tanh_c = std::move(tanh_c),
       b, t, d, hh, h4](ad::Node<T>& n) {
        Tensor<T> dz_all({b, t, h4}, T(0));  // grads at pre-activations
        Tensor<T> dh({b, hh}, T(0)), dc({b, hh}, T(0));
        EigenRowMat<T> dh_from_z(b, hh);
        for (std::size_t step = t; step-- > 0;) {
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t u = 0; u < hh; ++u) {
              const T gi = gates(i, step, u);
              const T gf = gates(i, step, hh + u);
              const T gg = gates(i, step, 2 * hh + u);
              const T go = gates(i, step, 3 * hh + u);
              const T tc = tanh_c(i, step, u);
              const T dht = dh(i, u) + n.grad[(i * t + step) * hh + u];
              const T dct = dc(i, u) + dht * go * (T(1) - tc * tc);
              const T c_prev_v = step > 0 ? cells(i, step - 1, u) : T(0);
              dz_all(i, step, u) = dct * gg * gi * (T(1) - gi);
              dz_all(i, step, hh + u) = dct * c_prev_v * gf * (T(1) - gf);
              dz_all(i, step, 2 * hh + u) = dct * gi * (T(1) - gg * gg);
              dz_all(i, step, 3 * hh + u) = dht * tc * go * (T(1) - go);
              dc(i, u) = dct * gf;
            }
          // dh_{t-1} = dz_t * w_hh^T
          EigenRowMat<T> dz_step(b, h4);
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < h4; ++j) dz_step(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dz_all(i, step, j);
          dh_from_z.noalias() = dz_step * as_matrix(whn->val, hh, h4).transpose();
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t u = 0; u < hh; ++u) dh(i, u) = dh_from_z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(u));
          if (whn->requires_grad) {
            EigenRowMat<T> h_prev_m(b, hh);
            for (std::size_t i = 0; i < b; ++i)
              for (std::size_t u = 0; u < hh; ++u)
                h_prev_m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(u)) =
                    step > 0 ? gates(i, step - 1, 3 * hh + u) * tanh_c(i, step - 1, u) : T(0);
            as_matrix(whn->ensure_grad(), hh, h4).noalias() += h_prev_m.transpose() * dz_step;
          }
        }
        if (win->requires_grad)
          as_matrix(win->ensure_grad(), d, h4).noalias() +=
              as_matrix(xn->val, b * t, d).transpose() * as_matrix(dz_all, b * t, h4);
        if (bn->requires_grad) {
          auto& bg = bn->ensure_grad();
          for (std::size_t r = 0; r < b * t; ++r)
            for (std::size_t j = 0; j < h4; ++j) bg[j] += dz_all[r * h4 + j];
        }
        if (xn->requires_grad)
          as_matrix(xn->ensure_grad(), b * t, d).noalias() +=
              as_matrix(dz_all, b * t, h4) * as_matrix(win->val, d, h4).transpose();
      }));
}

// ---------------------------------------------------------------------------
// multi-head self-attention
// ---------------------------------------------------------------------------

struct AttentionWeights {
  // projection weights (C,C) and biases (C) for query/key/value/output
  template <class T>
  struct Of {
    Var<T> wq, bq, wk, bk, wv, bv, wo, bo;
  };
};

template <class T>
Var<T> self_attention(const Var<T>& x, const typename AttentionWeights::template Of<T>& w,
                      std::size_t heads) {
  const std::size_t c = x.value().dim(2);
  if (c % heads != 0) throw ShapeError("self_attention: channels must divide heads");
  const std::size_t dh = c / heads;
  const Var<T> q = ad::linear(x, w.wq, w.bq);
  const Var<T> k = ad::linear(x, w.wk, w.bk);
  const Var<T> v = ad::linear(x, w.wv, w.bv);
  std::vector<Var<T>> ctx;
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  for (std::size_t hh = 0; hh < heads; ++hh) {
    const Var<T> qh = ad::slice_channels(q, hh * dh, dh);
    const Var<T> kh = ad::slice_channels(k, hh * dh, dh);
    const Var<T> vh = ad::slice_channels(v, hh * dh, dh);
    const Var<T> att = ad::softmax_lastdim(ad::scale(ad::bmm_nt(qh, kh), inv_sqrt));
    ctx.push_back(ad::bmm_nn(att, vh));
  }
  return ad::linear(ad::concat_channels(ctx), w.wo, w.bo);
}

// ---------------------------------------------------------------------------
// initializers and position codes
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

/// Orthogonal square blocks stacked along columns: for an (H,4H) recurrent
/// weight, each (H,H) gate block is orthogonalized independently.
template <class T>
Tensor<T> orthogonal_gate_init(std::size_t h, std::size_t gates, Rng& rng) {
  Tensor<T> w({h, gates * h});
  std::vector<std::vector<double>> basis;
  for (std::size_t g = 0; g < gates; ++g) {
    basis.clear();
    for (std::size_t r = 0; r < h; ++r) {
      std::vector<double> v(h);
      for (auto& x : v) x = rng.normal();
      // Gram-Schmidt with one re-orthogonalization pass
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& u : basis) {
          double dot = 0;
          for (std::size_t i = 0; i < h; ++i) dot += v[i] * u[i];
          for (std::size_t i = 0; i < h; ++i) v[i] -= dot * u[i];
        }
      double norm = 0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(std::max(norm, 1e-12));
      for (auto& x : v) x /= norm;
      basis.push_back(v);
    }
    // rows of the block are the orthonormal basis
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t cidx = 0; cidx < h; ++cidx) w(r, g * h + cidx) = static_cast<T>(basis[r][cidx]);
  }
  return w;
}

/// Fixed sinusoidal position codes, (T,C).
template <class T>
Tensor<T> sinusoid_position_codes(std::size_t t, std::size_t c) {
  Tensor<T> pe({t, c});
  for (std::size_t pos = 0; pos < t; ++pos)
    for (std::size_t i = 0; i < c; ++i) {
      const double div = std::pow(10000.0, 2.0 * static_cast<double>(i / 2) / static_cast<double>(c));
      const double a = static_cast<double>(pos) / div;
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  return pe;
}

}  // namespace vts::nn
