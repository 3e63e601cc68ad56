#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ddet/gemm.hpp"
#include "ddet/tape.hpp"
#include "ddet/tensor.hpp"

namespace ddet {

// All operations are pure: inputs are immutable, outputs are fresh tensors.
// When a tape is supplied and any input requires a gradient, the op records a
// backward closure that accumulates (+=) into the inputs' grad buffers.

namespace detail {

template <typename T>
inline bool wants_grad(const GradTape<T>* tape, std::initializer_list<bool> flags) {
  if (!tape) return false;
  for (bool f : flags) {
    if (f) return true;
  }
  return false;
}

// Symmetric (edge-inclusive) reflection of index i into [0, n). This
// convention conserves total mass under symmetric kernels, which the data
// pipeline's mean-preservation contract relies on.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: standard dense convolution, square odd kernel, zero padding.
// out h' = (h + 2*padding - k)/stride + 1 (integer division).
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding, GradTape<T>* tape = nullptr) {
  const Shape is = input.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w) {
    throw ShapeError("conv2d: kernel must be square, width axis " + std::to_string(ws.w) +
                     " vs height axis " + std::to_string(ws.h));
  }
  const int k = ws.h;
  if (k < 1 || k % 2 == 0) {
    throw ShapeError("conv2d: kernel size must be odd and positive, got " + std::to_string(k));
  }
  if (ws.c != is.c) {
    throw ShapeError("conv2d: channel axis mismatch, input has " + std::to_string(is.c) +
                     " channels but weight expects " + std::to_string(ws.c));
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  const int co = ws.n;
  if (bias.numel() != static_cast<std::size_t>(co)) {
    throw ShapeError("conv2d: bias channel axis has " + std::to_string(bias.numel()) +
                     " elements, expected " + std::to_string(co));
  }
  if (is.h + 2 * padding < k) {
    throw ShapeError("conv2d: height axis too small, " + std::to_string(is.h) + " with padding " +
                     std::to_string(padding) + " cannot fit kernel " + std::to_string(k));
  }
  if (is.w + 2 * padding < k) {
    throw ShapeError("conv2d: width axis too small, " + std::to_string(is.w) + " with padding " +
                     std::to_string(padding) + " cannot fit kernel " + std::to_string(k));
  }
  const int oh = (is.h + 2 * padding - k) / stride + 1;
  const int ow = (is.w + 2 * padding - k) / stride + 1;

  Tensor<T> out(Shape{is.n, co, oh, ow});
  const int kdim = is.c * k * k;
  const std::size_t n_cols = static_cast<std::size_t>(oh) * ow;
  std::vector<T> cols(static_cast<std::size_t>(kdim) * n_cols);
  const std::size_t in_plane = static_cast<std::size_t>(is.c) * is.h * is.w;
  const std::size_t out_plane = static_cast<std::size_t>(co) * n_cols;

  for (int b = 0; b < is.n; ++b) {
    detail::im2col(input.data() + b * in_plane, is.c, is.h, is.w, k, stride, padding, oh, ow,
                   cols.data());
    T* ob = out.data() + b * out_plane;
    detail::gemm<T>(co, static_cast<int>(n_cols), kdim, weight.data(), kdim, cols.data(), n_cols,
                    ob, n_cols);
    for (int m = 0; m < co; ++m) {
      const T bv = bias.data()[m];
      T* row = ob + static_cast<std::size_t>(m) * n_cols;
      for (std::size_t i = 0; i < n_cols; ++i) row[i] += bv;
    }
  }

  if (detail::wants_grad(tape, {input.requires_grad(), weight.requires_grad(),
                                bias.requires_grad()})) {
    out.set_requires_grad(true);
    Tensor<T> in_c = input, w_c = weight, b_c = bias, out_c = out;
    tape->record("conv2d", out, [in_c, w_c, b_c, out_c, stride, padding, k, oh, ow]() mutable {
      const T* gout = out_c.grad();
      if (!gout) return;
      const Shape is = in_c.shape();
      const int co = w_c.shape().n;
      const int kdim = is.c * k * k;
      const std::size_t n_cols = static_cast<std::size_t>(oh) * ow;
      const std::size_t in_plane = static_cast<std::size_t>(is.c) * is.h * is.w;
      const std::size_t out_plane = static_cast<std::size_t>(co) * n_cols;

      if (b_c.requires_grad()) {
        T* gb = b_c.ensure_grad();
        for (int b = 0; b < is.n; ++b) {
          for (int m = 0; m < co; ++m) {
            const T* row = gout + b * out_plane + static_cast<std::size_t>(m) * n_cols;
            T s{0};
            for (std::size_t i = 0; i < n_cols; ++i) s += row[i];
            gb[m] += s;
          }
        }
      }
      if (w_c.requires_grad()) {
        T* gw = w_c.ensure_grad();
        std::vector<T> cols_t(n_cols * kdim);
        for (int b = 0; b < is.n; ++b) {
          detail::im2col_t(in_c.data() + b * in_plane, is.c, is.h, is.w, k, stride, padding, oh,
                           ow, cols_t.data());
          detail::gemm<T, true>(co, kdim, static_cast<int>(n_cols), gout + b * out_plane, n_cols,
                                cols_t.data(), kdim, gw, kdim);
        }
      }
      if (in_c.requires_grad()) {
        T* gi = in_c.ensure_grad();
        std::vector<T> wt(static_cast<std::size_t>(kdim) * co);
        for (int m = 0; m < co; ++m) {
          for (int r = 0; r < kdim; ++r) {
            wt[static_cast<std::size_t>(r) * co + m] = w_c.data()[static_cast<std::size_t>(m) * kdim + r];
          }
        }
        std::vector<T> gcols(static_cast<std::size_t>(kdim) * n_cols);
        for (int b = 0; b < is.n; ++b) {
          detail::gemm<T>(kdim, static_cast<int>(n_cols), co, wt.data(), co, gout + b * out_plane,
                          n_cols, gcols.data(), n_cols);
          detail::col2im_add(gcols.data(), is.c, is.h, is.w, k, stride, padding, oh, ow,
                             gi + b * in_plane);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// relu: elementwise max(0, x); gradient is the indicator of x > 0.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> relu(const Tensor<T>& input, GradTape<T>* tape = nullptr) {
  Tensor<T> out(input.shape());
  const std::size_t n = input.numel();
  const T* x = input.data();
  T* y = out.data();
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};

  if (detail::wants_grad(tape, {input.requires_grad()})) {
    out.set_requires_grad(true);
    Tensor<T> in_c = input, out_c = out;
    tape->record("relu", out, [in_c, out_c]() mutable {
      const T* g = out_c.grad();
      if (!g) return;
      T* gi = in_c.ensure_grad();
      const T* x = in_c.data();
      const std::size_t n = in_c.numel();
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i] > T{0}) gi[i] += g[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// add: elementwise sum of two same-shape tensors.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, GradTape<T>* tape = nullptr) {
  check_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];

  if (detail::wants_grad(tape, {a.requires_grad(), b.requires_grad()})) {
    out.set_requires_grad(true);
    Tensor<T> a_c = a, b_c = b, out_c = out;
    tape->record("add", out, [a_c, b_c, out_c]() mutable {
      const T* g = out_c.grad();
      if (!g) return;
      const std::size_t n = out_c.numel();
      if (a_c.requires_grad()) {
        T* ga = a_c.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (b_c.requires_grad()) {
        T* gb = b_c.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nearest-neighbor 2x upsampling.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> upsample_nn2x(const Tensor<T>& input, GradTape<T>* tape = nullptr) {
  const Shape is = input.shape();
  Tensor<T> out(Shape{is.n, is.c, is.h * 2, is.w * 2});
  for (int b = 0; b < is.n; ++b) {
    for (int c = 0; c < is.c; ++c) {
      for (int y = 0; y < is.h * 2; ++y) {
        const T* srow = &input.at(b, c, y / 2, 0);
        T* drow = &out.at(b, c, y, 0);
        for (int x = 0; x < is.w * 2; ++x) drow[x] = srow[x / 2];
      }
    }
  }
  if (detail::wants_grad(tape, {input.requires_grad()})) {
    out.set_requires_grad(true);
    Tensor<T> in_c = input, out_c = out;
    tape->record("upsample_nn2x", out, [in_c, out_c]() mutable {
      const T* g = out_c.grad();
      if (!g) return;
      in_c.ensure_grad();
      const Shape is = in_c.shape();
      for (int b = 0; b < is.n; ++b) {
        for (int c = 0; c < is.c; ++c) {
          for (int y = 0; y < is.h; ++y) {
            for (int x = 0; x < is.w; ++x) {
              // fixed row-major order over the four children
              T s = out_c.grad()[out_c.index(b, c, 2 * y, 2 * x)];
              s += out_c.grad()[out_c.index(b, c, 2 * y, 2 * x + 1)];
              s += out_c.grad()[out_c.index(b, c, 2 * y + 1, 2 * x)];
              s += out_c.grad()[out_c.index(b, c, 2 * y + 1, 2 * x + 1)];
              in_c.grad()[in_c.index(b, c, y, x)] += s;
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Symmetric-reflection padding on the bottom/right borders.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> reflect_pad_br(const Tensor<T>& input, int pad_bottom, int pad_right,
                         GradTape<T>* tape = nullptr) {
  if (pad_bottom < 0 || pad_right < 0) throw ShapeError("reflect_pad_br: negative padding");
  const Shape is = input.shape();
  Tensor<T> out(Shape{is.n, is.c, is.h + pad_bottom, is.w + pad_right});
  const Shape os = out.shape();
  for (int b = 0; b < os.n; ++b) {
    for (int c = 0; c < os.c; ++c) {
      for (int y = 0; y < os.h; ++y) {
        const int sy = detail::reflect_index(y, is.h);
        for (int x = 0; x < os.w; ++x) {
          out.at(b, c, y, x) = input.at(b, c, sy, detail::reflect_index(x, is.w));
        }
      }
    }
  }
  if (detail::wants_grad(tape, {input.requires_grad()})) {
    out.set_requires_grad(true);
    Tensor<T> in_c = input, out_c = out;
    tape->record("reflect_pad_br", out, [in_c, out_c]() mutable {
      const T* g = out_c.grad();
      if (!g) return;
      in_c.ensure_grad();
      const Shape is = in_c.shape();
      const Shape os = out_c.shape();
      for (int b = 0; b < os.n; ++b) {
        for (int c = 0; c < os.c; ++c) {
          for (int y = 0; y < os.h; ++y) {
            const int sy = detail::reflect_index(y, is.h);
            for (int x = 0; x < os.w; ++x) {
              in_c.grad()[in_c.index(b, c, sy, detail::reflect_index(x, is.w))] +=
                  g[out_c.index(b, c, y, x)];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Top-left spatial crop to (h, w).
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> crop_tl(const Tensor<T>& input, int h, int w, GradTape<T>* tape = nullptr) {
  const Shape is = input.shape();
  if (h < 1 || h > is.h) throw ShapeError("crop_tl: height axis out of range");
  if (w < 1 || w > is.w) throw ShapeError("crop_tl: width axis out of range");
  Tensor<T> out(Shape{is.n, is.c, h, w});
  for (int b = 0; b < is.n; ++b) {
    for (int c = 0; c < is.c; ++c) {
      for (int y = 0; y < h; ++y) {
        const T* srow = &input.at(b, c, y, 0);
        T* drow = &out.at(b, c, y, 0);
        for (int x = 0; x < w; ++x) drow[x] = srow[x];
      }
    }
  }
  if (detail::wants_grad(tape, {input.requires_grad()})) {
    out.set_requires_grad(true);
    Tensor<T> in_c = input, out_c = out;
    tape->record("crop_tl", out, [in_c, out_c, h, w]() mutable {
      const T* g = out_c.grad();
      if (!g) return;
      in_c.ensure_grad();
      const Shape is = in_c.shape();
      for (int b = 0; b < is.n; ++b) {
        for (int c = 0; c < is.c; ++c) {
          for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
              in_c.grad()[in_c.index(b, c, y, x)] += g[out_c.index(b, c, y, x)];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel slice [c0, c1).
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& input, int c0, int c1, GradTape<T>* tape = nullptr) {
  const Shape is = input.shape();
  if (c0 < 0 || c1 > is.c || c0 >= c1) {
    throw ShapeError("slice_channels: channel axis range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") invalid for " + std::to_string(is.c) + " channels");
  }
  Tensor<T> out(Shape{is.n, c1 - c0, is.h, is.w});
  const std::size_t plane = static_cast<std::size_t>(is.h) * is.w;
  for (int b = 0; b < is.n; ++b) {
    for (int c = c0; c < c1; ++c) {
      const T* src = input.data() + (static_cast<std::size_t>(b) * is.c + c) * plane;
      T* dst = out.data() + (static_cast<std::size_t>(b) * (c1 - c0) + (c - c0)) * plane;
      std::copy(src, src + plane, dst);
    }
  }
  if (detail::wants_grad(tape, {input.requires_grad()})) {
    out.set_requires_grad(true);
    Tensor<T> in_c = input, out_c = out;
    tape->record("slice_channels", out, [in_c, out_c, c0, c1]() mutable {
      const T* g = out_c.grad();
      if (!g) return;
      T* gi = in_c.ensure_grad();
      const Shape is = in_c.shape();
      const std::size_t plane = static_cast<std::size_t>(is.h) * is.w;
      for (int b = 0; b < is.n; ++b) {
        for (int c = c0; c < c1; ++c) {
          T* dst = gi + (static_cast<std::size_t>(b) * is.c + c) * plane;
          const T* src = g + (static_cast<std::size_t>(b) * (c1 - c0) + (c - c0)) * plane;
          for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// residual_block: conv3x3 -> relu -> conv3x3, plus identity shortcut.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> residual_block(const Tensor<T>& input, const Tensor<T>& w1, const Tensor<T>& b1,
                         const Tensor<T>& w2, const Tensor<T>& b2, GradTape<T>* tape = nullptr) {
  Tensor<T> y = conv2d(input, w1, b1, 1, 1, tape);
  y = relu(y, tape);
  y = conv2d(y, w2, b2, 1, 1, tape);
  return add(y, input, tape);
}

// ---------------------------------------------------------------------------
// down4: two stride-2 3x3 convolutions with a relu between; spatial size is
// exactly quartered. Caller must supply sizes divisible by 4.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> down4(const Tensor<T>& input, const Tensor<T>& w1, const Tensor<T>& b1,
                const Tensor<T>& w2, const Tensor<T>& b2, GradTape<T>* tape = nullptr) {
  const Shape is = input.shape();
  if (is.h % 4 != 0) {
    throw ShapeError("down4: height axis " + std::to_string(is.h) +
                     " not divisible by 4 (pad upstream)");
  }
  if (is.w % 4 != 0) {
    throw ShapeError("down4: width axis " + std::to_string(is.w) +
                     " not divisible by 4 (pad upstream)");
  }
  Tensor<T> y = conv2d(input, w1, b1, 2, 1, tape);
  y = relu(y, tape);
  return conv2d(y, w2, b2, 2, 1, tape);
}

// ---------------------------------------------------------------------------
// up4: two stages of nearest-neighbor x2 followed by a 3x3 convolution; relu
// only after the first stage. Output channels come from w2.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> up4(const Tensor<T>& input, const Tensor<T>& w1, const Tensor<T>& b1,
              const Tensor<T>& w2, const Tensor<T>& b2, GradTape<T>* tape = nullptr) {
  Tensor<T> y = upsample_nn2x(input, tape);
  y = conv2d(y, w1, b1, 1, 1, tape);
  y = relu(y, tape);
  y = upsample_nn2x(y, tape);
  return conv2d(y, w2, b2, 1, 1, tape);
}

// ---------------------------------------------------------------------------
// l1_loss: mean absolute error. Subgradient at exact ties is 0.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target, GradTape<T>* tape = nullptr) {
  check_same_shape(pred.shape(), target.shape(), "l1_loss");
  const std::size_t n = pred.numel();
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(pred.data()[i] - target.data()[i]);
  Tensor<T> out(Shape{1, 1, 1, 1});
  out.data()[0] = acc / static_cast<T>(n);

  if (detail::wants_grad(tape, {pred.requires_grad(), target.requires_grad()})) {
    out.set_requires_grad(true);
    Tensor<T> p_c = pred, t_c = target, out_c = out;
    tape->record("l1_loss", out, [p_c, t_c, out_c]() mutable {
      const T* g = out_c.grad();
      if (!g) return;
      const std::size_t n = p_c.numel();
      const T scale = g[0] / static_cast<T>(n);
      const bool gp = p_c.requires_grad();
      const bool gt = t_c.requires_grad();
      T* pg = gp ? p_c.ensure_grad() : nullptr;
      T* tg = gt ? t_c.ensure_grad() : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        const T d = p_c.data()[i] - t_c.data()[i];
        const T s = d > T{0} ? scale : d < T{0} ? -scale : T{0};
        if (gp) pg[i] += s;
        if (gt) tg[i] -= s;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// weighted_sum: scalar projection sum_i coeffs[i] * x[i]; used to reduce
// tensor-valued operations to scalars for gradient checking.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& coeffs,
                       GradTape<T>* tape = nullptr) {
  if (coeffs.size() != x.numel()) {
    throw ShapeError("weighted_sum: coefficient count " + std::to_string(coeffs.size()) +
                     " does not match tensor with " + std::to_string(x.numel()) + " elements");
  }
  T acc{0};
  for (std::size_t i = 0; i < x.numel(); ++i) acc += coeffs[i] * x.data()[i];
  Tensor<T> out(Shape{1, 1, 1, 1});
  out.data()[0] = acc;
  if (detail::wants_grad(tape, {x.requires_grad()})) {
    out.set_requires_grad(true);
    Tensor<T> x_c = x, out_c = out;
    tape->record("weighted_sum", out, [x_c, out_c, coeffs]() mutable {
      const T* g = out_c.grad();
      if (!g) return;
      T* gx = x_c.ensure_grad();
      for (std::size_t i = 0; i < x_c.numel(); ++i) gx[i] += coeffs[i] * g[0];
    });
  }
  return out;
}

// Helper for bias tensors: shape (1, c, 1, 1).
template <typename T>
Tensor<T> make_bias(int channels, T value = T{0}) {
  return Tensor<T>::full(Shape{1, channels, 1, 1}, value);
}

}  // namespace ddet
