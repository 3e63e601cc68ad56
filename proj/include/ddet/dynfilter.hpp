#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "ddet/ops.hpp"
#include "ddet/tape.hpp"
#include "ddet/tensor.hpp"

namespace ddet {

// Per-pixel dynamic kernel bank: one k x k filter per spatial location,
// stored as a (n, k*k, h, w) tensor. Channel m holds kernel element
// (row m / k, col m % k) — row-major enumeration.
template <typename T>
struct KernelField {
  int k = 0;
  Tensor<T> weights;

  Shape shape() const { return weights.shape(); }
};

// Ordered list of kernel fields with distinct sizes sharing (n, h, w).
// Aggregation sums in list order, which fixes the floating-point result.
template <typename T>
struct KernelFieldSet {
  std::vector<KernelField<T>> fields;
};

// Relabels a (n, k*k, h, w) feature tensor as a kernel field. Pure
// relabeling: the returned field shares the tensor's storage, so the
// round-trip back to channels is bit-exact by construction.
template <typename T>
KernelField<T> reshape_channels_to_kernels(const Tensor<T>& field, int k) {
  if (k < 1 || k % 2 == 0) {
    throw ShapeError("reshape_channels_to_kernels: kernel size must be odd, got " +
                     std::to_string(k));
  }
  if (field.shape().c != k * k) {
    throw ShapeError("reshape_channels_to_kernels: channel axis has " +
                     std::to_string(field.shape().c) + " channels, expected k*k = " +
                     std::to_string(k * k));
  }
  return KernelField<T>{k, field};
}

template <typename T>
Tensor<T> kernels_to_channels(const KernelField<T>& field) {
  return field.weights;
}

namespace detail {

template <typename T>
void check_filter_shapes(const Tensor<T>& image, const KernelField<T>& kf, const char* what) {
  const Shape is = image.shape();
  const Shape ks = kf.weights.shape();
  if (kf.k < 1 || kf.k % 2 == 0) {
    throw ShapeError(std::string(what) + ": kernel size must be odd and positive, got " +
                     std::to_string(kf.k));
  }
  if (ks.c != kf.k * kf.k) {
    throw ShapeError(std::string(what) + ": kernel field channel axis has " +
                     std::to_string(ks.c) + " channels, expected " +
                     std::to_string(kf.k * kf.k));
  }
  if (ks.n != is.n) {
    throw ShapeError(std::string(what) + ": batch axis mismatch, image " + std::to_string(is.n) +
                     " vs kernels " + std::to_string(ks.n));
  }
  if (ks.h != is.h || ks.w != is.w) {
    throw ShapeError(std::string(what) + ": spatial mismatch, image " + is.str() +
                     " vs kernels " + ks.str());
  }
}

// Shared forward kernel. The per-pixel accumulation runs over (i, j) in
// row-major order with out-of-bounds taps skipped, exactly like the naive
// reference, so both paths agree bit-for-bit.
template <typename T>
void dynamic_filter_forward(const Tensor<T>& image, const KernelField<T>& kf, Tensor<T>& out) {
  const Shape is = image.shape();
  const int k = kf.k;
  const int c = k / 2;
  const Tensor<T>& kw = kf.weights;
  for (int b = 0; b < is.n; ++b) {
    for (int ch = 0; ch < is.c; ++ch) {
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
          const int dy = i - c;
          const int dx = j - c;
          const int y0 = std::max(0, -dy);
          const int y1 = std::min(is.h, is.h - dy);
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(is.w, is.w - dx);
          const int kc = i * k + j;
          for (int y = y0; y < y1; ++y) {
            const T* krow = &kw.at(b, kc, y, 0);
            const T* srow = &image.at(b, ch, y + dy, 0);
            T* drow = &out.at(b, ch, y, 0);
            for (int x = x0; x < x1; ++x) {
              drow[x] += krow[x] * srow[x + dx];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// dynamic_filter: applies the per-pixel kernels as content-adaptive local
// filters. The same k x k kernel at (y, x) is shared across all image
// channels; taps outside the image contribute zero.
//
//   out(b,ch,y,x) = sum_{i,j} K(b, i*k+j, y, x) * img(b, ch, y+i-k/2, x+j-k/2)
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> dynamic_filter(const Tensor<T>& image, const KernelField<T>& kernels,
                         GradTape<T>* tape = nullptr);

// Gradients of dynamic_filter with respect to both arguments: grad_image is
// the transpose (scatter) of the forward gather; grad_kernels collects the
// image taps weighted by the upstream gradient.
template <typename T>
std::pair<Tensor<T>, KernelField<T>> dynamic_filter_backward(const Tensor<T>& upstream,
                                                             const Tensor<T>& image,
                                                             const KernelField<T>& kernels) {
  detail::check_filter_shapes(image, kernels, "dynamic_filter_backward");
  check_same_shape(upstream.shape(), image.shape(), "dynamic_filter_backward");
  const Shape is = image.shape();
  const int k = kernels.k;
  const int c = k / 2;
  const Tensor<T>& kw = kernels.weights;

  Tensor<T> grad_image(is);
  // gather formulation of the scatter: for each input pixel, walk the output
  // pixels whose window covers it, in fixed (i, j) order
  for (int b = 0; b < is.n; ++b) {
    for (int ch = 0; ch < is.c; ++ch) {
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
          const int dy = c - i;  // output row = input row + dy
          const int dx = c - j;
          const int y0 = std::max(0, -dy);
          const int y1 = std::min(is.h, is.h - dy);
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(is.w, is.w - dx);
          const int kc = i * k + j;
          for (int yy = y0; yy < y1; ++yy) {
            const int oy = yy + dy;
            const T* urow = &upstream.at(b, ch, oy, 0);
            const T* krow = &kw.at(b, kc, oy, 0);
            T* drow = &grad_image.at(b, ch, yy, 0);
            for (int xx = x0; xx < x1; ++xx) {
              drow[xx] += urow[xx + dx] * krow[xx + dx];
            }
          }
        }
      }
    }
  }

  Tensor<T> grad_weights(kw.shape());
  for (int b = 0; b < is.n; ++b) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        const int dy = i - c;
        const int dx = j - c;
        const int kc = i * k + j;
        for (int ch = 0; ch < is.c; ++ch) {
          const int y0 = std::max(0, -dy);
          const int y1 = std::min(is.h, is.h - dy);
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(is.w, is.w - dx);
          for (int y = y0; y < y1; ++y) {
            const T* urow = &upstream.at(b, ch, y, 0);
            const T* srow = &image.at(b, ch, y + dy, 0);
            T* drow = &grad_weights.at(b, kc, y, 0);
            for (int x = x0; x < x1; ++x) {
              drow[x] += urow[x] * srow[x + dx];
            }
          }
        }
      }
    }
  }
  return {std::move(grad_image), KernelField<T>{k, std::move(grad_weights)}};
}

template <typename T>
Tensor<T> dynamic_filter(const Tensor<T>& image, const KernelField<T>& kernels,
                         GradTape<T>* tape) {
  detail::check_filter_shapes(image, kernels, "dynamic_filter");
  Tensor<T> out(image.shape());
  detail::dynamic_filter_forward(image, kernels, out);

  if (detail::wants_grad(tape, {image.requires_grad(), kernels.weights.requires_grad()})) {
    out.set_requires_grad(true);
    Tensor<T> img_c = image, kw_c = kernels.weights, out_c = out;
    const int k = kernels.k;
    tape->record("dynamic_filter", out, [img_c, kw_c, out_c, k]() mutable {
      const T* g = out_c.grad();
      if (!g) return;
      Tensor<T> upstream(out_c.shape(), std::vector<T>(g, g + out_c.numel()));
      auto [gi, gk] = dynamic_filter_backward(upstream, img_c, KernelField<T>{k, kw_c});
      if (img_c.requires_grad()) {
        T* dst = img_c.ensure_grad();
        for (std::size_t i = 0; i < img_c.numel(); ++i) dst[i] += gi.data()[i];
      }
      if (kw_c.requires_grad()) {
        T* dst = kw_c.ensure_grad();
        for (std::size_t i = 0; i < kw_c.numel(); ++i) dst[i] += gk.weights.data()[i];
      }
    });
  }
  return out;
}

// Reference oracle: the plainest possible nested loop, no blocking.
template <typename T>
Tensor<T> dynamic_filter_naive(const Tensor<T>& image, const KernelField<T>& kernels) {
  detail::check_filter_shapes(image, kernels, "dynamic_filter_naive");
  const Shape is = image.shape();
  const int k = kernels.k;
  const int c = k / 2;
  Tensor<T> out(is);
  for (int b = 0; b < is.n; ++b) {
    for (int ch = 0; ch < is.c; ++ch) {
      for (int y = 0; y < is.h; ++y) {
        for (int x = 0; x < is.w; ++x) {
          T acc{0};
          for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
              const int sy = y + i - c;
              const int sx = x + j - c;
              if (sy < 0 || sy >= is.h || sx < 0 || sx >= is.w) continue;
              acc += kernels.weights.at(b, i * k + j, y, x) * image.at(b, ch, sy, sx);
            }
          }
          out.at(b, ch, y, x) = acc;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// multiscale_aggregate: applies every kernel field to the same image and sums
// the results in declared field order.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> multiscale_aggregate(const Tensor<T>& image, const KernelFieldSet<T>& kernel_set,
                               GradTape<T>* tape = nullptr) {
  if (kernel_set.fields.empty()) {
    throw ShapeError("multiscale_aggregate: empty kernel field set");
  }
  for (std::size_t i = 0; i < kernel_set.fields.size(); ++i) {
    try {
      detail::check_filter_shapes(image, kernel_set.fields[i], "multiscale_aggregate");
    } catch (const ShapeError& e) {
      throw ShapeError("field " + std::to_string(i) + ": " + e.what());
    }
  }
  Tensor<T> out = dynamic_filter(image, kernel_set.fields[0], tape);
  for (std::size_t i = 1; i < kernel_set.fields.size(); ++i) {
    out = add(out, dynamic_filter(image, kernel_set.fields[i], tape), tape);
  }
  return out;
}

// Kernel field that is 1 at the window center everywhere: the identity filter.
template <typename T>
KernelField<T> one_hot_center_field(int n, int k, int h, int w) {
  Tensor<T> weights(Shape{n, k * k, h, w});
  const int center = (k / 2) * k + (k / 2);
  for (int b = 0; b < n; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        weights.at(b, center, y, x) = T{1};
      }
    }
  }
  return KernelField<T>{k, std::move(weights)};
}

}  // namespace ddet
