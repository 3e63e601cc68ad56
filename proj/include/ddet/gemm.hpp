#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace ddet::detail {

// Blocked single-threaded GEMM used by the convolution paths.
//
// Every C element accumulates its K terms strictly in increasing k, no matter
// how the loops are tiled, so results are bit-identical to the plain triple
// loop (and to the brute-force convolution oracle, which sums in the same
// order). Blocking never splits the k loop; only m/n are tiled.

inline constexpr int kGemmMr = 4;   // rows of C per micro tile
inline constexpr int kGemmNr = 32;  // columns of C per micro tile

// C tile = A[mr rows] * B, accumulated in local registers, then stored.
// `Accumulate` selects C += tile vs C = tile.
template <typename T, bool Accumulate>
inline void gemm_tile(int mr, int nr, int K, const T* a, std::size_t lda, const T* b,
                      std::size_t ldb, T* c, std::size_t ldc) {
  T acc[kGemmMr][kGemmNr] = {};
  for (int k = 0; k < K; ++k) {
    const T* brow = b + static_cast<std::size_t>(k) * ldb;
    for (int m = 0; m < mr; ++m) {
      const T av = a[static_cast<std::size_t>(m) * lda + k];
      for (int n = 0; n < nr; ++n) {
        acc[m][n] += av * brow[n];
      }
    }
  }
  for (int m = 0; m < mr; ++m) {
    T* crow = c + static_cast<std::size_t>(m) * ldc;
    for (int n = 0; n < nr; ++n) {
      if constexpr (Accumulate) {
        crow[n] += acc[m][n];
      } else {
        crow[n] = acc[m][n];
      }
    }
  }
}

// Full-width micro kernel with compile-time tile bounds; the hot path.
template <typename T, bool Accumulate>
inline void gemm_tile_full(int K, const T* a, std::size_t lda, const T* b, std::size_t ldb,
                           T* c, std::size_t ldc) {
  T acc[kGemmMr][kGemmNr] = {};
  for (int k = 0; k < K; ++k) {
    const T* brow = b + static_cast<std::size_t>(k) * ldb;
    for (int m = 0; m < kGemmMr; ++m) {
      const T av = a[static_cast<std::size_t>(m) * lda + k];
      for (int n = 0; n < kGemmNr; ++n) {
        acc[m][n] += av * brow[n];
      }
    }
  }
  for (int m = 0; m < kGemmMr; ++m) {
    T* crow = c + static_cast<std::size_t>(m) * ldc;
    for (int n = 0; n < kGemmNr; ++n) {
      if constexpr (Accumulate) {
        crow[n] += acc[m][n];
      } else {
        crow[n] = acc[m][n];
      }
    }
  }
}

// C[M x N] = A[M x K] * B[K x N] (row-major; Accumulate: C += A*B).
// n-blocks outermost so a K x Nr panel of B stays cache-resident while all
// row tiles sweep over it.
template <typename T, bool Accumulate = false>
void gemm(int M, int N, int K, const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
          std::size_t ldc) {
  for (int n0 = 0; n0 < N; n0 += kGemmNr) {
    const int nr = std::min(kGemmNr, N - n0);
    for (int m0 = 0; m0 < M; m0 += kGemmMr) {
      const int mr = std::min(kGemmMr, M - m0);
      const T* at = a + static_cast<std::size_t>(m0) * lda;
      const T* bt = b + n0;
      T* ct = c + static_cast<std::size_t>(m0) * ldc + n0;
      if (mr == kGemmMr && nr == kGemmNr) {
        gemm_tile_full<T, Accumulate>(K, at, lda, bt, ldb, ct, ldc);
      } else {
        gemm_tile<T, Accumulate>(mr, nr, K, at, lda, bt, ldb, ct, ldc);
      }
    }
  }
}

// im2col for one image: cols[K x N], K = ci*k*k patch rows, N = oh*ow output
// pixels, zero-filled where the patch reaches outside the input.
template <typename T>
void im2col(const T* img, int ci, int h, int w, int k, int stride, int pad, int oh, int ow,
            T* cols) {
  const std::size_t n_cols = static_cast<std::size_t>(oh) * ow;
  std::size_t row = 0;
  for (int c = 0; c < ci; ++c) {
    const T* plane = img + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj, ++row) {
        T* dst = cols + row * n_cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ki;
          T* drow = dst + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < ow; ++ox) drow[ox] = T{0};
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kj;
            drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : T{0};
          }
        }
      }
    }
  }
}

// Transposed layout, colsT[N x K]; used by the weight-gradient pass so its
// inner loop runs over contiguous memory.
template <typename T>
void im2col_t(const T* img, int ci, int h, int w, int k, int stride, int pad, int oh, int ow,
              T* cols_t) {
  const int kk = ci * k * k;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      T* dst = cols_t + (static_cast<std::size_t>(oy) * ow + ox) * kk;
      std::size_t row = 0;
      for (int c = 0; c < ci; ++c) {
        const T* plane = img + static_cast<std::size_t>(c) * h * w;
        for (int ki = 0; ki < k; ++ki) {
          const int iy = oy * stride - pad + ki;
          for (int kj = 0; kj < k; ++kj, ++row) {
            const int ix = ox * stride - pad + kj;
            dst[row] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                           ? plane[static_cast<std::size_t>(iy) * w + ix]
                           : T{0};
          }
        }
      }
    }
  }
}

// Scatter-add of a cols[K x N] gradient back onto the input image.
template <typename T>
void col2im_add(const T* cols, int ci, int h, int w, int k, int stride, int pad, int oh, int ow,
                T* img_grad) {
  const std::size_t n_cols = static_cast<std::size_t>(oh) * ow;
  std::size_t row = 0;
  for (int c = 0; c < ci; ++c) {
    T* plane = img_grad + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj, ++row) {
        const T* src = cols + row * n_cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          const T* srow = src + static_cast<std::size_t>(oy) * ow;
          T* drow = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace ddet::detail
