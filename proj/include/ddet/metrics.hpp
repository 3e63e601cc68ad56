#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "ddet/error.hpp"
#include "ddet/tensor.hpp"

namespace ddet {

// BT.601 luma: Y = 0.299 R + 0.587 G + 0.114 B.
template <typename T>
Tensor<T> rgb_to_y(const Tensor<T>& img) {
  const Shape s = img.shape();
  if (s.c != 3) throw ShapeError("rgb_to_y expects 3 channels, got " + s.str());
  Tensor<T> out(Shape{s.n, 1, s.h, s.w});
  for (int b = 0; b < s.n; ++b)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const double v = 0.299 * img.at(b, 0, y, x) + 0.587 * img.at(b, 1, y, x) +
                         0.114 * img.at(b, 2, y, x);
        out.at(b, 0, y, x) = static_cast<T>(v);
      }
  return out;
}

enum class PsnrMode { kRgb, kY };

inline const char* psnr_mode_name(PsnrMode m) { return m == PsnrMode::kRgb ? "rgb" : "y"; }

// PSNR against a [0,1] dynamic range. Bit-identical inputs have no finite
// PSNR; that case is reported through the flag, not as a number.
struct PsnrResult {
  bool identical = false;
  double db = 0.0;
};

template <typename T>
PsnrResult psnr(const Tensor<T>& a, const Tensor<T>& b, PsnrMode mode = PsnrMode::kRgb) {
  check_same_shape(a.shape(), b.shape(), "psnr");
  auto mse_of = [](const Tensor<T>& x, const Tensor<T>& y) {
    const T* px = x.data();
    const T* py = y.data();
    double acc = 0.0;
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(px[i]) - static_cast<double>(py[i]);
      acc += d * d;
    }
    return acc / static_cast<double>(n);
  };
  double mse;
  if (mode == PsnrMode::kY) {
    mse = mse_of(rgb_to_y(a), rgb_to_y(b));
  } else {
    mse = mse_of(a, b);
  }
  if (mse == 0.0) return PsnrResult{true, 0.0};
  return PsnrResult{false, 10.0 * std::log10(1.0 / mse)};
}

namespace detail {

inline std::vector<double> ssim_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size) * size);
  const int half = size / 2;
  double sum = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dy = y - half;
      const double dx = x - half;
      w[static_cast<std::size_t>(y) * size + x] =
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      sum += w[static_cast<std::size_t>(y) * size + x];
    }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace detail

// Mean local SSIM over Gaussian-weighted windows on the luma channel,
// valid (fully interior) window positions only, dynamic range 1.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, int window = 11, double sigma = 1.5,
            double k1 = 0.01, double k2 = 0.03) {
  check_same_shape(a.shape(), b.shape(), "ssim");
  const Shape s = a.shape();
  if (s.h < window || s.w < window) {
    throw ShapeError("ssim: image " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " is smaller than the " + std::to_string(window) + "-pixel window");
  }
  const Tensor<T> ya = (s.c == 3) ? rgb_to_y(a) : a;
  const Tensor<T> yb = (s.c == 3) ? rgb_to_y(b) : b;
  const std::vector<double> w = detail::ssim_window(window, sigma);
  const double c1 = k1 * k1;
  const double c2 = k2 * k2;

  double total = 0.0;
  std::size_t count = 0;
  for (int bi = 0; bi < s.n; ++bi)
    for (int y0 = 0; y0 + window <= s.h; ++y0)
      for (int x0 = 0; x0 + window <= s.w; ++x0) {
        double mu_a = 0.0, mu_b = 0.0;
        for (int y = 0; y < window; ++y)
          for (int x = 0; x < window; ++x) {
            const double wv = w[static_cast<std::size_t>(y) * window + x];
            mu_a += wv * ya.at(bi, 0, y0 + y, x0 + x);
            mu_b += wv * yb.at(bi, 0, y0 + y, x0 + x);
          }
        double var_a = 0.0, var_b = 0.0, cov = 0.0;
        for (int y = 0; y < window; ++y)
          for (int x = 0; x < window; ++x) {
            const double wv = w[static_cast<std::size_t>(y) * window + x];
            const double da = ya.at(bi, 0, y0 + y, x0 + x) - mu_a;
            const double db = yb.at(bi, 0, y0 + y, x0 + x) - mu_b;
            var_a += wv * da * da;
            var_b += wv * db * db;
            cov += wv * da * db;
          }
        const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
        const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
        total += num / den;
        ++count;
      }
  return total / static_cast<double>(count);
}

// Crops n pixels off every border. Evaluation conventions disagree on whether
// border pixels should count, so it is an explicit option.
template <typename T>
Tensor<T> shave_border(const Tensor<T>& img, int n) {
  if (n == 0) return img;
  const Shape s = img.shape();
  if (n < 0 || s.h <= 2 * n || s.w <= 2 * n) {
    throw ShapeError("shave_border: cannot shave " + std::to_string(n) + " px from " + s.str());
  }
  Tensor<T> out(Shape{s.n, s.c, s.h - 2 * n, s.w - 2 * n});
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < out.shape().h; ++y)
        for (int x = 0; x < out.shape().w; ++x) out.at(b, c, y, x) = img.at(b, c, y + n, x + n);
  return out;
}

// One evaluated image: identity of the input, both quality metrics, and the
// forward-pass wall time.
struct EvalRecord {
  std::string image_id;
  bool psnr_identical = false;
  double psnr_db = 0.0;
  double ssim_val = 0.0;
  double forward_time_s = 0.0;
};

inline std::string eval_csv_row(const EvalRecord& r) {
  char buf[192];
  if (r.psnr_identical) {
    std::snprintf(buf, sizeof(buf), "%s,identical,%.6f,%.6f", r.image_id.c_str(), r.ssim_val,
                  r.forward_time_s);
  } else {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f", r.image_id.c_str(), r.psnr_db,
                  r.ssim_val, r.forward_time_s);
  }
  return buf;
}

inline void write_eval_csv(const std::string& path, const std::vector<EvalRecord>& records,
                           const std::string& comment = "") {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "image_id,psnr_db,ssim,forward_time_s\n";
  for (const auto& r : records) out << eval_csv_row(r) << "\n";
  if (!out) throw IoError("write failed for '" + path + "'");
}

struct EvalSummary {
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  std::size_t counted = 0;   // rows with a finite PSNR
  std::size_t identical = 0; // rows skipped from the PSNR mean
};

inline EvalSummary summarize(const std::vector<EvalRecord>& records) {
  EvalSummary s;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& r : records) {
    ssim_sum += r.ssim_val;
    if (r.psnr_identical) {
      ++s.identical;
    } else {
      psnr_sum += r.psnr_db;
      ++s.counted;
    }
  }
  if (s.counted) s.mean_psnr_db = psnr_sum / static_cast<double>(s.counted);
  if (!records.empty()) s.mean_ssim = ssim_sum / static_cast<double>(records.size());
  return s;
}

}  // namespace ddet
