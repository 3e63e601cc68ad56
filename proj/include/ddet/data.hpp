#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "ddet/error.hpp"
#include "ddet/ops.hpp"
#include "ddet/png_io.hpp"
#include "ddet/rng.hpp"
#include "ddet/tensor.hpp"

namespace ddet {

// Registered LR/HR pair: both images share one spatial size, values in [0,1].
template <typename T>
struct ImagePair {
  Tensor<T> lr;
  Tensor<T> hr;
  std::string scene_id;
  int nominal_scale = 4;
};

// Synthetic degradation recipe. sigma/radius of 0 mean "derive from scale"
// (sigma = 0.6 * scale, radius = ceil(3 * sigma)); resolved() fills them in.
struct DegradeConfig {
  double gauss_sigma = 0.0;
  int gauss_radius = 0;
  int scale = 4;
  double shift_max = 0.75;
  std::uint64_t seed = 0;

  DegradeConfig resolved() const {
    DegradeConfig r = *this;
    if (r.scale < 2 || r.scale > 4) {
      throw ConfigError("degrade: scale must be 2, 3, or 4, got " + std::to_string(r.scale));
    }
    if (r.gauss_sigma == 0.0) r.gauss_sigma = 0.6 * r.scale;
    if (r.gauss_sigma <= 0.0) throw ConfigError("degrade: gauss_sigma must be > 0");
    const int min_radius = static_cast<int>(std::ceil(3.0 * r.gauss_sigma));
    if (r.gauss_radius == 0) r.gauss_radius = min_radius;
    if (r.gauss_radius < min_radius) {
      throw ConfigError("degrade: gauss_radius must be >= ceil(3*sigma) = " +
                        std::to_string(min_radius));
    }
    if (r.shift_max < 0.0) throw ConfigError("degrade: shift_max must be >= 0");
    return r;
  }
};

// ---------------------------------------------------------------------------
// Separable normalized Gaussian blur with edge-inclusive reflection. The
// reflection pairs every interior/exterior tap symmetrically, so a symmetric
// normalized kernel conserves the global mean.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& img, double sigma, int radius) {
  if (sigma <= 0.0) throw ConfigError("gaussian_blur: sigma must be > 0");
  if (radius < 1) throw ConfigError("gaussian_blur: radius must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(radius) + 1);
  double sum = 0.0;
  for (int i = 0; i <= radius; ++i) {
    w[i] = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
    sum += (i == 0) ? w[i] : 2.0 * w[i];
  }
  for (auto& v : w) v /= sum;

  const Shape s = img.shape();
  Tensor<T> mid(s);
  Tensor<T> out(s);
  // Horizontal pass.
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          double acc = w[0] * img.at(b, c, y, x);
          for (int i = 1; i <= radius; ++i) {
            acc += w[i] * (img.at(b, c, y, detail::reflect_index(x - i, s.w)) +
                           img.at(b, c, y, detail::reflect_index(x + i, s.w)));
          }
          mid.at(b, c, y, x) = static_cast<T>(acc);
        }
  // Vertical pass.
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          double acc = w[0] * mid.at(b, c, y, x);
          for (int i = 1; i <= radius; ++i) {
            acc += w[i] * (mid.at(b, c, detail::reflect_index(y - i, s.h), x) +
                           mid.at(b, c, detail::reflect_index(y + i, s.h), x));
          }
          out.at(b, c, y, x) = static_cast<T>(acc);
        }
  return out;
}

namespace detail {

// Catmull-Rom cubic (a = -0.5). Weights over any unit-spaced window sum to 1.
inline double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::fabs(t);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Bicubic resampling to an explicit size: Catmull-Rom taps, half-pixel center
// alignment, clamp-to-edge sampling, output clamped to [0,1]. Separable
// (horizontal pass, then vertical).
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> bicubic_resize_to(const Tensor<T>& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("bicubic_resize: output size " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " is below 1x1");
  }
  const Shape s = img.shape();

  struct Taps {
    int i0;
    double w[4];
  };
  auto make_taps = [](int out_n, int in_n) {
    std::vector<Taps> taps(out_n);
    const double ratio = static_cast<double>(in_n) / out_n;
    for (int o = 0; o < out_n; ++o) {
      const double src = (o + 0.5) * ratio - 0.5;
      const int base = static_cast<int>(std::floor(src)) - 1;
      taps[o].i0 = base;
      for (int j = 0; j < 4; ++j) taps[o].w[j] = detail::cubic_weight(src - (base + j));
    }
    return taps;
  };
  const std::vector<Taps> tx = make_taps(out_w, s.w);
  const std::vector<Taps> ty = make_taps(out_h, s.h);

  Tensor<T> mid(Shape{s.n, s.c, s.h, out_w});
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < out_w; ++x) {
          const Taps& t = tx[x];
          double acc = 0.0;
          for (int j = 0; j < 4; ++j) {
            acc += t.w[j] * img.at(b, c, y, detail::clamp_index(t.i0 + j, s.w));
          }
          mid.at(b, c, y, x) = static_cast<T>(acc);
        }

  Tensor<T> out(Shape{s.n, s.c, out_h, out_w});
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < out_h; ++y) {
        const Taps& t = ty[y];
        for (int x = 0; x < out_w; ++x) {
          double acc = 0.0;
          for (int j = 0; j < 4; ++j) {
            acc += t.w[j] * mid.at(b, c, detail::clamp_index(t.i0 + j, s.h), x);
          }
          acc = acc < 0.0 ? 0.0 : (acc > 1.0 ? 1.0 : acc);
          out.at(b, c, y, x) = static_cast<T>(acc);
        }
      }
  return out;
}

// Rational-factor wrapper: output sides are floor(side * num / den).
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, int scale_num, int scale_den) {
  if (scale_num < 1 || scale_den < 1) throw ConfigError("bicubic_resize: scales must be positive");
  const Shape s = img.shape();
  const int oh = static_cast<int>(static_cast<long long>(s.h) * scale_num / scale_den);
  const int ow = static_cast<int>(static_cast<long long>(s.w) * scale_num / scale_den);
  return bicubic_resize_to(img, oh, ow);
}

// ---------------------------------------------------------------------------
// Sub-pixel translation: out(y, x) = in(y - dy, x - dx), bilinear, reflected
// borders. Positive (dx, dy) moves content right/down.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> random_shift(const Tensor<T>& img, double dx, double dy) {
  const Shape s = img.shape();
  Tensor<T> out(s);
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const double sy = y - dy;
          const double sx = x - dx;
          const int y0 = static_cast<int>(std::floor(sy));
          const int x0 = static_cast<int>(std::floor(sx));
          const double fy = sy - y0;
          const double fx = sx - x0;
          auto sample = [&](int yy, int xx) {
            return static_cast<double>(
                img.at(b, c, detail::reflect_index(yy, s.h), detail::reflect_index(xx, s.w)));
          };
          const double v = (1.0 - fy) * ((1.0 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                           fy * ((1.0 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
          out.at(b, c, y, x) = static_cast<T>(v);
        }
  return out;
}

// ---------------------------------------------------------------------------
// Full degradation: blur -> bicubic down by scale -> bicubic back up to the
// original size -> optional sub-pixel misalignment. The result is a
// registered same-size pair, everything in [0,1].
// ---------------------------------------------------------------------------
template <typename T>
ImagePair<T> degrade(const Tensor<T>& hr, const DegradeConfig& cfg,
                     const std::string& scene_id = "synthetic") {
  const DegradeConfig r = cfg.resolved();
  const Shape s = hr.shape();
  Tensor<T> x = gaussian_blur(hr, r.gauss_sigma, r.gauss_radius);
  x = bicubic_resize(x, 1, r.scale);
  x = bicubic_resize_to(x, s.h, s.w);
  if (r.shift_max > 0.0) {
    Rng rng(r.seed);
    const double dx = rng.uniform(-r.shift_max, r.shift_max);
    const double dy = rng.uniform(-r.shift_max, r.shift_max);
    x = random_shift(x, dx, dy);
  }
  for (auto& v : x.vec()) v = v < T{0} ? T{0} : (v > T{1} ? T{1} : v);
  return ImagePair<T>{std::move(x), hr.clone(), scene_id, r.scale};
}

// ---------------------------------------------------------------------------
// Paired-directory ingestion: every lr/<name>.png must have hr/<name>.png and
// vice versa; pairs come back sorted by filename, sizes verified per pair.
// ---------------------------------------------------------------------------
template <typename T = float>
std::vector<ImagePair<T>> load_pair_dir(const std::string& lr_dir, const std::string& hr_dir,
                                        int nominal_scale = 4) {
  namespace fs = std::filesystem;
  auto list_pngs = [](const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".png") {
        names.push_back(e.path().filename().string());
      }
    }
    std::sort(names.begin(), names.end());
    return names;
  };
  const std::vector<std::string> lr_names = list_pngs(lr_dir);
  const std::vector<std::string> hr_names = list_pngs(hr_dir);
  for (const auto& n : lr_names) {
    if (!std::binary_search(hr_names.begin(), hr_names.end(), n)) {
      throw IoError("LR image '" + n + "' has no HR counterpart in '" + hr_dir + "'");
    }
  }
  for (const auto& n : hr_names) {
    if (!std::binary_search(lr_names.begin(), lr_names.end(), n)) {
      throw IoError("HR image '" + n + "' has no LR counterpart in '" + lr_dir + "'");
    }
  }

  std::vector<ImagePair<T>> pairs;
  pairs.reserve(lr_names.size());
  for (const auto& n : lr_names) {
    Tensor<T> lr = png_read<T>((fs::path(lr_dir) / n).string());
    Tensor<T> hr = png_read<T>((fs::path(hr_dir) / n).string());
    if (!(lr.shape() == hr.shape())) {
      throw IoError("pair '" + n + "' size mismatch: lr " + lr.shape().str() + " vs hr " +
                    hr.shape().str());
    }
    pairs.push_back(ImagePair<T>{std::move(lr), std::move(hr), fs::path(n).stem().string(),
                                 nominal_scale});
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Aligned random patch sampling: identical crop windows in lr and hr, seeded.
// Pairs too small for the patch are skipped with a warning; if nothing is
// left, that is an error.
// ---------------------------------------------------------------------------
template <typename T>
std::vector<ImagePair<T>> sample_patches(const std::vector<ImagePair<T>>& pairs, int patch,
                                         int count, std::uint64_t seed) {
  if (patch < 4 || patch % 4 != 0) {
    throw ConfigError("sample_patches: patch size must be a positive multiple of 4, got " +
                      std::to_string(patch));
  }
  if (count < 1) throw ConfigError("sample_patches: count must be >= 1");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Shape s = pairs[i].lr.shape();
    if (s.h < patch || s.w < patch) {
      std::fprintf(stderr, "warning: skipping '%s' (%dx%d smaller than patch %d)\n",
                   pairs[i].scene_id.c_str(), s.h, s.w, patch);
    } else {
      eligible.push_back(i);
    }
  }
  if (eligible.empty()) throw Error("sample_patches: no image large enough for the patch size");

  auto crop = [](const Tensor<T>& t, int y0, int x0, int size) {
    const Shape s = t.shape();
    Tensor<T> out(Shape{s.n, s.c, size, size});
    for (int b = 0; b < s.n; ++b)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x) out.at(b, c, y, x) = t.at(b, c, y0 + y, x0 + x);
    return out;
  };

  Rng rng(seed);
  std::vector<ImagePair<T>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const ImagePair<T>& p = pairs[eligible[rng.below(eligible.size())]];
    const Shape s = p.lr.shape();
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.h - patch) + 1));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.w - patch) + 1));
    out.push_back(ImagePair<T>{crop(p.lr, y0, x0, patch), crop(p.hr, y0, x0, patch), p.scene_id,
                               p.nominal_scale});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Procedural test image: smooth multi-frequency sinusoid field plus a few
// soft-edged disks, rescaled per channel into [0.05, 0.95]. Deterministic in
// the seed.
// ---------------------------------------------------------------------------
template <typename T = float>
Tensor<T> synth_image(std::uint64_t seed, int h, int w) {
  Rng rng(seed);
  Tensor<T> img(Shape{1, 3, h, w});
  constexpr double kTau = 6.283185307179586;

  struct Wave {
    double fx, fy, phase, amp;
  };
  struct Disk {
    double cx, cy, r, amp[3];
  };
  std::vector<Wave> waves(4);
  for (int j = 0; j < 4; ++j) {
    waves[j] = Wave{rng.uniform(0.5, 3.5), rng.uniform(0.5, 3.5), rng.uniform(0.0, kTau),
                    1.0 / (1.0 + j)};
  }
  std::vector<Disk> disks(3);
  for (auto& d : disks) {
    d = Disk{rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85), rng.uniform(0.08, 0.25),
             {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}};
  }
  const double cphase[3] = {rng.uniform(0.0, kTau), rng.uniform(0.0, kTau),
                            rng.uniform(0.0, kTau)};

  for (int c = 0; c < 3; ++c) {
    double lo = 1e300, hi = -1e300;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double u = (x + 0.5) / w;
        const double v = (y + 0.5) / h;
        double val = 0.0;
        for (const auto& wv : waves) {
          val += wv.amp * std::sin(kTau * (wv.fx * u + wv.fy * v) + wv.phase + cphase[c]);
        }
        for (const auto& d : disks) {
          const double dist = std::hypot(u - d.cx, v - d.cy);
          const double t = std::clamp((d.r - dist) / (0.25 * d.r), 0.0, 1.0);
          val += d.amp[c] * t * t * (3.0 - 2.0 * t);  // smoothstep edge
        }
        img.at(0, c, y, x) = static_cast<T>(val);
        lo = std::min(lo, val);
        hi = std::max(hi, val);
      }
    const double span = hi > lo ? hi - lo : 1.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        img.at(0, c, y, x) =
            static_cast<T>(0.05 + 0.9 * (static_cast<double>(img.at(0, c, y, x)) - lo) / span);
      }
  }
  return img;
}

}  // namespace ddet
