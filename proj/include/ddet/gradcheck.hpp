#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <vector>

#include "ddet/rng.hpp"
#include "ddet/tape.hpp"
#include "ddet/tensor.hpp"

namespace ddet {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::size_t checked = 0;
};

// Verifies analytic gradients against central finite differences
// (f(x+eps) - f(x-eps)) / (2 eps), in 64-bit precision.
//
// `fn` maps the input vector to a 1-element tensor and must record on the
// tape when one is supplied; it is called many times and must be pure.
// Relative error per element is |a - d| / max(|a|, |d|, 1e-8).
//
// `max_fd_per_input` caps the finite-difference probes per input (0 = every
// element); when capped, a seeded random subset of coordinates is probed.
// Failures are reported, not thrown.
inline GradCheckReport grad_check(
    const std::function<Tensor<double>(std::vector<Tensor<double>>&, GradTape<double>*)>& fn,
    std::vector<Tensor<double>> inputs, double eps, double tol,
    std::size_t max_fd_per_input = 0, std::uint64_t probe_seed = 0) {
  // analytic pass
  for (auto& t : inputs) t.set_requires_grad(true);
  GradTape<double> tape;
  Tensor<double> out = fn(inputs, &tape);
  if (out.numel() != 1) {
    throw ShapeError("grad_check: fn must produce a single element, got " + out.shape().str());
  }
  tape.backward(out);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) {
    const double* g = t.grad();
    analytic.emplace_back(g ? std::vector<double>(g, g + t.numel())
                            : std::vector<double>(t.numel(), 0.0));
  }

  // finite-difference pass
  GradCheckReport report;
  Rng rng(mix_seed(probe_seed, 0x6fd1));
  auto eval = [&]() {
    Tensor<double> v = fn(inputs, nullptr);
    return v.data()[0];
  };
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor<double>& t = inputs[ti];
    const std::size_t n = t.numel();
    std::vector<std::size_t> coords;
    if (max_fd_per_input == 0 || n <= max_fd_per_input) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < max_fd_per_input; ++i) {
        coords.push_back(static_cast<std::size_t>(rng.below(n)));
      }
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    for (std::size_t i : coords) {
      const double orig = t.data()[i];
      t.data()[i] = orig + eps;
      const double fp = eval();
      t.data()[i] = orig - eps;
      const double fm = eval();
      t.data()[i] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double a = analytic[ti][i];
      const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
      report.max_rel_err = std::max(report.max_rel_err, std::abs(a - fd) / denom);
      ++report.checked;
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace ddet
