#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "ddet/error.hpp"
#include "ddet/tensor.hpp"

namespace ddet {

// Named parameter table. std::map keeps iteration order sorted by name, which
// makes every pass over the parameters deterministic.
template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

template <typename T>
struct AdamState {
  ParamMap<T> m;
  ParamMap<T> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update. Gradients are read from each parameter's
// grad buffer; parameters without one are treated as zero-gradient. Moment
// tensors are created on first use. A non-finite gradient aborts with the
// parameter's name.
template <typename T>
void adam_step(ParamMap<T>& params, AdamState<T>& state, double lr, double beta1, double beta2,
               double eps) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

  for (auto& [name, p] : params) {
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      mit = state.m.emplace(name, Tensor<T>::zeros(p.shape())).first;
      state.v.emplace(name, Tensor<T>::zeros(p.shape()));
    }
    Tensor<T>& m = mit->second;
    Tensor<T>& v = state.v.at(name);
    const T* g = p.grad();
    const std::size_t n = p.numel();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g ? static_cast<double>(g[i]) : 0.0;
      if (!std::isfinite(gi)) {
        throw NumericError("adam_step: non-finite gradient in parameter '" + name + "'");
      }
      const double mi = beta1 * m.data()[i] + (1.0 - beta1) * gi;
      const double vi = beta2 * v.data()[i] + (1.0 - beta2) * gi * gi;
      m.data()[i] = static_cast<T>(mi);
      v.data()[i] = static_cast<T>(vi);
      const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
      p.data()[i] = static_cast<T>(p.data()[i] - update);
    }
  }
}

}  // namespace ddet
