#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ddet/error.hpp"
#include "ddet/rng.hpp"

namespace ddet {

// Dense 4-D shape, batch x channel x height x width.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

// Dense 4-D tensor with an optional gradient buffer.
//
// Tensor is a handle: copies share the underlying storage (data, grad and the
// requires_grad flag), clone() makes a deep copy. Sharing is what lets the
// gradient tape accumulate into the same buffers its closures captured.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>);

  struct Storage {
    std::vector<T> data;
    std::vector<T> grad;  // empty until ensure_grad()
    bool requires_grad = false;
  };

 public:
  using value_type = T;

  Tensor() : shape_{}, st_(std::make_shared<Storage>()) {}

  explicit Tensor(Shape s) : shape_(s), st_(std::make_shared<Storage>()) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw ShapeError("negative tensor dimension in " + s.str());
    }
    st_->data.assign(s.numel(), T{0});
  }

  Tensor(Shape s, std::vector<T> values) : shape_(s), st_(std::make_shared<Storage>()) {
    if (values.size() != s.numel()) {
      throw ShapeError("value count " + std::to_string(values.size()) +
                       " does not match shape " + s.str());
    }
    st_->data = std::move(values);
  }

  static Tensor zeros(Shape s) { return Tensor(s); }

  static Tensor full(Shape s, T value) {
    Tensor t(s);
    for (auto& v : t.st_->data) v = value;
    return t;
  }

  static Tensor random_uniform(Shape s, Rng& rng, T lo = T{0}, T hi = T{1}) {
    Tensor t(s);
    for (auto& v : t.st_->data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return shape_.numel(); }

  T* data() { return st_->data.data(); }
  const T* data() const { return st_->data.data(); }
  std::vector<T>& vec() { return st_->data; }
  const std::vector<T>& vec() const { return st_->data; }

  std::size_t index(int b, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(b) * shape_.c + ch) * shape_.h + y) * shape_.w + x;
  }
  T& at(int b, int ch, int y, int x) { return st_->data[index(b, ch, y, x)]; }
  const T& at(int b, int ch, int y, int x) const { return st_->data[index(b, ch, y, x)]; }

  bool requires_grad() const { return st_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    st_->requires_grad = rg;
    return *this;
  }

  bool has_grad() const { return !st_->grad.empty(); }

  // Allocates the gradient buffer (zero-filled) if not present yet.
  T* ensure_grad() {
    if (st_->grad.empty()) st_->grad.assign(numel(), T{0});
    return st_->grad.data();
  }
  T* grad() { return st_->grad.empty() ? nullptr : st_->grad.data(); }
  const T* grad() const { return st_->grad.empty() ? nullptr : st_->grad.data(); }

  void zero_grad() {
    for (auto& g : st_->grad) g = T{0};
  }

  // Deep copy of data (grad buffer is not copied; flag is preserved).
  Tensor clone() const {
    Tensor t(shape_);
    t.st_->data = st_->data;
    t.st_->requires_grad = st_->requires_grad;
    return t;
  }

  bool same_storage(const Tensor& other) const { return st_ == other.st_; }

  bool all_finite() const {
    for (T v : st_->data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  Shape shape_;
  std::shared_ptr<Storage> st_;
};

inline void check_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a == b) return;
  const char* axis = a.n != b.n ? "batch" : a.c != b.c ? "channel" : a.h != b.h ? "height" : "width";
  throw ShapeError(std::string(what) + ": shape mismatch on " + axis + " axis, " + a.str() +
                   " vs " + b.str());
}

}  // namespace ddet
