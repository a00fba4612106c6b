#pragma once

#include <cmath>
#include <concepts>
#include <vector>

#include "rsq/shape.hpp"

namespace rsq {

/// Dense NCHW tensor with an optional same-extent gradient buffer.
/// Zero extents are permitted at this level (degenerate slices); graphs and
/// datasets enforce strictly positive extents through Shape::validate.
template <std::floating_point T>
struct Tensor {
  Shape shape{};
  std::vector<T> values;
  std::vector<T> grad;  // empty until ensure_grad()

  Tensor() = default;
  explicit Tensor(const Shape& s, T fill = T(0))
      : shape(s), values(static_cast<size_t>(s.count()), fill) {}

  size_t size() const { return values.size(); }

  size_t index(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return static_cast<size_t>(((n * shape.c + c) * shape.h + h) * shape.w + w);
  }
  T& at(int64_t n, int64_t c, int64_t h, int64_t w) { return values[index(n, c, h, w)]; }
  T at(int64_t n, int64_t c, int64_t h, int64_t w) const { return values[index(n, c, h, w)]; }

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }
  void zero_grad() { grad.assign(values.size(), T(0)); }

  bool all_finite() const {
    for (T v : values)
      if (!std::isfinite(v)) return false;
    for (T v : grad)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace rsq
