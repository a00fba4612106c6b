#pragma once

#include <cstdint>
#include <string>

#include "rsq/common.hpp"

namespace rsq {

/// Rank-4 extent in (batch, channel, height, width) order.
struct Shape {
  int64_t n = 0;
  int64_t c = 0;
  int64_t h = 0;
  int64_t w = 0;

  int64_t count() const { return n * c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;

  /// Throws DimensionError unless every extent is >= 1.
  void validate(const char* what = "shape") const;
};

/// Output extent of a strided window op: floor((extent + 2*pad - kernel) / stride) + 1.
/// Throws GeometryError when the window does not fit.
int64_t conv_out_extent(int64_t extent, int kernel, int stride, int pad);

}  // namespace rsq
