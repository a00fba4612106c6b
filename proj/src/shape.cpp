#include "rsq/shape.hpp"

#include <sstream>

namespace rsq {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

void Shape::validate(const char* what) const {
  if (n < 1 || c < 1 || h < 1 || w < 1) {
    throw DimensionError(std::string(what) + " has non-positive extent " + str());
  }
}

int64_t conv_out_extent(int64_t extent, int kernel, int stride, int pad) {
  if (kernel < 1) throw GeometryError("kernel must be >= 1, got " + std::to_string(kernel));
  if (stride < 1) throw GeometryError("stride must be >= 1, got " + std::to_string(stride));
  if (pad < 0) throw GeometryError("pad must be >= 0, got " + std::to_string(pad));
  const int64_t padded = extent + 2 * static_cast<int64_t>(pad);
  if (padded < kernel) {
    throw GeometryError("window of size " + std::to_string(kernel) + " does not fit extent " +
                        std::to_string(extent) + " with pad " + std::to_string(pad));
  }
  return (padded - kernel) / stride + 1;
}

}  // namespace rsq
