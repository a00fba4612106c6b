#pragma once

#include <stdexcept>
#include <string>

namespace rsq {

/// Base class for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched channel counts, tensor shapes or vector lengths.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Convolution/pooling geometry that would produce an empty output map.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Invalid builder or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed graph structure: duplicate ids, dangling edges, cycles.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Scalar argument outside its documented range.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Label or index out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (bad magic, bad header fields).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File ends before the declared payload.
class TruncationError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

enum class RunMode { train, infer };

/// Scalar width selector: standard = 32-bit, high = 64-bit.
enum class Precision { standard, high };

}  // namespace rsq
