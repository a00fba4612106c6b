#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rsq/common.hpp"

namespace rsq {

/// Header of the RSQ1 binary sample container. On disk it is preceded by the
/// 4-byte magic "RSQ1"; all fields are little-endian u32.
struct DatasetHeader {
  uint32_t version = 1;
  uint32_t sample_count = 0;
  uint32_t channels = 0;
  uint32_t height = 0;
  uint32_t width = 0;
  uint32_t class_count = 0;

  void validate() const;
};

/// In-memory labeled dataset: float32 values in sample-major (c,h,w) order.
struct Dataset {
  DatasetHeader header;
  std::vector<uint16_t> labels;
  std::vector<float> values;

  size_t sample_size() const {
    return static_cast<size_t>(header.channels) * header.height * header.width;
  }
  std::span<const float> sample(size_t i) const {
    return {values.data() + i * sample_size(), sample_size()};
  }
};

/// Byte-exact writer for the RSQ1 layout:
///   "RSQ1" | version | sample_count | channels | height | width | class_count
///   then per sample: label (u16 LE) + channels*height*width float32 LE.
void write_dataset(const std::filesystem::path& path, const Dataset& data);

/// Validates magic, version, header bounds, label ranges and value
/// finiteness. Bad magic/header -> FormatError, short file -> TruncationError,
/// label out of range -> IndexError.
Dataset read_dataset(const std::filesystem::path& path);

/// Loads a directory with one subdirectory per class, each holding binary
/// PPM (P6, maxval 255) files of identical size. Labels follow sorted
/// subdirectory names; pixel bytes are scaled to [0, 1].
Dataset load_ppm_dir(const std::filesystem::path& root);

/// Seeded synthetic dataset: each class is a fixed template pattern with a
/// distinct spatial frequency and phase, plus Gaussian noise. Classes are
/// balanced and linearly separable at low noise.
Dataset synth_generate(int classes, int per_class, int64_t channels, int64_t height, int64_t width,
                       double noise_std, uint64_t seed);

/// Arithmetic mean per channel over all samples and positions (accumulated in
/// double). Throws DomainError on an empty dataset.
std::vector<double> compute_channel_means(const Dataset& data);

}  // namespace rsq
