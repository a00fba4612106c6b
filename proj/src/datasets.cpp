#include "rsq/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>

#include "rsq/io_util.hpp"
#include "rsq/rng.hpp"

namespace rsq {

namespace {

constexpr char kMagic[4] = {'R', 'S', 'Q', '1'};

}  // namespace

void DatasetHeader::validate() const {
  if (version != 1) throw FormatError("unsupported dataset version " + std::to_string(version));
  if (sample_count < 1) throw FormatError("dataset must contain at least one sample");
  if (channels < 1 || height < 1 || width < 1) throw FormatError("dataset extents must be >= 1");
  if (class_count < 2) throw FormatError("dataset must declare at least two classes");
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  data.header.validate();
  const size_t sample_size = data.sample_size();
  if (data.labels.size() != data.header.sample_count ||
      data.values.size() != sample_size * data.header.sample_count)
    throw DimensionError("dataset payload does not match its header counts");
  for (uint16_t label : data.labels)
    if (label >= data.header.class_count)
      throw IndexError("label " + std::to_string(label) + " outside class count " +
                       std::to_string(data.header.class_count));
  for (float v : data.values)
    if (!std::isfinite(v)) throw NumericError("dataset contains a non-finite value");

  std::string buf;
  buf.reserve(28 + data.header.sample_count * (2 + 4 * sample_size));
  buf.append(kMagic, 4);
  append_u32_le(buf, data.header.version);
  append_u32_le(buf, data.header.sample_count);
  append_u32_le(buf, data.header.channels);
  append_u32_le(buf, data.header.height);
  append_u32_le(buf, data.header.width);
  append_u32_le(buf, data.header.class_count);
  for (size_t i = 0; i < data.header.sample_count; ++i) {
    append_u16_le(buf, data.labels[i]);
    const auto s = data.sample(i);
    for (float v : s) append_f32_le(buf, v);
  }
  write_file_atomic(path, buf);
}

Dataset read_dataset(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  const size_t size = raw.size();
  if (size < 4) throw TruncationError(path.string() + ": file too small for magic");
  if (std::memcmp(p, kMagic, 4) != 0) throw FormatError(path.string() + ": bad magic, not an RSQ1 file");
  if (size < 28) throw TruncationError(path.string() + ": truncated header");

  Dataset data;
  data.header.version = read_u32_le(p + 4);
  data.header.sample_count = read_u32_le(p + 8);
  data.header.channels = read_u32_le(p + 12);
  data.header.height = read_u32_le(p + 16);
  data.header.width = read_u32_le(p + 20);
  data.header.class_count = read_u32_le(p + 24);
  data.header.validate();

  const size_t sample_size = data.sample_size();
  const size_t sample_bytes = 2 + 4 * sample_size;
  const size_t expected = 28 + sample_bytes * data.header.sample_count;
  if (size < expected)
    throw TruncationError(path.string() + ": payload ends after " + std::to_string(size) +
                          " bytes, expected " + std::to_string(expected));
  if (size > expected)
    throw FormatError(path.string() + ": " + std::to_string(size - expected) +
                      " trailing bytes after declared payload");

  data.labels.reserve(data.header.sample_count);
  data.values.reserve(sample_size * data.header.sample_count);
  size_t off = 28;
  for (uint32_t i = 0; i < data.header.sample_count; ++i) {
    const uint16_t label = read_u16_le(p + off);
    off += 2;
    if (label >= data.header.class_count)
      throw IndexError(path.string() + ": sample " + std::to_string(i) + " label " +
                       std::to_string(label) + " outside class count " +
                       std::to_string(data.header.class_count));
    data.labels.push_back(label);
    for (size_t v = 0; v < sample_size; ++v) {
      const float value = read_f32_le(p + off);
      off += 4;
      if (!std::isfinite(value))
        throw FormatError(path.string() + ": sample " + std::to_string(i) +
                          " contains a non-finite value");
      data.values.push_back(value);
    }
  }
  return data;
}

namespace {

struct PpmImage {
  int64_t width = 0, height = 0;
  std::vector<uint8_t> rgb;
};

// P6 with '#' comments allowed between header tokens.
PpmImage parse_ppm(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  size_t pos = 0;
  auto skip_ws = [&]() {
    while (pos < raw.size()) {
      if (std::isspace(static_cast<unsigned char>(raw[pos]))) {
        ++pos;
      } else if (raw[pos] == '#') {
        while (pos < raw.size() && raw[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&]() {
    skip_ws();
    const size_t start = pos;
    while (pos < raw.size() && !std::isspace(static_cast<unsigned char>(raw[pos]))) ++pos;
    if (start == pos) throw TruncationError(path.string() + ": header ends early");
    return raw.substr(start, pos - start);
  };

  const std::string magic = token();
  if (magic != "P6") throw FormatError(path.string() + ": not a binary PPM (P6), got '" + magic + "'");
  PpmImage img;
  try {
    img.width = std::stoll(token());
    img.height = std::stoll(token());
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": malformed width/height");
  }
  const std::string maxval = token();
  if (maxval != "255") throw FormatError(path.string() + ": maxval must be 255, got " + maxval);
  if (img.width < 1 || img.height < 1) throw FormatError(path.string() + ": non-positive dimensions");
  ++pos;  // single whitespace byte after maxval
  const size_t need = static_cast<size_t>(img.width) * img.height * 3;
  if (raw.size() < pos + need)
    throw TruncationError(path.string() + ": pixel data truncated, need " + std::to_string(need) +
                          " bytes, have " + std::to_string(raw.size() - pos));
  img.rgb.assign(raw.begin() + static_cast<std::ptrdiff_t>(pos),
                 raw.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

}  // namespace

Dataset load_ppm_dir(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError(root.string() + " is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() < 2)
    throw DomainError(root.string() + ": need at least two class subdirectories, found " +
                      std::to_string(class_dirs.size()));

  Dataset data;
  data.header.class_count = static_cast<uint32_t>(class_dirs.size());
  int64_t width = -1, height = -1;
  for (size_t cls = 0; cls < class_dirs.size(); ++cls) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[cls]))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      PpmImage img = parse_ppm(file);
      if (width < 0) {
        width = img.width;
        height = img.height;
      } else if (img.width != width || img.height != height) {
        throw FormatError(file.string() + ": image is " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + ", expected " + std::to_string(width) + "x" +
                          std::to_string(height));
      }
      data.labels.push_back(static_cast<uint16_t>(cls));
      // interleaved RGB bytes -> planar channel floats in [0, 1]
      const int64_t plane = width * height;
      const size_t base = data.values.size();
      data.values.resize(base + static_cast<size_t>(3 * plane));
      for (int64_t i = 0; i < plane; ++i)
        for (int64_t c = 0; c < 3; ++c)
          data.values[base + static_cast<size_t>(c * plane + i)] =
              static_cast<float>(img.rgb[static_cast<size_t>(3 * i + c)]) / 255.0f;
    }
  }
  if (data.labels.empty()) throw DomainError(root.string() + ": no images found");
  data.header.version = 1;
  data.header.sample_count = static_cast<uint32_t>(data.labels.size());
  data.header.channels = 3;
  data.header.height = static_cast<uint32_t>(height);
  data.header.width = static_cast<uint32_t>(width);
  data.header.validate();
  return data;
}

Dataset synth_generate(int classes, int per_class, int64_t channels, int64_t height, int64_t width,
                       double noise_std, uint64_t seed) {
  if (classes < 2) throw DomainError("synthetic dataset needs at least two classes");
  if (per_class < 1) throw DomainError("per_class must be >= 1");
  if (channels < 1 || height < 1 || width < 1) throw DimensionError("sample extents must be >= 1");
  if (noise_std < 0) throw DomainError("noise_std must be >= 0");

  Dataset data;
  data.header.version = 1;
  data.header.sample_count = static_cast<uint32_t>(classes * per_class);
  data.header.channels = static_cast<uint32_t>(channels);
  data.header.height = static_cast<uint32_t>(height);
  data.header.width = static_cast<uint32_t>(width);
  data.header.class_count = static_cast<uint32_t>(classes);

  const size_t sample_size = data.sample_size();
  const double two_pi = 6.283185307179586476925286766559;

  // one template per class, distinct frequency and phase
  std::vector<std::vector<float>> templates(static_cast<size_t>(classes));
  for (int k = 0; k < classes; ++k) {
    auto& tmpl = templates[static_cast<size_t>(k)];
    tmpl.resize(sample_size);
    const double freq = k + 1;
    const double phase = two_pi * k / classes;
    for (int64_t c = 0; c < channels; ++c)
      for (int64_t y = 0; y < height; ++y)
        for (int64_t x = 0; x < width; ++x) {
          const double u = static_cast<double>(x) / static_cast<double>(width);
          const double v = static_cast<double>(y) / static_cast<double>(height);
          const double value = 0.5 + 0.4 * std::sin(two_pi * freq * u + phase + c * 1.0471975511965976) *
                                         std::cos(two_pi * freq * v + phase);
          tmpl[static_cast<size_t>((c * height + y) * width + x)] = static_cast<float>(value);
        }
  }

  Rng rng(mix_seed(seed, 0x5D));
  data.labels.reserve(data.header.sample_count);
  data.values.reserve(sample_size * data.header.sample_count);
  for (int k = 0; k < classes; ++k) {
    const auto& tmpl = templates[static_cast<size_t>(k)];
    for (int s = 0; s < per_class; ++s) {
      data.labels.push_back(static_cast<uint16_t>(k));
      for (size_t i = 0; i < sample_size; ++i)
        data.values.push_back(tmpl[i] + static_cast<float>(rng.next_gaussian(0.0, noise_std)));
    }
  }
  return data;
}

std::vector<double> compute_channel_means(const Dataset& data) {
  if (data.labels.empty()) throw DomainError("cannot compute channel means of an empty dataset");
  const int64_t channels = data.header.channels;
  const int64_t plane = static_cast<int64_t>(data.header.height) * data.header.width;
  std::vector<double> sums(static_cast<size_t>(channels), 0.0);
  for (size_t i = 0; i < data.labels.size(); ++i) {
    const auto s = data.sample(i);
    for (int64_t c = 0; c < channels; ++c) {
      const float* p = s.data() + c * plane;
      double acc = 0.0;
      for (int64_t j = 0; j < plane; ++j) acc += p[j];
      sums[static_cast<size_t>(c)] += acc;
    }
  }
  const double denom = static_cast<double>(data.labels.size()) * static_cast<double>(plane);
  for (auto& v : sums) v /= denom;
  return sums;
}

}  // namespace rsq
