#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace upmnet {

struct Dims {
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  std::uint32_t c = 0;

  std::size_t size() const { return std::size_t{h} * w * c; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

// "UPMF" tensor files
//
//   magic    4 bytes  "UPMF"
//   version  u32      1 = float32 payload, 2 = float64 payload
//   h, w, c  u32 x 3
//   payload  h*w*c little-endian IEEE-754 values, h outer, c innermost
//
// Version 1 is the feature-map format. Version 2 carries checkpoint
// tensors, which must round-trip training state exactly.

/// A per-image backbone activation tensor, row-major (h, w, c).
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(Dims dims, std::vector<float> data);
  explicit FeatureMap(Dims dims);

  const Dims& dims() const { return dims_; }
  std::uint32_t height() const { return dims_.h; }
  std::uint32_t width() const { return dims_.w; }
  std::uint32_t channels() const { return dims_.c; }

  float at(std::uint32_t y, std::uint32_t x, std::uint32_t ch) const {
    return data_[(std::size_t{y} * dims_.w + x) * dims_.c + ch];
  }
  float& at(std::uint32_t y, std::uint32_t x, std::uint32_t ch) {
    return data_[(std::size_t{y} * dims_.w + x) * dims_.c + ch];
  }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  /// Rows [first_row, first_row + rows) as a standalone map.
  FeatureMap rows(std::uint32_t first_row, std::uint32_t rows) const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  Dims dims_;
  std::vector<float> data_;
};

void write_feature_map(const std::filesystem::path& path, const FeatureMap& map);

/// Reads a version-1 file; throws DimMismatch when the header disagrees with `expected`.
FeatureMap read_feature_map(const std::filesystem::path& path, const Dims& expected);

/// Reads a version-1 file with whatever dims the header declares.
FeatureMap read_feature_map(const std::filesystem::path& path);

/// Reads only the header and checks the file length against it.
Dims read_feature_header(const std::filesystem::path& path);

/// Double-precision tensor with (h, w, c) shape, stored as version 2.
struct Float64Tensor {
  Dims dims;
  std::vector<double> data;
};

void write_float64_tensor(const std::filesystem::path& path, const Float64Tensor& tensor);
Float64Tensor read_float64_tensor(const std::filesystem::path& path);

}  // namespace upmnet
