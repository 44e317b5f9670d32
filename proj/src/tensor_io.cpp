#include "upmnet/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "upmnet/error.hpp"

namespace upmnet {

namespace {

constexpr std::array<char, 4> kMagic = {'U', 'P', 'M', 'F'};
constexpr std::size_t kHeaderBytes = 4 + 4 * 4;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string header(std::uint32_t version, const Dims& dims) {
  std::string out(kMagic.begin(), kMagic.end());
  put_u32(out, version);
  put_u32(out, dims.h);
  put_u32(out, dims.w);
  put_u32(out, dims.c);
  return out;
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct Parsed {
  std::uint32_t version;
  Dims dims;
  const unsigned char* payload;
};

Parsed parse_header(const std::string& bytes, const std::filesystem::path& path) {
  if (bytes.size() < kHeaderBytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic.data(), 4) != 0)
      throw Error(ErrorCode::BadMagic, path.string());
    throw Error(ErrorCode::TruncatedFile, path.string() + ": header incomplete");
  }
  if (std::memcmp(bytes.data(), kMagic.data(), 4) != 0) throw Error(ErrorCode::BadMagic, path.string());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  Parsed parsed{get_u32(p + 4), Dims{get_u32(p + 8), get_u32(p + 12), get_u32(p + 16)}, p + kHeaderBytes};
  if (parsed.version != 1 && parsed.version != 2)
    throw Error(ErrorCode::ParseError, path.string() + ": unsupported version " + std::to_string(parsed.version));
  const std::size_t width = parsed.version == 1 ? 4 : 8;
  const std::size_t expected = kHeaderBytes + parsed.dims.size() * width;
  if (bytes.size() < expected) throw Error(ErrorCode::TruncatedFile, path.string());
  if (bytes.size() > expected) throw Error(ErrorCode::ParseError, path.string() + ": trailing bytes");
  return parsed;
}

}  // namespace

FeatureMap::FeatureMap(Dims dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
  if (data_.size() != dims_.size())
    throw Error(ErrorCode::ShapeMismatch, "feature map data length does not match dims");
}

FeatureMap::FeatureMap(Dims dims) : dims_(dims), data_(dims.size(), 0.0f) {}

FeatureMap FeatureMap::rows(std::uint32_t first_row, std::uint32_t count) const {
  if (first_row + count > dims_.h) throw Error(ErrorCode::ShapeMismatch, "row range out of bounds");
  const std::size_t row_len = std::size_t{dims_.w} * dims_.c;
  std::vector<float> out(data_.begin() + static_cast<std::ptrdiff_t>(first_row * row_len),
                         data_.begin() + static_cast<std::ptrdiff_t>((first_row + count) * row_len));
  return FeatureMap(Dims{count, dims_.w, dims_.c}, std::move(out));
}

void write_feature_map(const std::filesystem::path& path, const FeatureMap& map) {
  std::string bytes = header(1, map.dims());
  bytes.reserve(kHeaderBytes + map.dims().size() * 4);
  for (float v : map.data()) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  write_bytes(path, bytes);
}

FeatureMap read_feature_map(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  const Parsed parsed = parse_header(bytes, path);
  if (parsed.version != 1) throw Error(ErrorCode::ParseError, path.string() + ": not a float32 feature file");
  std::vector<float> data(parsed.dims.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(get_u32(parsed.payload + 4 * i));
    if (!std::isfinite(data[i]))
      throw Error(ErrorCode::NonFiniteValue, path.string() + " at element " + std::to_string(i));
  }
  return FeatureMap(parsed.dims, std::move(data));
}

FeatureMap read_feature_map(const std::filesystem::path& path, const Dims& expected) {
  FeatureMap map = read_feature_map(path);
  if (!(map.dims() == expected)) {
    throw Error(ErrorCode::DimMismatch,
                path.string() + ": header (" + std::to_string(map.height()) + "," + std::to_string(map.width()) +
                    "," + std::to_string(map.channels()) + ") vs manifest (" + std::to_string(expected.h) + "," +
                    std::to_string(expected.w) + "," + std::to_string(expected.c) + ")");
  }
  return map;
}

Dims read_feature_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  const auto file_size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::string head(kHeaderBytes, '\0');
  in.read(head.data(), static_cast<std::streamsize>(std::min(file_size, kHeaderBytes)));
  head.resize(std::min(file_size, kHeaderBytes));
  if (head.size() >= 4 && std::memcmp(head.data(), kMagic.data(), 4) != 0) throw Error(ErrorCode::BadMagic, path.string());
  if (head.size() < kHeaderBytes) throw Error(ErrorCode::TruncatedFile, path.string() + ": header incomplete");
  const auto* p = reinterpret_cast<const unsigned char*>(head.data());
  if (get_u32(p + 4) != 1) throw Error(ErrorCode::ParseError, path.string() + ": not a float32 feature file");
  const Dims dims{get_u32(p + 8), get_u32(p + 12), get_u32(p + 16)};
  if (file_size < kHeaderBytes + dims.size() * 4) throw Error(ErrorCode::TruncatedFile, path.string());
  if (file_size > kHeaderBytes + dims.size() * 4) throw Error(ErrorCode::ParseError, path.string() + ": trailing bytes");
  return dims;
}

void write_float64_tensor(const std::filesystem::path& path, const Float64Tensor& tensor) {
  if (tensor.data.size() != tensor.dims.size()) throw Error(ErrorCode::ShapeMismatch, "tensor data length");
  std::string bytes = header(2, tensor.dims);
  for (double v : tensor.data) put_u64(bytes, std::bit_cast<std::uint64_t>(v));
  write_bytes(path, bytes);
}

Float64Tensor read_float64_tensor(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  const Parsed parsed = parse_header(bytes, path);
  if (parsed.version != 2) throw Error(ErrorCode::ParseError, path.string() + ": not a float64 tensor file");
  Float64Tensor out{parsed.dims, std::vector<double>(parsed.dims.size())};
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::bit_cast<double>(get_u64(parsed.payload + 8 * i));
  return out;
}

}  // namespace upmnet
