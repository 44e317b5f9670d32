#include <cmath>
#include <limits>

#include "test_util.hpp"
#include "upmnet/error.hpp"
#include "upmnet/tensor_io.hpp"

namespace upmnet {
namespace {

using testing::slurp;
using testing::spit;
using testing::TempDir;

FeatureMap random_map(Dims dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 3.0f);
  FeatureMap map(dims);
  for (auto& v : map.data()) v = normal(rng);
  return map;
}

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Usage;
}

TEST(TensorIo, RoundTripIsBitExact) {
  TempDir dir;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint32_t> side(1, 9);
    const FeatureMap map = random_map(Dims{side(rng), side(rng), side(rng)}, seed);
    write_feature_map(dir / "m.upmf", map);
    EXPECT_EQ(read_feature_map(dir / "m.upmf"), map);
    EXPECT_EQ(read_feature_map(dir / "m.upmf", map.dims()), map);
  }
}

TEST(TensorIo, LayoutIsLittleEndianHeightOuterChannelInner) {
  TempDir dir;
  FeatureMap map(Dims{2, 1, 2});
  map.at(0, 0, 0) = 1.0f;
  map.at(0, 0, 1) = 2.0f;
  map.at(1, 0, 0) = 3.0f;
  map.at(1, 0, 1) = 4.0f;
  write_feature_map(dir / "m.upmf", map);
  const std::string bytes = slurp(dir / "m.upmf");
  ASSERT_EQ(bytes.size(), 4u + 16u + 16u);
  EXPECT_EQ(bytes.substr(0, 4), "UPMF");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);  // version
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);  // h
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 1u);  // w
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 2u);  // c
  // 3.0f = 0x40400000, third value in the payload
  EXPECT_EQ(static_cast<unsigned char>(bytes[20 + 8 + 3]), 0x40u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[20 + 8 + 2]), 0x40u);
}

TEST(TensorIo, HeaderDimsMustMatchManifestDims) {
  TempDir dir;
  write_feature_map(dir / "m.upmf", random_map(Dims{8, 4, 16}, 1));
  EXPECT_EQ(code_of([&] { read_feature_map(dir / "m.upmf", Dims{8, 4, 32}); }), ErrorCode::DimMismatch);
}

TEST(TensorIo, RejectsBadMagic) {
  TempDir dir;
  write_feature_map(dir / "m.upmf", random_map(Dims{2, 2, 2}, 1));
  std::string bytes = slurp(dir / "m.upmf");
  bytes[0] = 'X';
  spit(dir / "m.upmf", bytes);
  EXPECT_EQ(code_of([&] { read_feature_map(dir / "m.upmf"); }), ErrorCode::BadMagic);
}

TEST(TensorIo, RejectsTruncatedPayloadAndHeader) {
  TempDir dir;
  write_feature_map(dir / "m.upmf", random_map(Dims{2, 2, 2}, 1));
  const std::string bytes = slurp(dir / "m.upmf");
  spit(dir / "short.upmf", bytes.substr(0, bytes.size() - 1));
  EXPECT_EQ(code_of([&] { read_feature_map(dir / "short.upmf"); }), ErrorCode::TruncatedFile);
  EXPECT_EQ(code_of([&] { read_feature_header(dir / "short.upmf"); }), ErrorCode::TruncatedFile);
  spit(dir / "header.upmf", bytes.substr(0, 10));
  EXPECT_EQ(code_of([&] { read_feature_map(dir / "header.upmf"); }), ErrorCode::TruncatedFile);
}

TEST(TensorIo, RejectsNonFiniteValues) {
  TempDir dir;
  FeatureMap map = random_map(Dims{2, 2, 2}, 1);
  map.at(1, 1, 1) = std::numeric_limits<float>::quiet_NaN();
  write_feature_map(dir / "nan.upmf", map);
  EXPECT_EQ(code_of([&] { read_feature_map(dir / "nan.upmf"); }), ErrorCode::NonFiniteValue);
  map.at(1, 1, 1) = std::numeric_limits<float>::infinity();
  write_feature_map(dir / "inf.upmf", map);
  EXPECT_EQ(code_of([&] { read_feature_map(dir / "inf.upmf"); }), ErrorCode::NonFiniteValue);
}

TEST(TensorIo, MissingFile) {
  TempDir dir;
  EXPECT_EQ(code_of([&] { read_feature_map(dir / "absent.upmf"); }), ErrorCode::MissingFile);
}

TEST(TensorIo, Float64TensorRoundTrip) {
  TempDir dir;
  Float64Tensor t{Dims{3, 1, 5}, {}};
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (std::size_t i = 0; i < t.dims.size(); ++i) t.data.push_back(normal(rng));
  write_float64_tensor(dir / "t.upmf", t);
  const Float64Tensor back = read_float64_tensor(dir / "t.upmf");
  EXPECT_EQ(back.dims, t.dims);
  EXPECT_EQ(back.data, t.data);
  // a float64 file is not a feature map
  EXPECT_THROW(read_feature_map(dir / "t.upmf"), Error);
}

TEST(TensorIo, RowsSliceCopiesContiguousBlock) {
  const FeatureMap map = random_map(Dims{6, 2, 3}, 3);
  const FeatureMap slice = map.rows(2, 3);
  ASSERT_EQ(slice.dims(), (Dims{3, 2, 3}));
  for (std::uint32_t y = 0; y < 3; ++y)
    for (std::uint32_t x = 0; x < 2; ++x)
      for (std::uint32_t c = 0; c < 3; ++c) EXPECT_EQ(slice.at(y, x, c), map.at(y + 2, x, c));
}

}  // namespace
}  // namespace upmnet
