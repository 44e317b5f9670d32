#include <cmath>

#include "test_util.hpp"
#include "upmnet/error.hpp"
#include "upmnet/features.hpp"

namespace upmnet {
namespace {

FeatureMap random_map(Dims dims, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> unit(-2.0f, 2.0f);
  FeatureMap map(dims);
  for (auto& v : map.data()) v = unit(rng);
  return map;
}

TEST(Features, PartitionPaperDims) {
  std::mt19937_64 rng(1);
  const FeatureMap map = random_map(Dims{8, 4, 2048}, rng);
  const auto stripes = partition(map, 8);
  ASSERT_EQ(stripes.size(), 8u);
  for (const auto& s : stripes) EXPECT_EQ(s.dims(), (Dims{1, 4, 2048}));
  EXPECT_EQ(stripes[3], map.rows(3, 1));
}

TEST(Features, PartitionSingleStripeIsTheMap) {
  std::mt19937_64 rng(2);
  const FeatureMap map = random_map(Dims{8, 4, 16}, rng);
  const auto stripes = partition(map, 1);
  ASSERT_EQ(stripes.size(), 1u);
  EXPECT_EQ(stripes[0], map);
}

TEST(Features, PartitionIndivisibleHeight) {
  std::mt19937_64 rng(3);
  const FeatureMap map = random_map(Dims{8, 4, 16}, rng);
  try {
    partition(map, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndivisibleHeight);
  }
  EXPECT_THROW(partition(map, 0), Error);
}

TEST(Features, ConcatenateInvertsPartition) {
  std::mt19937_64 rng(4);
  for (int k : {1, 2, 3, 6}) {
    const FeatureMap map = random_map(Dims{6, 3, 5}, rng);
    const auto stripes = partition(map, k);
    EXPECT_EQ(concatenate(stripes), map);
    EXPECT_EQ(partition(concatenate(stripes), k), stripes);
  }
}

TEST(Features, PoolConstantMap) {
  FeatureMap map(Dims{2, 3, 4});
  for (auto& v : map.data()) v = 1.5f;
  for (PoolingMode mode : {PoolingMode::GAP, PoolingMode::GMP}) {
    const CompactFeature f = pool(map, mode);
    ASSERT_EQ(f.data.size(), 4);
    for (double v : f.data) EXPECT_EQ(v, 1.5);
  }
}

TEST(Features, PoolSinglePosition) {
  std::mt19937_64 rng(5);
  const FeatureMap map = random_map(Dims{1, 1, 7}, rng);
  for (PoolingMode mode : {PoolingMode::GAP, PoolingMode::GMP}) {
    const CompactFeature f = pool(map, mode);
    for (std::uint32_t c = 0; c < 7; ++c) EXPECT_EQ(f.data[c], static_cast<double>(map.at(0, 0, c)));
  }
}

TEST(Features, GapMatchesBruteForceMean) {
  std::mt19937_64 rng(6);
  const FeatureMap map = random_map(Dims{2, 4, 8}, rng);
  const CompactFeature f = pool(map, PoolingMode::GAP);
  for (std::uint32_t c = 0; c < 8; ++c) {
    double sum = 0.0;
    for (std::uint32_t y = 0; y < 2; ++y)
      for (std::uint32_t x = 0; x < 4; ++x) sum += map.at(y, x, c);
    EXPECT_NEAR(f.data[c], sum / 8.0, 1e-7);
  }
}

TEST(Features, NormalizeExamples) {
  Vector unit = Vector::Zero(5);
  unit[2] = 1.0;
  EXPECT_EQ(normalize(unit), unit);

  Vector v = Vector::Zero(4);
  v[0] = 3.0;
  v[1] = 4.0;
  const Vector n = normalize(v);
  EXPECT_NEAR(n[0], 0.6, 1e-15);
  EXPECT_NEAR(n[1], 0.8, 1e-15);
  EXPECT_EQ(n[2], 0.0);

  const Vector zero = Vector::Zero(6);
  const Vector nz = normalize(zero);
  for (double x : nz) EXPECT_EQ(x, 0.0);
  Vector tiny = Vector::Constant(3, 1e-14);
  for (double x : normalize(tiny)) EXPECT_EQ(x, 0.0);

  CompactFeature cf{v, 2};
  const CompactFeature cn = normalize(cf);
  EXPECT_EQ(cn.part_index, 2);
  EXPECT_NEAR(cn.data.norm(), 1.0, 1e-6);
}

TEST(Features, StripeGapMeanEqualsWholeMapGap) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const FeatureMap map = random_map(Dims{8, 4, 16}, rng);
    const Vector whole = pool(map, PoolingMode::GAP).data;
    for (int k : {1, 2, 4, 8}) {
      Vector mean = Vector::Zero(16);
      for (const auto& s : partition(map, k)) mean += pool(s, PoolingMode::GAP).data / k;
      EXPECT_LE((mean - whole).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(Features, GmpDominance) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const FeatureMap map = random_map(Dims{8, 2, 6}, rng);
    const Vector whole = pool(map, PoolingMode::GMP).data;
    for (int k : {2, 4, 8}) {
      Vector best = Vector::Constant(6, -1e300);
      for (const auto& s : partition(map, k)) {
        const Vector p = pool(s, PoolingMode::GMP).data;
        EXPECT_TRUE((p.array() <= whole.array()).all());
        best = best.cwiseMax(p);
      }
      EXPECT_EQ(best, whole);
    }
  }
}

TEST(Features, ExtractPartFeaturesAreUnitNorm) {
  std::mt19937_64 rng(9);
  const FeatureMap map = random_map(Dims{8, 4, 16}, rng);
  const PartFeatures pf = extract_part_features(map, 4, PoolingMode::GAP);
  ASSERT_EQ(pf.parts.size(), 4u);
  EXPECT_NEAR(pf.global.norm(), 1.0, 1e-6);
  const auto stripes = partition(map, 4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(pf.parts[i].norm(), 1.0, 1e-6);
    EXPECT_LE((pf.parts[i] - normalize(pool(stripes[i], PoolingMode::GAP).data)).norm(), 1e-12);
  }
}

TEST(Features, PoolingNames) {
  EXPECT_EQ(parse_pooling("gap"), PoolingMode::GAP);
  EXPECT_EQ(parse_pooling("gmp"), PoolingMode::GMP);
  EXPECT_EQ(to_string(PoolingMode::GMP), "gmp");
  EXPECT_THROW(parse_pooling("avg"), Error);
}

}  // namespace
}  // namespace upmnet
