#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "upmnet/tensor_io.hpp"

namespace upmnet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class PoolingMode { GAP, GMP };

PoolingMode parse_pooling(std::string_view name);
std::string_view to_string(PoolingMode mode);

/// Pooled 1x1xd vector. part_index 0 is the whole-map feature, 1..k the stripes.
struct CompactFeature {
  Vector data;
  int part_index = 0;
};

inline constexpr double kNormEpsilon = 1e-12;

/// Splits `map` into k equal-height stripes, top to bottom. Throws IndivisibleHeight.
std::vector<FeatureMap> partition(const FeatureMap& map, int k);

/// Inverse of partition: stacks stripes vertically.
FeatureMap concatenate(std::span<const FeatureMap> stripes);

CompactFeature pool(const FeatureMap& stripe, PoolingMode mode);

/// x / max(|x|, 1e-12); returns zeros when |x| < 1e-12.
Vector normalize(const Vector& x);
CompactFeature normalize(const CompactFeature& x);

/// Whole-map feature plus k stripe features, all pooled and normalized.
struct PartFeatures {
  Vector global;              // x_0
  std::vector<Vector> parts;  // x_1..x_k
};

PartFeatures extract_part_features(const FeatureMap& map, int k, PoolingMode mode);

}  // namespace upmnet
