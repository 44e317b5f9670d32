#include "upmnet/features.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "upmnet/error.hpp"

namespace upmnet {

PoolingMode parse_pooling(std::string_view name) {
  if (name == "gap" || name == "GAP") return PoolingMode::GAP;
  if (name == "gmp" || name == "GMP") return PoolingMode::GMP;
  throw Error(ErrorCode::InvalidConfig, "unknown pooling mode '" + std::string(name) + "'");
}

std::string_view to_string(PoolingMode mode) { return mode == PoolingMode::GAP ? "gap" : "gmp"; }

std::vector<FeatureMap> partition(const FeatureMap& map, int k) {
  if (k < 1 || map.height() % static_cast<std::uint32_t>(k) != 0) {
    throw Error(ErrorCode::IndivisibleHeight,
                "k=" + std::to_string(k) + " does not divide height " + std::to_string(map.height()));
  }
  const std::uint32_t stripe_h = map.height() / static_cast<std::uint32_t>(k);
  std::vector<FeatureMap> stripes;
  stripes.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) stripes.push_back(map.rows(static_cast<std::uint32_t>(i) * stripe_h, stripe_h));
  return stripes;
}

FeatureMap concatenate(std::span<const FeatureMap> stripes) {
  if (stripes.empty()) throw Error(ErrorCode::ShapeMismatch, "nothing to concatenate");
  Dims dims = stripes.front().dims();
  dims.h = 0;
  std::vector<float> data;
  for (const auto& s : stripes) {
    if (s.width() != dims.w || s.channels() != dims.c) throw Error(ErrorCode::ShapeMismatch, "stripe widths differ");
    dims.h += s.height();
    data.insert(data.end(), s.data().begin(), s.data().end());
  }
  return FeatureMap(dims, std::move(data));
}

CompactFeature pool(const FeatureMap& stripe, PoolingMode mode) {
  const std::size_t c = stripe.channels();
  const std::size_t positions = std::size_t{stripe.height()} * stripe.width();
  if (positions == 0 || c == 0) throw Error(ErrorCode::ShapeMismatch, "cannot pool an empty stripe");
  const auto data = stripe.data();

  Vector out(static_cast<Eigen::Index>(c));
  if (mode == PoolingMode::GAP) {
    out.setZero();
    for (std::size_t p = 0; p < positions; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) out[static_cast<Eigen::Index>(ch)] += data[p * c + ch];
    out /= static_cast<double>(positions);
  } else {
    out.setConstant(-std::numeric_limits<double>::infinity());
    for (std::size_t p = 0; p < positions; ++p)
      for (std::size_t ch = 0; ch < c; ++ch)
        out[static_cast<Eigen::Index>(ch)] = std::max<double>(out[static_cast<Eigen::Index>(ch)], data[p * c + ch]);
  }
  return CompactFeature{std::move(out), 0};
}

Vector normalize(const Vector& x) {
  const double norm = x.norm();
  if (norm < kNormEpsilon) return Vector::Zero(x.size());
  return x / norm;
}

CompactFeature normalize(const CompactFeature& x) { return CompactFeature{normalize(x.data), x.part_index}; }

PartFeatures extract_part_features(const FeatureMap& map, int k, PoolingMode mode) {
  const auto stripes = partition(map, k);
  PartFeatures out;
  out.global = normalize(pool(map, mode).data);
  out.parts.reserve(stripes.size());
  for (const auto& s : stripes) out.parts.push_back(normalize(pool(s, mode).data));
  return out;
}

}  // namespace upmnet
