#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "upmnet/features.hpp"

namespace upmnet {

enum class AwareKind { Local, Global };

AwareKind parse_aware_kind(std::string_view name);
std::string_view to_string(AwareKind kind);

enum class Mode { Train, Infer };

/// One mini-batch of pooled features; row b of every matrix is batch item b.
struct AwareBatch {
  Matrix global;              // B x c (x_0)
  std::vector<Matrix> parts;  // k of B x c (x_1..x_k)

  Eigen::Index batch_size() const { return global.rows(); }
  int num_parts() const { return static_cast<int>(parts.size()); }
};

AwareBatch make_batch(std::span<const PartFeatures> items);

/// y = W x + b, W is (out x in).
struct Linear {
  Matrix weight;
  Vector bias;
};

/// Per-channel affine batch normalization with running statistics.
struct BatchNorm {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// Parameters of the k global-aware modules. `global_proj` holds one shared
/// projection of x_0, or k independent ones.
struct GlobalAwareParams {
  int in_dim = 0;
  int reduced_dim = 0;
  std::vector<Linear> global_proj;
  std::vector<Linear> part_proj;  // k of (c' x c)
  std::vector<Linear> fuse;       // k of (c' x 2c'), input is concat(part, global)
  std::vector<BatchNorm> norm;    // k

  int num_parts() const { return static_cast<int>(part_proj.size()); }
  bool independent_global_proj() const { return global_proj.size() > 1; }
  const Linear& global_for(int part) const { return global_proj[independent_global_proj() ? part : 0]; }
};

/// Xavier-uniform weights, zero biases, gamma 1, beta 0, running stats (0, 1).
GlobalAwareParams init_params(int in_dim, int reduced_dim, int k, std::uint64_t seed,
                              bool independent_global_proj = false);

/// Identity map (local-aware module): returns the part features unchanged.
std::vector<Matrix> local_aware_forward(const AwareBatch& batch);

/// Everything global_aware_backward needs from the forward pass.
struct GlobalAwareCache {
  bool valid = false;
  Mode mode = Mode::Infer;
  AwareBatch input;
  std::vector<Matrix> global_reduced;  // x̂_0 per global projection
  std::vector<Matrix> concat;          // z_i = [x̂_i, x̂_0]
  std::vector<Matrix> normalized;      // BN output before the affine
  std::vector<Matrix> pre_relu;        // gamma * normalized + beta
  std::vector<Vector> inv_std;
  std::vector<Vector> batch_mean;
  std::vector<Vector> batch_var;  // biased
};

struct GlobalAwareOutput {
  std::vector<Matrix> features;  // k of B x c' (x_i^g)
  GlobalAwareCache cache;
};

GlobalAwareOutput global_aware_forward(const AwareBatch& batch, const GlobalAwareParams& params, Mode mode);

struct GlobalAwareGrads {
  GlobalAwareParams params;  // running statistics unused
  Matrix d_global;
  std::vector<Matrix> d_parts;
};

GlobalAwareGrads global_aware_backward(const GlobalAwareCache& cache, const GlobalAwareParams& params,
                                       std::span<const Matrix> upstream);

/// Folds the cached batch statistics into the running statistics (momentum 0.9, unbiased variance).
void update_running_stats(GlobalAwareParams& params, const GlobalAwareCache& cache);

/// Optional trainable c -> c map on the local path, identity at initialization.
struct LocalAdapter {
  std::vector<Linear> parts;
};

LocalAdapter init_local_adapter(int dim, int k);
std::vector<Matrix> local_adapter_forward(const LocalAdapter& adapter, const AwareBatch& batch);
/// Returns parameter gradients; input gradients are not needed (the backbone is frozen).
LocalAdapter local_adapter_backward(const LocalAdapter& adapter, const AwareBatch& batch,
                                    std::span<const Matrix> upstream);

/// Row-wise L2 normalization (with the same epsilon rule as `normalize`) and its backward.
Matrix normalize_rows(const Matrix& x);
Matrix normalize_rows_backward(const Matrix& x, const Matrix& upstream);

/// Flat views of trainable tensors, in a fixed order shared by params and grads.
struct ParamView {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
};

std::vector<ParamView> trainable_views(GlobalAwareParams& params);
std::vector<ParamView> trainable_views(LocalAdapter& adapter);

}  // namespace upmnet
