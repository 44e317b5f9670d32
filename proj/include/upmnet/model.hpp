#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "upmnet/aware.hpp"

namespace upmnet {

/// The trainable head of one network (local-aware or global-aware) on top of
/// frozen pooled features. Its outputs are L2-normalized per part; those unit
/// vectors are what the anchors, the losses, and the fused descriptor see.
struct AwareModel {
  AwareKind kind = AwareKind::Global;
  int k = 1;
  int in_dim = 0;
  GlobalAwareParams global;             // Global kind only
  std::optional<LocalAdapter> adapter;  // Local kind, when enabled

  int feature_dim() const { return kind == AwareKind::Global ? global.reduced_dim : in_dim; }
};

struct ModelShape {
  AwareKind kind = AwareKind::Global;
  int k = 1;
  int in_dim = 0;
  int reduced_dim = 256;
  bool local_adapter = false;
  bool independent_global_proj = false;
};

AwareModel make_model(const ModelShape& shape, std::uint64_t seed);

/// Unnormalized aware outputs, one B x d matrix per part.
struct ModelForward {
  std::vector<Matrix> raw;
  GlobalAwareCache cache;  // Global kind
};

ModelForward model_forward(const AwareModel& model, const AwareBatch& batch, Mode mode);

/// Inference-mode features, normalized per part.
std::vector<Matrix> model_infer(const AwareModel& model, const AwareBatch& batch);

std::vector<ParamView> trainable_views(AwareModel& model);

/// Every tensor needed to restore the model (trainable and running statistics).
struct NamedTensor {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

std::vector<NamedTensor> named_tensors(AwareModel& model);

}  // namespace upmnet
