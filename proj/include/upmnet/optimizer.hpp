#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "upmnet/aware.hpp"

namespace upmnet {

enum class OptimizerKind { SGD, RMSProp };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::RMSProp;
  double learning_rate = 4.5e-2;
  double momentum = 0.9;  // SGD
  double rho = 0.9;       // RMSProp decay
  double epsilon = 1e-8;  // RMSProp
};

/// One buffer per parameter view: velocity (SGD) or squared-gradient average (RMSProp).
struct OptimizerState {
  std::vector<std::vector<double>> buffers;
};

/// SGD:     v <- mu v + g,              p <- p - lr v
/// RMSProp: s <- rho s + (1 - rho) g^2, p <- p - lr g / (sqrt(s) + eps)
void optimizer_apply(std::span<const ParamView> params, std::span<const ParamView> grads, OptimizerState& state,
                     const OptimizerConfig& cfg);

}  // namespace upmnet
