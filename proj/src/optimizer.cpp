#include "upmnet/optimizer.hpp"

#include <cmath>
#include <string>

#include "upmnet/error.hpp"

namespace upmnet {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::SGD;
  if (name == "rmsprop") return OptimizerKind::RMSProp;
  throw Error(ErrorCode::InvalidConfig, "unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::SGD ? "sgd" : "rmsprop"; }

void optimizer_apply(std::span<const ParamView> params, std::span<const ParamView> grads, OptimizerState& state,
                     const OptimizerConfig& cfg) {
  if (params.size() != grads.size()) throw Error(ErrorCode::ShapeMismatch, "parameter and gradient counts differ");
  if (state.buffers.empty()) {
    for (const auto& p : params) state.buffers.emplace_back(p.size, 0.0);
  }
  if (state.buffers.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size != grads[t].size || state.buffers[t].size() != params[t].size)
      throw Error(ErrorCode::ShapeMismatch, "shape mismatch for " + params[t].name);
  }

  for (std::size_t t = 0; t < params.size(); ++t) {
    double* p = params[t].data;
    const double* g = grads[t].data;
    auto& buf = state.buffers[t];
    for (std::size_t j = 0; j < params[t].size; ++j) {
      if (cfg.kind == OptimizerKind::SGD) {
        buf[j] = cfg.momentum * buf[j] + g[j];
        p[j] -= cfg.learning_rate * buf[j];
      } else {
        buf[j] = cfg.rho * buf[j] + (1.0 - cfg.rho) * g[j] * g[j];
        p[j] -= cfg.learning_rate * g[j] / (std::sqrt(buf[j]) + cfg.epsilon);
      }
    }
  }
}

}  // namespace upmnet
