#pragma once

#include <cstdint>
#include <optional>

#include "upmnet/eval.hpp"
#include "upmnet/trainer.hpp"

namespace upmnet {

struct PipelineOptions {
  TrainConfig config;                       // `aware` is overridden per network
  std::optional<std::uint64_t> trial_seed;  // unset: train and test on every identity
  Aggregation aggregation = Aggregation::Max;
  LogSink log;
};

struct PipelineResult {
  Split split;
  TrainState local;
  TrainState global;
  FeatureTable table;
  EvalReport fused;
  EvalReport local_only;
  EvalReport global_only;
};

/// Trains the local-aware and the global-aware network, fuses, and evaluates all three descriptors.
PipelineResult run_pipeline(const DatasetManifest& manifest, const PipelineOptions& options);

}  // namespace upmnet
