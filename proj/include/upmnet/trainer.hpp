#pragma once

// Training path. Consumes the label-free TrainingView only.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "upmnet/association.hpp"
#include "upmnet/model.hpp"
#include "upmnet/optimizer.hpp"
#include "upmnet/training_view.hpp"

namespace upmnet {

struct TrainConfig {
  int k = 8;
  PoolingMode pooling = PoolingMode::GAP;
  AwareKind aware = AwareKind::Global;
  int batch_size = 64;  // M
  std::int64_t total_iterations = 20000;
  int warmup_epochs = 2;  // n
  OptimizerConfig optimizer;
  double eta = 0.5;
  LossConfig loss;
  int reduced_dim = 256;  // c'
  std::uint64_t seed = 0;
  bool local_adapter = false;
  bool independent_global_proj = false;
  int log_interval = 100;
};

/// Throws InvalidConfig.
void validate(const TrainConfig& cfg);

/// Unknown keys are rejected; absent keys keep their defaults.
TrainConfig train_config_from_json(const std::string& text);
std::string to_json(const TrainConfig& cfg);

/// Pooled, normalized part features of every training image, computed once
/// (the backbone is frozen, so they never change during training).
struct TrainingImage {
  TrackletId tracklet;
  std::size_t slot = 0;
  PartFeatures features;
};

struct FeatureCache {
  std::vector<TrainingImage> images;
  std::vector<TrackletId> slots;  // sorted
};

FeatureCache build_feature_cache(const TrainingView& view, int k, PoolingMode pooling);

/// M distinct image indices, uniformly drawn, redrawn until at least two cameras appear.
std::vector<std::size_t> sample_batch_indices(std::span<const CameraId> image_cameras, int batch_size, std::mt19937_64& rng);
std::vector<ImageRecord> sample_batch(const TrainingView& view, int batch_size, std::mt19937_64& rng);

struct TrainState {
  TrainConfig config;
  AwareModel model;
  AnchorBank bank;
  OptimizerState optimizer;
  std::uint64_t iteration = 0;
  std::mt19937_64 rng;
};

std::int64_t epoch_length(std::size_t num_images, int batch_size);
bool warmup_active(const TrainState& state, std::size_t num_images);

/// Seeds the generator, initializes the model from it, and builds anchors from an inference pass.
TrainState init_training(const FeatureCache& cache, const TrainConfig& cfg);

/// Per-tracklet normalized features under the current model (inference mode).
std::vector<TrackletFeatures> tracklet_features(const AwareModel& model, const FeatureCache& cache);

struct StepResult {
  double loss = 0.0;
  bool warmup = false;
};

/// forward -> distances -> loss -> backward/optimizer -> EMA anchor updates -> cross anchors.
StepResult train_step(TrainState& state, const FeatureCache& cache, std::span<const std::size_t> batch);

using LogSink = std::function<void(const std::string&)>;

/// Runs steps until state.iteration reaches `until_iteration` (capped at total_iterations).
void run_training(TrainState& state, const FeatureCache& cache, std::uint64_t until_iteration, const LogSink& log = {});

/// Full run: feature cache, initialization, total_iterations steps.
TrainState train(const TrainingView& view, const TrainConfig& cfg, const LogSink& log = {});

/// `iter=<t> loss=<float> lr=<float> warmup=<0|1>`
std::string format_log_line(std::uint64_t iteration, double loss, double lr, bool warmup);

}  // namespace upmnet
