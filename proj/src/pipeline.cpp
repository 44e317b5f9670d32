#include "upmnet/pipeline.hpp"

namespace upmnet {

PipelineResult run_pipeline(const DatasetManifest& manifest, const PipelineOptions& options) {
  PipelineResult result;
  result.split = options.trial_seed ? split_protocol(manifest, *options.trial_seed) : full_protocol(manifest);
  const TrainingView view = make_training_view(manifest, result.split.train_tracklets);

  TrainConfig local_cfg = options.config;
  local_cfg.aware = AwareKind::Local;
  TrainConfig global_cfg = options.config;
  global_cfg.aware = AwareKind::Global;

  result.local = train(view, local_cfg, options.log);
  result.global = train(view, global_cfg, options.log);
  result.table = fuse_dataset(manifest, result.local.model, local_cfg.pooling, result.global.model, global_cfg.pooling);
  result.fused = evaluate_split(result.table, manifest, result.split, FeatureSource::Fused, options.aggregation);
  result.local_only = evaluate_split(result.table, manifest, result.split, FeatureSource::Local, options.aggregation);
  result.global_only = evaluate_split(result.table, manifest, result.split, FeatureSource::Global, options.aggregation);
  return result;
}

}  // namespace upmnet
