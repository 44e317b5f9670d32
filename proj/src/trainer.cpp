#include "upmnet/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "json.hpp"
#include "upmnet/error.hpp"

namespace upmnet {

namespace {

using nlohmann::json;

[[noreturn]] void bad_config(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

}  // namespace

void validate(const TrainConfig& c) {
  if (c.k < 1) bad_config("k must be >= 1");
  if (c.batch_size < 2) bad_config("batch_size (M) must be >= 2");
  if (c.total_iterations < 1) bad_config("total_iterations must be >= 1");
  if (c.warmup_epochs < 0) bad_config("warmup_epochs must be >= 0");
  if (!(c.eta > 0.0 && c.eta <= 1.0)) bad_config("eta must be in (0, 1]");
  if (c.loss.margin < 0.0) bad_config("margin must be >= 0");
  if (c.loss.lambda < 0.0) bad_config("lambda must be >= 0");
  if (c.reduced_dim < 1) bad_config("reduced_dim must be >= 1");
  if (!(c.optimizer.learning_rate > 0.0)) bad_config("learning_rate must be > 0");
  if (c.optimizer.momentum < 0.0 || c.optimizer.rho < 0.0 || c.optimizer.rho >= 1.0 || c.optimizer.epsilon <= 0.0)
    bad_config("optimizer constants out of range");
  if (c.log_interval < 1) bad_config("log_interval must be >= 1");
}

TrainConfig train_config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, "config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "k") c.k = v.get<int>();
      else if (key == "pooling") c.pooling = parse_pooling(v.get<std::string>());
      else if (key == "aware") c.aware = parse_aware_kind(v.get<std::string>());
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "total_iterations") c.total_iterations = v.get<std::int64_t>();
      else if (key == "warmup_epochs") c.warmup_epochs = v.get<int>();
      else if (key == "optimizer") c.optimizer.kind = parse_optimizer(v.get<std::string>());
      else if (key == "learning_rate") c.optimizer.learning_rate = v.get<double>();
      else if (key == "momentum") c.optimizer.momentum = v.get<double>();
      else if (key == "rho") c.optimizer.rho = v.get<double>();
      else if (key == "rms_epsilon") c.optimizer.epsilon = v.get<double>();
      else if (key == "eta") c.eta = v.get<double>();
      else if (key == "margin") c.loss.margin = v.get<double>();
      else if (key == "lambda") c.loss.lambda = v.get<double>();
      else if (key == "reduced_dim") c.reduced_dim = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "local_adapter") c.local_adapter = v.get<bool>();
      else if (key == "independent_global_proj") c.independent_global_proj = v.get<bool>();
      else if (key == "log_interval") c.log_interval = v.get<int>();
      else bad_config("unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  validate(c);
  return c;
}

std::string to_json(const TrainConfig& c) {
  json doc{{"k", c.k},
           {"pooling", std::string(to_string(c.pooling))},
           {"aware", std::string(to_string(c.aware))},
           {"batch_size", c.batch_size},
           {"total_iterations", c.total_iterations},
           {"warmup_epochs", c.warmup_epochs},
           {"optimizer", std::string(to_string(c.optimizer.kind))},
           {"learning_rate", c.optimizer.learning_rate},
           {"momentum", c.optimizer.momentum},
           {"rho", c.optimizer.rho},
           {"rms_epsilon", c.optimizer.epsilon},
           {"eta", c.eta},
           {"margin", c.loss.margin},
           {"lambda", c.loss.lambda},
           {"reduced_dim", c.reduced_dim},
           {"seed", c.seed},
           {"local_adapter", c.local_adapter},
           {"independent_global_proj", c.independent_global_proj},
           {"log_interval", c.log_interval}};
  return doc.dump(2);
}

FeatureCache build_feature_cache(const TrainingView& view, int k, PoolingMode pooling) {
  FeatureCache cache;
  for (const auto& t : view.tracklets) cache.slots.push_back(t.id);
  std::sort(cache.slots.begin(), cache.slots.end());
  if (std::adjacent_find(cache.slots.begin(), cache.slots.end()) != cache.slots.end())
    throw Error(ErrorCode::ValidationError, "duplicate tracklet in training view");
  for (const auto& t : view.tracklets) {
    if (t.frames.empty()) throw Error(ErrorCode::EmptyTracklet, "tracklet " + std::to_string(t.id.value));
    const auto slot = static_cast<std::size_t>(std::lower_bound(cache.slots.begin(), cache.slots.end(), t.id) - cache.slots.begin());
    for (const auto& f : t.frames) {
      const FeatureMap map = read_feature_map(f.feature_path, view.feature_dims);
      cache.images.push_back(TrainingImage{t.id, slot, extract_part_features(map, k, pooling)});
    }
  }
  return cache;
}

std::vector<std::size_t> sample_batch_indices(std::span<const CameraId> image_cameras, int batch_size, std::mt19937_64& rng) {
  const std::size_t n = image_cameras.size();
  const auto m = static_cast<std::size_t>(batch_size);
  if (batch_size < 1 || n < m) throw Error(ErrorCode::DatasetTooSmall, "need at least M=" + std::to_string(batch_size) + " images");
  if (std::set<CameraId>(image_cameras.begin(), image_cameras.end()).size() < 2)
    throw Error(ErrorCode::DatasetTooSmall, "need images from at least two cameras");

  std::vector<std::size_t> pool(n);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    std::vector<std::size_t> batch(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
    const CameraId first = image_cameras[batch.front()];
    if (std::any_of(batch.begin(), batch.end(), [&](std::size_t i) { return image_cameras[i] != first; })) return batch;
  }
  throw Error(ErrorCode::DatasetTooSmall, "could not draw a batch covering two cameras");
}

std::vector<ImageRecord> sample_batch(const TrainingView& view, int batch_size, std::mt19937_64& rng) {
  std::vector<ImageRecord> images;
  std::vector<CameraId> cameras;
  for (const auto& t : view.tracklets) {
    for (const auto& f : t.frames) {
      images.push_back(f);
      cameras.push_back(t.id.camera);
    }
  }
  std::vector<ImageRecord> out;
  for (std::size_t i : sample_batch_indices(cameras, batch_size, rng)) out.push_back(images[i]);
  return out;
}

std::int64_t epoch_length(std::size_t num_images, int batch_size) {
  return static_cast<std::int64_t>((num_images + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
}

bool warmup_active(const TrainState& state, std::size_t num_images) {
  const auto boundary = static_cast<std::uint64_t>(state.config.warmup_epochs) *
                        static_cast<std::uint64_t>(epoch_length(num_images, state.config.batch_size));
  return state.iteration < boundary;
}

std::vector<TrackletFeatures> tracklet_features(const AwareModel& model, const FeatureCache& cache) {
  std::vector<std::vector<PartFeatures>> per_slot(cache.slots.size());
  for (const auto& img : cache.images) per_slot[img.slot].push_back(img.features);
  std::vector<TrackletFeatures> out;
  for (std::size_t s = 0; s < per_slot.size(); ++s) {
    if (per_slot[s].empty()) throw Error(ErrorCode::EmptyTracklet, "tracklet " + std::to_string(cache.slots[s].value));
    out.push_back(TrackletFeatures{cache.slots[s], model_infer(model, make_batch(per_slot[s]))});
  }
  return out;
}

TrainState init_training(const FeatureCache& cache, const TrainConfig& cfg) {
  validate(cfg);
  if (cache.images.empty()) throw Error(ErrorCode::DatasetTooSmall, "no training images");
  TrainState state;
  state.config = cfg;
  state.rng.seed(cfg.seed);
  const ModelShape shape{cfg.aware,
                         cfg.k,
                         static_cast<int>(cache.images.front().features.global.size()),
                         cfg.reduced_dim,
                         cfg.local_adapter,
                         cfg.independent_global_proj};
  state.model = make_model(shape, state.rng());
  const auto features = tracklet_features(state.model, cache);
  state.bank = init_anchors(features, cfg.eta);
  return state;
}

StepResult train_step(TrainState& state, const FeatureCache& cache, std::span<const std::size_t> batch) {
  const TrainConfig& cfg = state.config;
  std::vector<PartFeatures> items;
  std::vector<std::size_t> sources;
  for (std::size_t i : batch) {
    if (i >= cache.images.size()) throw Error(ErrorCode::UnknownSource, "image index " + std::to_string(i));
    items.push_back(cache.images[i].features);
    sources.push_back(state.bank.slot_of(cache.images[i].tracklet));
  }
  const AwareBatch input = make_batch(items);

  ModelForward fwd = model_forward(state.model, input, Mode::Train);
  std::vector<Matrix> features;
  for (const auto& raw : fwd.raw) features.push_back(normalize_rows(raw));

  const BatchDistances distances = compute_distances(features, sources, state.bank);
  const LossResult loss = association_loss(features, state.bank, distances, cfg.loss);

  std::vector<Matrix> d_raw;
  for (std::size_t i = 0; i < features.size(); ++i) d_raw.push_back(normalize_rows_backward(fwd.raw[i], loss.grad[i]));

  if (state.model.kind == AwareKind::Global) {
    GlobalAwareGrads grads = global_aware_backward(fwd.cache, state.model.global, d_raw);
    const auto params = trainable_views(state.model.global);
    const auto grad_views = trainable_views(grads.params);
    optimizer_apply(params, grad_views, state.optimizer, cfg.optimizer);
    update_running_stats(state.model.global, fwd.cache);
  } else if (state.model.adapter) {
    LocalAdapter grads = local_adapter_backward(*state.model.adapter, input, d_raw);
    const auto params = trainable_views(*state.model.adapter);
    const auto grad_views = trainable_views(grads);
    optimizer_apply(params, grad_views, state.optimizer, cfg.optimizer);
  }

  AnchorBank& bank = state.bank;
  bank.snapshot();
  for (std::size_t b = 0; b < sources.size(); ++b) {
    for (int i = 0; i < bank.num_parts(); ++i)
      ema_update(bank, sources[b], i, features[static_cast<std::size_t>(i)].row(static_cast<Eigen::Index>(b)).transpose());
  }
  const bool warmup = warmup_active(state, cache.images.size());
  for (int i = 0; i < bank.num_parts(); ++i) {
    const auto pairs = warmup ? std::vector<SlotPair>{} : compute_crc_pairs(bank, i);
    update_cross_anchors(bank, i, pairs, warmup);
  }
  ++bank.iteration;
  ++state.iteration;
  return StepResult{loss.loss, warmup};
}

std::string format_log_line(std::uint64_t iteration, double loss, double lr, bool warmup) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "iter=%llu loss=%.6f lr=%g warmup=%d", static_cast<unsigned long long>(iteration), loss, lr,
                warmup ? 1 : 0);
  return buf;
}

void run_training(TrainState& state, const FeatureCache& cache, std::uint64_t until_iteration, const LogSink& log) {
  const auto total = static_cast<std::uint64_t>(state.config.total_iterations);
  until_iteration = std::min(until_iteration, total);
  std::vector<CameraId> cameras;
  cameras.reserve(cache.images.size());
  for (const auto& img : cache.images) cameras.push_back(img.tracklet.camera);

  double interval_loss = 0.0;
  int interval_steps = 0;
  while (state.iteration < until_iteration) {
    const auto batch = sample_batch_indices(cameras, state.config.batch_size, state.rng);
    const StepResult step = train_step(state, cache, batch);
    interval_loss += step.loss;
    ++interval_steps;
    if (log && (state.iteration % static_cast<std::uint64_t>(state.config.log_interval) == 0 || state.iteration == total)) {
      log(format_log_line(state.iteration, interval_loss / interval_steps, state.config.optimizer.learning_rate, step.warmup));
      interval_loss = 0.0;
      interval_steps = 0;
    }
  }
}

TrainState train(const TrainingView& view, const TrainConfig& cfg, const LogSink& log) {
  validate(cfg);
  const FeatureCache cache = build_feature_cache(view, cfg.k, cfg.pooling);
  TrainState state = init_training(cache, cfg);
  run_training(state, cache, static_cast<std::uint64_t>(cfg.total_iterations), log);
  return state;
}

}  // namespace upmnet
