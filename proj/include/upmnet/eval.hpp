#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "upmnet/dataset.hpp"
#include "upmnet/model.hpp"

namespace upmnet {

enum class Aggregation { Max, Mean };

Aggregation parse_aggregation(std::string_view name);
std::string_view to_string(Aggregation mode);

/// Per part: concat(local_i, global_i), normalize; then concat parts and normalize.
/// Output length k (c + c'). Throws PartCountMismatch.
Vector fuse_features(std::span<const Vector> local, std::span<const Vector> global);

/// Descriptor of a single network: per-part normalize, concat, normalize.
Vector single_network_feature(std::span<const Vector> parts);

/// Elementwise max (or mean) over the N x d frame features, then normalize. Throws EmptyTracklet.
Vector tracklet_feature(const Matrix& frames, Aggregation mode);

struct EvalReport {
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank20 = 0.0;
  double mAP = 0.0;
  std::vector<double> cmc;                         // cmc[r - 1], r = 1..|gallery|
  std::vector<std::vector<std::size_t>> rankings;  // gallery indices per probe, nearest first
  std::size_t num_probes = 0;                      // probes with at least one relevant gallery item
  std::size_t num_gallery = 0;
  std::size_t skipped_probes = 0;                  // probes without any match in the gallery
};

/// CMC value at rank r (clamped to the gallery size).
double cmc_at(const std::vector<double>& cmc, std::size_t rank);

double average_precision(std::span<const std::size_t> ranking, std::span<const int> gallery_ids, int probe_id);

/// Euclidean ranking (ties by gallery index), CMC and mAP. Rows are descriptors.
EvalReport evaluate(const Matrix& probe, std::span<const int> probe_ids, const Matrix& gallery,
                    std::span<const int> gallery_ids);

/// Mean of each metric (and of the CMC curve) over trials.
EvalReport average_reports(std::span<const EvalReport> trials);

struct Split {
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  std::vector<std::size_t> train_tracklets;  // indices into manifest.tracklets
  std::vector<std::size_t> probe_tracklets;
  std::vector<std::size_t> gallery_tracklets;
};

inline constexpr int kDefaultTrials = 10;

/// Seeded 50/50 identity split. Probe = test tracklets of the lowest camera,
/// gallery = test tracklets of the other cameras.
Split split_protocol(const DatasetManifest& manifest, std::uint64_t trial_seed);

/// No held-out half: every tracklet is used for (unlabelled) training and every identity is tested.
Split full_protocol(const DatasetManifest& manifest);

/// Per-image descriptors produced by `fuse`.
struct FeatureTable {
  int k = 0;
  int local_dim = 0;
  int global_dim = 0;
  std::vector<std::string> image_ids;
  std::vector<TrackletId> tracklets;
  Matrix fused;   // N x k(c + c')
  Matrix local;   // N x k c
  Matrix global;  // N x k c'
};

FeatureTable fuse_dataset(const DatasetManifest& manifest, const AwareModel& local, PoolingMode local_pooling,
                          const AwareModel& global, PoolingMode global_pooling);

void save_feature_table(const std::filesystem::path& dir, const FeatureTable& table);
FeatureTable load_feature_table(const std::filesystem::path& dir);

enum class FeatureSource { Fused, Local, Global };
FeatureSource parse_feature_source(std::string_view name);
std::string_view to_string(FeatureSource source);

/// Aggregates image descriptors to tracklets and scores probe against gallery.
EvalReport evaluate_split(const FeatureTable& table, const DatasetManifest& manifest, const Split& split,
                          FeatureSource source, Aggregation aggregation);

/// JSON report: rank1, rank5, rank20, mAP, trials, per_trial, config.
std::string report_json(const EvalReport& average, std::span<const EvalReport> per_trial, const std::string& config_json);
/// `rank,cmc` rows.
std::string cmc_csv(const EvalReport& report);

}  // namespace upmnet
