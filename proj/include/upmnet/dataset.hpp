#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "upmnet/tensor_io.hpp"
#include "upmnet/training_view.hpp"

namespace upmnet {

struct Tracklet {
  TrackletId id;
  std::optional<int> person_id;  // ground truth, evaluation only
  std::vector<ImageRecord> frames;
};

struct DatasetManifest {
  int version = 1;
  Dims feature_dims;
  std::vector<CameraId> cameras;
  std::vector<Tracklet> tracklets;
  std::filesystem::path root;  // directory the feature paths are relative to
};

/// Parses and validates a manifest, including a header check of every feature file.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Structural validation only (no file access). Throws ValidationError.
void validate_manifest(const DatasetManifest& manifest);

/// Writes manifest.json; feature paths are stored relative to `manifest.root`.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

FeatureMap read_feature_map(const ImageRecord& record, const Dims& dims);

TrainingView make_training_view(const DatasetManifest& manifest);
TrainingView make_training_view(const DatasetManifest& manifest, std::span<const std::size_t> tracklet_indices);

}  // namespace upmnet
