#pragma once

// Label-free view of a dataset. Everything on the training path (anchors,
// trainer, sampling) consumes this header only; identity ground truth is not
// representable here.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "upmnet/tensor_io.hpp"

namespace upmnet {

struct CameraId {
  std::uint32_t value = 0;
  friend auto operator<=>(const CameraId&, const CameraId&) = default;
};

struct TrackletId {
  std::uint32_t value = 0;
  CameraId camera;
  // cameras first, so sorting follows (camera, tracklet)
  friend auto operator<=>(const TrackletId& a, const TrackletId& b) {
    if (auto cmp = a.camera <=> b.camera; cmp != 0) return cmp;
    return a.value <=> b.value;
  }
  friend bool operator==(const TrackletId&, const TrackletId&) = default;
};

struct ImageRecord {
  std::string image_id;
  TrackletId tracklet;
  std::filesystem::path feature_path;  // absolute, resolved against the manifest directory
};

struct TrainingTracklet {
  TrackletId id;
  std::vector<ImageRecord> frames;
};

struct TrainingView {
  Dims feature_dims;
  std::vector<CameraId> cameras;
  std::vector<TrainingTracklet> tracklets;

  std::size_t num_images() const {
    std::size_t n = 0;
    for (const auto& t : tracklets) n += t.frames.size();
    return n;
  }
};

}  // namespace upmnet
