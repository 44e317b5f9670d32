#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "upmnet/dataset.hpp"

namespace upmnet {

/// Planted-identity generator parameters. Every identity is seen once per
/// camera; features are built per horizontal band so that part features carry
/// identity information the whole-map average does not.
struct SynthSpec {
  std::uint32_t num_identities = 10;
  std::uint32_t num_cameras = 2;
  std::uint32_t frames_per_tracklet = 8;
  Dims dims{8, 4, 16};
  double signature_strength = 1.0;       // per-band identity signature, zero-mean over bands
  double identity_base_strength = 0.25;  // band-independent identity pattern
  double camera_shift_strength = 0.3;    // per-camera gain and offset
  double occlusion_probability = 0.0;    // chance a frame has one band replaced by shared clutter
  double noise = 0.1;                    // per-element Gaussian noise
  std::uint64_t seed = 0;
};

void validate(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const std::string& text);
std::string to_json(const SynthSpec& spec);

struct SynthFrame {
  std::string image_id;
  FeatureMap map;
};

struct SynthTracklet {
  TrackletId id;
  int person_id = 0;
  std::vector<SynthFrame> frames;
};

/// In-memory generation; a pure function of the spec (including its seed).
std::vector<SynthTracklet> generate_synthetic_maps(const SynthSpec& spec);

/// Writes `out_dir/manifest.json` and `out_dir/features/*.upmf`, returns the manifest.
DatasetManifest generate_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace upmnet
