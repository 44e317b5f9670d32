#include "upmnet/synth.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "json.hpp"
#include "upmnet/error.hpp"

namespace upmnet {

namespace {

using nlohmann::json;

using Pattern = std::vector<double>;  // row-major (h, c)

Pattern gaussian(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Pattern p(n);
  for (auto& v : p) v = scale * normal(rng);
  return p;
}

}  // namespace

void validate(const SynthSpec& s) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidSpec, msg); };
  if (s.num_identities < 1 || s.num_cameras < 1 || s.frames_per_tracklet < 1) fail("counts must be >= 1");
  if (s.dims.h < 1 || s.dims.w < 1 || s.dims.c < 1) fail("dims must be >= 1");
  if (s.signature_strength < 0 || s.identity_base_strength < 0 || s.camera_shift_strength < 0 || s.noise < 0)
    fail("strengths must be >= 0");
  if (!(s.occlusion_probability >= 0.0 && s.occlusion_probability <= 1.0)) fail("occlusion_probability must be in [0,1]");
}

SynthSpec synth_spec_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, "synth spec must be a JSON object");
  SynthSpec s;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "num_identities") s.num_identities = value.get<std::uint32_t>();
      else if (key == "num_cameras") s.num_cameras = value.get<std::uint32_t>();
      else if (key == "frames_per_tracklet") s.frames_per_tracklet = value.get<std::uint32_t>();
      else if (key == "dims" && value.is_array()) {
        if (value.size() != 3) throw Error(ErrorCode::InvalidSpec, "dims must be [h, w, c]");
        s.dims = Dims{value[0].get<std::uint32_t>(), value[1].get<std::uint32_t>(), value[2].get<std::uint32_t>()};
      } else if (key == "dims") s.dims = Dims{value.at("h").get<std::uint32_t>(), value.at("w").get<std::uint32_t>(), value.at("c").get<std::uint32_t>()};
      else if (key == "signature_strength") s.signature_strength = value.get<double>();
      else if (key == "identity_base_strength") s.identity_base_strength = value.get<double>();
      else if (key == "camera_shift_strength") s.camera_shift_strength = value.get<double>();
      else if (key == "occlusion_probability") s.occlusion_probability = value.get<double>();
      else if (key == "noise") s.noise = value.get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else throw Error(ErrorCode::InvalidSpec, "unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  validate(s);
  return s;
}

std::string to_json(const SynthSpec& s) {
  json doc{{"num_identities", s.num_identities},
           {"num_cameras", s.num_cameras},
           {"frames_per_tracklet", s.frames_per_tracklet},
           {"dims", {{"h", s.dims.h}, {"w", s.dims.w}, {"c", s.dims.c}}},
           {"signature_strength", s.signature_strength},
           {"identity_base_strength", s.identity_base_strength},
           {"camera_shift_strength", s.camera_shift_strength},
           {"occlusion_probability", s.occlusion_probability},
           {"noise", s.noise},
           {"seed", s.seed}};
  return doc.dump(2);
}

std::vector<SynthTracklet> generate_synthetic_maps(const SynthSpec& s) {
  validate(s);
  const std::size_t h = s.dims.h, w = s.dims.w, c = s.dims.c;
  std::mt19937_64 rng(s.seed);

  std::vector<Pattern> base(s.num_identities), signature(s.num_identities);
  for (std::uint32_t p = 0; p < s.num_identities; ++p) {
    base[p] = gaussian(rng, c, s.identity_base_strength);
    signature[p] = gaussian(rng, h * c, s.signature_strength);
    if (h > 1) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double mean = 0.0;
        for (std::size_t y = 0; y < h; ++y) mean += signature[p][y * c + ch];
        mean /= static_cast<double>(h);
        for (std::size_t y = 0; y < h; ++y) signature[p][y * c + ch] -= mean;
      }
    }
  }
  const Pattern clutter = gaussian(rng, h * c, std::max(s.signature_strength, s.identity_base_strength));

  std::vector<Pattern> gain(s.num_cameras), offset(s.num_cameras);
  for (std::uint32_t cam = 0; cam < s.num_cameras; ++cam) {
    gain[cam] = gaussian(rng, c, 0.5 * s.camera_shift_strength);
    for (auto& g : gain[cam]) g += 1.0;
    offset[cam] = gaussian(rng, h * c, s.camera_shift_strength);
  }

  // Tracklet ids are shuffled per camera so they carry no identity information.
  std::vector<std::vector<std::uint32_t>> tracklet_ids(s.num_cameras);
  for (auto& ids : tracklet_ids) {
    ids.resize(s.num_identities);
    std::iota(ids.begin(), ids.end(), 0u);
    std::shuffle(ids.begin(), ids.end(), rng);
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> band(0, h - 1);

  std::vector<SynthTracklet> out;
  for (std::uint32_t cam = 0; cam < s.num_cameras; ++cam) {
    for (std::uint32_t p = 0; p < s.num_identities; ++p) {
      SynthTracklet t;
      t.id = TrackletId{tracklet_ids[cam][p], CameraId{cam}};
      t.person_id = static_cast<int>(p);
      for (std::uint32_t f = 0; f < s.frames_per_tracklet; ++f) {
        const bool occluded = s.occlusion_probability > 0.0 && unit(rng) < s.occlusion_probability;
        const std::size_t occluded_band = occluded ? band(rng) : h;
        FeatureMap map(s.dims);
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const double content = y == occluded_band ? clutter[y * c + ch] : base[p][ch] + signature[p][y * c + ch];
              double v = gain[cam][ch] * content + offset[cam][y * c + ch];
              if (s.noise > 0.0) v += s.noise * normal(rng);
              map.at(static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(ch)) =
                  static_cast<float>(v);
            }
          }
        }
        t.frames.push_back(SynthFrame{"c" + std::to_string(cam) + "_t" + std::to_string(t.id.value) + "_f" + std::to_string(f),
                                      std::move(map)});
      }
      out.push_back(std::move(t));
    }
  }
  std::sort(out.begin(), out.end(), [](const SynthTracklet& a, const SynthTracklet& b) { return a.id < b.id; });
  return out;
}

DatasetManifest generate_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  const auto tracklets = generate_synthetic_maps(spec);
  std::filesystem::create_directories(out_dir / "features");

  DatasetManifest m;
  m.feature_dims = spec.dims;
  m.root = out_dir;
  for (std::uint32_t cam = 0; cam < spec.num_cameras; ++cam) m.cameras.push_back(CameraId{cam});
  for (const auto& t : tracklets) {
    Tracklet tracklet{t.id, t.person_id, {}};
    for (const auto& f : t.frames) {
      ImageRecord rec{f.image_id, t.id, out_dir / "features" / (f.image_id + ".upmf")};
      write_feature_map(rec.feature_path, f.map);
      tracklet.frames.push_back(std::move(rec));
    }
    m.tracklets.push_back(std::move(tracklet));
  }
  validate_manifest(m);
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace upmnet
