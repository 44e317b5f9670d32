#include "upmnet/dataset.hpp"

#include <fstream>
#include <set>
#include <string>

#include "json.hpp"
#include "upmnet/error.hpp"

namespace upmnet {

namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& message) { throw Error(ErrorCode::ValidationError, message); }

template <typename T>
T get_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw Error(ErrorCode::ParseError, where + ": missing key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, where + "." + key + ": " + e.what());
  }
}

std::uint32_t get_index(const json& obj, const char* key, const std::string& where) {
  const auto v = get_field<long long>(obj, key, where);
  if (v < 0 || v > 0xFFFFFFFFLL) throw Error(ErrorCode::ParseError, where + "." + key + ": out of range");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void validate_manifest(const DatasetManifest& m) {
  if (m.version != 1) invalid("unsupported manifest version " + std::to_string(m.version));
  if (m.feature_dims.h < 1 || m.feature_dims.w < 1 || m.feature_dims.c < 1) invalid("feature_dims must be >= 1");

  std::set<std::uint32_t> cameras;
  for (const auto& cam : m.cameras) {
    if (!cameras.insert(cam.value).second) invalid("duplicate camera " + std::to_string(cam.value));
  }
  for (std::uint32_t i = 0; i < cameras.size(); ++i) {
    if (!cameras.contains(i)) invalid("camera ids must be dense 0..n-1, missing " + std::to_string(i));
  }

  std::set<TrackletId> tracklets;
  std::set<std::string> images;
  for (const auto& t : m.tracklets) {
    const std::string name = "tracklet " + std::to_string(t.id.value) + " (camera " + std::to_string(t.id.camera.value) + ")";
    if (!cameras.contains(t.id.camera.value)) invalid(name + " references undeclared camera");
    if (!tracklets.insert(t.id).second) invalid("duplicate " + name);
    if (t.frames.empty()) invalid(name + " has no frames");
    for (const auto& f : t.frames) {
      if (f.image_id.empty()) invalid(name + " has a frame with empty image_id");
      if (!images.insert(f.image_id).second) invalid("duplicate image_id " + f.image_id);
      if (!(f.tracklet == t.id)) invalid("frame " + f.image_id + " disagrees with its tracklet");
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }

  DatasetManifest m;
  m.root = path.parent_path();
  m.version = get_field<int>(doc, "version", "manifest");
  const json& dims = doc.contains("feature_dims") ? doc["feature_dims"] : json();
  m.feature_dims = Dims{get_index(dims, "h", "feature_dims"), get_index(dims, "w", "feature_dims"),
                        get_index(dims, "c", "feature_dims")};
  for (const auto& cam : get_field<json>(doc, "cameras", "manifest")) {
    if (!cam.is_number_integer() || cam.get<long long>() < 0) throw Error(ErrorCode::ParseError, "cameras: expected non-negative integers");
    m.cameras.push_back(CameraId{cam.get<std::uint32_t>()});
  }
  for (const auto& t : get_field<json>(doc, "tracklets", "manifest")) {
    Tracklet tracklet;
    tracklet.id = TrackletId{get_index(t, "id", "tracklet"), CameraId{get_index(t, "camera", "tracklet")}};
    if (t.contains("person_id") && !t["person_id"].is_null()) tracklet.person_id = get_field<int>(t, "person_id", "tracklet");
    for (const auto& f : get_field<json>(t, "frames", "tracklet")) {
      ImageRecord rec;
      rec.image_id = get_field<std::string>(f, "image_id", "frame");
      rec.tracklet = tracklet.id;
      rec.feature_path = m.root / get_field<std::string>(f, "feature_path", "frame");
      tracklet.frames.push_back(std::move(rec));
    }
    m.tracklets.push_back(std::move(tracklet));
  }

  validate_manifest(m);
  for (const auto& t : m.tracklets) {
    for (const auto& f : t.frames) {
      const Dims header = read_feature_header(f.feature_path);
      if (!(header == m.feature_dims)) invalid("feature file " + f.feature_path.string() + " does not match feature_dims");
    }
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  json doc;
  doc["version"] = m.version;
  doc["feature_dims"] = {{"h", m.feature_dims.h}, {"w", m.feature_dims.w}, {"c", m.feature_dims.c}};
  doc["cameras"] = json::array();
  for (const auto& cam : m.cameras) doc["cameras"].push_back(cam.value);
  doc["tracklets"] = json::array();
  for (const auto& t : m.tracklets) {
    json jt;
    jt["id"] = t.id.value;
    jt["camera"] = t.id.camera.value;
    if (t.person_id) jt["person_id"] = *t.person_id;
    jt["frames"] = json::array();
    for (const auto& f : t.frames) {
      jt["frames"].push_back({{"image_id", f.image_id},
                              {"feature_path", f.feature_path.lexically_relative(m.root).generic_string()}});
    }
    doc["tracklets"].push_back(std::move(jt));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

FeatureMap read_feature_map(const ImageRecord& record, const Dims& dims) {
  return read_feature_map(record.feature_path, dims);
}

TrainingView make_training_view(const DatasetManifest& m) {
  std::vector<std::size_t> all(m.tracklets.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_training_view(m, all);
}

TrainingView make_training_view(const DatasetManifest& m, std::span<const std::size_t> indices) {
  TrainingView view;
  view.feature_dims = m.feature_dims;
  view.cameras = m.cameras;
  for (std::size_t i : indices) {
    if (i >= m.tracklets.size()) throw Error(ErrorCode::UnknownTracklet, "tracklet index " + std::to_string(i));
    view.tracklets.push_back(TrainingTracklet{m.tracklets[i].id, m.tracklets[i].frames});
  }
  return view;
}

}  // namespace upmnet
