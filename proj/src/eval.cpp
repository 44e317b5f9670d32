#include "upmnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "upmnet/error.hpp"

namespace upmnet {

namespace {

using nlohmann::json;

Vector concat(std::span<const Vector> parts) {
  Eigen::Index len = 0;
  for (const auto& p : parts) len += p.size();
  Vector out(len);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

Matrix rows_of(const Matrix& table, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), table.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = table.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  Float64Tensor t{Dims{static_cast<std::uint32_t>(m.rows()), 1, static_cast<std::uint32_t>(m.cols())}, {}};
  t.data.assign(m.data(), m.data() + m.size());
  write_float64_tensor(path, t);
}

Matrix read_matrix(const std::filesystem::path& path) {
  const Float64Tensor t = read_float64_tensor(path);
  Matrix m(t.dims.h, t.dims.c);
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

json report_fields(const EvalReport& r) {
  return json{{"rank1", r.rank1}, {"rank5", r.rank5},          {"rank20", r.rank20},
              {"mAP", r.mAP},     {"num_probes", r.num_probes}, {"num_gallery", r.num_gallery},
              {"skipped_probes", r.skipped_probes}};
}

}  // namespace

Aggregation parse_aggregation(std::string_view name) {
  if (name == "max") return Aggregation::Max;
  if (name == "mean") return Aggregation::Mean;
  throw Error(ErrorCode::Usage, "unknown aggregation '" + std::string(name) + "'");
}

std::string_view to_string(Aggregation mode) { return mode == Aggregation::Max ? "max" : "mean"; }

FeatureSource parse_feature_source(std::string_view name) {
  if (name == "fused") return FeatureSource::Fused;
  if (name == "local") return FeatureSource::Local;
  if (name == "global") return FeatureSource::Global;
  throw Error(ErrorCode::Usage, "unknown feature source '" + std::string(name) + "'");
}

std::string_view to_string(FeatureSource source) {
  switch (source) {
    case FeatureSource::Fused: return "fused";
    case FeatureSource::Local: return "local";
    case FeatureSource::Global: return "global";
  }
  return "fused";
}

Vector fuse_features(std::span<const Vector> local, std::span<const Vector> global) {
  if (local.size() != global.size() || local.empty())
    throw Error(ErrorCode::PartCountMismatch, std::to_string(local.size()) + " local vs " + std::to_string(global.size()) + " global parts");
  std::vector<Vector> parts;
  for (std::size_t i = 0; i < local.size(); ++i) {
    Vector joined(local[i].size() + global[i].size());
    joined << local[i], global[i];
    parts.push_back(normalize(joined));
  }
  return normalize(concat(parts));
}

Vector single_network_feature(std::span<const Vector> parts) {
  std::vector<Vector> normalized;
  for (const auto& p : parts) normalized.push_back(normalize(p));
  return normalize(concat(normalized));
}

Vector tracklet_feature(const Matrix& frames, Aggregation mode) {
  if (frames.rows() == 0) throw Error(ErrorCode::EmptyTracklet, "tracklet has no frames");
  const Vector pooled = mode == Aggregation::Max ? Vector(frames.colwise().maxCoeff().transpose())
                                                 : Vector(frames.colwise().mean().transpose());
  return normalize(pooled);
}

double cmc_at(const std::vector<double>& cmc, std::size_t rank) {
  if (cmc.empty() || rank == 0) return 0.0;
  return cmc[std::min(rank, cmc.size()) - 1];
}

double average_precision(std::span<const std::size_t> ranking, std::span<const int> gallery_ids, int probe_id) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t pos = 0; pos < ranking.size(); ++pos) {
    if (gallery_ids[ranking[pos]] == probe_id) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

EvalReport evaluate(const Matrix& probe, std::span<const int> probe_ids, const Matrix& gallery, std::span<const int> gallery_ids) {
  if (probe.rows() == 0 || gallery.rows() == 0) throw Error(ErrorCode::ValidationError, "probe and gallery must be non-empty");
  if (static_cast<std::size_t>(probe.rows()) != probe_ids.size() || static_cast<std::size_t>(gallery.rows()) != gallery_ids.size())
    throw Error(ErrorCode::ShapeMismatch, "feature rows vs id count");
  if (probe.cols() != gallery.cols()) throw Error(ErrorCode::DimMismatch, "probe and gallery descriptor lengths differ");

  const auto n_gallery = static_cast<std::size_t>(gallery.rows());
  EvalReport report;
  report.num_gallery = n_gallery;
  std::vector<std::size_t> first_match_counts(n_gallery, 0);
  double ap_sum = 0.0;

  for (Eigen::Index p = 0; p < probe.rows(); ++p) {
    std::vector<double> dist(n_gallery);
    for (std::size_t g = 0; g < n_gallery; ++g) dist[g] = (probe.row(p) - gallery.row(static_cast<Eigen::Index>(g))).norm();
    std::vector<std::size_t> order(n_gallery);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });

    const int id = probe_ids[static_cast<std::size_t>(p)];
    const auto first = std::find_if(order.begin(), order.end(), [&](std::size_t g) { return gallery_ids[g] == id; });
    if (first == order.end()) {
      ++report.skipped_probes;
    } else {
      ++first_match_counts[static_cast<std::size_t>(first - order.begin())];
      ap_sum += average_precision(order, gallery_ids, id);
      ++report.num_probes;
    }
    report.rankings.push_back(std::move(order));
  }
  if (report.num_probes == 0) throw Error(ErrorCode::ValidationError, "no probe has a matching gallery item");

  report.cmc.resize(n_gallery);
  std::size_t cumulative = 0;
  for (std::size_t r = 0; r < n_gallery; ++r) {
    cumulative += first_match_counts[r];
    report.cmc[r] = static_cast<double>(cumulative) / static_cast<double>(report.num_probes);
  }
  report.rank1 = cmc_at(report.cmc, 1);
  report.rank5 = cmc_at(report.cmc, 5);
  report.rank20 = cmc_at(report.cmc, 20);
  report.mAP = ap_sum / static_cast<double>(report.num_probes);
  return report;
}

EvalReport average_reports(std::span<const EvalReport> trials) {
  if (trials.empty()) throw Error(ErrorCode::ValidationError, "no trials to average");
  EvalReport avg;
  std::size_t curve = trials.front().cmc.size();
  for (const auto& t : trials) curve = std::min(curve, t.cmc.size());
  avg.cmc.assign(curve, 0.0);
  const double n = static_cast<double>(trials.size());
  for (const auto& t : trials) {
    avg.rank1 += t.rank1 / n;
    avg.rank5 += t.rank5 / n;
    avg.rank20 += t.rank20 / n;
    avg.mAP += t.mAP / n;
    for (std::size_t r = 0; r < curve; ++r) avg.cmc[r] += t.cmc[r] / n;
    avg.num_probes += t.num_probes;
    avg.num_gallery += t.num_gallery;
    avg.skipped_probes += t.skipped_probes;
  }
  return avg;
}

namespace {

struct IdentityIndex {
  std::map<int, std::set<std::uint32_t>> cameras;
  std::map<int, std::vector<std::size_t>> tracklets;
};

IdentityIndex index_identities(const DatasetManifest& m) {
  IdentityIndex idx;
  for (std::size_t t = 0; t < m.tracklets.size(); ++t) {
    const auto& tr = m.tracklets[t];
    if (!tr.person_id) throw Error(ErrorCode::MissingGroundTruth, "tracklet " + std::to_string(tr.id.value) + " has no person_id");
    idx.cameras[*tr.person_id].insert(tr.id.camera.value);
    idx.tracklets[*tr.person_id].push_back(t);
  }
  return idx;
}

void assign_test(const DatasetManifest& m, const IdentityIndex& idx, Split& split) {
  std::uint32_t probe_camera = m.cameras.empty() ? 0 : m.cameras.front().value;
  for (const auto& c : m.cameras) probe_camera = std::min(probe_camera, c.value);
  for (int id : split.test_ids) {
    for (std::size_t t : idx.tracklets.at(id)) {
      (m.tracklets[t].id.camera.value == probe_camera ? split.probe_tracklets : split.gallery_tracklets).push_back(t);
    }
  }
  std::sort(split.probe_tracklets.begin(), split.probe_tracklets.end());
  std::sort(split.gallery_tracklets.begin(), split.gallery_tracklets.end());
}

}  // namespace

Split split_protocol(const DatasetManifest& m, std::uint64_t trial_seed) {
  const IdentityIndex idx = index_identities(m);
  std::vector<int> eligible;
  Split split;
  for (const auto& [id, cams] : idx.cameras) {
    if (cams.size() >= 2) eligible.push_back(id);
    else split.train_ids.push_back(id);
  }
  if (eligible.size() < 2)
    throw Error(ErrorCode::InsufficientCrossCameraIdentities, "need at least two identities seen by two or more cameras");
  std::mt19937_64 rng(trial_seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  const std::size_t n_train = eligible.size() / 2;
  split.train_ids.insert(split.train_ids.end(), eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_ids.assign(eligible.begin() + static_cast<std::ptrdiff_t>(n_train), eligible.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  for (int id : split.train_ids)
    split.train_tracklets.insert(split.train_tracklets.end(), idx.tracklets.at(id).begin(), idx.tracklets.at(id).end());
  std::sort(split.train_tracklets.begin(), split.train_tracklets.end());
  assign_test(m, idx, split);
  return split;
}

Split full_protocol(const DatasetManifest& m) {
  const IdentityIndex idx = index_identities(m);
  Split split;
  for (const auto& [id, tracklets] : idx.tracklets) split.test_ids.push_back(id);
  split.train_tracklets.resize(m.tracklets.size());
  std::iota(split.train_tracklets.begin(), split.train_tracklets.end(), std::size_t{0});
  assign_test(m, idx, split);
  return split;
}

FeatureTable fuse_dataset(const DatasetManifest& m, const AwareModel& local, PoolingMode local_pooling,
                          const AwareModel& global, PoolingMode global_pooling) {
  if (local.k != global.k) throw Error(ErrorCode::PartCountMismatch, "local k=" + std::to_string(local.k) + " vs global k=" + std::to_string(global.k));
  if (local.in_dim != static_cast<int>(m.feature_dims.c) || global.in_dim != static_cast<int>(m.feature_dims.c))
    throw Error(ErrorCode::DimMismatch, "checkpoint channel count does not match the dataset");
  const int k = local.k;
  FeatureTable table;
  table.k = k;
  table.local_dim = local.feature_dim();
  table.global_dim = global.feature_dim();
  std::vector<Vector> fused, local_rows, global_rows;

  for (const auto& t : m.tracklets) {
    std::vector<PartFeatures> local_in, global_in;
    for (const auto& f : t.frames) {
      const FeatureMap map = read_feature_map(f, m.feature_dims);
      local_in.push_back(extract_part_features(map, k, local_pooling));
      global_in.push_back(local_pooling == global_pooling ? local_in.back() : extract_part_features(map, k, global_pooling));
      table.image_ids.push_back(f.image_id);
      table.tracklets.push_back(t.id);
    }
    const auto local_out = model_infer(local, make_batch(local_in));
    const auto global_out = model_infer(global, make_batch(global_in));
    for (std::size_t b = 0; b < t.frames.size(); ++b) {
      std::vector<Vector> lp, gp;
      for (int i = 0; i < k; ++i) {
        lp.push_back(local_out[static_cast<std::size_t>(i)].row(static_cast<Eigen::Index>(b)).transpose());
        gp.push_back(global_out[static_cast<std::size_t>(i)].row(static_cast<Eigen::Index>(b)).transpose());
      }
      fused.push_back(fuse_features(lp, gp));
      local_rows.push_back(single_network_feature(lp));
      global_rows.push_back(single_network_feature(gp));
    }
  }
  auto stack = [](const std::vector<Vector>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    return out;
  };
  table.fused = stack(fused);
  table.local = stack(local_rows);
  table.global = stack(global_rows);
  return table;
}

void save_feature_table(const std::filesystem::path& dir, const FeatureTable& table) {
  std::filesystem::create_directories(dir);
  json index{{"version", 1}, {"k", table.k}, {"local_dim", table.local_dim}, {"global_dim", table.global_dim}};
  index["images"] = json::array();
  for (std::size_t i = 0; i < table.image_ids.size(); ++i) {
    index["images"].push_back({{"image_id", table.image_ids[i]},
                               {"camera", table.tracklets[i].camera.value},
                               {"tracklet", table.tracklets[i].value}});
  }
  std::ofstream out(dir / "index.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "index.json").string());
  out << index.dump(2) << '\n';
  write_matrix(dir / "fused.upmf", table.fused);
  write_matrix(dir / "local.upmf", table.local);
  write_matrix(dir / "global.upmf", table.global);
}

FeatureTable load_feature_table(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw Error(ErrorCode::MissingFile, (dir / "index.json").string());
  FeatureTable table;
  try {
    const json index = json::parse(in);
    table.k = index.at("k").get<int>();
    table.local_dim = index.at("local_dim").get<int>();
    table.global_dim = index.at("global_dim").get<int>();
    for (const auto& img : index.at("images")) {
      table.image_ids.push_back(img.at("image_id").get<std::string>());
      table.tracklets.push_back(TrackletId{img.at("tracklet").get<std::uint32_t>(), CameraId{img.at("camera").get<std::uint32_t>()}});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, (dir / "index.json").string() + ": " + e.what());
  }
  table.fused = read_matrix(dir / "fused.upmf");
  table.local = read_matrix(dir / "local.upmf");
  table.global = read_matrix(dir / "global.upmf");
  const auto n = static_cast<Eigen::Index>(table.image_ids.size());
  if (table.fused.rows() != n || table.local.rows() != n || table.global.rows() != n)
    throw Error(ErrorCode::ShapeMismatch, "feature table rows do not match index.json");
  return table;
}

EvalReport evaluate_split(const FeatureTable& table, const DatasetManifest& m, const Split& split, FeatureSource source,
                          Aggregation aggregation) {
  const Matrix& features = source == FeatureSource::Fused ? table.fused : source == FeatureSource::Local ? table.local : table.global;
  std::map<TrackletId, std::vector<std::size_t>> rows_by_tracklet;
  for (std::size_t i = 0; i < table.tracklets.size(); ++i) rows_by_tracklet[table.tracklets[i]].push_back(i);

  auto describe = [&](std::span<const std::size_t> tracklets, Matrix& out, std::vector<int>& ids) {
    out.resize(static_cast<Eigen::Index>(tracklets.size()), features.cols());
    for (std::size_t r = 0; r < tracklets.size(); ++r) {
      const Tracklet& t = m.tracklets.at(tracklets[r]);
      if (!t.person_id) throw Error(ErrorCode::MissingGroundTruth, "tracklet " + std::to_string(t.id.value));
      const auto it = rows_by_tracklet.find(t.id);
      if (it == rows_by_tracklet.end()) throw Error(ErrorCode::ValidationError, "no features for tracklet " + std::to_string(t.id.value));
      out.row(static_cast<Eigen::Index>(r)) = tracklet_feature(rows_of(features, it->second), aggregation).transpose();
      ids.push_back(*t.person_id);
    }
  };
  Matrix probe, gallery;
  std::vector<int> probe_ids, gallery_ids;
  describe(split.probe_tracklets, probe, probe_ids);
  describe(split.gallery_tracklets, gallery, gallery_ids);
  return evaluate(probe, probe_ids, gallery, gallery_ids);
}

std::string report_json(const EvalReport& average, std::span<const EvalReport> per_trial, const std::string& config_json) {
  json doc = report_fields(average);
  doc["trials"] = per_trial.size();
  doc["per_trial"] = json::array();
  for (const auto& t : per_trial) doc["per_trial"].push_back(report_fields(t));
  doc["config"] = config_json.empty() ? json::object() : json::parse(config_json);
  return doc.dump(2);
}

std::string cmc_csv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "rank,cmc\n";
  for (std::size_t r = 0; r < report.cmc.size(); ++r) out << (r + 1) << ',' << report.cmc[r] << '\n';
  return out.str();
}

}  // namespace upmnet
