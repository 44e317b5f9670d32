#include "upmnet/association.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "upmnet/error.hpp"

namespace upmnet {

namespace {

const std::vector<std::size_t> kNoSlots;

double distance(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  return (a - b).norm();
}

void check_part(const AnchorBank& bank, int part) {
  if (part < 0 || part >= bank.num_parts()) throw Error(ErrorCode::PartCountMismatch, "part index " + std::to_string(part));
}

}  // namespace

AnchorBank::AnchorBank(std::vector<TrackletId> slots, int num_parts, int dim, double eta_)
    : eta(eta_), dim_(dim), slots_(std::move(slots)) {
  if (!std::is_sorted(slots_.begin(), slots_.end()) ||
      std::adjacent_find(slots_.begin(), slots_.end()) != slots_.end()) {
    throw Error(ErrorCode::ValidationError, "anchor slots must be sorted and unique");
  }
  if (!(eta > 0.0 && eta <= 1.0)) throw Error(ErrorCode::InvalidConfig, "eta must be in (0, 1]");
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    const auto cam = slots_[s].camera.value;
    if (by_camera_.size() <= cam) by_camera_.resize(cam + 1);
    by_camera_[cam].push_back(s);
  }
  const auto rows = static_cast<Eigen::Index>(slots_.size());
  intra.assign(static_cast<std::size_t>(num_parts), Matrix::Zero(rows, dim));
  cross = intra;
}

const std::vector<std::size_t>& AnchorBank::slots_in_camera(CameraId camera) const {
  return camera.value < by_camera_.size() ? by_camera_[camera.value] : kNoSlots;
}

std::size_t AnchorBank::num_cameras() const {
  return static_cast<std::size_t>(std::count_if(by_camera_.begin(), by_camera_.end(), [](const auto& v) { return !v.empty(); }));
}

std::size_t AnchorBank::slot_of(TrackletId id) const {
  const auto it = std::lower_bound(slots_.begin(), slots_.end(), id);
  if (it == slots_.end() || !(*it == id)) {
    throw Error(ErrorCode::UnknownTracklet,
                "tracklet " + std::to_string(id.value) + " of camera " + std::to_string(id.camera.value));
  }
  return static_cast<std::size_t>(it - slots_.begin());
}

AnchorBank init_anchors(std::span<const TrackletFeatures> tracklets, double eta) {
  if (tracklets.empty()) throw Error(ErrorCode::DatasetTooSmall, "no tracklets to build anchors from");
  const int k = static_cast<int>(tracklets.front().parts.size());
  if (k < 1) throw Error(ErrorCode::PartCountMismatch, "tracklet features have no parts");
  const auto dim = static_cast<int>(tracklets.front().parts.front().cols());

  std::vector<std::size_t> order(tracklets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tracklets[a].id < tracklets[b].id; });
  std::vector<TrackletId> slots;
  for (std::size_t i : order) slots.push_back(tracklets[i].id);

  AnchorBank bank(std::move(slots), k, dim, eta);
  for (std::size_t s = 0; s < order.size(); ++s) {
    const auto& t = tracklets[order[s]];
    if (static_cast<int>(t.parts.size()) != k) throw Error(ErrorCode::PartCountMismatch, "ragged tracklet features");
    for (int i = 0; i < k; ++i) {
      const Matrix& frames = t.parts[static_cast<std::size_t>(i)];
      if (frames.rows() == 0) throw Error(ErrorCode::EmptyTracklet, "tracklet " + std::to_string(t.id.value));
      if (frames.cols() != dim) throw Error(ErrorCode::DimMismatch, "tracklet feature dim");
      const Vector mean = frames.colwise().mean().transpose();
      bank.intra[i].row(static_cast<Eigen::Index>(s)) = normalize(mean).transpose();
    }
  }
  bank.cross = bank.intra;
  return bank;
}

void ema_update(AnchorBank& bank, std::size_t slot, int part, const Vector& x) {
  check_part(bank, part);
  if (slot >= bank.num_slots()) throw Error(ErrorCode::UnknownTracklet, "slot " + std::to_string(slot));
  if (x.size() != bank.dim()) throw Error(ErrorCode::DimMismatch, "feature dim vs anchor dim");
  auto row = bank.intra[part].row(static_cast<Eigen::Index>(slot));
  row -= bank.eta * (row - x.transpose());
  if (bank.renormalize) row = normalize(Vector(row.transpose())).transpose();
}

void ema_update(AnchorBank& bank, TrackletId tracklet, int part, const Vector& x) {
  ema_update(bank, bank.slot_of(tracklet), part, x);
}

std::vector<SlotPair> compute_crc_pairs(const AnchorBank& bank, int part) {
  check_part(bank, part);
  if (bank.num_cameras() < 2) return {};
  const Matrix& anchors = bank.intra[part];
  const std::size_t n = bank.num_slots();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::vector<std::size_t> nearest(n, kNone);
  for (std::size_t a = 0; a < n; ++a) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < n; ++b) {
      if (bank.camera_of(b) == bank.camera_of(a)) continue;
      const double d = distance(anchors.row(static_cast<Eigen::Index>(a)), anchors.row(static_cast<Eigen::Index>(b)));
      if (d < best) {
        best = d;
        nearest[a] = b;
      }
    }
  }
  std::vector<SlotPair> pairs;
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t b = nearest[a];
    if (b != kNone && a < b && nearest[b] == a) pairs.emplace_back(a, b);
  }
  return pairs;
}

void update_cross_anchors(AnchorBank& bank, int part, std::span<const SlotPair> pairs, bool warmup_active) {
  check_part(bank, part);
  bank.cross[part] = bank.intra[part];
  if (warmup_active) return;
  const Matrix& previous = bank.intra_previous.size() == bank.intra.size() ? bank.intra_previous[part] : bank.intra[part];
  const Matrix& current = bank.intra[part];
  auto fuse = [&](std::size_t self, std::size_t partner) {
    Vector avg = 0.5 * (current.row(static_cast<Eigen::Index>(self)) + previous.row(static_cast<Eigen::Index>(partner))).transpose();
    if (bank.renormalize) avg = normalize(avg);
    bank.cross[part].row(static_cast<Eigen::Index>(self)) = avg.transpose();
  };
  for (const auto& [a, b] : pairs) {
    if (a >= bank.num_slots() || b >= bank.num_slots()) throw Error(ErrorCode::UnknownTracklet, "pair slot out of range");
    fuse(a, b);
    fuse(b, a);
  }
}

BatchDistances compute_distances(std::span<const Matrix> features, std::span<const std::size_t> sources,
                                 const AnchorBank& bank) {
  const int k = bank.num_parts();
  if (static_cast<int>(features.size()) != k) throw Error(ErrorCode::PartCountMismatch, "feature part count vs anchor bank");
  const auto rows = static_cast<Eigen::Index>(sources.size());
  for (std::size_t s : sources) {
    if (s >= bank.num_slots()) throw Error(ErrorCode::UnknownSource, "source slot " + std::to_string(s));
  }

  BatchDistances out;
  out.sources.assign(sources.begin(), sources.end());
  for (int i = 0; i < k; ++i) {
    const Matrix& x = features[static_cast<std::size_t>(i)];
    if (x.rows() != rows || x.cols() != bank.dim()) throw Error(ErrorCode::DimMismatch, "feature shape vs anchor bank");
    PartDistances d{Vector(rows), Vector(rows), Vector(rows), Vector(rows), std::vector<std::size_t>(sources.size())};
    for (Eigen::Index b = 0; b < rows; ++b) {
      const std::size_t source = sources[static_cast<std::size_t>(b)];
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t s : bank.slots_in_camera(bank.camera_of(source))) {
        const double dist = distance(x.row(b), bank.intra[i].row(static_cast<Eigen::Index>(s)));
        if (dist < best) {
          best = dist;
          d.argmin[static_cast<std::size_t>(b)] = s;
        }
      }
      d.d_min[b] = best;
      d.d_intra[b] = distance(x.row(b), bank.intra[i].row(static_cast<Eigen::Index>(source)));
      d.d_cross[b] = distance(x.row(b), bank.cross[i].row(static_cast<Eigen::Index>(source)));
    }
    for (Eigen::Index b = 0; b < rows; ++b) {
      const CameraId cam = bank.camera_of(sources[static_cast<std::size_t>(b)]);
      double sum = 0.0;
      int count = 0;
      for (Eigen::Index o = 0; o < rows; ++o) {
        if (bank.camera_of(sources[static_cast<std::size_t>(o)]) == cam) {
          sum += d.d_min[o];
          ++count;
        }
      }
      d.d_bar[b] = sum / count;
    }
    out.parts.push_back(std::move(d));
  }
  return out;
}

AssociationTerms association_terms(double d_intra, double d_cross, double d_min, double d_bar, const LossConfig& cfg) {
  AssociationTerms t;
  t.source_is_nearest = d_intra == d_min;
  const double threshold = t.source_is_nearest ? d_bar : d_min;
  t.intra = std::max(0.0, d_intra - threshold + cfg.margin);
  t.cross = std::max(0.0, d_cross - threshold + cfg.margin);
  t.total = t.intra + cfg.lambda * t.cross;
  return t;
}

double association_loss_value(const BatchDistances& distances, const LossConfig& cfg) {
  if (distances.parts.empty() || distances.sources.empty()) return 0.0;
  const double k = static_cast<double>(distances.parts.size());
  double total = 0.0;
  for (std::size_t b = 0; b < distances.sources.size(); ++b) {
    double item = 0.0;
    for (const auto& d : distances.parts) {
      const auto e = static_cast<Eigen::Index>(b);
      item += association_terms(d.d_intra[e], d.d_cross[e], d.d_min[e], d.d_bar[e], cfg).total;
    }
    total += item / k;
  }
  return total / static_cast<double>(distances.sources.size());
}

LossResult association_loss(std::span<const Matrix> features, const AnchorBank& bank, const BatchDistances& distances,
                            const LossConfig& cfg) {
  if (features.size() != distances.parts.size()) throw Error(ErrorCode::PartCountMismatch, "features vs distances");
  LossResult out;
  out.loss = association_loss_value(distances, cfg);
  const auto rows = static_cast<Eigen::Index>(distances.sources.size());
  const double scale = 1.0 / (static_cast<double>(rows) * static_cast<double>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Matrix& x = features[i];
    const PartDistances& d = distances.parts[i];
    Matrix grad = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index b = 0; b < rows; ++b) {
      const auto source = static_cast<Eigen::Index>(distances.sources[static_cast<std::size_t>(b)]);
      const auto t = association_terms(d.d_intra[b], d.d_cross[b], d.d_min[b], d.d_bar[b], cfg);
      if (t.intra > 0.0 && d.d_intra[b] > 0.0)
        grad.row(b) += scale * (x.row(b) - bank.intra[i].row(source)) / d.d_intra[b];
      if (t.cross > 0.0 && d.d_cross[b] > 0.0)
        grad.row(b) += scale * cfg.lambda * (x.row(b) - bank.cross[i].row(source)) / d.d_cross[b];
    }
    out.grad.push_back(std::move(grad));
  }
  return out;
}

}  // namespace upmnet
