#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "upmnet/features.hpp"
#include "upmnet/training_view.hpp"

namespace upmnet {

/// Per-part intra-camera anchors (tracklet centers) and cross-camera anchors,
/// one row per tracklet slot. Slots are sorted by (camera, tracklet), so slot
/// order is the tie-break order everywhere.
class AnchorBank {
 public:
  AnchorBank() = default;
  AnchorBank(std::vector<TrackletId> slots, int num_parts, int dim, double eta);

  int num_parts() const { return static_cast<int>(intra.size()); }
  int dim() const { return dim_; }
  std::size_t num_slots() const { return slots_.size(); }
  const std::vector<TrackletId>& slots() const { return slots_; }
  CameraId camera_of(std::size_t slot) const { return slots_[slot].camera; }
  const std::vector<std::size_t>& slots_in_camera(CameraId camera) const;
  std::size_t num_cameras() const;

  /// Throws UnknownTracklet.
  std::size_t slot_of(TrackletId id) const;

  /// Records the current intra anchors as the previous-iteration values read by cross updates.
  void snapshot() { intra_previous = intra; }

  double eta = 0.5;
  std::uint64_t iteration = 0;
  bool renormalize = true;
  std::vector<Matrix> intra;           // per part: slots x dim
  std::vector<Matrix> cross;           // per part: slots x dim
  std::vector<Matrix> intra_previous;  // snapshot taken before this iteration's EMA updates

 private:
  int dim_ = 0;
  std::vector<TrackletId> slots_;
  std::vector<std::vector<std::size_t>> by_camera_;
};

/// Per-frame aware features of one tracklet, one N x d matrix per part.
struct TrackletFeatures {
  TrackletId id;
  std::vector<Matrix> parts;
};

/// Intra anchor = normalized mean of the tracklet's frame features; cross anchors copy intra.
AnchorBank init_anchors(std::span<const TrackletFeatures> tracklets, double eta);

/// I <- I - eta (I - x), renormalized when bank.renormalize is set.
void ema_update(AnchorBank& bank, std::size_t slot, int part, const Vector& x);
void ema_update(AnchorBank& bank, TrackletId tracklet, int part, const Vector& x);

using SlotPair = std::pair<std::size_t, std::size_t>;

/// Mutual nearest neighbours between intra anchors of different cameras, for one part.
/// Pairs are returned as (lower slot, higher slot), sorted. Empty with fewer than two cameras.
std::vector<SlotPair> compute_crc_pairs(const AnchorBank& bank, int part);

/// Warmup: cross = intra. Otherwise a matched anchor's cross anchor is the normalized
/// average of its updated intra anchor and its partner's snapshot; unmatched copy intra.
void update_cross_anchors(AnchorBank& bank, int part, std::span<const SlotPair> pairs, bool warmup_active);

struct PartDistances {
  Vector d_min;    // per item
  Vector d_intra;  // distance to the source intra anchor
  Vector d_cross;  // distance to the source cross anchor
  Vector d_bar;    // mean d_min over batch items of the item's camera
  std::vector<std::size_t> argmin;
};

struct BatchDistances {
  std::vector<std::size_t> sources;  // slot per batch item
  std::vector<PartDistances> parts;
};

/// `features[i]` holds the B x d part-i features; `sources[b]` is the slot of item b.
BatchDistances compute_distances(std::span<const Matrix> features, std::span<const std::size_t> sources,
                                 const AnchorBank& bank);

struct LossConfig {
  double margin = 0.5;
  double lambda = 1.0;
};

struct AssociationTerms {
  bool source_is_nearest = false;
  double intra = 0.0;
  double cross = 0.0;
  double total = 0.0;  // intra + lambda * cross
};

/// Both hinges branch on whether the source anchor is the nearest (d_intra == d_min).
AssociationTerms association_terms(double d_intra, double d_cross, double d_min, double d_bar, const LossConfig& cfg);

/// Batch loss: mean over items of the part-averaged terms.
double association_loss_value(const BatchDistances& distances, const LossConfig& cfg);

struct LossResult {
  double loss = 0.0;
  std::vector<Matrix> grad;  // same shapes as the features
};

/// Loss and its gradient w.r.t. the features. Anchors, the nearest competing
/// anchor, and d_bar are constants; [.]_+ has zero slope at 0 and |x - a| has
/// zero gradient at x = a.
LossResult association_loss(std::span<const Matrix> features, const AnchorBank& bank, const BatchDistances& distances,
                            const LossConfig& cfg);

}  // namespace upmnet
