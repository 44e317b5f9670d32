#include <cmath>
#include <set>

#include "test_util.hpp"
#include "upmnet/association.hpp"
#include "upmnet/error.hpp"

namespace upmnet {
namespace {

const double kHalfSqrt2 = std::sqrt(2.0) / 2.0;

Vector random_unit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(dim);
  for (auto& x : v) x = normal(rng);
  return normalize(v);
}

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

std::vector<TrackletId> make_slots(const std::vector<int>& per_camera) {
  std::vector<TrackletId> slots;
  for (std::uint32_t cam = 0; cam < per_camera.size(); ++cam)
    for (int t = 0; t < per_camera[cam]; ++t) slots.push_back(TrackletId{static_cast<std::uint32_t>(t), CameraId{cam}});
  return slots;
}

AnchorBank random_bank(const std::vector<int>& per_camera, int parts, int dim, std::mt19937_64& rng) {
  AnchorBank bank(make_slots(per_camera), parts, dim, 0.5);
  for (int p = 0; p < parts; ++p)
    for (std::size_t s = 0; s < bank.num_slots(); ++s) bank.intra[p].row(static_cast<Eigen::Index>(s)) = random_unit(dim, rng).transpose();
  bank.cross = bank.intra;
  bank.snapshot();
  return bank;
}

// Brute-force mutual nearest neighbours across cameras.
std::set<SlotPair> oracle_pairs(const AnchorBank& bank, int part) {
  const auto n = bank.num_slots();
  auto nearest = [&](std::size_t a) {
    std::size_t best = n;
    double best_d = 1e300;
    for (std::size_t b = 0; b < n; ++b) {
      if (bank.slots()[b].camera == bank.slots()[a].camera) continue;
      const double d = (bank.intra[part].row(a) - bank.intra[part].row(b)).norm();
      if (d < best_d) {
        best_d = d;
        best = b;
      }
    }
    return best;
  };
  std::set<SlotPair> pairs;
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t b = nearest(a);
    if (b < n && nearest(b) == a) pairs.insert({std::min(a, b), std::max(a, b)});
  }
  return pairs;
}

TEST(Anchors, InitFromSingleFrameAndIdenticalFrames) {
  std::mt19937_64 rng(1);
  const Vector a = random_unit(5, rng) * 3.0;
  std::vector<TrackletFeatures> tracklets(2);
  tracklets[0].id = TrackletId{0, CameraId{0}};
  tracklets[0].parts = {Matrix(a.transpose())};
  tracklets[1].id = TrackletId{0, CameraId{1}};
  Matrix two(2, 5);
  two.row(0) = normalize(a).transpose();
  two.row(1) = normalize(a).transpose();
  tracklets[1].parts = {two};
  const AnchorBank bank = init_anchors(tracklets, 0.5);
  EXPECT_LE((bank.intra[0].row(0).transpose() - normalize(a)).norm(), 1e-15);
  EXPECT_LE((bank.intra[0].row(1).transpose() - normalize(a)).norm(), 1e-15);
  EXPECT_EQ(bank.cross[0], bank.intra[0]);
}

TEST(Anchors, InitEqualsMeanThenNormalize) {
  std::mt19937_64 rng(2);
  std::vector<TrackletFeatures> tracklets;
  for (std::uint32_t cam = 0; cam < 2; ++cam) {
    for (std::uint32_t t = 0; t < 4; ++t) {
      TrackletFeatures tf{TrackletId{3 - t, CameraId{1 - cam}}, {}};
      for (int p = 0; p < 3; ++p) {
        Matrix frames(1 + static_cast<int>(rng() % 5), 6);
        for (Eigen::Index r = 0; r < frames.rows(); ++r) frames.row(r) = random_unit(6, rng).transpose();
        tf.parts.push_back(frames);
      }
      tracklets.push_back(tf);
    }
  }
  const AnchorBank bank = init_anchors(tracklets, 0.5);
  for (const auto& tf : tracklets) {
    const std::size_t slot = bank.slot_of(tf.id);
    for (int p = 0; p < 3; ++p) {
      Vector sum = Vector::Zero(6);
      for (Eigen::Index r = 0; r < tf.parts[p].rows(); ++r) sum += tf.parts[p].row(r).transpose();
      const Vector expected = sum / sum.norm();
      EXPECT_LE((bank.intra[p].row(static_cast<Eigen::Index>(slot)).transpose() - expected).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
  EXPECT_TRUE(std::is_sorted(bank.slots().begin(), bank.slots().end()));
}

TEST(Anchors, EmptyTrackletIsRejected) {
  std::vector<TrackletFeatures> tracklets{{TrackletId{0, CameraId{0}}, {Matrix(0, 4)}}};
  try {
    init_anchors(tracklets, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTracklet);
  }
}

TEST(Ema, Examples) {
  AnchorBank bank(make_slots({1, 1}), 1, 2, 0.5);
  bank.intra[0].row(0) = vec({1, 0}).transpose();
  ema_update(bank, TrackletId{0, CameraId{0}}, 0, vec({0, 1}));
  EXPECT_NEAR(bank.intra[0](0, 0), kHalfSqrt2, 1e-15);
  EXPECT_NEAR(bank.intra[0](0, 1), kHalfSqrt2, 1e-15);

  const Vector same = bank.intra[0].row(0).transpose();
  ema_update(bank, 0, 0, same);
  EXPECT_LE((bank.intra[0].row(0).transpose() - same).norm(), 1e-15);

  bank.eta = 1.0;
  ema_update(bank, 0, 0, vec({0.6, -0.8}));
  EXPECT_NEAR(bank.intra[0](0, 0), 0.6, 1e-15);
  EXPECT_NEAR(bank.intra[0](0, 1), -0.8, 1e-15);

  try {
    ema_update(bank, TrackletId{5, CameraId{0}}, 0, same);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownTracklet);
  }
}

TEST(Ema, ContractionWithoutRenormalization) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> rate(0.05, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    AnchorBank bank(make_slots({1}), 1, 7, 0.5);
    bank.renormalize = false;
    bank.eta = rate(rng);
    const Vector i0 = random_unit(7, rng), x = random_unit(7, rng);
    bank.intra[0].row(0) = i0.transpose();
    const double d0 = (i0 - x).norm();
    for (int t = 1; t <= 10; ++t) {
      ema_update(bank, 0, 0, x);
      EXPECT_NEAR((bank.intra[0].row(0).transpose() - x).norm(), std::pow(1.0 - bank.eta, t) * d0, 1e-9);
    }
  }
}

TEST(Ema, RenormalizedAnchorsStayUnit) {
  std::mt19937_64 rng(4);
  AnchorBank bank = random_bank({3, 3}, 2, 5, rng);
  for (int step = 0; step < 200; ++step) ema_update(bank, rng() % 6, static_cast<int>(rng() % 2), random_unit(5, rng));
  for (const auto& part : bank.intra)
    for (Eigen::Index r = 0; r < part.rows(); ++r) EXPECT_NEAR(part.row(r).norm(), 1.0, 1e-6);
}

TEST(Crc, SingleCameraGivesNoPairs) {
  std::mt19937_64 rng(5);
  const AnchorBank bank = random_bank({5}, 1, 4, rng);
  EXPECT_TRUE(compute_crc_pairs(bank, 0).empty());
}

TEST(Crc, PlantedPairsAreRecovered) {
  std::mt19937_64 rng(6);
  AnchorBank bank(make_slots({6, 6}), 1, 16, 0.5);
  for (Eigen::Index t = 0; t < 6; ++t) {
    Vector base = Vector::Zero(16);
    base[t] = 1.0;
    bank.intra[0].row(t) = base.transpose();
    bank.intra[0].row(6 + t) = normalize(base + 0.05 * random_unit(16, rng)).transpose();
  }
  const auto pairs = compute_crc_pairs(bank, 0);
  ASSERT_EQ(pairs.size(), 6u);
  for (std::size_t t = 0; t < 6; ++t) EXPECT_EQ(pairs[t], (SlotPair{t, 6 + t}));
}

TEST(Crc, OneSidedNearestIsExcluded) {
  // A -> B is nearest, but B's nearest is A'.
  AnchorBank bank(make_slots({2, 1}), 1, 2, 0.5);
  const double angle_a = 0.0, angle_a2 = 1.0, angle_b = 0.8;
  bank.intra[0].row(0) = vec({std::cos(angle_a), std::sin(angle_a)}).transpose();
  bank.intra[0].row(1) = vec({std::cos(angle_a2), std::sin(angle_a2)}).transpose();
  bank.intra[0].row(2) = vec({std::cos(angle_b), std::sin(angle_b)}).transpose();
  const auto pairs = compute_crc_pairs(bank, 0);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0], (SlotPair{1, 2}));
}

TEST(Crc, MatchesBruteForceOracle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> per_camera(2 + rng() % 3);
    for (auto& n : per_camera) n = 1 + static_cast<int>(rng() % 8);
    const AnchorBank bank = random_bank(per_camera, 2, 4, rng);
    for (int p = 0; p < 2; ++p) {
      const auto pairs = compute_crc_pairs(bank, p);
      const std::set<SlotPair> got(pairs.begin(), pairs.end());
      EXPECT_EQ(got, oracle_pairs(bank, p));
      for (const auto& [a, b] : pairs) {
        EXPECT_LT(a, b);
        EXPECT_NE(bank.camera_of(a), bank.camera_of(b));
      }
    }
  }
}

TEST(Crc, TiesBreakTowardLowerSlot) {
  AnchorBank bank(make_slots({1, 2}), 1, 2, 0.5);
  bank.intra[0].row(0) = vec({1, 0}).transpose();
  bank.intra[0].row(1) = vec({0, 1}).transpose();
  bank.intra[0].row(2) = vec({0, -1}).transpose();
  const auto pairs = compute_crc_pairs(bank, 0);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0], (SlotPair{0, 1}));
}

TEST(CrossAnchors, WarmupCopiesIntra) {
  std::mt19937_64 rng(8);
  AnchorBank bank = random_bank({4, 4}, 1, 6, rng);
  for (auto row : bank.cross[0].rowwise()) row = random_unit(6, rng).transpose();
  update_cross_anchors(bank, 0, compute_crc_pairs(bank, 0), true);
  EXPECT_EQ(bank.cross[0], bank.intra[0]);
}

TEST(CrossAnchors, MatchedAnchorAveragesWithPartnerSnapshot) {
  AnchorBank bank(make_slots({1, 1}), 1, 2, 0.5);
  bank.intra[0].row(0) = vec({1, 0}).transpose();
  bank.intra[0].row(1) = vec({1, 0}).transpose();
  bank.snapshot();
  bank.intra_previous[0].row(1) = vec({0, 1}).transpose();
  const std::vector<SlotPair> pairs{{0, 1}};
  update_cross_anchors(bank, 0, pairs, false);
  EXPECT_NEAR(bank.cross[0](0, 0), kHalfSqrt2, 1e-15);
  EXPECT_NEAR(bank.cross[0](0, 1), kHalfSqrt2, 1e-15);

  // I = Ĩ = u gives u
  AnchorBank same(make_slots({1, 1}), 1, 2, 0.5);
  same.intra[0].row(0) = vec({0.6, 0.8}).transpose();
  same.intra[0].row(1) = vec({0.6, 0.8}).transpose();
  same.snapshot();
  update_cross_anchors(same, 0, pairs, false);
  EXPECT_LE((same.cross[0] - same.intra[0]).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CrossAnchors, UnmatchedCopyIntra) {
  std::mt19937_64 rng(9);
  AnchorBank bank = random_bank({3, 3}, 1, 5, rng);
  for (auto row : bank.cross[0].rowwise()) row = random_unit(5, rng).transpose();
  update_cross_anchors(bank, 0, {}, false);
  EXPECT_EQ(bank.cross[0], bank.intra[0]);
}

TEST(Distances, ItemOnItsAnchor) {
  AnchorBank bank(make_slots({3, 1}), 1, 2, 0.5);
  bank.intra[0].row(0) = vec({1, 0}).transpose();
  bank.intra[0].row(1) = vec({-1, 0}).transpose();
  bank.intra[0].row(2) = vec({0, -1}).transpose();
  bank.intra[0].row(3) = vec({0, 1}).transpose();
  bank.cross = bank.intra;
  const std::vector<Matrix> features{Matrix(vec({1, 0}).transpose())};
  const std::vector<std::size_t> sources{0};
  const BatchDistances d = compute_distances(features, sources, bank);
  EXPECT_EQ(d.parts[0].d_intra[0], 0.0);
  EXPECT_EQ(d.parts[0].d_min[0], 0.0);
  EXPECT_EQ(d.parts[0].d_bar[0], 0.0);
  EXPECT_EQ(d.parts[0].argmin[0], 0u);
}

TEST(Distances, MatchesExhaustiveComputation) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> per_camera{1 + static_cast<int>(rng() % 4), 1 + static_cast<int>(rng() % 4), 1 + static_cast<int>(rng() % 4)};
    AnchorBank bank = random_bank(per_camera, 2, 3, rng);
    for (auto& part : bank.cross)
      for (auto row : part.rowwise()) row = random_unit(3, rng).transpose();
    const int batch = 1 + static_cast<int>(rng() % 6);
    std::vector<std::size_t> sources;
    std::vector<Matrix> features(2, Matrix(batch, 3));
    for (int b = 0; b < batch; ++b) {
      sources.push_back(rng() % bank.num_slots());
      for (auto& f : features) f.row(b) = random_unit(3, rng).transpose();
    }
    const BatchDistances d = compute_distances(features, sources, bank);
    for (int p = 0; p < 2; ++p) {
      std::vector<double> d_min(batch);
      for (int b = 0; b < batch; ++b) {
        const auto cam = bank.camera_of(sources[b]);
        double best = 1e300;
        for (std::size_t s = 0; s < bank.num_slots(); ++s)
          if (bank.camera_of(s) == cam) best = std::min(best, (features[p].row(b) - bank.intra[p].row(s)).norm());
        d_min[b] = best;
        EXPECT_NEAR(d.parts[p].d_min[b], best, 1e-7);
        EXPECT_NEAR(d.parts[p].d_intra[b], (features[p].row(b) - bank.intra[p].row(sources[b])).norm(), 1e-7);
        EXPECT_NEAR(d.parts[p].d_cross[b], (features[p].row(b) - bank.cross[p].row(sources[b])).norm(), 1e-7);
        EXPECT_LE(d.parts[p].d_min[b], d.parts[p].d_intra[b]);
        EXPECT_EQ(bank.camera_of(d.parts[p].argmin[b]), cam);
      }
      for (int b = 0; b < batch; ++b) {
        double sum = 0.0;
        int count = 0;
        for (int o = 0; o < batch; ++o)
          if (bank.camera_of(sources[o]) == bank.camera_of(sources[b])) {
            sum += d_min[o];
            ++count;
          }
        EXPECT_NEAR(d.parts[p].d_bar[b], sum / count, 1e-7);
      }
    }
  }
}

TEST(Distances, MinimumNeverExceedsSourceDistance) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const AnchorBank bank = random_bank({4, 3}, 1, 4, rng);
    const std::vector<Matrix> features{Matrix(random_unit(4, rng).transpose())};
    const std::vector<std::size_t> sources{rng() % bank.num_slots()};
    const BatchDistances d = compute_distances(features, sources, bank);
    EXPECT_LE(d.parts[0].d_min[0], d.parts[0].d_intra[0]);
    EXPECT_GE(d.parts[0].d_min[0], 0.0);
  }
}

TEST(Distances, UnknownSource) {
  std::mt19937_64 rng(12);
  const AnchorBank bank = random_bank({2, 2}, 1, 3, rng);
  const std::vector<Matrix> features{Matrix(random_unit(3, rng).transpose())};
  const std::vector<std::size_t> sources{9};
  try {
    compute_distances(features, sources, bank);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownSource);
  }
}

TEST(Loss, TableExamples) {
  const LossConfig cfg{0.5, 1.0};
  // source not nearest: threshold is D_min
  const auto a = association_terms(0.8, 0.0, 0.2, 0.3, cfg);
  EXPECT_FALSE(a.source_is_nearest);
  EXPECT_NEAR(a.intra, 1.1, 1e-12);
  // source nearest, D_I = D_min = D_bar
  const auto b = association_terms(0.4, 0.0, 0.4, 0.4, cfg);
  EXPECT_TRUE(b.source_is_nearest);
  EXPECT_EQ(b.intra, 0.5);
  // both hinges inactive
  const auto c = association_terms(0.3, 0.5, 0.3, 1.0, cfg);
  EXPECT_EQ(c.intra, 0.0);
  EXPECT_EQ(c.cross, 0.0);
  EXPECT_EQ(c.total, 0.0);
  // lambda = 1 doubles the symmetric case
  const auto d = association_terms(0.7, 0.7, 0.7, 0.9, cfg);
  EXPECT_EQ(d.intra, d.cross);
  EXPECT_EQ(d.total, 2.0 * d.intra);
  const auto e = association_terms(0.7, 0.7, 0.7, 0.9, LossConfig{0.5, 0.0});
  EXPECT_EQ(e.total, e.intra);
}

TEST(Loss, NonNegativeAndZeroOnlyWithInactiveHinges) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const double d_min = u(rng), d_intra = trial % 2 ? d_min : d_min + u(rng), d_cross = u(rng), d_bar = u(rng);
    const LossConfig cfg{u(rng) / 2.0, u(rng)};
    const auto t = association_terms(d_intra, d_cross, d_min, d_bar, cfg);
    EXPECT_GE(t.intra, 0.0);
    EXPECT_GE(t.cross, 0.0);
    EXPECT_NEAR(t.total, t.intra + cfg.lambda * t.cross, 1e-15);
    const double threshold = d_intra == d_min ? d_bar : d_min;
    if (t.total == 0.0) {
      EXPECT_LE(d_intra - threshold + cfg.margin, 0.0);
      if (cfg.lambda > 0.0) {
        EXPECT_LE(d_cross - threshold + cfg.margin, 0.0);
      }
    }
  }
}

TEST(Loss, IdenticalPartLossesAverageToTheSameValue) {
  BatchDistances d;
  d.sources = {0, 1};
  for (int p = 0; p < 4; ++p) {
    PartDistances pd;
    pd.d_min = vec({0.2, 0.2});
    pd.d_intra = vec({0.8, 0.8});
    pd.d_cross = vec({0.9, 0.9});
    pd.d_bar = vec({0.2, 0.2});
    pd.argmin = {0, 1};
    d.parts.push_back(pd);
  }
  const LossConfig cfg;
  const double per_item = association_terms(0.8, 0.9, 0.2, 0.2, cfg).total;
  EXPECT_NEAR(association_loss_value(d, cfg), per_item, 1e-15);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const AnchorBank bank = random_bank({3, 3}, 2, 4, rng);
    const int batch = 5;
    std::vector<std::size_t> sources;
    std::vector<Matrix> features(2, Matrix(batch, 4));
    for (int b = 0; b < batch; ++b) {
      sources.push_back(rng() % bank.num_slots());
      for (auto& f : features) f.row(b) = random_unit(4, rng).transpose();
    }
    const LossConfig cfg;
    const BatchDistances base = compute_distances(features, sources, bank);
    const LossResult result = association_loss(features, bank, base, cfg);
    EXPECT_NEAR(result.loss, association_loss_value(base, cfg), 1e-12);

    // thresholds and branches frozen at the base point
    auto frozen = [&](const std::vector<Matrix>& x) {
      double total = 0.0;
      for (int p = 0; p < 2; ++p)
        for (int b = 0; b < batch; ++b) {
          const double di = (x[p].row(b) - bank.intra[p].row(sources[b])).norm();
          const double dc = (x[p].row(b) - bank.cross[p].row(sources[b])).norm();
          const auto& pd = base.parts[p];
          const double thr = pd.d_intra[b] == pd.d_min[b] ? pd.d_bar[b] : pd.d_min[b];
          total += std::max(0.0, di - thr + cfg.margin) + cfg.lambda * std::max(0.0, dc - thr + cfg.margin);
        }
      return total / (2.0 * batch);
    };
    bool near_kink = false;
    for (int p = 0; p < 2; ++p)
      for (int b = 0; b < batch; ++b) {
        const auto& pd = base.parts[p];
        const double thr = pd.d_intra[b] == pd.d_min[b] ? pd.d_bar[b] : pd.d_min[b];
        near_kink |= std::abs(pd.d_intra[b] - thr + cfg.margin) < 1e-3 || std::abs(pd.d_cross[b] - thr + cfg.margin) < 1e-3;
      }
    if (near_kink) continue;
    const double h = 1e-6;
    for (int p = 0; p < 2; ++p)
      for (Eigen::Index j = 0; j < features[p].size(); ++j) {
        auto plus = features, minus = features;
        plus[p].reshaped()(j) += h;
        minus[p].reshaped()(j) -= h;
        const double numeric = (frozen(plus) - frozen(minus)) / (2 * h);
        const double analytic = result.grad[p].reshaped()(j);
        EXPECT_LE(std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6}), 1e-4);
        ++checked;
      }
  }
  EXPECT_GT(checked, 500);
}

}  // namespace
}  // namespace upmnet
