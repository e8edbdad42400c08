#include "gatevio/error.hpp"
#include "gatevio/metrics.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace gatevio;
using namespace gatevio::test;

namespace {

std::vector<NominalState> random_walk(std::uint64_t seed, std::size_t n, double dt = 0.01) {
  std::mt19937_64 rng(seed);
  std::vector<NominalState> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k].t = static_cast<double>(k) * dt;
    if (k == 0) {
      out[k].q = random_rotation(rng);
      continue;
    }
    out[k].p = out[k - 1].p + uniform_vec(rng, -0.05, 0.05);
    out[k].v = uniform_vec(rng, -2.0, 2.0);
    out[k].q = out[k - 1].q * so3_exp(uniform_vec(rng, -0.02, 0.02));
  }
  return out;
}

Scenario short_scenario(const std::string& file, double duration, std::uint64_t seed) {
  ScenarioSpec spec = load_scenario(file).scenario;
  spec.trajectory.duration = duration;
  spec.seed = seed;
  return make_scenario(spec);
}

/// Detections with the true gate ids attached.
std::vector<GateDetection> labeled(const Scenario& sc) {
  std::vector<GateDetection> out = sc.detections;
  for (std::size_t j = 0; j < out.size(); ++j) out[j].gate_id = sc.detection_gate_ids[j];
  return out;
}

}  // namespace

TEST(TrajectoryError, IdentityIsZero) {
  const auto a = random_walk(1, 300);
  const auto e = trajectory_error(a, a);
  EXPECT_EQ(e.e_t, 0.0);
  EXPECT_LT(e.e_r, 1e-6);
  EXPECT_EQ(e.e_v, 0.0);
  EXPECT_EQ(e.count(), a.size());
}

TEST(TrajectoryError, ConstantOffset) {
  const auto ref = random_walk(2, 300);
  auto est = ref;
  for (auto& x : est) x.p += Vec3(0.1, 0.0, 0.0);
  EXPECT_NEAR(trajectory_error(est, ref).e_t, 0.1, 1e-12);
  for (auto& x : est) x.q = x.q * so3_exp(Vec3(0.0, 0.0, 2.0 * kDeg));
  EXPECT_NEAR(trajectory_error(est, ref).e_r, 2.0, 1e-6);
}

TEST(TrajectoryError, MatchesBruteForceOnSharedTimestamps) {
  const auto ref = random_walk(3, 100);
  const auto est = random_walk(4, 100);
  const auto e = trajectory_error(est, ref, 0.05, 0.5);
  double st = 0.0, sr = 0.0, sv = 0.0;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    st += (est[k].p - ref[k].p).squaredNorm();
    const double ang = Eigen::AngleAxisd(ref[k].q.eigen().conjugate() * est[k].q.eigen()).angle();
    sr += std::pow(ang * 180.0 / std::numbers::pi, 2);
    sv += (est[k].v - ref[k].v).squaredNorm();
  }
  EXPECT_NEAR(e.e_t, std::sqrt(st / 100.0), 1e-12);
  EXPECT_NEAR(e.e_r, std::sqrt(sr / 100.0), 1e-6);
  EXPECT_NEAR(e.e_v, std::sqrt(sv / 100.0), 1e-12);
}

TEST(TrajectoryError, SymmetricOnSharedTimestamps) {
  const auto a = random_walk(5, 200);
  const auto b = random_walk(6, 200);
  const auto ab = trajectory_error(a, b);
  const auto ba = trajectory_error(b, a);
  EXPECT_NEAR(ab.e_t, ba.e_t, 1e-12);
  EXPECT_NEAR(ab.e_r, ba.e_r, 1e-9);
  EXPECT_NEAR(ab.e_v, ba.e_v, 1e-12);
}

TEST(TrajectoryError, RmsOfSeries) {
  const auto a = random_walk(7, 200);
  const auto b = random_walk(8, 200);
  const auto e = trajectory_error(a, b);
  double s = 0.0;
  for (double x : e.err_t) s += x * x;
  EXPECT_NEAR(e.e_t, std::sqrt(s / static_cast<double>(e.err_t.size())), 1e-12);
  double m = 0.0;
  for (double x : e.err_t) m += x;
  EXPECT_GE(e.e_t, m / static_cast<double>(e.err_t.size()) - 1e-12);  // RMS >= mean
}

TEST(TrajectoryError, InterpolatesReference) {
  // Reference at 100 Hz on a straight line; estimate on the midpoints.
  std::vector<NominalState> ref(201), est;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    ref[k].t = 0.01 * static_cast<double>(k);
    ref[k].p = Vec3(ref[k].t, 0.0, 0.0);
  }
  for (std::size_t k = 0; k + 1 < ref.size(); ++k) {
    NominalState x;
    x.t = ref[k].t + 0.005;
    x.p = Vec3(x.t, 0.0, 0.0);
    est.push_back(x);
  }
  EXPECT_LT(trajectory_error(est, ref).e_t, 1e-12);
}

TEST(TrajectoryError, SkipsReferenceGaps) {
  auto ref = random_walk(9, 300);
  ref.erase(ref.begin() + 100, ref.begin() + 120);  // 0.21 s hole
  const auto est = random_walk(10, 300);
  const auto e = trajectory_error(est, ref);
  EXPECT_EQ(e.count(), 300u - 20u);
}

TEST(TrajectoryError, NoOverlap) {
  const auto a = random_walk(11, 100);
  auto b = a;
  for (auto& x : b) x.t += 5.0;
  EXPECT_THROW(trajectory_error(a, b), Error);
  try {
    trajectory_error(a, b);
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::NoOverlap);
  }
  EXPECT_THROW(trajectory_error({}, a), Error);
}

TEST(TrajectoryError, SeriesCsv) {
  const auto a = random_walk(12, 150);
  const auto b = random_walk(13, 150);
  const auto e = trajectory_error(a, b);
  std::istringstream in(error_series_csv(e));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,err_t,err_r_deg,err_v");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double t, et, er, ev;
    char c1, c2, c3;
    std::istringstream row(line);
    row >> t >> c1 >> et >> c2 >> er >> c3 >> ev;
    ASSERT_FALSE(row.fail()) << line;
    EXPECT_NEAR(t, e.t[rows], 1e-12);
    EXPECT_NEAR(et, e.err_t[rows], 1e-12);
    ++rows;
  }
  EXPECT_EQ(rows, e.count());
}

TEST(Reprojection, ZeroOnNoiselessTruth) {
  ScenarioSpec spec = load_scenario("noiseless.json").scenario;
  spec.trajectory.duration = 4.0;
  spec.seed = 1;
  const Scenario sc = make_scenario(spec);
  const auto dets = labeled(sc);
  const auto stats = reprojection_error(sc.truth_states(), dets, sc.map, spec.camera, spec.ext_true);
  ASSERT_GT(stats.count, 100u);
  EXPECT_LT(stats.mean_px, 1e-6);
  EXPECT_LT(stats.p95_px, 1e-6);
}

TEST(Reprojection, RayleighMeanUnderUnitNoise) {
  ScenarioSpec spec = load_scenario("noiseless.json").scenario;
  spec.trajectory.duration = 8.0;
  spec.seed = 2;
  spec.corruption.pixel_noise_sigma = 1.0;
  const Scenario sc = make_scenario(spec);
  const auto stats = reprojection_error(sc.truth_states(), labeled(sc), sc.map, spec.camera, spec.ext_true);
  ASSERT_GT(stats.count, 500u);
  // |n| for n ~ N(0, I_2) has mean sqrt(pi / 2) and median sqrt(2 ln 2).
  EXPECT_NEAR(stats.mean_px, std::sqrt(std::numbers::pi / 2.0), 0.1 * 1.2533);
  EXPECT_NEAR(stats.median_px, std::sqrt(2.0 * std::log(2.0)), 0.1 * 1.1774);
}

TEST(Reprojection, UnlabeledDetectionsAreSkipped) {
  ScenarioSpec spec = load_scenario("noiseless.json").scenario;
  spec.trajectory.duration = 2.0;
  const Scenario sc = make_scenario(spec);
  const auto stats = reprojection_error(sc.truth_states(), sc.detections, sc.map, spec.camera, spec.ext_true);
  EXPECT_EQ(stats.count, 0u);
}

TEST(Reprojection, Summary) {
  const auto s = summarize_reprojection({4.0, 1.0, 3.0, 2.0, 5.0});
  EXPECT_DOUBLE_EQ(s.mean_px, 3.0);
  EXPECT_DOUBLE_EQ(s.median_px, 3.0);
  EXPECT_DOUBLE_EQ(s.p95_px, 4.8);
  EXPECT_EQ(s.count, 5u);
  EXPECT_EQ(summarize_reprojection({}).count, 0u);
}

TEST(Ablation, VariantsAgreeWithoutOutliers) {
  const auto rc = load_scenario("ellipse.json");
  const Scenario sc = short_scenario("ellipse.json", 8.0, 3);
  const std::array<AblationVariant, 3> variants{AblationVariant::Huber, AblationVariant::Chi2,
                                                AblationVariant::Naive};
  const auto rows = robustness_ablation(sc, rc.pipeline, variants);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.diverged) << to_string(r.variant);
    EXPECT_NEAR(r.e_t, rows[2].e_t, 0.05 * rows[2].e_t) << to_string(r.variant);
  }
}

TEST(Sweep, FullVisibilityMakesTwoAndFourEqual) {
  // Every detection carries all four corners, so the per-gate minimum never binds.
  const auto rc = load_scenario("noiseless.json");
  ScenarioSpec spec = rc.scenario;
  spec.trajectory.duration = 6.0;
  spec.corruption.pixel_noise_sigma = 1.0;
  spec.seed = 4;
  Scenario sc = make_scenario(spec);
  std::vector<GateDetection> full;
  std::vector<int> ids;
  for (std::size_t j = 0; j < sc.detections.size(); ++j) {
    if (sc.detections[j].num_present() == 4) {
      full.push_back(sc.detections[j]);
      ids.push_back(sc.detection_gate_ids[j]);
    }
  }
  sc.detections = full;
  sc.detection_gate_ids = ids;
  const std::array<int, 2> values{2, 4};
  const auto rows = min_corner_sweep(sc, rc.pipeline, values);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].updates, rows[1].updates);
  EXPECT_EQ(rows[0].e_t, rows[1].e_t);
  EXPECT_GT(rows[0].updates, 0u);
}

TEST(Sweep, HigherMinimumNeverAddsUpdates) {
  const auto rc = load_scenario("partial_visibility.json");
  const Scenario sc = short_scenario("partial_visibility.json", 6.0, 5);
  const std::array<int, 5> values{2, 3, 4, 6, 8};
  const auto rows = min_corner_sweep(sc, rc.pipeline, values);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(rows[i].updates, rows[i - 1].updates);
}
