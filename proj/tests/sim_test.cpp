#include "gatevio/eskf.hpp"
#include "gatevio/error.hpp"
#include "gatevio/sim.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace gatevio;
using namespace gatevio::test;

namespace {

TrajectorySpec ellipse(double duration = 8.0) {
  TrajectorySpec s;
  s.kind = TrajectoryKind::Ellipse;
  s.semi_major = 5.0;
  s.semi_minor = 3.0;
  s.period = 4.0;
  s.duration = duration;
  return s;
}

CorruptionSpec clean() {
  CorruptionSpec c;
  c.pixel_noise_sigma = 0.0;
  c.imu_noise = false;
  c.bias_walk = false;
  return c;
}

/// Body hovering at (-d, 0, 2) facing +x, looking at a gate at the origin
/// height 2 whose pass-through direction is +x (or -x when flipped).
std::vector<GroundTruthSample> hover_at(const Vec3& p, double yaw, double duration = 0.1) {
  TrajectorySpec s;
  s.kind = TrajectoryKind::Static;
  s.duration = duration;
  auto truth = generate_trajectory(s);
  for (auto& x : truth) {
    x.p = p;
    x.q = UnitQuaternion::from_ypr(yaw, 0.0, 0.0);
  }
  return truth;
}

GateMap one_gate(double yaw) {
  GateMap m;
  m.gates.push_back(Gate::from_pose(7, Vec3(0.0, 0.0, 2.0), yaw, 0.0, 0.0, 1.5, 1.5));
  return m;
}

}  // namespace

TEST(Trajectory, Deterministic) {
  TrajectorySpec s = ellipse();
  s.kind = TrajectoryKind::Racetrack3d;
  s.height_amplitude = 0.5;
  const auto a = generate_trajectory(s);
  const auto b = generate_trajectory(s);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].p, b[k].p);
    EXPECT_EQ(a[k].q.eigen().coeffs(), b[k].q.eigen().coeffs());
  }
}

TEST(Trajectory, StaticIsAtRest) {
  TrajectorySpec s;
  s.kind = TrajectoryKind::Static;
  s.duration = 2.0;
  for (const auto& x : generate_trajectory(s)) {
    EXPECT_EQ(x.v.norm(), 0.0);
    EXPECT_EQ(x.a.norm(), 0.0);
    EXPECT_EQ(x.w.norm(), 0.0);
    EXPECT_DOUBLE_EQ(x.p.z(), s.height);
  }
}

TEST(Trajectory, EllipsePeakSpeed) {
  TrajectorySpec s = ellipse();
  s.discrete_consistent = false;
  double vmax = 0.0;
  for (const auto& x : generate_trajectory(s)) vmax = std::max(vmax, x.v.norm());
  // a * 2 pi / T on the semi-minor crossings.
  EXPECT_NEAR(vmax, 5.0 * 2.0 * std::numbers::pi / 4.0, 1e-3);
}

TEST(Trajectory, SampleCountAndSpacing) {
  const auto truth = generate_trajectory(ellipse(2.0));
  ASSERT_EQ(truth.size(), 1001u);
  EXPECT_DOUBLE_EQ(truth[1].t - truth[0].t, 0.002);
  EXPECT_DOUBLE_EQ(truth.back().t, 2.0);
}

TEST(Trajectory, VelocityMatchesPositionDifferences) {
  for (auto kind : {TrajectoryKind::Ellipse, TrajectoryKind::Lemniscate, TrajectoryKind::Racetrack3d}) {
    TrajectorySpec s = ellipse(4.0);
    s.kind = kind;
    s.height_amplitude = 0.5;
    s.ramp_time = 1.0;
    s.discrete_consistent = false;
    const auto truth = generate_trajectory(s);
    const double dt = truth[1].t - truth[0].t;
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < truth.size(); ++k) {
      const Vec3 fd = (truth[k + 1].p - truth[k - 1].p) / (2.0 * dt);
      worst = std::max(worst, (fd - truth[k].v).norm());
    }
    // Central difference truncation: |p'''| dt^2 / 6 with |p'''| < 20 m/s^3.
    EXPECT_LT(worst, 1e-4) << to_string(kind);
  }
}

TEST(Trajectory, StandingStartBeginsAtRest) {
  TrajectorySpec s = ellipse(3.0);
  s.ramp_time = 2.0;
  const auto truth = generate_trajectory(s);
  EXPECT_LT(truth.front().v.norm(), 1e-12);
  // Full lap rate after the ramp: speed between b and a times 2 pi / T.
  EXPECT_GE(truth.back().v.norm(), 3.0 * 2.0 * std::numbers::pi / 4.0 - 1e-6);
}

TEST(Trajectory, RollIsBounded) {
  TrajectorySpec s = ellipse();
  s.period = 2.0;  // about 5 g lateral
  s.max_roll_deg = 45.0;
  for (const auto& x : generate_trajectory(s)) {
    const Vec3 up = x.q.rotate(Vec3::UnitZ());
    EXPECT_GE(up.z(), std::cos(45.0 * kDeg) - 1e-9);
  }
}

TEST(Trajectory, Validation) {
  TrajectorySpec s = ellipse();
  s.period = 0.0;
  EXPECT_THROW(s.validate(), Error);
  s = ellipse();
  s.duration = -1.0;
  EXPECT_THROW(s.validate(), Error);
  s = ellipse();
  s.imu_rate_hz = 0.0;
  EXPECT_THROW(s.validate(), Error);
  EXPECT_EQ(trajectory_kind_from_string("lemniscate"), TrajectoryKind::Lemniscate);
  EXPECT_FALSE(trajectory_kind_from_string("circle").has_value());
}

TEST(ImuSynthesis, HoverReadsGravity) {
  TrajectorySpec s;
  s.kind = TrajectoryKind::Static;
  s.duration = 1.0;
  const auto syn = synthesize_imu(generate_trajectory(s), clean(), NoiseParams{}, 1);
  for (const auto& m : syn.imu) {
    EXPECT_LT((m.a_m - Vec3(0.0, 0.0, 9.81)).norm(), 1e-12);
    EXPECT_EQ(m.w_m.norm(), 0.0);
  }
}

TEST(ImuSynthesis, ConstantBiasesAreAdded) {
  TrajectorySpec s;
  s.kind = TrajectoryKind::Static;
  s.duration = 0.5;
  CorruptionSpec c = clean();
  c.bias_a_true = Vec3(0.1, -0.2, 0.3);
  c.bias_w_true = Vec3(0.01, 0.0, -0.01);
  const auto syn = synthesize_imu(generate_trajectory(s), c, NoiseParams{}, 1);
  for (std::size_t k = 0; k < syn.imu.size(); ++k) {
    EXPECT_LT((syn.imu[k].a_m - Vec3(0.1, -0.2, 10.11)).norm(), 1e-12);
    EXPECT_LT((syn.imu[k].w_m - c.bias_w_true).norm(), 1e-15);
    EXPECT_EQ(syn.bias_a[k], c.bias_a_true);
  }
}

TEST(ImuSynthesis, WhiteNoiseVariance) {
  TrajectorySpec s;
  s.kind = TrajectoryKind::Static;
  s.duration = 200.0;  // 1e5 samples
  CorruptionSpec c = clean();
  c.imu_noise = true;
  NoiseParams noise;
  const auto syn = synthesize_imu(generate_trajectory(s), c, noise, 42);
  const double dt = 1.0 / s.imu_rate_hz;
  Eigen::Vector3d sa = Vec3::Zero(), sw = Vec3::Zero(), ma = Vec3::Zero();
  for (const auto& m : syn.imu) ma += m.a_m;
  ma /= static_cast<double>(syn.imu.size());
  for (const auto& m : syn.imu) {
    sa += (m.a_m - ma).cwiseAbs2();
    sw += m.w_m.cwiseAbs2();
  }
  const double n = static_cast<double>(syn.imu.size());
  ASSERT_GE(n, 1e5);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(sa(i) / n, noise.sigma_a * noise.sigma_a / dt, 0.05 * noise.sigma_a * noise.sigma_a / dt);
    EXPECT_NEAR(sw(i) / n, noise.sigma_w * noise.sigma_w / dt, 0.05 * noise.sigma_w * noise.sigma_w / dt);
  }
}

TEST(ImuSynthesis, BiasWalkSpread) {
  // After T seconds each bias axis has std sigma_b sqrt(T); check across seeds.
  TrajectorySpec s;
  s.kind = TrajectoryKind::Static;
  s.duration = 4.0;
  CorruptionSpec c = clean();
  c.bias_walk = true;
  NoiseParams noise;
  noise.sigma_ba = 0.01;
  const auto truth = generate_trajectory(s);
  double acc = 0.0;
  const int runs = 400;
  for (int seed = 0; seed < runs; ++seed) {
    const auto syn = synthesize_imu(truth, c, noise, static_cast<std::uint64_t>(seed));
    acc += syn.bias_a.back().squaredNorm() / 3.0;
  }
  const double expected = noise.sigma_ba * noise.sigma_ba * s.duration;
  EXPECT_NEAR(acc / runs, expected, 0.15 * expected);
}

TEST(ImuSynthesis, SeedDeterminism) {
  const auto truth = generate_trajectory(ellipse(1.0));
  CorruptionSpec c;
  const auto a = synthesize_imu(truth, c, NoiseParams{}, 5);
  const auto b = synthesize_imu(truth, c, NoiseParams{}, 5);
  const auto d = synthesize_imu(truth, c, NoiseParams{}, 6);
  for (std::size_t k = 0; k < a.imu.size(); ++k) {
    EXPECT_EQ(a.imu[k].a_m, b.imu[k].a_m);
    EXPECT_EQ(a.imu[k].w_m, b.imu[k].w_m);
  }
  EXPECT_NE(a.imu[10].a_m, d.imu[10].a_m);
}

TEST(ImuSynthesis, ZeroNoiseIntegrationTracksTruth) {
  for (auto kind : {TrajectoryKind::Ellipse, TrajectoryKind::Lemniscate, TrajectoryKind::Racetrack3d}) {
    TrajectorySpec s = ellipse(5.0);
    s.kind = kind;
    s.height_amplitude = 0.5;
    const auto truth = generate_trajectory(s);
    const auto syn = synthesize_imu(truth, clean(), NoiseParams{}, 1);
    NominalState x = to_states(truth).front();
    for (std::size_t k = 0; k + 1 < truth.size(); ++k) {
      x = propagate_nominal(x, syn.imu[k].a_m, syn.imu[k].w_m, truth[k + 1].t - truth[k].t, kGravity);
    }
    EXPECT_LT((x.p - truth.back().p).norm(), 0.01) << to_string(kind);
    EXPECT_LT(so3_log(truth.back().q.inverse() * x.q).norm(), 1e-6) << to_string(kind);
  }
}

TEST(Detections, FrontViewIsExactAndLabeled) {
  const CameraModel cam = default_sim_camera();
  const Extrinsics ext = forward_camera();
  const GateMap map = one_gate(0.0);
  std::vector<int> ids;
  const auto dets = synthesize_detections(hover_at(Vec3(-4.0, 0.0, 2.0), 0.0), map, cam, ext, clean(), 1, &ids);
  ASSERT_FALSE(dets.empty());
  ASSERT_EQ(ids.size(), dets.size());
  for (std::size_t j = 0; j < dets.size(); ++j) {
    const auto& d = dets[j];
    EXPECT_EQ(ids[j], 7);
    EXPECT_FALSE(d.gate_id.has_value());
    ASSERT_EQ(d.num_present(), 4);
    for (int i = 0; i < 4; ++i) {
      EXPECT_EQ(d.scores[i], 1.0);
      const Vec3 pc = world_to_camera(map.gates[0].corners_w[i], Vec3(-4.0, 0.0, 2.0), UnitQuaternion(), ext);
      EXPECT_LT((*d.corners_px[i] - *cam.project_to_pixel(pc)).norm(), 1e-9);
    }
    // TL is up-left in the image.
    EXPECT_LT(d.corners_px[0]->x(), d.corners_px[1]->x());
    EXPECT_LT(d.corners_px[0]->y(), d.corners_px[3]->y());
  }
}

TEST(Detections, RearViewIsMirrored) {
  // Gate faces -x, so the camera at -4 m looks at its back side.
  const CameraModel cam = default_sim_camera();
  const GateMap map = one_gate(std::numbers::pi);
  const auto dets = synthesize_detections(hover_at(Vec3(-4.0, 0.0, 2.0), 0.0), map, cam, forward_camera(),
                                          clean(), 1);
  ASSERT_FALSE(dets.empty());
  const auto& d = dets.front();
  ASSERT_EQ(d.num_present(), 4);
  // Slot TL holds the true TR corner, which still appears up-left.
  const Vec3 pc = world_to_camera(map.gates[0].corners_w[1], Vec3(-4.0, 0.0, 2.0), UnitQuaternion(),
                                  forward_camera());
  EXPECT_LT((*d.corners_px[0] - *cam.project_to_pixel(pc)).norm(), 1e-9);
  EXPECT_LT(d.corners_px[0]->x(), d.corners_px[1]->x());
}

TEST(Detections, OutOfRangeAndBehindAreNotDetected) {
  const CameraModel cam = default_sim_camera();
  const GateMap map = one_gate(0.0);
  EXPECT_TRUE(synthesize_detections(hover_at(Vec3(-20.0, 0.0, 2.0), 0.0), map, cam, forward_camera(), clean(), 1)
                  .empty());
  EXPECT_TRUE(synthesize_detections(hover_at(Vec3(4.0, 0.0, 2.0), 0.0), map, cam, forward_camera(), clean(), 1)
                  .empty());
}

TEST(Detections, LabelDropoutRemovesThatLabel) {
  CorruptionSpec c = clean();
  c.label_dropout_prob = {1.0, 0.0, 1.0, 0.0};
  const auto dets = synthesize_detections(hover_at(Vec3(-4.0, 0.0, 2.0), 0.0), one_gate(0.0),
                                          default_sim_camera(), forward_camera(), c, 1);
  ASSERT_FALSE(dets.empty());
  for (const auto& d : dets) {
    EXPECT_EQ(d.num_present(), 2);
    EXPECT_FALSE(d.present(0));
    EXPECT_TRUE(d.present(1));
    EXPECT_FALSE(d.present(2));
    EXPECT_FALSE(d.corners_px[0].has_value());
  }
}

TEST(Detections, PartialKeepsTwoOrThree) {
  CorruptionSpec c = clean();
  c.partial_prob = 1.0;
  const auto dets = synthesize_detections(hover_at(Vec3(-4.0, 0.0, 2.0), 0.0, 2.0), one_gate(0.0),
                                          default_sim_camera(), forward_camera(), c, 3);
  ASSERT_GT(dets.size(), 50u);
  int twos = 0;
  for (const auto& d : dets) {
    EXPECT_TRUE(d.num_present() == 2 || d.num_present() == 3);
    twos += d.num_present() == 2;
  }
  EXPECT_GT(twos, 0);
  EXPECT_LT(twos, static_cast<int>(dets.size()));
}

TEST(Detections, PixelNoiseDistribution) {
  CorruptionSpec c = clean();
  c.pixel_noise_sigma = 2.0;
  const auto truth = hover_at(Vec3(-4.0, 0.0, 2.0), 0.0, 20.0);
  const CameraModel cam = default_sim_camera();
  const GateMap map = one_gate(0.0);
  const auto exact = synthesize_detections(truth, map, cam, forward_camera(), clean(), 9);
  const auto noisy = synthesize_detections(truth, map, cam, forward_camera(), c, 9);
  ASSERT_EQ(exact.size(), noisy.size());
  double sum = 0.0, sq = 0.0;
  int n = 0;
  for (std::size_t j = 0; j < exact.size(); ++j) {
    for (int i = 0; i < 4; ++i) {
      const Vec2 e = *noisy[j].corners_px[i] - *exact[j].corners_px[i];
      sum += e.x() + e.y();
      sq += e.squaredNorm();
      n += 2;
    }
  }
  ASSERT_GT(n, 10000);
  EXPECT_NEAR(sum / n, 0.0, 0.1);
  EXPECT_NEAR(std::sqrt(sq / n), 2.0, 0.1);
}

TEST(Detections, RateAndTimestamps) {
  const auto truth = hover_at(Vec3(-4.0, 0.0, 2.0), 0.0, 2.0);
  const auto dets = synthesize_detections(truth, one_gate(0.0), default_sim_camera(), forward_camera(),
                                          clean(), 1);
  EXPECT_NEAR(static_cast<double>(dets.size()), 2.0 * 85.0, 2.0);
  for (std::size_t j = 1; j < dets.size(); ++j) {
    EXPECT_GT(dets[j].t, dets[j - 1].t);
    const double k = dets[j].t / 0.002;
    EXPECT_NEAR(k, std::round(k), 1e-6);
  }
}

TEST(Scenario, DeterministicPerSeed) {
  const auto rc = load_scenario("ellipse.json");
  ScenarioSpec spec = rc.scenario;
  spec.trajectory.duration = 3.0;
  spec.seed = 11;
  const Scenario a = make_scenario(spec);
  const Scenario b = make_scenario(spec);
  ASSERT_EQ(a.detections.size(), b.detections.size());
  for (std::size_t j = 0; j < a.detections.size(); ++j) {
    EXPECT_EQ(a.detections[j].t, b.detections[j].t);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(a.detections[j].corners_px[i], b.detections[j].corners_px[i]);
  }
  EXPECT_EQ(a.imu.imu.back().a_m, b.imu.imu.back().a_m);
  EXPECT_EQ(static_cast<int>(a.map.gates.size()), spec.num_gates);
  EXPECT_EQ(a.detection_gate_ids.size(), a.detections.size());
}

TEST(Scenario, GatesSitOnTheTrajectory) {
  TrajectorySpec t = ellipse(4.0);
  const auto truth = generate_trajectory(t);
  const GateMap map = place_gates(truth, 4, 1.5, 1.5, t.period);
  ASSERT_EQ(map.gates.size(), 4u);
  for (const Gate& g : map.gates) {
    double best = 1e9;
    for (const auto& x : truth) best = std::min(best, (x.p - g.center()).norm());
    EXPECT_LT(best, 1e-9);
  }
  EXPECT_THROW(place_gates(truth, 0, 1.5, 1.5, 4.0), Error);
}
