#include "gatevio/error.hpp"
#include "gatevio/fgo.hpp"
#include "gatevio/metrics.hpp"
#include "gatevio/pipeline.hpp"
#include "gatevio/preintegration.hpp"
#include "gatevio/sim.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <random>

namespace gatevio {
namespace {

using test::kDeg;
using test::uniform;
using test::uniform_vec;

constexpr double kDt = 0.002;

std::vector<ImuSample> constant_imu(const Vec3& a, const Vec3& w, double duration) {
  std::vector<ImuSample> out;
  const int n = static_cast<int>(std::lround(duration / kDt));
  for (int i = 0; i <= n; ++i) out.push_back({i * kDt, a, w});
  return out;
}

std::vector<ImuSample> random_imu(std::mt19937_64& rng, int n) {
  std::vector<ImuSample> out;
  for (int i = 0; i <= n; ++i) out.push_back({0.005 * i, uniform_vec(rng, -12, 12), uniform_vec(rng, -3, 3)});
  return out;
}

/// x1 reached from x0 by the preintegrated motion, so the residual vanishes.
NominalState predict(const NominalState& x0, const PreintegratedImu& pre, const Vec3& g) {
  const double T = pre.dt_total;
  NominalState x1 = x0;
  x1.t = x0.t + T;
  x1.p = x0.p + x0.v * T + 0.5 * g * T * T + x0.q.rotate(pre.dp);
  x1.v = x0.v + g * T + x0.q.rotate(pre.dv);
  x1.q = x0.q * pre.dq;
  return x1;
}

// --- preintegration ---------------------------------------------------------------------

TEST(Preintegrate, SingleSampleIsIdentity) {
  const std::vector<ImuSample> one{{0.0, Vec3(0.1, 0, 0), Vec3(0, 0.01, 0)}};
  const PreintegratedImu p = preintegrate(one, Vec3(0.1, 0, 0), Vec3(0, 0.01, 0), NoiseParams{});
  EXPECT_EQ(p.dp, Vec3::Zero());
  EXPECT_EQ(p.dv, Vec3::Zero());
  EXPECT_LT(p.dq.angle_to(UnitQuaternion()), 1e-15);
  EXPECT_EQ(p.dt_total, 0.0);
}

TEST(Preintegrate, ConstantAcceleration) {
  const auto imu = constant_imu(Vec3(1, 0, 0), Vec3::Zero(), 1.0);
  const PreintegratedImu p = preintegrate(imu, Vec3::Zero(), Vec3::Zero(), NoiseParams{});
  EXPECT_NEAR(p.dt_total, 1.0, 1e-12);
  EXPECT_LT((p.dv - Vec3(1, 0, 0)).norm(), 1e-3);
  EXPECT_LT((p.dp - Vec3(0.5, 0, 0)).norm(), 1e-3);
}

TEST(Preintegrate, CovarianceSymmetricPsd) {
  std::mt19937_64 rng(1);
  const PreintegratedImu p = preintegrate(random_imu(rng, 40), Vec3::Zero(), Vec3::Zero(), NoiseParams{});
  EXPECT_GT(p.dt_total, 0.0);
  EXPECT_LT((p.cov9 - p.cov9.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat9>(p.cov9).eigenvalues().minCoeff(), 0.0);
}

TEST(Preintegrate, RejectsBadStreams) {
  try {
    preintegrate({}, Vec3::Zero(), Vec3::Zero(), NoiseParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyStream);
  }
  const std::vector<ImuSample> back{{0.1, Vec3::Zero(), Vec3::Zero()}, {0.05, Vec3::Zero(), Vec3::Zero()}};
  try {
    preintegrate(back, Vec3::Zero(), Vec3::Zero(), NoiseParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonMonotonicTimestamp);
  }
}

TEST(Preintegrate, RepreintegrationMatchesFromScratch) {
  std::mt19937_64 rng(2);
  const NoiseParams noise;
  const auto imu = random_imu(rng, 30);
  const PreintegratedImu p = preintegrate(imu, Vec3::Zero(), Vec3::Zero(), noise);
  const Vec3 ba = uniform_vec(rng, -0.1, 0.1), bw = uniform_vec(rng, -0.01, 0.01);
  const PreintegratedImu r = repreintegrate(p, ba, bw, noise);
  const PreintegratedImu s = preintegrate(imu, ba, bw, noise);
  EXPECT_LT((r.dp - s.dp).norm(), 1e-12);
  EXPECT_LT((r.dv - s.dv).norm(), 1e-12);
  EXPECT_LT(r.dq.angle_to(s.dq), 1e-12);
  EXPECT_EQ(r.bias_a_lin, ba);
  const NominalState x0 = test::random_state(rng), x1 = test::random_state(rng);
  EXPECT_LT((imu_residual(x0, x1, r, noise.gravity) - imu_residual(x0, x1, s, noise.gravity)).norm(), 1e-12);
}

TEST(SliceImu, CoversInterval) {
  std::vector<ImuSample> imu;
  for (int i = 0; i <= 10; ++i) imu.push_back({0.01 * i, Vec3::Constant(i), Vec3::Constant(-i)});
  const auto s = slice_imu(imu, 0.025, 0.061);
  ASSERT_GE(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s.front().t, 0.025);
  EXPECT_EQ(s.front().a_m, Vec3::Constant(2));  // reading held at 0.025
  EXPECT_DOUBLE_EQ(s.back().t, 0.061);
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    EXPECT_GT(s[i].t, 0.025);
    EXPECT_LT(s[i].t, 0.061);
  }
  EXPECT_EQ(s.size(), 6u);  // 0.025, 0.03, 0.04, 0.05, 0.06, end marker
  const auto exact = slice_imu(imu, 0.02, 0.05);
  EXPECT_EQ(exact.size(), 4u);
  EXPECT_EQ(exact.front().a_m, Vec3::Constant(2));
}

// --- IMU residual -------------------------------------------------------------------------

TEST(ImuResidual, ZeroAtSimulatedTruth) {
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::Racetrack3d;
  spec.semi_major = 12;
  spec.semi_minor = 6;
  spec.height_amplitude = 1.5;
  spec.period = 7;
  spec.duration = 3.0;
  const auto truth = generate_trajectory(spec);
  CorruptionSpec clean;
  clean.imu_noise = false;
  clean.bias_walk = false;
  clean.bias_a_true = Vec3(0.1, -0.05, 0.02);
  clean.bias_w_true = Vec3(0.004, 0.002, -0.003);
  const NoiseParams noise;
  const auto imu = synthesize_imu(truth, clean, noise, 3).imu;
  const auto states = to_states(truth, clean.bias_a_true, clean.bias_w_true);
  for (std::size_t k = 0; k + 50 < states.size(); k += 50) {
    const auto slice = slice_imu(imu, states[k].t, states[k + 50].t);
    const PreintegratedImu p = preintegrate(slice, clean.bias_a_true, clean.bias_w_true, noise);
    EXPECT_LT(imu_residual(states[k], states[k + 50], p, noise.gravity).norm(), 1e-6);
  }
}

TEST(ImuResidual, ForwardPredictionIsZeroAndLinearInPosition) {
  std::mt19937_64 rng(4);
  const NoiseParams noise;
  for (int i = 0; i < 50; ++i) {
    const NominalState x0 = test::random_state(rng);
    const PreintegratedImu p = preintegrate(random_imu(rng, 20), x0.b_a, x0.b_w, noise);
    NominalState x1 = predict(x0, p, noise.gravity);
    EXPECT_LT(imu_residual(x0, x1, p, noise.gravity).norm(), 1e-9);
    x1.p += Vec3(0.1, 0, 0);
    const Vec9 r = imu_residual(x0, x1, p, noise.gravity);
    EXPECT_LT((r.head<3>() - x0.q.inverse().rotate(Vec3(0.1, 0, 0))).norm(), 1e-9);
    EXPECT_LT(r.tail<6>().norm(), 1e-9);
  }
}

// --- other residuals ----------------------------------------------------------------------

TEST(CornerResidual, ZeroAtTruthAndMatchesFilter) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const NominalState x = test::random_state(rng);
    const Extrinsics ext{test::random_rotation(rng), uniform_vec(rng, -0.1, 0.1)};
    CornerMeasurement z;
    z.p_gw = test::landmark_in_view(rng, x, ext);
    z.u_norm = project(world_to_camera(z.p_gw, x.p, x.q, ext));
    EXPECT_LT(corner_residual(x, ext.R_bc, ext.p_bc, z)->norm(), 1e-12);
    z.u_norm += Vec2(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1));
    const Vec2 r = *corner_residual(x, ext.R_bc, ext.p_bc, z);
    EXPECT_LT((r - measurement_residual(x, z, ext)->r).norm(), 1e-12);
  }
}

TEST(PriorResidual, Examples) {
  std::mt19937_64 rng(6);
  const NominalState x = test::random_state(rng);
  EXPECT_LT(prior_residual(x, x).norm(), 1e-15);
  NominalState prior;
  NominalState y;
  y.q = so3_exp(Vec3(0, 0, 0.2));
  const Vec6 r = prior_residual(y, prior);
  EXPECT_LT((r - (Vec6() << 0, 0, 0, 0, 0, 0.2).finished()).norm(), 1e-15);
}

TEST(ExtrinsicsResidual, Examples) {
  std::mt19937_64 rng(7);
  const UnitQuaternion n = test::random_rotation(rng);
  EXPECT_LT(extrinsics_residual(n, n).norm(), 1e-15);
  EXPECT_LT((extrinsics_residual(so3_exp(Vec3(0.1, 0, 0)), UnitQuaternion()) - Vec3(0.1, 0, 0)).norm(), 1e-15);
  for (int i = 0; i < 100; ++i) {
    const Vec3 theta = uniform_vec(rng, -1, 1);
    EXPECT_LT((extrinsics_residual(n * so3_exp(theta), n) - theta).norm(), 1e-9);
  }
}

TEST(BiasWalkResidual, Difference) {
  NominalState a, b;
  a.b_a = Vec3(1, 2, 3);
  b.b_a = Vec3(1.5, 2, 3);
  b.b_w = Vec3(0, 0, -0.1);
  EXPECT_TRUE(bias_walk_residual(a, b).isApprox((Vec6() << 0.5, 0, 0, 0, 0, -0.1).finished()));
}

// --- keyframes ----------------------------------------------------------------------------

std::vector<MeasurementFrame> frames_at(const std::vector<double>& times) {
  std::vector<MeasurementFrame> out;
  for (double t : times) {
    MeasurementFrame f;
    f.t = t;
    f.measurements.resize(2);
    out.push_back(f);
  }
  return out;
}

TEST(SelectKeyframes, ContinuousDetectionsOnly) {
  std::vector<double> times;
  for (int i = 0; i < 170; ++i) times.push_back(i / 85.0);
  const auto frames = frames_at(times);
  const auto kf = select_keyframes(frames, times.front(), times.back(), 0.1);
  ASSERT_EQ(kf.size(), times.size());
  for (std::size_t i = 0; i < kf.size(); ++i) {
    EXPECT_EQ(kf[i].t, times[i]);
    ASSERT_TRUE(kf[i].frame.has_value());
    EXPECT_EQ(*kf[i].frame, i);
  }
}

TEST(SelectKeyframes, OutageGetsVisualLessKeyframes) {
  std::vector<double> times;
  for (int i = 0; i <= 85; ++i) times.push_back(i / 85.0);
  for (int i = 0; i <= 85; ++i) times.push_back(2.0 + i / 85.0);
  const auto frames = frames_at(times);
  const auto kf = select_keyframes(frames, 0.0, times.back(), 0.1);
  const auto in_gap = std::count_if(kf.begin(), kf.end(), [](const KeyframeSlot& s) {
    return !s.frame && s.t > 1.0 && s.t < 2.0;
  });
  EXPECT_GE(in_gap, 9);
  const auto none = select_keyframes(frames, 0.0, times.back(), 0.1, {}, false);
  EXPECT_EQ(none.size(), times.size());
}

TEST(SelectKeyframes, MaxGapBoundedOnMixedStreams) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> times;
    double t = uniform(rng, 0, 0.2);
    while (t < 10.0) {
      times.push_back(t);
      t += uniform(rng, 0, 1) < 0.05 ? uniform(rng, 0.1, 2.0) : 1.0 / 85.0;
    }
    std::vector<double> grid;
    for (int i = 0; i <= 5000; ++i) grid.push_back(i * kDt);
    const double tau = uniform(rng, 0.05, 0.3);
    const auto frames = frames_at(times);
    for (bool use_grid : {false, true}) {
      const auto kf = select_keyframes(frames, 0.0, 10.0, tau, use_grid ? std::span<const double>(grid) : std::span<const double>());
      EXPECT_EQ(kf.front().t, 0.0);
      EXPECT_EQ(kf.back().t, 10.0);
      for (std::size_t i = 1; i < kf.size(); ++i) {
        EXPECT_GT(kf[i].t, kf[i - 1].t);
        EXPECT_LE(kf[i].t - kf[i - 1].t, tau + 1e-12);
      }
      std::size_t visual = 0;
      for (const auto& s : kf) visual += s.frame.has_value();
      EXPECT_EQ(visual, std::count_if(times.begin(), times.end(), [](double x) { return x <= 10.0; }));
    }
  }
}

// --- optimization -------------------------------------------------------------------------

ScenarioSpec noiseless_spec() {
  const io::RunConfig rc = test::load_scenario("noiseless.json");
  ScenarioSpec spec = rc.scenario;
  spec.seed = 1;
  return spec;
}

bool monotone(const FgoResult& r) {
  double best = r.initial_cost;
  for (const LmIteration& it : r.log) {
    if (!it.accepted) continue;
    if (it.new_cost > it.cost || it.new_cost > best) return false;
    best = it.new_cost;
  }
  return r.final_cost <= r.initial_cost;
}

TEST(Optimize, ExtrinsicsErrorRemovedFromCornerResiduals) {
  // Noiseless racetrack run with a 1 deg camera rotation error. The
  // extrinsics prior keeps a small tension at the optimum, so the residual
  // is judged by its RMS over all corners.
  const io::RunConfig rc = test::load_scenario("racetrack3d.json");
  ScenarioSpec spec = rc.scenario;
  spec.seed = 1;
  spec.corruption = noiseless_spec().corruption;
  spec.corruption.bias_a_true = rc.scenario.corruption.bias_a_true;
  spec.corruption.bias_w_true = rc.scenario.corruption.bias_w_true;
  spec.ext_true.R_bc = spec.ext_true.R_bc * so3_exp(Vec3(0.6, -0.8, 0.0) * kDeg);
  const Scenario sc = make_scenario(spec);
  PipelineConfig cfg = rc.pipeline;
  const auto truth = sc.truth_states();
  const SmootherRun s = run_smoother(sc.imu.imu, sc.detections, sc.map, truth, cfg);
  const auto rms_residual = [&](const std::vector<NominalState>& states, const UnitQuaternion& R) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < s.graph.keyframes.size(); ++k) {
      for (const auto& z : s.graph.keyframes[k].measurements) {
        sum += corner_residual(states[k], R, cfg.ext.p_bc, z)->squaredNorm();
        ++n;
      }
    }
    return std::sqrt(sum / static_cast<double>(n));
  };
  std::vector<NominalState> init;
  for (const auto& kf : s.graph.keyframes) init.push_back(kf.state);
  EXPECT_GT(rms_residual(init, cfg.ext.R_bc), 1e-3);
  EXPECT_LT(rms_residual(s.result.states, s.result.ext_rotation), 1e-6);
  EXPECT_LT(s.result.ext_rotation.angle_to(spec.ext_true.R_bc), 0.01 * kDeg);
  EXPECT_TRUE(monotone(s.result));
}

TEST(Optimize, DeterministicAndMonotoneOnNoisyData) {
  ScenarioSpec spec;
  spec.trajectory.duration = 4.0;
  spec.corruption.bias_a_true = Vec3(0.1, -0.1, 0.05);
  spec.seed = 11;
  const Scenario sc = make_scenario(spec);
  PipelineConfig cfg;
  const FilterRun f = run_filter_on(sc, cfg);
  const SmootherRun a = run_smoother(sc.imu.imu, sc.detections, sc.map, f.trajectory, cfg);
  const SmootherRun b = run_smoother(sc.imu.imu, sc.detections, sc.map, f.trajectory, cfg);
  ASSERT_EQ(a.result.log.size(), b.result.log.size());
  for (std::size_t i = 0; i < a.result.log.size(); ++i) {
    EXPECT_EQ(a.result.log[i].cost, b.result.log[i].cost);
    EXPECT_EQ(a.result.log[i].new_cost, b.result.log[i].new_cost);
    EXPECT_EQ(a.result.log[i].lambda, b.result.log[i].lambda);
  }
  EXPECT_EQ(a.result.final_cost, b.result.final_cost);
  EXPECT_TRUE(monotone(a.result));
  EXPECT_LT(a.result.final_cost, a.result.initial_cost);
  EXPECT_TRUE(a.result.converged);
  EXPECT_NEAR(a.result.final_cost, graph_cost([&] {
    FactorGraph g = a.graph;
    for (std::size_t k = 0; k < g.keyframes.size(); ++k) g.keyframes[k].state = a.result.states[k];
    g.ext_rotation = a.result.ext_rotation;
    return g;
  }()), 1e-9 * a.result.final_cost);
}

TEST(Optimize, GradientVanishesAtOptimum) {
  // Zero-residual problem started away from the optimum.
  ScenarioSpec spec = noiseless_spec();
  spec.trajectory.duration = 2.0;
  const Scenario sc = make_scenario(spec);
  PipelineConfig cfg;
  cfg.camera = spec.camera;
  cfg.lm.rel_cost_tol = 0.0;
  cfg.lm.step_tol = 0.0;
  cfg.lm.abs_cost_tol = 0.0;
  cfg.lm.max_iters = 100;
  const auto truth = sc.truth_states();
  std::vector<MeasurementFrame> frames = frontend_frames(sc.detections, sc.map, truth, cfg);
  FactorGraph g = build_factor_graph(sc.imu.imu, frames, truth, cfg.ext, cfg.fgo, cfg.eskf.noise);
  std::mt19937_64 rng(9);
  for (auto& kf : g.keyframes) {
    ErrorState dx = ErrorState::Zero();
    dx.head<3>() = uniform_vec(rng, -0.05, 0.05);
    dx.segment<3>(idx::kAtt) = uniform_vec(rng, -0.01, 0.01);
    kf.state = compose_state(kf.state, dx);
  }
  const FgoResult r = optimize(g, cfg.lm);
  EXPECT_GT(r.initial_cost, 1.0);
  ASSERT_FALSE(r.log.empty());
  EXPECT_LT(r.final_cost, 1e-10);
  EXPECT_TRUE(r.converged);
  // Round-off in residuals of metre-scale states, amplified by the stiff
  // IMU and bias-walk whitening, puts the absolute floor near 1e-5.
  EXPECT_LT(r.gradient_norm, 1e-10 * r.log.front().gradient_norm);
  EXPECT_TRUE(monotone(r));
}

TEST(Optimize, GradientReachesPrecisionFloorOnNoisyData) {
  // With noisy residuals the attainable gradient is bounded by round-off in
  // the cost; require a reduction of at least 12 orders of magnitude.
  ScenarioSpec spec;
  spec.trajectory.duration = 3.0;
  spec.seed = 12;
  const Scenario sc = make_scenario(spec);
  PipelineConfig cfg;
  cfg.lm.rel_cost_tol = 0.0;
  cfg.lm.step_tol = 0.0;
  cfg.lm.max_iters = 100;
  const FilterRun f = run_filter_on(sc, cfg);
  const SmootherRun s = run_smoother(sc.imu.imu, sc.detections, sc.map, f.trajectory, cfg);
  ASSERT_FALSE(s.result.log.empty());
  EXPECT_LT(s.result.gradient_norm, 1e-12 * s.result.log.front().gradient_norm);
  EXPECT_TRUE(monotone(s.result));
}

TEST(Optimize, NonFiniteSystemIsSingular) {
  ScenarioSpec spec = noiseless_spec();
  spec.trajectory.duration = 1.0;
  const Scenario sc = make_scenario(spec);
  PipelineConfig cfg;
  FactorGraph g = build_factor_graph(sc.imu.imu, {}, sc.truth_states(), cfg.ext, cfg.fgo, cfg.eskf.noise);
  g.keyframes[1].state.v.x() = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(optimize(g), Error);
  try {
    optimize(g);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularNormalEquations);
  }
}

TEST(Optimize, VisualLessKeyframesHelpInOutages) {
  // A 1.5 s detection outage in the middle of each run.
  const io::RunConfig rc = test::load_scenario("racetrack3d.json");
  int better = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ScenarioSpec spec = rc.scenario;
    spec.seed = seed;
    Scenario sc = make_scenario(spec);
    std::erase_if(sc.detections, [](const GateDetection& d) { return d.t > 6.0 && d.t < 7.5; });
    PipelineConfig cfg = rc.pipeline;
    const FilterRun f = run_filter(sc.imu.imu, sc.detections, sc.map, cfg, sc.truth_states().front());
    const auto truth = sc.truth_states();
    const auto outage_error = [&](bool visual_less) {
      cfg.graph.visual_less_keyframes = visual_less;
      const SmootherRun s = run_smoother(sc.imu.imu, sc.detections, sc.map, f.trajectory, cfg);
      std::vector<NominalState> seg;
      for (const auto& x : s.dense)
        if (x.t > 6.0 && x.t < 7.5) seg.push_back(x);
      return trajectory_error(seg, truth, 0.05, 0.5).e_t;
    };
    const double with = outage_error(true), without = outage_error(false);
    better += with < without;
    RecordProperty("seed" + std::to_string(seed), std::to_string(with) + " vs " + std::to_string(without));
  }
  EXPECT_EQ(better, 3);
}

TEST(FgoWeights, Validation) {
  FgoWeights w;
  EXPECT_NO_THROW(w.validate());
  w.sigma_ext(0, 0) = -1.0;
  EXPECT_THROW(w.validate(), Error);
  w = FgoWeights{};
  w.kf_time_threshold = 0.0;
  EXPECT_THROW(w.validate(), Error);
}

TEST(FactorGraph, ValidationRejectsMalformedGraphs) {
  FactorGraph g;
  EXPECT_THROW(g.validate(), Error);
  g.keyframes.resize(2);
  g.keyframes[1].t = 0.1;
  g.keyframes[1].state.t = 0.1;
  EXPECT_THROW(g.validate(), Error);  // missing preintegration
}

TEST(InterpolateState, LinearAndSlerp) {
  NominalState a, b;
  a.t = 0.0;
  b.t = 1.0;
  b.p = Vec3(2, 0, 0);
  b.q = so3_exp(Vec3(0, 0, 1.0));
  const std::vector<NominalState> traj{a, b};
  const auto m = interpolate_state(traj, 0.25);
  ASSERT_TRUE(m.has_value());
  EXPECT_TRUE(m->p.isApprox(Vec3(0.5, 0, 0)));
  EXPECT_LT((so3_log(m->q) - Vec3(0, 0, 0.25)).norm(), 1e-12);
  EXPECT_FALSE(interpolate_state(traj, 1.5).has_value());
}

}  // namespace
}  // namespace gatevio
