#include "gatevio/sim.hpp"

#include "gatevio/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace gatevio {
namespace {

constexpr double kPi = std::numbers::pi;

struct PathPoint {
  Vec3 p, dp, ddp;  // position and derivatives w.r.t. the phase
};

PathPoint path(const TrajectorySpec& s, double th) {
  const double a = s.semi_major, b = s.semi_minor, H = s.height;
  PathPoint out;
  switch (s.kind) {
    case TrajectoryKind::Static:
      out.p = Vec3(0.0, 0.0, H);
      out.dp = Vec3::UnitX() * 0.0;
      out.ddp = Vec3::Zero();
      break;
    case TrajectoryKind::Ellipse:
      out.p = Vec3(a * std::cos(th), b * std::sin(th), H);
      out.dp = Vec3(-a * std::sin(th), b * std::cos(th), 0.0);
      out.ddp = Vec3(-a * std::cos(th), -b * std::sin(th), 0.0);
      break;
    case TrajectoryKind::Lemniscate:
      // Figure eight (lemniscate of Gerono): y = (b/2) sin(2 th).
      out.p = Vec3(a * std::sin(th), 0.5 * b * std::sin(2.0 * th), H);
      out.dp = Vec3(a * std::cos(th), b * std::cos(2.0 * th), 0.0);
      out.ddp = Vec3(-a * std::sin(th), -2.0 * b * std::sin(2.0 * th), 0.0);
      break;
    case TrajectoryKind::Racetrack3d: {
      // Oval with two climbs and two dives per lap.
      const double Hz = s.height_amplitude;
      out.p = Vec3(a * std::cos(th), b * std::sin(th), H + Hz * std::sin(2.0 * th));
      out.dp = Vec3(-a * std::sin(th), b * std::cos(th), 2.0 * Hz * std::cos(2.0 * th));
      out.ddp = Vec3(-a * std::cos(th), -b * std::sin(th), -4.0 * Hz * std::sin(2.0 * th));
      break;
    }
  }
  return out;
}

/// Lap phase and its first two time derivatives, with a quintic
/// smoothstep ramp of the phase rate from zero.
struct Phase {
  double th, dth, ddth;
};

Phase phase(const TrajectorySpec& s, double t) {
  const double w0 = 2.0 * kPi / s.period;
  const double Tr = s.ramp_time;
  if (Tr <= 0.0 || t >= Tr) {
    const double offset = Tr > 0.0 ? 0.5 * Tr : 0.0;
    return {w0 * (t - offset), w0, 0.0};
  }
  const double u = t / Tr;
  const double u2 = u * u, u3 = u2 * u, u4 = u3 * u;
  const double integral = Tr * (2.5 * u4 - 3.0 * u4 * u + u4 * u2);
  const double rate = 10.0 * u3 - 15.0 * u4 + 6.0 * u4 * u;
  const double drate = (30.0 * u2 - 60.0 * u3 + 30.0 * u4) / Tr;
  return {w0 * integral, w0 * rate, w0 * drate};
}

struct Kinematics {
  Vec3 p, v, a;
  UnitQuaternion q;
};

Kinematics kinematics(const TrajectorySpec& s, double t) {
  const Phase ph = phase(s, t);
  const PathPoint pp = path(s, ph.th);
  Kinematics k;
  k.p = pp.p;
  k.v = pp.dp * ph.dth;
  k.a = pp.ddp * ph.dth * ph.dth + pp.dp * ph.ddth;
  if (s.kind == TrajectoryKind::Static) {
    k.v.setZero();
    k.a.setZero();
    return k;
  }
  // Heading follows the path tangent, which stays defined at rest.
  const Vec3& tan = pp.dp;
  const double yaw = std::atan2(tan.y(), tan.x());
  const double pitch = -std::atan2(tan.z(), tan.head<2>().norm());
  const Vec3 left(-std::sin(yaw), std::cos(yaw), 0.0);
  const double raw_roll = -std::atan(k.a.dot(left) / 9.81);
  const double max_roll = s.max_roll_deg * kPi / 180.0;
  const double roll = max_roll * std::tanh(raw_roll / max_roll);
  k.q = UnitQuaternion::from_ypr(yaw, pitch, roll);
  return k;
}

constexpr std::array<int, 4> kMirror{1, 0, 3, 2};

}  // namespace

std::string_view to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::Ellipse: return "ellipse";
    case TrajectoryKind::Lemniscate: return "lemniscate";
    case TrajectoryKind::Racetrack3d: return "racetrack3d";
    case TrajectoryKind::Static: return "static";
  }
  return "?";
}

std::optional<TrajectoryKind> trajectory_kind_from_string(std::string_view s) {
  for (TrajectoryKind k : {TrajectoryKind::Ellipse, TrajectoryKind::Lemniscate,
                           TrajectoryKind::Racetrack3d, TrajectoryKind::Static}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

void TrajectorySpec::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidSpec, m); };
  if (!(period > 0.0) || !std::isfinite(period)) bad("period must be positive");
  if (!(duration > 0.0) || !std::isfinite(duration)) bad("duration must be positive");
  if (!(imu_rate_hz > 0.0)) bad("imu_rate_hz must be positive");
  if (duration * imu_rate_hz < 2.0) bad("duration too short for the IMU rate");
  if (!(ramp_time >= 0.0)) bad("ramp_time must be non-negative");
  if (!(max_roll_deg > 0.0 && max_roll_deg < 90.0)) bad("max_roll_deg must be in (0, 90)");
  if (kind != TrajectoryKind::Static && !(semi_major > 0.0 && semi_minor > 0.0)) {
    bad("semi axes must be positive");
  }
  if (!std::isfinite(height) || !std::isfinite(height_amplitude)) bad("height not finite");
}

std::vector<GroundTruthSample> generate_trajectory(const TrajectorySpec& spec) {
  spec.validate();
  const double dt = 1.0 / spec.imu_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.imu_rate_hz)) + 1;
  std::vector<GroundTruthSample> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    const Kinematics kin = kinematics(spec, t);
    GroundTruthSample& s = out[k];
    s.t = t;
    s.p = kin.p;
    s.v = kin.v;
    s.a = kin.a;
    s.q = kin.q;
    if (spec.kind != TrajectoryKind::Static) {
      constexpr double h = 1e-5;
      const UnitQuaternion q0 = kinematics(spec, t - h).q;
      const UnitQuaternion q1 = kinematics(spec, t + h).q;
      s.w = so3_log(q0.inverse() * q1) / (2.0 * h);
    }
  }
  if (spec.discrete_consistent && n > 1) {
    for (std::size_t k = 0; k + 1 < n; ++k) {
      out[k + 1].p = out[k].p + 0.5 * (out[k].v + out[k + 1].v) * dt;
      out[k].a = (out[k + 1].v - out[k].v) / dt;
      out[k].w = so3_log(out[k].q.inverse() * out[k + 1].q) / dt;
    }
    out[n - 1].a = out[n - 2].a;
    out[n - 1].w = out[n - 2].w;
  }
  return out;
}

std::vector<NominalState> to_states(const std::vector<GroundTruthSample>& truth, const Vec3& b_a,
                                    const Vec3& b_w) {
  std::vector<NominalState> out;
  out.reserve(truth.size());
  for (const GroundTruthSample& s : truth) {
    NominalState x;
    x.t = s.t;
    x.p = s.p;
    x.v = s.v;
    x.q = s.q;
    x.b_a = b_a;
    x.b_w = b_w;
    out.push_back(x);
  }
  return out;
}

void CorruptionSpec::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorCode::InvalidSpec, std::string(name) + " must be in [0, 1]");
    }
  };
  prob(dropout_prob, "dropout_prob");
  for (double p : label_dropout_prob) prob(p, "label_dropout_prob");
  prob(partial_prob, "partial_prob");
  prob(label_swap_prob, "label_swap_prob");
  prob(outlier_prob, "outlier_prob");
  if (!(pixel_noise_sigma >= 0.0 && outlier_sigma >= 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "noise sigmas must be non-negative");
  }
  if (!(detection_rate_hz > 0.0)) throw Error(ErrorCode::InvalidSpec, "detection_rate_hz must be positive");
  if (!(detection_range_m > 0.0)) throw Error(ErrorCode::InvalidSpec, "detection_range_m must be positive");
}

ImuSynthesis synthesize_imu(const std::vector<GroundTruthSample>& truth,
                            const CorruptionSpec& corruption, const NoiseParams& noise,
                            std::uint64_t seed) {
  ImuSynthesis out;
  if (truth.empty()) return out;
  const double dt = truth.size() > 1 ? truth[1].t - truth[0].t : 1.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  auto draw = [&] { return Vec3(N(rng), N(rng), N(rng)); };

  Vec3 b_a = corruption.bias_a_true;
  Vec3 b_w = corruption.bias_w_true;
  const double sd_a = noise.sigma_a / std::sqrt(dt);
  const double sd_w = noise.sigma_w / std::sqrt(dt);
  out.imu.reserve(truth.size());
  for (const GroundTruthSample& s : truth) {
    ImuSample m;
    m.t = s.t;
    m.a_m = s.q.rotation_matrix().transpose() * (s.a - noise.gravity) + b_a;
    m.w_m = s.w + b_w;
    if (corruption.imu_noise) {
      m.a_m += sd_a * draw();
      m.w_m += sd_w * draw();
    }
    out.imu.push_back(m);
    out.bias_a.push_back(b_a);
    out.bias_w.push_back(b_w);
    if (corruption.bias_walk) {
      b_a += noise.sigma_ba * std::sqrt(dt) * draw();
      b_w += noise.sigma_bw * std::sqrt(dt) * draw();
    }
  }
  return out;
}

std::vector<GateDetection> synthesize_detections(const std::vector<GroundTruthSample>& truth,
                                                 const GateMap& map, const CameraModel& cam,
                                                 const Extrinsics& ext,
                                                 const CorruptionSpec& c, std::uint64_t seed,
                                                 std::vector<int>* true_gate_ids) {
  c.validate();
  std::vector<GateDetection> out;
  if (true_gate_ids) true_gate_ids->clear();
  if (truth.size() < 2) return out;
  const double dt = truth[1].t - truth[0].t;
  const double t0 = truth.front().t;
  const double period = 1.0 / c.detection_rate_hz;

  std::mt19937_64 rng(seed ^ 0x5DEECE66DULL);
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  long last_idx = -1;
  for (long j = 0;; ++j) {
    const double t = t0 + static_cast<double>(j) * period;
    if (t > truth.back().t) break;
    const long idx = std::lround((t - t0) / dt);
    if (idx == last_idx || idx >= static_cast<long>(truth.size())) continue;
    last_idx = idx;
    const GroundTruthSample& s = truth[static_cast<std::size_t>(idx)];
    const Vec3 cam_pos = s.p + s.q.rotate(ext.p_bc);

    for (const Gate& gate : map.gates) {
      if ((gate.center() - cam_pos).norm() > c.detection_range_m) continue;
      if (world_to_camera(gate.center(), s.p, s.q, ext).z() <= kDepthEpsilon) continue;
      const bool mirrored = (cam_pos - gate.center()).dot(gate.normal()) > 0.0;

      GateDetection det;
      det.t = s.t;
      std::array<bool, 4> corrupted{};
      for (int i = 0; i < 4; ++i) {
        const auto px = cam.project_to_pixel(world_to_camera(gate.corners_w[i], s.p, s.q, ext));
        if (!px || !cam.in_image(*px)) continue;
        const int slot = mirrored ? kMirror[i] : i;
        det.corners_px[slot] = *px;
        det.scores[slot] = 1.0;
      }
      if (det.num_present() == 0) continue;

      for (int i = 0; i < 4; ++i) {
        // True label of slot i, for per-label dropout.
        const int label = mirrored ? kMirror[i] : i;
        const double p_drop = c.dropout_prob + c.label_dropout_prob[label];
        if (U(rng) < p_drop) det.scores[i] = 0.0;
      }
      if (U(rng) < c.partial_prob) {
        const int keep = U(rng) < 0.5 ? 2 : 3;
        while (det.num_present() > keep) {
          std::uniform_int_distribution<int> pick(0, 3);
          const int i = pick(rng);
          det.scores[i] = 0.0;
        }
      }
      for (int i = 0; i < 4; ++i) {
        const bool outlier = U(rng) < c.outlier_prob;
        const Vec2 noise(N(rng), N(rng));
        const Vec2 gross(N(rng), N(rng));
        if (!det.present(i)) continue;
        Vec2 px = *det.corners_px[i] + c.pixel_noise_sigma * noise;
        if (outlier) {
          px += c.outlier_sigma * gross;
          corrupted[i] = true;
        }
        det.corners_px[i] = px;
      }
      if (U(rng) < c.label_swap_prob) {
        std::array<int, 4> perm{0, 1, 2, 3};
        while (perm == std::array<int, 4>{0, 1, 2, 3}) std::shuffle(perm.begin(), perm.end(), rng);
        GateDetection swapped = det;
        for (int i = 0; i < 4; ++i) {
          swapped.corners_px[perm[i]] = det.corners_px[i];
          swapped.scores[perm[i]] = det.scores[i];
        }
        det = swapped;
        corrupted.fill(true);
      }
      for (int i = 0; i < 4; ++i) {
        if (!det.present(i)) {
          det.corners_px[i].reset();
          det.scores[i] = 0.0;
        } else if (c.score_corruption && corrupted[i]) {
          det.scores[i] = 0.5;
        }
      }
      if (det.num_present() == 0) continue;
      out.push_back(det);
      if (true_gate_ids) true_gate_ids->push_back(gate.id);
    }
  }
  return out;
}

Extrinsics forward_camera(double tilt_deg, const Vec3& p_bc) {
  Mat3 R0;
  R0 << 0.0, 0.0, 1.0,  //
      -1.0, 0.0, 0.0,   //
      0.0, -1.0, 0.0;
  const double tilt = tilt_deg * kPi / 180.0;
  const Mat3 Ry = Eigen::AngleAxisd(-tilt, Vec3::UnitY()).toRotationMatrix();
  return Extrinsics{UnitQuaternion(Mat3(Ry * R0)), p_bc};
}

CameraModel default_sim_camera() {
  CameraModel cam;
  cam.k1 = -0.02;
  cam.k2 = 0.002;
  return cam;
}

GateMap place_gates(const std::vector<GroundTruthSample>& truth, int count, double width,
                    double height, double lap_time) {
  if (truth.empty() || count <= 0) throw Error(ErrorCode::InvalidSpec, "cannot place gates");
  const double t0 = truth.front().t;
  const double span = std::min(lap_time, truth.back().t - t0);
  const double dt = truth.size() > 1 ? truth[1].t - truth[0].t : 1.0;
  GateMap map;
  for (int i = 0; i < count; ++i) {
    const double t = t0 + (static_cast<double>(i) + 0.5) * span / count;
    const auto k = std::min(truth.size() - 1, static_cast<std::size_t>(std::lround((t - t0) / dt)));
    const GroundTruthSample& s = truth[k];
    double yaw = std::atan2(s.v.y(), s.v.x());
    if (s.v.head<2>().norm() < 1e-6) {
      const Vec3 fwd = s.q.rotate(Vec3::UnitX());
      yaw = std::atan2(fwd.y(), fwd.x());
    }
    map.gates.push_back(Gate::from_pose(i, s.p, yaw, 0.0, 0.0, width, height));
  }
  map.validate();
  return map;
}

std::vector<NominalState> Scenario::truth_states() const {
  std::vector<NominalState> out = to_states(truth);
  for (std::size_t k = 0; k < out.size() && k < imu.bias_a.size(); ++k) {
    out[k].b_a = imu.bias_a[k];
    out[k].b_w = imu.bias_w[k];
  }
  return out;
}

Scenario make_scenario(const ScenarioSpec& spec) {
  spec.trajectory.validate();
  spec.corruption.validate();
  spec.camera.validate();
  Scenario sc;
  sc.spec = spec;
  sc.truth = generate_trajectory(spec.trajectory);
  sc.imu = synthesize_imu(sc.truth, spec.corruption, spec.noise, spec.seed);
  sc.map = place_gates(sc.truth, spec.num_gates, spec.gate_size, spec.gate_size, spec.trajectory.period);
  sc.detections = synthesize_detections(sc.truth, sc.map, spec.camera, spec.ext_true, spec.corruption,
                                        spec.seed, &sc.detection_gate_ids);
  return sc;
}

}  // namespace gatevio
