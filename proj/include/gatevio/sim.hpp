#pragma once

#include "gatevio/camera.hpp"
#include "gatevio/types.hpp"

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace gatevio {

enum class TrajectoryKind { Ellipse, Lemniscate, Racetrack3d, Static };
std::string_view to_string(TrajectoryKind k);
std::optional<TrajectoryKind> trajectory_kind_from_string(std::string_view s);

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::Ellipse;
  double semi_major = 5.0;        ///< m, x extent
  double semi_minor = 3.0;        ///< m, y extent
  double height = 2.0;            ///< m, mean altitude
  double height_amplitude = 0.0;  ///< m, racetrack3d climb/descent amplitude
  double period = 8.0;            ///< s per lap
  double duration = 10.0;         ///< s
  double imu_rate_hz = 500.0;
  /// Quintic ramp of the lap phase from rest over this many seconds
  /// (a standing start). 0 starts at full speed.
  double ramp_time = 0.0;
  double max_roll_deg = 60.0;
  /// Re-derive p, a and omega from the sampled v and q so that forward-Euler
  /// integration of the sampled a and omega reproduces the samples exactly.
  /// Off: closed-form p, v, a.
  bool discrete_consistent = true;
  std::uint64_t seed = 0;

  /// Throws Error(InvalidSpec).
  void validate() const;
};

struct GroundTruthSample {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();  ///< world-frame acceleration
  UnitQuaternion q;
  Vec3 w = Vec3::Zero();  ///< body rate
};

std::vector<GroundTruthSample> generate_trajectory(const TrajectorySpec& spec);

/// Truth as filter states with the given (constant) biases.
std::vector<NominalState> to_states(const std::vector<GroundTruthSample>& truth,
                                    const Vec3& b_a = Vec3::Zero(), const Vec3& b_w = Vec3::Zero());

struct CorruptionSpec {
  double pixel_noise_sigma = 1.0;  ///< px, per axis
  double dropout_prob = 0.0;       ///< per corner
  /// Extra per-label dropout, indexed TL, TR, BR, BL.
  std::array<double, 4> label_dropout_prob{0.0, 0.0, 0.0, 0.0};
  /// Per detection: keep only 2 or 3 randomly chosen corners.
  double partial_prob = 0.0;
  double label_swap_prob = 0.0;  ///< per detection: random relabeling
  double outlier_prob = 0.0;     ///< per corner gross error
  double outlier_sigma = 100.0;  ///< px
  double detection_rate_hz = 85.0;
  double detection_range_m = 15.0;
  Vec3 bias_a_true = Vec3::Zero();
  Vec3 bias_w_true = Vec3::Zero();
  bool imu_noise = true;   ///< white noise on the IMU readings
  bool bias_walk = true;   ///< random-walk the true biases
  bool score_corruption = false;  ///< corrupted corners get score 0.5

  /// Throws Error(InvalidSpec).
  void validate() const;
};

struct ImuSynthesis {
  std::vector<ImuSample> imu;
  std::vector<Vec3> bias_a;  ///< true bias per reading
  std::vector<Vec3> bias_w;
};

/// a_m = R^T (a - g) + b_a + n_a, w_m = w + b_w + n_w with discrete noise
/// of std sigma / sqrt(dt) and biases random-walking with sigma_b * sqrt(dt).
ImuSynthesis synthesize_imu(const std::vector<GroundTruthSample>& truth,
                            const CorruptionSpec& corruption, const NoiseParams& noise,
                            std::uint64_t seed);

/// Detections at detection_rate_hz, timestamps snapped to truth samples.
/// When the camera is behind a gate's plane, the detection carries the
/// mirrored (rear-view) labeling. true_gate_ids, when given, receives the
/// source gate of each detection.
std::vector<GateDetection> synthesize_detections(const std::vector<GroundTruthSample>& truth,
                                                 const GateMap& map, const CameraModel& cam,
                                                 const Extrinsics& ext,
                                                 const CorruptionSpec& corruption,
                                                 std::uint64_t seed,
                                                 std::vector<int>* true_gate_ids = nullptr);

/// Forward-looking camera (z along body x, x to body -y, y to body -z),
/// pitched up by tilt_deg.
Extrinsics forward_camera(double tilt_deg = 0.0, const Vec3& p_bc = Vec3::Zero());

/// Camera with the simulator's default mild radial distortion.
CameraModel default_sim_camera();

/// count gates centered on the trajectory, evenly spread in time over the
/// first lap (or the whole run if shorter), facing the direction of travel.
GateMap place_gates(const std::vector<GroundTruthSample>& truth, int count, double width,
                    double height, double lap_time);

struct ScenarioSpec {
  TrajectorySpec trajectory;
  CorruptionSpec corruption;
  NoiseParams noise;
  CameraModel camera = default_sim_camera();
  Extrinsics ext_true = forward_camera();
  int num_gates = 4;
  double gate_size = 1.5;  ///< m, inner width and height
  std::uint64_t seed = 0;
};

struct Scenario {
  ScenarioSpec spec;
  std::vector<GroundTruthSample> truth;
  ImuSynthesis imu;
  std::vector<GateDetection> detections;
  std::vector<int> detection_gate_ids;
  GateMap map;

  /// Truth as states with the true biases attached.
  std::vector<NominalState> truth_states() const;
};

/// Truth, IMU, gate map and detections for one seeded run.
Scenario make_scenario(const ScenarioSpec& spec);

}  // namespace gatevio
