#pragma once

#include "gatevio/geometry.hpp"

#include <array>
#include <optional>
#include <string_view>
#include <vector>

namespace gatevio {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat15 = Eigen::Matrix<double, 15, 15>;

/// Offsets of each block inside the 15-dim error state.
namespace idx {
inline constexpr int kPos = 0;
inline constexpr int kVel = 3;
inline constexpr int kAtt = 6;
inline constexpr int kBa = 9;
inline constexpr int kBw = 12;
inline constexpr int kDim = 15;
}  // namespace idx

/// Error state ordered [dp, dv, dtheta, db_a, db_w].
using ErrorState = Vec15;
using Covariance15 = Mat15;

struct NominalState {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  UnitQuaternion q;
  Vec3 b_a = Vec3::Zero();
  Vec3 b_w = Vec3::Zero();
};

/// x (+) dx: additive on Euclidean blocks, right-multiplied exp on attitude.
NominalState compose_state(const NominalState& nominal, const ErrorState& dx);

/// Full 15-dim difference a (-) b, the inverse of compose_state.
ErrorState state_difference(const NominalState& a, const NominalState& b);

/// Pose-only difference [p_a - p_b; log(q_b^-1 q_a)].
Vec6 state_boxminus(const NominalState& a, const NominalState& b);

struct ImuSample {
  double t = 0.0;
  Vec3 a_m = Vec3::Zero();  ///< specific force (m/s^2)
  Vec3 w_m = Vec3::Zero();  ///< angular rate (rad/s)
};

/// Continuous-time noise densities of the IMU model.
struct NoiseParams {
  double sigma_a = 0.02;    ///< accel white noise, m/s^2/sqrt(Hz)
  double sigma_w = 0.002;   ///< gyro white noise, rad/s/sqrt(Hz)
  double sigma_ba = 1e-4;   ///< accel bias random walk
  double sigma_bw = 1e-5;   ///< gyro bias random walk
  Vec3 gravity = kGravity;

  void validate() const;
};

enum class CornerLabel : int { TL = 0, TR = 1, BR = 2, BL = 3 };
inline constexpr std::array<CornerLabel, 4> kCornerLabels{CornerLabel::TL, CornerLabel::TR,
                                                          CornerLabel::BR, CornerLabel::BL};
std::string_view to_string(CornerLabel label);
std::optional<CornerLabel> corner_label_from_string(std::string_view s);

/// A racing gate: the 4 inner corners in world coordinates, ordered
/// [TL, TR, BR, BL] as seen from the front (approach) side.
struct Gate {
  int id = 0;
  std::array<Vec3, 4> corners_w;

  Vec3 center() const;
  /// Unit normal pointing along the pass-through direction (front to back).
  Vec3 normal() const;

  /// Corners derived from a center pose. The gate's local x axis is the
  /// pass-through direction, y points left and z up.
  static Gate from_pose(int id, const Vec3& center, double yaw, double pitch, double roll,
                        double width, double height);

  /// Throws Error(ValidationError) naming this gate id when the corners are
  /// not coplanar within 1e-6 m or two consecutive corners coincide.
  void validate() const;
};

struct GateMap {
  std::vector<Gate> gates;

  /// Throws Error(ValidationError) on duplicate ids or an invalid gate.
  void validate() const;
  const Gate* find(int id) const;
};

/// One detector output for a gate. A corner is present iff its score > 0.
struct GateDetection {
  double t = 0.0;
  std::array<std::optional<Vec2>, 4> corners_px;
  std::array<std::optional<Vec2>, 4> corners_norm;
  std::array<double, 4> scores{0.0, 0.0, 0.0, 0.0};
  std::optional<int> gate_id;

  bool present(int i) const { return scores[static_cast<std::size_t>(i)] > 0.0; }
  int num_present() const;
};

struct CornerMeasurement {
  double t = 0.0;
  Vec2 u_norm = Vec2::Zero();
  Vec3 p_gw = Vec3::Zero();
  int gate_id = 0;
  CornerLabel label = CornerLabel::TL;
  double score = 1.0;  ///< detector confidence carried through for optional noise scaling
};

}  // namespace gatevio
