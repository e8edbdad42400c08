#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <optional>

namespace gatevio {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Unit vector along world +z. The world frame is z-up.
inline const Vec3 kWorldUp{0.0, 0.0, 1.0};

/// Default gravity for a z-up world.
inline const Vec3 kGravity{0.0, 0.0, -9.81};

/// Minimum camera-frame depth (m) for a point to count as projectable.
inline constexpr double kDepthEpsilon = 1e-3;

/// Below this rotation angle exp/log switch to Taylor expansions.
inline constexpr double kSmallAngle = 1e-8;

/// Hamilton quaternion, (w, x, y, z) storage, passive body-to-world rotation.
/// Always unit norm: every constructor and product renormalizes.
class UnitQuaternion {
 public:
  UnitQuaternion() : q_(1.0, 0.0, 0.0, 0.0) {}
  UnitQuaternion(double w, double x, double y, double z) : q_(w, x, y, z) { normalize(); }
  explicit UnitQuaternion(const Eigen::Quaterniond& q) : q_(q) { normalize(); }
  explicit UnitQuaternion(const Mat3& rotation) : q_(rotation) { normalize(); }

  static UnitQuaternion identity() { return {}; }

  /// Keeps the coefficients bit-exact when they are already unit to within
  /// round-off, so values read back from files match what was written.
  static UnitQuaternion from_stored(double w, double x, double y, double z) {
    UnitQuaternion q;
    q.q_ = Eigen::Quaterniond(w, x, y, z);
    if (std::abs(q.q_.squaredNorm() - 1.0) > 8.0 * std::numeric_limits<double>::epsilon()) q.normalize();
    return q;
  }

  /// Z-Y-X (yaw, pitch, roll) Euler angles in radians.
  static UnitQuaternion from_ypr(double yaw, double pitch, double roll);

  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }
  Vec3 vec() const { return q_.vec(); }
  const Eigen::Quaterniond& eigen() const { return q_; }

  Mat3 rotation_matrix() const { return q_.toRotationMatrix(); }
  Vec3 rotate(const Vec3& v) const { return q_ * v; }
  UnitQuaternion inverse() const { return UnitQuaternion(q_.conjugate()); }

  UnitQuaternion operator*(const UnitQuaternion& rhs) const { return UnitQuaternion(q_ * rhs.q_); }

  /// Angular distance (rad) to another rotation, in [0, pi].
  double angle_to(const UnitQuaternion& other) const;

  UnitQuaternion slerp(double alpha, const UnitQuaternion& other) const {
    return UnitQuaternion(q_.slerp(alpha, other.q_));
  }

 private:
  void normalize() { q_.normalize(); }
  Eigen::Quaterniond q_;
};

/// Exponential map: rotation vector -> unit quaternion for a rotation of
/// |theta| about theta/|theta| (the quaternion exp of theta/2).
UnitQuaternion so3_exp(const Vec3& theta);

/// Logarithm map, inverse of so3_exp. Result norm is at most pi.
Vec3 so3_log(const UnitQuaternion& q);

/// Cross-product matrix: skew(v) * w == v.cross(w).
Mat3 skew(const Vec3& v);

/// Right Jacobian of SO(3) and its inverse.
Mat3 so3_right_jacobian(const Vec3& theta);
Mat3 so3_right_jacobian_inv(const Vec3& theta);

/// Pinhole projection to normalized image coordinates. Throws
/// Error(BehindCamera) when z <= kDepthEpsilon.
Vec2 project(const Vec3& p_c);
std::optional<Vec2> try_project(const Vec3& p_c);

/// d(project)/d(p_c). Throws Error(BehindCamera) like project().
Mat23 project_jacobian(const Vec3& p_c);

/// Camera-to-body rigid transform.
struct Extrinsics {
  UnitQuaternion R_bc;  ///< camera-to-body rotation
  Vec3 p_bc = Vec3::Zero();  ///< camera origin in the body frame (m)
};

/// Landmark in the camera frame: R_bc^T (R(q_wb)^T (p_w - p_wb) - p_bc).
Vec3 world_to_camera(const Vec3& p_w, const Vec3& p_wb, const UnitQuaternion& q_wb,
                     const Extrinsics& ext);

/// Inverse of world_to_camera.
Vec3 camera_to_world(const Vec3& p_c, const Vec3& p_wb, const UnitQuaternion& q_wb,
                     const Extrinsics& ext);

}  // namespace gatevio
