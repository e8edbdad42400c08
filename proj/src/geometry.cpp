#include "gatevio/geometry.hpp"

#include "gatevio/error.hpp"

#include <algorithm>
#include <cmath>

namespace gatevio {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DegenerateProjection: return "DegenerateProjection";
    case ErrorCode::NonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case ErrorCode::ExcessiveDt: return "ExcessiveDt";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

UnitQuaternion UnitQuaternion::from_ypr(double yaw, double pitch, double roll) {
  const Eigen::Quaterniond q = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                               Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                               Eigen::AngleAxisd(roll, Vec3::UnitX());
  return UnitQuaternion(q);
}

double UnitQuaternion::angle_to(const UnitQuaternion& other) const {
  return so3_log(inverse() * other).norm();
}

UnitQuaternion so3_exp(const Vec3& theta) {
  const double angle = theta.norm();
  if (angle < kSmallAngle) {
    const double a2 = angle * angle;
    const Vec3 v = 0.5 * theta * (1.0 - a2 / 48.0);
    return {1.0 - a2 / 8.0, v.x(), v.y(), v.z()};
  }
  const double half = 0.5 * angle;
  const Vec3 v = std::sin(half) / angle * theta;
  return {std::cos(half), v.x(), v.y(), v.z()};
}

Vec3 so3_log(const UnitQuaternion& q) {
  double w = q.w();
  Vec3 v = q.vec();
  // q and -q are the same rotation; pick the one giving an angle <= pi.
  if (w < 0.0) {
    w = -w;
    v = -v;
  }
  const double n = v.norm();
  if (n < kSmallAngle) {
    return 2.0 / w * (1.0 - n * n / (3.0 * w * w)) * v;
  }
  const double angle = 2.0 * std::atan2(n, w);
  return angle / n * v;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_right_jacobian(const Vec3& theta) {
  const double a = theta.norm();
  const Mat3 k = skew(theta);
  if (a < 1e-5) {
    return Mat3::Identity() - 0.5 * k + k * k / 6.0;
  }
  const double a2 = a * a;
  return Mat3::Identity() - (1.0 - std::cos(a)) / a2 * k + (a - std::sin(a)) / (a2 * a) * k * k;
}

Mat3 so3_right_jacobian_inv(const Vec3& theta) {
  const double a = theta.norm();
  const Mat3 k = skew(theta);
  if (a < 1e-5) {
    return Mat3::Identity() + 0.5 * k + k * k / 12.0;
  }
  const double coeff = 1.0 / (a * a) - (1.0 + std::cos(a)) / (2.0 * a * std::sin(a));
  return Mat3::Identity() + 0.5 * k + coeff * k * k;
}

std::optional<Vec2> try_project(const Vec3& p_c) {
  if (!(p_c.z() > kDepthEpsilon)) return std::nullopt;
  return Vec2(p_c.x() / p_c.z(), p_c.y() / p_c.z());
}

Vec2 project(const Vec3& p_c) {
  auto uv = try_project(p_c);
  if (!uv) throw Error(ErrorCode::BehindCamera, "depth " + std::to_string(p_c.z()));
  return *uv;
}

Mat23 project_jacobian(const Vec3& p_c) {
  if (!(p_c.z() > kDepthEpsilon)) {
    throw Error(ErrorCode::BehindCamera, "depth " + std::to_string(p_c.z()));
  }
  const double iz = 1.0 / p_c.z();
  const double iz2 = iz * iz;
  Mat23 j;
  j << iz, 0.0, -p_c.x() * iz2,
       0.0, iz, -p_c.y() * iz2;
  return j;
}

Vec3 world_to_camera(const Vec3& p_w, const Vec3& p_wb, const UnitQuaternion& q_wb,
                     const Extrinsics& ext) {
  const Vec3 p_b = q_wb.rotation_matrix().transpose() * (p_w - p_wb);
  return ext.R_bc.rotation_matrix().transpose() * (p_b - ext.p_bc);
}

Vec3 camera_to_world(const Vec3& p_c, const Vec3& p_wb, const UnitQuaternion& q_wb,
                     const Extrinsics& ext) {
  return q_wb.rotate(ext.R_bc.rotate(p_c) + ext.p_bc) + p_wb;
}

}  // namespace gatevio
