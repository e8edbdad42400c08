#pragma once

#include "gatevio/geometry.hpp"

namespace gatevio {

/// Pinhole camera with 4-coefficient radial-tangential distortion.
/// All-zero coefficients give a pure pinhole.
struct CameraModel {
  double fx = 400.0;
  double fy = 400.0;
  double cx = 410.0;
  double cy = 308.0;
  double k1 = 0.0;
  double k2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  int width = 820;
  int height = 616;

  /// Fixed-point iterations used by undistort_normalize.
  int undistort_iterations = 8;

  /// Throws Error(ValidationError) if intrinsics are unusable.
  void validate() const;

  bool in_image(const Vec2& px) const {
    return px.x() >= 0.0 && px.x() <= width && px.y() >= 0.0 && px.y() <= height;
  }

  /// Applies lens distortion to an undistorted normalized point.
  Vec2 distort(const Vec2& normalized) const;

  /// Normalized (undistorted) -> pixel, including distortion.
  Vec2 to_pixel(const Vec2& normalized) const;

  /// Camera-frame point -> pixel; nullopt when behind the camera.
  std::optional<Vec2> project_to_pixel(const Vec3& p_c) const;
};

/// Pixel -> undistorted normalized coordinates by fixed-point iteration.
/// Throws Error(NoConvergence) when the distortion residual is still above
/// 1e-6 normalized units after cam.undistort_iterations steps.
Vec2 undistort_normalize(const Vec2& u_px, const CameraModel& cam);

}  // namespace gatevio
