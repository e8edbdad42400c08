#include "gatevio/camera.hpp"

#include "gatevio/error.hpp"

#include <cmath>

namespace gatevio {

void CameraModel::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw Error(ErrorCode::ValidationError, "focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::ValidationError, "image size must be positive");
  if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height)) {
    throw Error(ErrorCode::ValidationError, "principal point outside the image");
  }
  if (undistort_iterations < 1) throw Error(ErrorCode::ValidationError, "undistort_iterations < 1");
}

Vec2 CameraModel::distort(const Vec2& n) const {
  const double x = n.x();
  const double y = n.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + k1 * r2 + k2 * r2 * r2;
  const double xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
  return {xd, yd};
}

Vec2 CameraModel::to_pixel(const Vec2& normalized) const {
  const Vec2 d = distort(normalized);
  return {fx * d.x() + cx, fy * d.y() + cy};
}

std::optional<Vec2> CameraModel::project_to_pixel(const Vec3& p_c) const {
  auto n = try_project(p_c);
  if (!n) return std::nullopt;
  return to_pixel(*n);
}

Vec2 undistort_normalize(const Vec2& u_px, const CameraModel& cam) {
  const Vec2 target((u_px.x() - cam.cx) / cam.fx, (u_px.y() - cam.cy) / cam.fy);
  if (cam.k1 == 0.0 && cam.k2 == 0.0 && cam.p1 == 0.0 && cam.p2 == 0.0) return target;

  Vec2 n = target;
  for (int i = 0; i < cam.undistort_iterations; ++i) {
    const double r2 = n.squaredNorm();
    const double radial = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2;
    const double dx = 2.0 * cam.p1 * n.x() * n.y() + cam.p2 * (r2 + 2.0 * n.x() * n.x());
    const double dy = cam.p1 * (r2 + 2.0 * n.y() * n.y()) + 2.0 * cam.p2 * n.x() * n.y();
    n = Vec2((target.x() - dx) / radial, (target.y() - dy) / radial);
  }
  const double residual = (cam.distort(n) - target).norm();
  if (!(residual <= 1e-6)) {
    throw Error(ErrorCode::NoConvergence, "undistortion residual " + std::to_string(residual));
  }
  return n;
}

}  // namespace gatevio
