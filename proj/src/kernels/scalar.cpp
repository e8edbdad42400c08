#include "impl.hpp"

#include <cmath>

namespace gatevio::kernels::detail {
namespace {

void transform_points(const double* R, const double* t, const double* x, const double* y,
                      const double* z, double* ox, double* oy, double* oz, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double px = x[i], py = y[i], pz = z[i];
    ox[i] = R[0] * px + R[1] * py + R[2] * pz + t[0];
    oy[i] = R[3] * px + R[4] * py + R[5] * pz + t[1];
    oz[i] = R[6] * px + R[7] * py + R[8] * pz + t[2];
  }
}

void project_points(const double* x, const double* y, const double* z, double* u, double* v,
                    std::uint8_t* valid, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (z[i] > kDepthEpsilon) {
      u[i] = x[i] / z[i];
      v[i] = y[i] / z[i];
      valid[i] = 1;
    } else {
      u[i] = 0.0;
      v[i] = 0.0;
      valid[i] = 0;
    }
  }
}

void distort_to_pixel(const double* k, const double* u, const double* v, double* px, double* py,
                      std::size_t n) {
  const double fx = k[0], fy = k[1], cx = k[2], cy = k[3];
  const double k1 = k[4], k2 = k[5], p1 = k[6], p2 = k[7];
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u[i], y = v[i];
    const double r2 = x * x + y * y;
    const double radial = 1.0 + k1 * r2 + k2 * r2 * r2;
    const double xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    const double yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    px[i] = fx * xd + cx;
    py[i] = fy * yd + cy;
  }
}

void point_distances(const double* ax, const double* ay, const double* bx, const double* by,
                     double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = ax[i] - bx[i];
    const double dy = ay[i] - by[i];
    out[i] = std::sqrt(dx * dx + dy * dy);
  }
}

double sum_of_squares(const double* values, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += values[i] * values[i];
  return acc;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{transform_points, project_points, distort_to_pixel, point_distances,
                             sum_of_squares};
  return t;
}

}  // namespace gatevio::kernels::detail
