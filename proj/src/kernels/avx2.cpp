#include "impl.hpp"

#include <immintrin.h>

#include <cmath>

namespace gatevio::kernels::detail {
namespace {

constexpr std::size_t kLanes = 4;

void transform_points(const double* R, const double* t, const double* x, const double* y,
                      const double* z, double* ox, double* oy, double* oz, std::size_t n) {
  const __m256d r00 = _mm256_set1_pd(R[0]), r01 = _mm256_set1_pd(R[1]), r02 = _mm256_set1_pd(R[2]);
  const __m256d r10 = _mm256_set1_pd(R[3]), r11 = _mm256_set1_pd(R[4]), r12 = _mm256_set1_pd(R[5]);
  const __m256d r20 = _mm256_set1_pd(R[6]), r21 = _mm256_set1_pd(R[7]), r22 = _mm256_set1_pd(R[8]);
  const __m256d t0 = _mm256_set1_pd(t[0]), t1 = _mm256_set1_pd(t[1]), t2 = _mm256_set1_pd(t[2]);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d px = _mm256_loadu_pd(x + i);
    const __m256d py = _mm256_loadu_pd(y + i);
    const __m256d pz = _mm256_loadu_pd(z + i);
    __m256d a = _mm256_fmadd_pd(r02, pz, t0);
    a = _mm256_fmadd_pd(r01, py, a);
    a = _mm256_fmadd_pd(r00, px, a);
    __m256d b = _mm256_fmadd_pd(r12, pz, t1);
    b = _mm256_fmadd_pd(r11, py, b);
    b = _mm256_fmadd_pd(r10, px, b);
    __m256d c = _mm256_fmadd_pd(r22, pz, t2);
    c = _mm256_fmadd_pd(r21, py, c);
    c = _mm256_fmadd_pd(r20, px, c);
    _mm256_storeu_pd(ox + i, a);
    _mm256_storeu_pd(oy + i, b);
    _mm256_storeu_pd(oz + i, c);
  }
  for (; i < n; ++i) {
    ox[i] = R[0] * x[i] + R[1] * y[i] + R[2] * z[i] + t[0];
    oy[i] = R[3] * x[i] + R[4] * y[i] + R[5] * z[i] + t[1];
    oz[i] = R[6] * x[i] + R[7] * y[i] + R[8] * z[i] + t[2];
  }
}

void project_points(const double* x, const double* y, const double* z, double* u, double* v,
                    std::uint8_t* valid, std::size_t n) {
  const __m256d eps = _mm256_set1_pd(kDepthEpsilon);
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d pz = _mm256_loadu_pd(z + i);
    const __m256d ok = _mm256_cmp_pd(pz, eps, _CMP_GT_OQ);
    // Invalid lanes divide by one and are then masked to zero.
    const __m256d denom = _mm256_blendv_pd(one, pz, ok);
    const __m256d pu = _mm256_and_pd(_mm256_div_pd(_mm256_loadu_pd(x + i), denom), ok);
    const __m256d pv = _mm256_and_pd(_mm256_div_pd(_mm256_loadu_pd(y + i), denom), ok);
    _mm256_storeu_pd(u + i, pu);
    _mm256_storeu_pd(v + i, pv);
    const int mask = _mm256_movemask_pd(ok);
    for (std::size_t k = 0; k < kLanes; ++k) valid[i + k] = static_cast<std::uint8_t>((mask >> k) & 1);
  }
  for (; i < n; ++i) {
    if (z[i] > kDepthEpsilon) {
      u[i] = x[i] / z[i];
      v[i] = y[i] / z[i];
      valid[i] = 1;
    } else {
      u[i] = v[i] = 0.0;
      valid[i] = 0;
    }
  }
}

void distort_to_pixel(const double* k, const double* u, const double* v, double* px, double* py,
                      std::size_t n) {
  const __m256d fx = _mm256_set1_pd(k[0]), fy = _mm256_set1_pd(k[1]);
  const __m256d cx = _mm256_set1_pd(k[2]), cy = _mm256_set1_pd(k[3]);
  const __m256d k1 = _mm256_set1_pd(k[4]), k2 = _mm256_set1_pd(k[5]);
  const __m256d p1 = _mm256_set1_pd(k[6]), p2 = _mm256_set1_pd(k[7]);
  const __m256d one = _mm256_set1_pd(1.0), two = _mm256_set1_pd(2.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d x = _mm256_loadu_pd(u + i);
    const __m256d y = _mm256_loadu_pd(v + i);
    const __m256d xx = _mm256_mul_pd(x, x);
    const __m256d yy = _mm256_mul_pd(y, y);
    const __m256d xy = _mm256_mul_pd(x, y);
    const __m256d r2 = _mm256_add_pd(xx, yy);
    const __m256d radial = _mm256_fmadd_pd(_mm256_fmadd_pd(k2, r2, k1), r2, one);
    const __m256d two_xy = _mm256_mul_pd(two, xy);
    // xd = x*radial + p1*2xy + p2*(r2 + 2xx)
    __m256d xd = _mm256_mul_pd(p2, _mm256_fmadd_pd(two, xx, r2));
    xd = _mm256_fmadd_pd(p1, two_xy, xd);
    xd = _mm256_fmadd_pd(x, radial, xd);
    // yd = y*radial + p1*(r2 + 2yy) + p2*2xy
    __m256d yd = _mm256_mul_pd(p2, two_xy);
    yd = _mm256_fmadd_pd(p1, _mm256_fmadd_pd(two, yy, r2), yd);
    yd = _mm256_fmadd_pd(y, radial, yd);
    _mm256_storeu_pd(px + i, _mm256_fmadd_pd(fx, xd, cx));
    _mm256_storeu_pd(py + i, _mm256_fmadd_pd(fy, yd, cy));
  }
  if (i < n) scalar_table().distort_to_pixel(k, u + i, v + i, px + i, py + i, n - i);
}

void point_distances(const double* ax, const double* ay, const double* bx, const double* by,
                     double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(ax + i), _mm256_loadu_pd(bx + i));
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ay + i), _mm256_loadu_pd(by + i));
    _mm256_storeu_pd(out + i, _mm256_sqrt_pd(_mm256_fmadd_pd(dx, dx, _mm256_mul_pd(dy, dy))));
  }
  for (; i < n; ++i) {
    const double dx = ax[i] - bx[i];
    const double dy = ay[i] - by[i];
    out[i] = std::sqrt(dx * dx + dy * dy);
  }
}

double sum_of_squares(const double* values, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    const __m256d a = _mm256_loadu_pd(values + i);
    const __m256d b = _mm256_loadu_pd(values + i + kLanes);
    acc0 = _mm256_fmadd_pd(a, a, acc0);
    acc1 = _mm256_fmadd_pd(b, b, acc1);
  }
  const __m256d acc = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[kLanes];
  _mm256_store_pd(lanes, acc);
  double total = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) total += values[i] * values[i];
  return total;
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{transform_points, project_points, distort_to_pixel, point_distances,
                             sum_of_squares};
  return t;
}

}  // namespace gatevio::kernels::detail
