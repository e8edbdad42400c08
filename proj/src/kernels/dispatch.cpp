#include "impl.hpp"

#include "gatevio/error.hpp"

#include <array>
#include <atomic>
#include <cstdlib>
#include <string>

namespace gatevio::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(GATEVIO_WITH_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend detect() {
  if (const char* env = std::getenv("GATEVIO_SIMD")) {
    if (std::string(env) == "scalar") return Backend::Scalar;
  }
  return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{detect()};
  return b;
}

void check_sizes(std::size_t n, std::initializer_list<std::size_t> others) {
  for (std::size_t m : others) {
    if (m != n) throw Error(ErrorCode::ValidationError, "kernel span size mismatch");
  }
}

std::array<double, 8> pack(const CameraModel& cam) {
  return {cam.fx, cam.fy, cam.cx, cam.cy, cam.k1, cam.k2, cam.p1, cam.p2};
}

}  // namespace

std::string_view to_string(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

bool backend_available(Backend b) { return b == Backend::Scalar || cpu_has_avx2(); }

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_available(b)) {
    throw Error(ErrorCode::ValidationError, "SIMD backend " + std::string(to_string(b)) + " unavailable");
  }
  current().store(b, std::memory_order_relaxed);
}

const KernelTable& table(Backend b) {
  if (b == Backend::Scalar) return detail::scalar_table();
#if defined(GATEVIO_WITH_AVX2)
  if (cpu_has_avx2()) return detail::avx2_table();
#endif
  throw Error(ErrorCode::ValidationError, "SIMD backend avx2 unavailable");
}

void transform_points(const Mat3& R, const Vec3& t, std::span<const double> x,
                      std::span<const double> y, std::span<const double> z, std::span<double> ox,
                      std::span<double> oy, std::span<double> oz) {
  check_sizes(x.size(), {y.size(), z.size(), ox.size(), oy.size(), oz.size()});
  const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> rm = R;
  table(active_backend())
      .transform_points(rm.data(), t.data(), x.data(), y.data(), z.data(), ox.data(), oy.data(),
                        oz.data(), x.size());
}

void project_points(std::span<const double> x, std::span<const double> y,
                    std::span<const double> z, std::span<double> u, std::span<double> v,
                    std::span<std::uint8_t> valid) {
  check_sizes(x.size(), {y.size(), z.size(), u.size(), v.size(), valid.size()});
  table(active_backend())
      .project_points(x.data(), y.data(), z.data(), u.data(), v.data(), valid.data(), x.size());
}

void distort_to_pixel(const CameraModel& cam, std::span<const double> u, std::span<const double> v,
                      std::span<double> px, std::span<double> py) {
  check_sizes(u.size(), {v.size(), px.size(), py.size()});
  const auto intr = pack(cam);
  table(active_backend()).distort_to_pixel(intr.data(), u.data(), v.data(), px.data(), py.data(), u.size());
}

void point_distances(std::span<const double> ax, std::span<const double> ay,
                     std::span<const double> bx, std::span<const double> by, std::span<double> out) {
  check_sizes(ax.size(), {ay.size(), bx.size(), by.size(), out.size()});
  table(active_backend())
      .point_distances(ax.data(), ay.data(), bx.data(), by.data(), out.data(), ax.size());
}

double sum_of_squares(std::span<const double> values) {
  return table(active_backend()).sum_of_squares(values.data(), values.size());
}

}  // namespace gatevio::kernels
