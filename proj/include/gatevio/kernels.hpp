#pragma once

// Batched structure-of-arrays kernels for the data-parallel parts of the
// toolkit: moving many landmarks into a camera frame, projecting and
// distorting them, and reducing error series. Each kernel has a scalar
// reference implementation and, on x86-64, an AVX2/FMA variant chosen at
// runtime. Setting GATEVIO_SIMD=scalar in the environment forces the
// reference path.

#include "gatevio/camera.hpp"

#include <cstdint>
#include <span>
#include <string_view>

namespace gatevio::kernels {

enum class Backend { Scalar, Avx2 };

std::string_view to_string(Backend b);

bool backend_available(Backend b);

/// Backend used by the free functions below.
Backend active_backend();

/// Overrides the runtime choice. Throws Error(ValidationError) if the
/// backend is not compiled in or not supported by this CPU.
void set_backend(Backend b);

/// out = R * p + t for every point.
void transform_points(const Mat3& R, const Vec3& t, std::span<const double> x,
                      std::span<const double> y, std::span<const double> z, std::span<double> ox,
                      std::span<double> oy, std::span<double> oz);

/// Pinhole projection. valid[i] = 1 iff z[i] > kDepthEpsilon; u/v of invalid
/// points are set to 0.
void project_points(std::span<const double> x, std::span<const double> y,
                    std::span<const double> z, std::span<double> u, std::span<double> v,
                    std::span<std::uint8_t> valid);

/// Normalized -> pixel including radial-tangential distortion.
void distort_to_pixel(const CameraModel& cam, std::span<const double> u, std::span<const double> v,
                      std::span<double> px, std::span<double> py);

/// out[i] = |(ax[i], ay[i]) - (bx[i], by[i])|.
void point_distances(std::span<const double> ax, std::span<const double> ay,
                     std::span<const double> bx, std::span<const double> by, std::span<double> out);

double sum_of_squares(std::span<const double> values);

/// Per-backend entry points, exposed for equivalence testing.
struct KernelTable {
  void (*transform_points)(const double* R, const double* t, const double* x, const double* y,
                           const double* z, double* ox, double* oy, double* oz, std::size_t n);
  void (*project_points)(const double* x, const double* y, const double* z, double* u, double* v,
                         std::uint8_t* valid, std::size_t n);
  void (*distort_to_pixel)(const double* intr, const double* u, const double* v, double* px,
                           double* py, std::size_t n);
  void (*point_distances)(const double* ax, const double* ay, const double* bx, const double* by,
                          double* out, std::size_t n);
  double (*sum_of_squares)(const double* values, std::size_t n);
};

/// Throws Error(ValidationError) when the backend is unavailable.
const KernelTable& table(Backend b);

}  // namespace gatevio::kernels
