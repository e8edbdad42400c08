#pragma once

// Shared helpers for the unit and acceptance tests: random states and
// central finite-difference Jacobians on the error-state manifold.

#include "gatevio/fgo.hpp"
#include "gatevio/io.hpp"
#include "gatevio/types.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

namespace gatevio::test {

inline constexpr double kDeg = std::numbers::pi / 180.0;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec3 uniform_vec(std::mt19937_64& rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

inline UnitQuaternion random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return UnitQuaternion(n(rng), n(rng), n(rng), n(rng));
}

inline NominalState random_state(std::mt19937_64& rng) {
  NominalState x;
  x.p = uniform_vec(rng, -5.0, 5.0);
  x.v = uniform_vec(rng, -3.0, 3.0);
  x.q = random_rotation(rng);
  x.b_a = uniform_vec(rng, -0.2, 0.2);
  x.b_w = uniform_vec(rng, -0.02, 0.02);
  return x;
}

inline ErrorState unit(int i) {
  ErrorState e = ErrorState::Zero();
  e(i) = 1.0;
  return e;
}

/// d f(x (+) dx) / d dx at dx = 0, central differences.
template <typename F>
Eigen::MatrixXd numeric_state_jacobian(F&& f, const NominalState& x, double eps = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), 15);
  for (int i = 0; i < 15; ++i) {
    const Eigen::VectorXd fp = f(compose_state(x, unit(i) * eps));
    const Eigen::VectorXd fm = f(compose_state(x, -unit(i) * eps));
    J.col(i) = (fp - fm) / (2.0 * eps);
  }
  return J;
}

/// d f(R exp(phi)) / d phi at phi = 0, central differences.
template <typename F>
Eigen::MatrixXd numeric_rotation_jacobian(F&& f, const UnitQuaternion& R, double eps = 1e-6) {
  const Eigen::VectorXd f0 = f(R);
  Eigen::MatrixXd J(f0.size(), 3);
  for (int i = 0; i < 3; ++i) {
    const Vec3 d = Vec3::Unit(i) * eps;
    J.col(i) = (f(R * so3_exp(d)) - f(R * so3_exp(-d))) / (2.0 * eps);
  }
  return J;
}

/// Frobenius-norm relative error of `analytic` against the reference.
inline double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& reference) {
  return (analytic - reference).norm() / std::max(reference.norm(), 1e-12);
}

inline std::filesystem::path scenario_path(const std::string& name) {
  return std::filesystem::path(GATEVIO_SCENARIO_DIR) / name;
}

inline io::RunConfig load_scenario(const std::string& name) {
  return io::load_run_config(scenario_path(name));
}

/// A landmark in front of the camera of x at depth in [2, 10] m.
inline Vec3 landmark_in_view(std::mt19937_64& rng, const NominalState& x, const Extrinsics& ext) {
  const double z = uniform(rng, 2.0, 10.0);
  const Vec3 p_c(uniform(rng, -0.6, 0.6) * z, uniform(rng, -0.45, 0.45) * z, z);
  return camera_to_world(p_c, x.p, x.q, ext);
}

}  // namespace gatevio::test
