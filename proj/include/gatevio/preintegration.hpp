#pragma once

#include "gatevio/types.hpp"

#include <span>
#include <vector>

namespace gatevio {

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat9x15 = Eigen::Matrix<double, 9, 15>;

/// Relative motion between two keyframes, expressed in the first keyframe's
/// body frame and independent of its absolute state.
struct PreintegratedImu {
  Vec3 dp = Vec3::Zero();
  Vec3 dv = Vec3::Zero();
  UnitQuaternion dq;
  double dt_total = 0.0;
  /// Covariance of [dp, dv, dtheta] (dtheta a right perturbation of dq).
  Mat9 cov9 = Mat9::Zero();
  Vec3 bias_a_lin = Vec3::Zero();
  Vec3 bias_w_lin = Vec3::Zero();

  /// First-order sensitivities to the bias linearization point. They enter
  /// the optimizer's Jacobians; residual values always come from an exact
  /// re-preintegration at the current bias.
  Mat3 dp_dba = Mat3::Zero();
  Mat3 dp_dbw = Mat3::Zero();
  Mat3 dv_dba = Mat3::Zero();
  Mat3 dv_dbw = Mat3::Zero();
  Mat3 dq_dbw = Mat3::Zero();

  /// Readings retained for re-preintegration. Reading i is held over
  /// [t_i, t_{i+1}]; the last reading only marks the end time.
  std::vector<ImuSample> samples;
};

/// Forward-Euler accumulation over [samples.front().t, samples.back().t].
/// A single reading yields the identity increment with dt_total = 0.
/// Throws Error(EmptyStream) or Error(NonMonotonicTimestamp).
PreintegratedImu preintegrate(std::span<const ImuSample> samples, const Vec3& bias_a,
                              const Vec3& bias_w, const NoiseParams& noise);

/// Re-runs preintegrate on the retained readings at a new bias.
PreintegratedImu repreintegrate(const PreintegratedImu& preint, const Vec3& bias_a,
                                const Vec3& bias_w, const NoiseParams& noise);

/// Readings covering exactly [t0, t1]: the reading held at t0 (retimed to
/// t0), every reading strictly inside, and an end marker at t1.
std::vector<ImuSample> slice_imu(std::span<const ImuSample> stream, double t0, double t1);

/// [R_k^T(p1 - p0 - v0 T - g T^2/2) - dp; R_k^T(v1 - v0 - g T) - dv;
///  log(dq^-1 q0^-1 q1)] with T = preint.dt_total.
Vec9 imu_residual(const NominalState& x0, const NominalState& x1, const PreintegratedImu& preint,
                  const Vec3& gravity);

struct ImuResidualJacobians {
  Vec9 r;
  Mat9x15 J0;  ///< w.r.t. the error state of x0 (bias columns included)
  Mat9x15 J1;  ///< w.r.t. the error state of x1
};

/// Residual plus analytic Jacobians, linearized at preint's bias.
ImuResidualJacobians imu_residual_jacobians(const NominalState& x0, const NominalState& x1,
                                            const PreintegratedImu& preint, const Vec3& gravity);

}  // namespace gatevio
