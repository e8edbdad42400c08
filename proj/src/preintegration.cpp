#include "gatevio/preintegration.hpp"

#include "gatevio/error.hpp"

#include <algorithm>
#include <string>

namespace gatevio {

PreintegratedImu preintegrate(std::span<const ImuSample> samples, const Vec3& bias_a,
                              const Vec3& bias_w, const NoiseParams& noise) {
  if (samples.empty()) throw Error(ErrorCode::EmptyStream, "no IMU readings to preintegrate");
  PreintegratedImu out;
  out.bias_a_lin = bias_a;
  out.bias_w_lin = bias_w;
  out.samples.assign(samples.begin(), samples.end());

  const double var_a = noise.sigma_a * noise.sigma_a;
  const double var_w = noise.sigma_w * noise.sigma_w;
  Mat3 dR = Mat3::Identity();
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const double dt = samples[i + 1].t - samples[i].t;
    if (!(dt > 0.0)) {
      throw Error(ErrorCode::NonMonotonicTimestamp, "reading " + std::to_string(i + 1) + " at t=" +
                                                        std::to_string(samples[i + 1].t));
    }
    const Vec3 acc = samples[i].a_m - bias_a;
    const Vec3 phi = (samples[i].w_m - bias_w) * dt;
    const UnitQuaternion step = so3_exp(phi);
    const Mat3 step_R = step.rotation_matrix();
    const Mat3 Jr = so3_right_jacobian(phi);
    const Mat3 acc_skew = skew(acc);
    const double dt2 = dt * dt;

    // Covariance of [dp, dv, dtheta].
    Mat9 A = Mat9::Identity();
    A.block<3, 3>(0, 3) = Mat3::Identity() * dt;
    A.block<3, 3>(0, 6) = -0.5 * dR * acc_skew * dt2;
    A.block<3, 3>(3, 6) = -dR * acc_skew * dt;
    A.block<3, 3>(6, 6) = step_R.transpose();
    Eigen::Matrix<double, 9, 3> Ba = Eigen::Matrix<double, 9, 3>::Zero();
    Ba.block<3, 3>(0, 0) = 0.5 * dR * dt2;
    Ba.block<3, 3>(3, 0) = dR * dt;
    Eigen::Matrix<double, 9, 3> Bw = Eigen::Matrix<double, 9, 3>::Zero();
    Bw.block<3, 3>(6, 0) = Jr * dt;
    out.cov9 = A * out.cov9 * A.transpose() + Ba * Ba.transpose() * (var_a / dt) +
               Bw * Bw.transpose() * (var_w / dt);

    // Bias sensitivities; position first since it reads the old velocity terms.
    out.dp_dba += out.dv_dba * dt - 0.5 * dR * dt2;
    out.dp_dbw += out.dv_dbw * dt - 0.5 * dR * acc_skew * out.dq_dbw * dt2;
    out.dv_dba -= dR * dt;
    out.dv_dbw -= dR * acc_skew * out.dq_dbw * dt;
    out.dq_dbw = step_R.transpose() * out.dq_dbw - Jr * dt;

    // Increments, all evaluated at the start of the interval.
    out.dp += out.dv * dt + 0.5 * dR * acc * dt2;
    out.dv += dR * acc * dt;
    out.dq = out.dq * step;
    dR = out.dq.rotation_matrix();
    out.dt_total += dt;
  }
  out.cov9 = 0.5 * (out.cov9 + out.cov9.transpose()).eval();
  return out;
}

PreintegratedImu repreintegrate(const PreintegratedImu& preint, const Vec3& bias_a,
                                const Vec3& bias_w, const NoiseParams& noise) {
  return preintegrate(preint.samples, bias_a, bias_w, noise);
}

std::vector<ImuSample> slice_imu(std::span<const ImuSample> stream, double t0, double t1) {
  if (stream.empty()) throw Error(ErrorCode::EmptyStream, "empty IMU stream");
  if (!(t1 > t0)) throw Error(ErrorCode::NonMonotonicTimestamp, "slice end not after start");
  // Last reading at or before t0 (or the first reading if none precedes t0).
  auto after = std::upper_bound(stream.begin(), stream.end(), t0,
                                [](double t, const ImuSample& s) { return t < s.t; });
  auto held = after == stream.begin() ? stream.begin() : std::prev(after);

  std::vector<ImuSample> out;
  ImuSample first = *held;
  first.t = t0;
  out.push_back(first);
  for (auto it = after; it != stream.end() && it->t < t1; ++it) out.push_back(*it);
  ImuSample last = out.back();
  last.t = t1;
  out.push_back(last);
  return out;
}

Vec9 imu_residual(const NominalState& x0, const NominalState& x1, const PreintegratedImu& pre,
                  const Vec3& g) {
  const double T = pre.dt_total;
  const Mat3 R0t = x0.q.rotation_matrix().transpose();
  Vec9 r;
  r.segment<3>(0) = R0t * (x1.p - x0.p - x0.v * T - 0.5 * g * T * T) - pre.dp;
  r.segment<3>(3) = R0t * (x1.v - x0.v - g * T) - pre.dv;
  r.segment<3>(6) = so3_log(pre.dq.inverse() * (x0.q.inverse() * x1.q));
  return r;
}

ImuResidualJacobians imu_residual_jacobians(const NominalState& x0, const NominalState& x1,
                                            const PreintegratedImu& pre, const Vec3& g) {
  const double T = pre.dt_total;
  const Mat3 R0 = x0.q.rotation_matrix();
  const Mat3 R0t = R0.transpose();
  const Mat3 R1 = x1.q.rotation_matrix();
  const Vec3 wp = R0t * (x1.p - x0.p - x0.v * T - 0.5 * g * T * T);
  const Vec3 wv = R0t * (x1.v - x0.v - g * T);
  const UnitQuaternion E = pre.dq.inverse() * (x0.q.inverse() * x1.q);

  ImuResidualJacobians out;
  out.r.segment<3>(0) = wp - pre.dp;
  out.r.segment<3>(3) = wv - pre.dv;
  out.r.segment<3>(6) = so3_log(E);
  const Mat3 Jr_inv = so3_right_jacobian_inv(out.r.segment<3>(6));

  out.J0.setZero();
  out.J1.setZero();
  // position block
  out.J0.block<3, 3>(0, idx::kPos) = -R0t;
  out.J0.block<3, 3>(0, idx::kVel) = -R0t * T;
  out.J0.block<3, 3>(0, idx::kAtt) = skew(wp);
  out.J0.block<3, 3>(0, idx::kBa) = -pre.dp_dba;
  out.J0.block<3, 3>(0, idx::kBw) = -pre.dp_dbw;
  out.J1.block<3, 3>(0, idx::kPos) = R0t;
  // velocity block
  out.J0.block<3, 3>(3, idx::kVel) = -R0t;
  out.J0.block<3, 3>(3, idx::kAtt) = skew(wv);
  out.J0.block<3, 3>(3, idx::kBa) = -pre.dv_dba;
  out.J0.block<3, 3>(3, idx::kBw) = -pre.dv_dbw;
  out.J1.block<3, 3>(3, idx::kVel) = R0t;
  // attitude block
  out.J0.block<3, 3>(6, idx::kAtt) = -Jr_inv * R1.transpose() * R0;
  out.J0.block<3, 3>(6, idx::kBw) = -Jr_inv * E.rotation_matrix().transpose() * pre.dq_dbw;
  out.J1.block<3, 3>(6, idx::kAtt) = Jr_inv;
  return out;
}

}  // namespace gatevio
