#include "gatevio/eskf.hpp"

#include "gatevio/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace gatevio {
namespace {

void symmetrize(Mat15& P) { P = 0.5 * (P + P.transpose()).eval(); }

}  // namespace

Vec15 EskfConfig::default_initial_cov_diag() {
  Vec15 d;
  d << Vec3::Constant(0.5 * 0.5), Vec3::Constant(0.1 * 0.1), Vec3::Constant(0.05 * 0.05),
      Vec3::Constant(0.05 * 0.05), Vec3::Constant(0.005 * 0.005);
  return d;
}

void EskfConfig::validate() const {
  noise.validate();
  if (!(r_pixel_sigma > 0.0)) throw Error(ErrorCode::ValidationError, "r_pixel_sigma must be positive");
  if (!(huber_tau > 0.0)) throw Error(ErrorCode::ValidationError, "huber_tau must be positive");
  if (min_corners_per_gate < 1 || min_corners_per_gate > 4) {
    throw Error(ErrorCode::ValidationError, "min_corners_per_gate must be in 1..4");
  }
  if (!((initial_cov_diag.array() > 0.0).all())) {
    throw Error(ErrorCode::ValidationError, "initial_cov_diag must be positive");
  }
  if (!(max_dt > 0.0 && max_measurement_age >= 0.0)) {
    throw Error(ErrorCode::ValidationError, "max_dt / max_measurement_age invalid");
  }
}

double huber_weight(const Vec2& r, const Mat2& S, double tau) {
  const double e2 = r.dot(S.ldlt().solve(r));
  const double e = std::sqrt(std::max(e2, 0.0));
  if (e <= tau) return 1.0;
  return tau / e;
}

std::optional<CornerResidual> measurement_residual(const NominalState& x, const CornerMeasurement& z,
                                                   const Extrinsics& ext) {
  const Mat3 R_wb = x.q.rotation_matrix();
  const Mat3 R_bc = ext.R_bc.rotation_matrix();
  const Vec3 p_b = R_wb.transpose() * (z.p_gw - x.p);
  const Vec3 p_c = R_bc.transpose() * (p_b - ext.p_bc);
  const auto predicted = try_project(p_c);
  if (!predicted) return std::nullopt;

  const Mat23 J = project_jacobian(p_c);
  CornerResidual out;
  out.r = z.u_norm - *predicted;
  out.H.setZero();
  out.H.block<2, 3>(0, idx::kPos) = -J * R_bc.transpose() * R_wb.transpose();
  out.H.block<2, 3>(0, idx::kAtt) = J * R_bc.transpose() * skew(p_b);
  return out;
}

Mat15 error_dynamics_jacobian(const NominalState& x, const Vec3& a_m, const Vec3& w_m) {
  const Mat3 R = x.q.rotation_matrix();
  Mat15 F = Mat15::Zero();
  F.block<3, 3>(idx::kPos, idx::kVel) = Mat3::Identity();
  // Attitude error is a body-frame (right) perturbation, so the specific
  // force enters un-rotated inside the skew.
  F.block<3, 3>(idx::kVel, idx::kAtt) = -R * skew(a_m - x.b_a);
  F.block<3, 3>(idx::kVel, idx::kBa) = -R;
  F.block<3, 3>(idx::kAtt, idx::kAtt) = -skew(w_m - x.b_w);
  F.block<3, 3>(idx::kAtt, idx::kBw) = -Mat3::Identity();
  return F;
}

Mat15 process_noise(const NoiseParams& n, double dt) {
  const double sa2 = n.sigma_a * n.sigma_a;
  const Mat3 I = Mat3::Identity();
  Mat15 Q = Mat15::Zero();
  Q.block<3, 3>(idx::kPos, idx::kPos) = I * sa2 * dt * dt * dt / 3.0;
  Q.block<3, 3>(idx::kPos, idx::kVel) = I * sa2 * dt * dt / 2.0;
  Q.block<3, 3>(idx::kVel, idx::kPos) = I * sa2 * dt * dt / 2.0;
  Q.block<3, 3>(idx::kVel, idx::kVel) = I * sa2 * dt;
  Q.block<3, 3>(idx::kAtt, idx::kAtt) = I * n.sigma_w * n.sigma_w * dt;
  Q.block<3, 3>(idx::kBa, idx::kBa) = I * n.sigma_ba * n.sigma_ba * dt;
  Q.block<3, 3>(idx::kBw, idx::kBw) = I * n.sigma_bw * n.sigma_bw * dt;
  return Q;
}

NominalState propagate_nominal(const NominalState& x, const Vec3& a_m, const Vec3& w_m, double dt,
                               const Vec3& gravity) {
  NominalState out = x;
  const Vec3 a_w = x.q.rotate(a_m - x.b_a) + gravity;
  out.p = x.p + x.v * dt + 0.5 * a_w * dt * dt;
  out.v = x.v + a_w * dt;
  out.q = x.q * so3_exp((w_m - x.b_w) * dt);
  out.t = x.t + dt;
  return out;
}

std::string_view to_string(SkipReason r) {
  switch (r) {
    case SkipReason::None: return "none";
    case SkipReason::BehindCamera: return "behind_camera";
    case SkipReason::TooFewCorners: return "too_few_corners";
    case SkipReason::Stale: return "stale";
    case SkipReason::Chi2Rejected: return "chi2_rejected";
  }
  return "?";
}

int UpdateReport::applied_count() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(), [](const UpdateEntry& e) { return e.applied; }));
}

EskfEstimator EskfEstimator::initialize(const Vec3& p0, const UnitQuaternion& q0,
                                        const EskfConfig& cfg, double t0) {
  cfg.validate();
  EskfEstimator est;
  est.cfg_ = cfg;
  est.nominal_.t = t0;
  est.nominal_.p = p0;
  est.nominal_.q = q0;
  est.P_ = cfg.initial_cov_diag.asDiagonal();
  return est;
}

void EskfEstimator::integrate(const ImuSample& imu, double dt) {
  const Mat15 F = Mat15::Identity() + error_dynamics_jacobian(nominal_, imu.a_m, imu.w_m) * dt;
  nominal_ = propagate_nominal(nominal_, imu.a_m, imu.w_m, dt, cfg_.noise.gravity);
  P_ = F * P_ * F.transpose() + process_noise(cfg_.noise, dt);
  symmetrize(P_);
}

void EskfEstimator::propagate(const ImuSample& imu) {
  const double dt = imu.t - nominal_.t;
  if (!held_ && dt == 0.0) {
    held_ = imu;
    return;
  }
  if (!(dt > 0.0)) {
    throw Error(ErrorCode::NonMonotonicTimestamp,
                "imu t=" + std::to_string(imu.t) + " not after filter t=" + std::to_string(nominal_.t));
  }
  if (dt > cfg_.max_dt) throw Error(ErrorCode::ExcessiveDt, "dt=" + std::to_string(dt));
  integrate(held_ ? *held_ : imu, dt);
  nominal_.t = imu.t;
  held_ = imu;
}

void EskfEstimator::propagate_to(double t) {
  const double dt = t - nominal_.t;
  if (dt == 0.0) return;
  if (dt < 0.0) throw Error(ErrorCode::NonMonotonicTimestamp, "propagate_to into the past");
  if (dt > cfg_.max_dt) throw Error(ErrorCode::ExcessiveDt, "dt=" + std::to_string(dt));
  if (!held_) throw Error(ErrorCode::EmptyStream, "no IMU reading held");
  integrate(*held_, dt);
  nominal_.t = t;
}

UpdateReport EskfEstimator::update(std::span<const CornerMeasurement> measurements,
                                   const Extrinsics& ext) {
  UpdateReport report;
  report.filter_t = nominal_.t;
  if (measurements.empty()) return report;
  report.t = measurements.front().t;
  report.entries.reserve(measurements.size());

  const bool stale = nominal_.t - report.t > cfg_.max_measurement_age;
  std::map<int, int> per_gate;
  for (const CornerMeasurement& z : measurements) ++per_gate[z.gate_id];

  const double r_var = cfg_.r_pixel_sigma * cfg_.r_pixel_sigma;
  for (const CornerMeasurement& z : measurements) {
    UpdateEntry entry;
    entry.gate_id = z.gate_id;
    entry.label = z.label;
    if (stale) {
      entry.skip = SkipReason::Stale;
      report.entries.push_back(entry);
      continue;
    }
    if (per_gate[z.gate_id] < cfg_.min_corners_per_gate) {
      entry.skip = SkipReason::TooFewCorners;
      report.entries.push_back(entry);
      continue;
    }
    const auto res = measurement_residual(nominal_, z, ext);
    if (!res) {
      entry.skip = SkipReason::BehindCamera;
      report.entries.push_back(entry);
      continue;
    }

    Mat2 R_cov = Mat2::Identity() * r_var;
    if (cfg_.scale_r_by_score && z.score > 0.0) R_cov /= z.score;
    const Eigen::Matrix<double, 15, 2> PHt = P_ * res->H.transpose();
    const Mat2 HPHt = res->H * PHt;
    const Mat2 S = HPHt + R_cov;
    const double e = std::sqrt(std::max(res->r.dot(S.ldlt().solve(res->r)), 0.0));
    entry.mahalanobis = e;

    double w = 1.0;
    switch (cfg_.robust_mode) {
      case RobustMode::Huber:
        w = e <= cfg_.huber_tau ? 1.0 : cfg_.huber_tau / e;
        break;
      case RobustMode::Chi2Gate:
        if (e * e > kChi2Gate2Dof95) {
          entry.skip = SkipReason::Chi2Rejected;
          report.entries.push_back(entry);
          continue;
        }
        break;
      case RobustMode::None:
        break;
    }
    entry.weight = w;

    const Mat2 S_eff = HPHt + R_cov / w;
    const Eigen::Matrix<double, 15, 2> K = PHt * S_eff.inverse();
    const ErrorState dx = K * res->r;
    nominal_ = compose_state(nominal_, dx);
    P_ = (Mat15::Identity() - K * res->H) * P_;
    symmetrize(P_);
    entry.applied = true;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace gatevio
