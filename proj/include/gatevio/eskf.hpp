#pragma once

#include "gatevio/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace gatevio {

using Mat2x15 = Eigen::Matrix<double, 2, 15>;

/// How a corner residual is weighted before the Kalman update.
enum class RobustMode {
  Huber,     ///< inflate R by 1/w, w = min(1, tau/e)
  Chi2Gate,  ///< reject when e^2 exceeds the 2-DOF 95% quantile
  None,      ///< w = 1 always
};

inline constexpr double kChi2Gate2Dof95 = 5.99;

struct EskfConfig {
  NoiseParams noise;
  double r_pixel_sigma = 2.0 / 400.0;  ///< corner noise std in normalized units
  double huber_tau = 3.0;              ///< Mahalanobis threshold
  int min_corners_per_gate = 2;
  Vec15 initial_cov_diag = default_initial_cov_diag();
  RobustMode robust_mode = RobustMode::Huber;
  bool scale_r_by_score = false;
  double max_measurement_age = 0.05;  ///< s; older frames are dropped
  double max_dt = 0.1;                ///< s; larger IMU gaps are refused

  static Vec15 default_initial_cov_diag();
  void validate() const;
};

/// e = sqrt(r^T S^-1 r); returns min(1, tau / e), and 1 for e == 0.
double huber_weight(const Vec2& r, const Mat2& S, double tau);

struct CornerResidual {
  Vec2 r;      ///< observed minus predicted, normalized coordinates
  Mat2x15 H;   ///< d(predicted)/d(error state)
};

/// Residual and Jacobian of one corner at a nominal state. Returns nullopt
/// when the landmark is behind the camera.
std::optional<CornerResidual> measurement_residual(const NominalState& x, const CornerMeasurement& z,
                                                   const Extrinsics& ext);

/// Continuous-time error dynamics F_c at the nominal state for one IMU
/// reading, block rows/cols ordered [p, v, theta, b_a, b_w].
Mat15 error_dynamics_jacobian(const NominalState& x, const Vec3& a_m, const Vec3& w_m);

/// Discrete process noise with the position/velocity coupling block.
Mat15 process_noise(const NoiseParams& noise, double dt);

/// One step of nominal kinematics (bias-corrected, gravity added).
NominalState propagate_nominal(const NominalState& x, const Vec3& a_m, const Vec3& w_m, double dt,
                               const Vec3& gravity);

enum class SkipReason { None, BehindCamera, TooFewCorners, Stale, Chi2Rejected };
std::string_view to_string(SkipReason r);

struct UpdateEntry {
  int gate_id = 0;
  CornerLabel label = CornerLabel::TL;
  double mahalanobis = 0.0;  ///< e, before reweighting
  double weight = 1.0;       ///< w
  bool applied = false;
  SkipReason skip = SkipReason::None;
};

struct UpdateReport {
  double t = 0.0;         ///< measurement timestamp
  double filter_t = 0.0;  ///< filter time at the update
  std::vector<UpdateEntry> entries;

  int applied_count() const;
};

/// Error-state Kalman filter over NominalState. Single writer: propagate and
/// update must be called in timestamp order from one thread.
class EskfEstimator {
 public:
  static EskfEstimator initialize(const Vec3& p0, const UnitQuaternion& q0, const EskfConfig& cfg,
                                  double t0 = 0.0);

  const NominalState& nominal() const { return nominal_; }
  const Covariance15& covariance() const { return P_; }
  const EskfConfig& config() const { return cfg_; }
  double time() const { return nominal_.t; }

  void set_nominal(const NominalState& x) { nominal_ = x; }
  void set_covariance(const Covariance15& P) { P_ = P; }

  /// Integrates from the current time to imu.t with the previously held
  /// reading (zero-order hold), then holds imu. The first reading after
  /// initialization at exactly t0 is only held. Throws
  /// Error(NonMonotonicTimestamp) or Error(ExcessiveDt) without modifying
  /// the filter.
  void propagate(const ImuSample& imu);

  /// Integrates the held reading up to time t (e.g. a camera timestamp
  /// between IMU ticks).
  void propagate_to(double t);

  /// Sequential robust update with one frame's measurements.
  UpdateReport update(std::span<const CornerMeasurement> measurements, const Extrinsics& ext);

 private:
  void integrate(const ImuSample& imu, double dt);

  EskfConfig cfg_;
  NominalState nominal_;
  Covariance15 P_ = Covariance15::Identity();
  std::optional<ImuSample> held_;
};

}  // namespace gatevio
