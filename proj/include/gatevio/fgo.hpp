#pragma once

#include "gatevio/eskf.hpp"
#include "gatevio/preintegration.hpp"

#include <optional>
#include <span>
#include <vector>

namespace gatevio {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat6x15 = Eigen::Matrix<double, 6, 15>;

struct FgoWeights {
  Mat2 sigma_corner = Mat2::Identity() * (2.0 / 400.0) * (2.0 / 400.0);
  Mat6 sigma_prior = default_sigma_prior();
  Mat3 sigma_ext = default_sigma_ext();
  double huber_delta_corner = 3.0;  ///< in whitened (sigma) units
  double kf_time_threshold = 0.1;   ///< s
  /// Bias random-walk factor between consecutive keyframes, weighted by the
  /// IMU bias noise densities. Without it the biases are unconstrained
  /// between keyframes except through the IMU factors.
  bool bias_walk_factor = true;

  static Mat6 default_sigma_prior();  ///< diag(0.5^2 m^2, (5 deg)^2)
  static Mat3 default_sigma_ext();    ///< (2 deg)^2 I
  /// Throws Error(ValidationError) unless every covariance is symmetric
  /// positive definite and the scalars are positive.
  void validate() const;
};

/// A detection frame after the vision frontend.
struct MeasurementFrame {
  double t = 0.0;
  std::vector<CornerMeasurement> measurements;
};

struct Keyframe {
  double t = 0.0;
  NominalState state;
  std::vector<CornerMeasurement> measurements;
  std::optional<NominalState> vins_prior;
  bool visual_less = false;
};

struct FactorGraph {
  std::vector<Keyframe> keyframes;
  std::vector<PreintegratedImu> preints;  ///< preints[k] spans keyframes k -> k+1
  UnitQuaternion ext_rotation;            ///< decision variable R_bc
  UnitQuaternion ext_nominal;             ///< R_bc prior mean
  Vec3 p_bc = Vec3::Zero();               ///< held fixed
  bool refine_extrinsics = true;
  FgoWeights weights;
  NoiseParams noise;

  /// Throws Error(ValidationError) on a malformed graph.
  void validate() const;
};

// --- residuals ---------------------------------------------------------------

/// z.u_norm - h(x, p_gw) with the given camera-to-body rotation; nullopt when
/// the landmark is behind the camera.
std::optional<Vec2> corner_residual(const NominalState& x, const UnitQuaternion& ext_rotation,
                                    const Vec3& p_bc, const CornerMeasurement& z);

struct CornerFactorJacobian {
  Vec2 r;
  Mat2x15 J_x;  ///< d r / d(error state of x)
  Mat23 J_ext;  ///< d r / d(right perturbation of ext_rotation)
};
std::optional<CornerFactorJacobian> corner_residual_jacobian(const NominalState& x,
                                                             const UnitQuaternion& ext_rotation,
                                                             const Vec3& p_bc,
                                                             const CornerMeasurement& z);

/// state_boxminus(x, prior).
Vec6 prior_residual(const NominalState& x, const NominalState& prior);
Mat6x15 prior_residual_jacobian(const NominalState& x, const NominalState& prior);

/// Log(nominal^-1 * ext_rotation).
Vec3 extrinsics_residual(const UnitQuaternion& ext_rotation, const UnitQuaternion& nominal);
Mat3 extrinsics_residual_jacobian(const UnitQuaternion& ext_rotation, const UnitQuaternion& nominal);

/// [b_a1 - b_a0; b_w1 - b_w0]; Jacobians are constant (-I / +I).
Vec6 bias_walk_residual(const NominalState& x0, const NominalState& x1);

// --- keyframes -----------------------------------------------------------------

struct KeyframeSlot {
  double t = 0.0;
  std::optional<std::size_t> frame;  ///< index into the frames; empty for visual-less
};

/// A keyframe at start_t, at every frame with measurements inside
/// [start_t, end_t], and at end_t; visual-less keyframes are added so that
/// no gap exceeds tau_t. When grid is non-empty (sorted IMU timestamps)
/// inserted keyframes are placed on it where possible, so that keyframe
/// intervals align with IMU sample boundaries.
std::vector<KeyframeSlot> select_keyframes(std::span<const MeasurementFrame> frames, double start_t,
                                           double end_t, double tau_t,
                                           std::span<const double> grid = {},
                                           bool insert_visual_less = true);

// --- optimization ----------------------------------------------------------------

struct LmOptions {
  int max_iters = 50;
  double lambda_init = 1e-4;
  double rel_cost_tol = 1e-8;  ///< stop when (F - F_new) / F falls below this
  double grad_tol = 1e-8;      ///< stop when |grad F|_inf falls below this
  double abs_cost_tol = 1e-12; ///< stop when F itself is below this
  double step_tol = 1e-12;     ///< stop when |h| <= step_tol * (|x| + step_tol)
  int max_escalations = 10;    ///< damping increases tolerated for one failed solve
};

struct LmIteration {
  int iter = 0;
  double cost = 0.0;      ///< cost at the start of the iteration
  double new_cost = 0.0;  ///< cost at the trial point
  double lambda = 0.0;
  double gradient_norm = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
};

enum class LmTermination { CostTolerance, RelativeDecrease, Gradient, StepSize, MaxIterations };
std::string_view to_string(LmTermination t);

struct FgoResult {
  std::vector<NominalState> states;  ///< one per keyframe
  UnitQuaternion ext_rotation;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double gradient_norm = 0.0;
  std::vector<LmIteration> log;
  bool converged = false;  ///< false: max_iters reached, best iterate returned
  LmTermination termination = LmTermination::MaxIterations;
};

/// Joint cost: squared whitened IMU, bias-walk, prior and extrinsics
/// residuals, plus Huber-robustified whitened corner residuals.
double graph_cost(const FactorGraph& graph);

/// Levenberg-Marquardt over all keyframe states and (optionally) the
/// camera-to-body rotation. Preintegrations are rebuilt from their samples
/// whenever a keyframe bias moves. Throws Error(SingularNormalEquations)
/// when the damped system cannot be solved after max_escalations damping
/// increases.
FgoResult optimize(const FactorGraph& graph, const LmOptions& options = {});

// --- graph construction ----------------------------------------------------------

struct GraphOptions {
  bool visual_less_keyframes = true;
  bool refine_extrinsics = true;
  bool vins_priors = true;
};

/// Linear / slerp interpolation inside a time-sorted trajectory. nullopt
/// outside its span.
std::optional<NominalState> interpolate_state(std::span<const NominalState> trajectory, double t);

/// Keyframes from select_keyframes, initialized (and anchored) by the
/// filter trajectory interpolated at each keyframe time.
FactorGraph build_factor_graph(std::span<const ImuSample> imu, std::span<const MeasurementFrame> frames,
                               std::span<const NominalState> vins, const Extrinsics& nominal_ext,
                               const FgoWeights& weights, const NoiseParams& noise,
                               const GraphOptions& options = {});

/// Dense trajectory: every keyframe state, plus the states reached by
/// integrating each interval's IMU readings forward from its start keyframe.
std::vector<NominalState> densify(const FactorGraph& graph, std::span<const NominalState> states);

}  // namespace gatevio
