#pragma once

#include "gatevio/camera.hpp"
#include "gatevio/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace gatevio {

struct VisionConfig {
  double probe_depth_m = 3.0;
  double assoc_max_dist_px = 75.0;
  double assoc_min_area_ratio = 0.2;
  double max_gate_range_m = 15.0;
  double min_corner_score = 0.3;
  int min_corners_per_gate = 2;
  /// Frame-level requirement on the total corner count across all gates;
  /// 0 disables it. Used to express "N corners across concurrently
  /// visible gates" settings larger than a single gate can provide.
  int min_corners_per_frame = 0;

  void validate() const;
};

/// Gravity-aligned image directions at a detection.
struct ImageAxes {
  Vec2 up;
  Vec2 right;
};

/// Projects world up around a probe point placed probe_depth_m along the
/// ray through centroid_norm. right is up rotated by -90 deg in the image:
/// right = [-up.v, up.u]. Throws Error(DegenerateProjection) when either
/// probe offset lands behind the camera or the two projections coincide.
ImageAxes image_up_right(const NominalState& state, const Extrinsics& ext,
                         const Vec2& centroid_norm, const VisionConfig& cfg);

/// Fills corners_norm from corners_px for present corners. Corners that
/// fail to undistort are marked absent.
GateDetection with_normalized(const GateDetection& det, const CameraModel& cam);

/// Assigns present corners to TL/TR/BR/BL by maximizing the summed quadrant
/// score over all injective assignments. The incoming labeling wins ties,
/// which makes the operation idempotent. Detections with fewer than two
/// present corners are returned unchanged.
GateDetection reorder_corners(const GateDetection& det, const Vec2& mu_up, const Vec2& mu_right);

/// Spatial and scale consistency of one detection against one map gate.
struct PairCost {
  double distance_px = 0.0;
  double area_ratio = 0.0;
  double cost() const { return distance_px / area_ratio; }
};

struct Association {
  std::size_t detection = 0;  ///< index into the input detections
  int gate_id = 0;
  PairCost pair;
};

/// Computes d and rho for a detection against a gate under the given state,
/// or nullopt when the gate is not a candidate (outside range / field of
/// view, or a needed corner is behind the camera).
std::optional<PairCost> association_pair_cost(const GateDetection& det, const Gate& gate,
                                              const NominalState& state, const Extrinsics& ext,
                                              const CameraModel& cam, const VisionConfig& cfg);

/// One-to-one assignment over a detections x gates cost table. Pairs must
/// satisfy d < assoc_max_dist_px and rho > assoc_min_area_ratio. Among
/// feasible assignments the one matching the most detections wins; ties are
/// broken by the smallest total d/rho.
std::vector<Association> solve_assignment(
    const std::vector<std::vector<std::optional<PairCost>>>& table, std::span<const int> gate_ids,
    const VisionConfig& cfg);

std::vector<Association> associate(std::span<const GateDetection> dets, const GateMap& map,
                                   const NominalState& state, const Extrinsics& ext,
                                   const CameraModel& cam, const VisionConfig& cfg);

/// Keeps the current labels or swaps TL<->TR and BL<->BR, whichever
/// reprojects with the lower total error. Exact ties keep the input.
GateDetection resolve_flip(const GateDetection& det, const Gate& gate, const NominalState& state,
                           const Extrinsics& ext, const CameraModel& cam);

struct FrontendOutput {
  std::vector<CornerMeasurement> measurements;
  /// Associated detections after reordering and flip resolution, before
  /// score/min-corner filtering; gate_id is set.
  std::vector<GateDetection> associated;
  int reorder_skipped = 0;
};

/// reorder -> associate -> resolve_flip -> per-gate filtering.
FrontendOutput build_measurements(std::span<const GateDetection> dets, const GateMap& map,
                                  const NominalState& state, const Extrinsics& ext,
                                  const CameraModel& cam, const VisionConfig& cfg);

}  // namespace gatevio
