#pragma once

#include "gatevio/pipeline.hpp"
#include "gatevio/sim.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gatevio {

struct TrajectoryError {
  double e_t = 0.0;  ///< RMS translation error (m)
  double e_r = 0.0;  ///< RMS geodesic rotation error (deg)
  double e_v = 0.0;  ///< RMS velocity error (m/s)
  std::vector<double> t;
  std::vector<double> err_t, err_r, err_v;  ///< per-sample series

  std::size_t count() const { return t.size(); }
};

/// Reference interpolated (linear / slerp) to each estimate timestamp. An
/// estimate sample is skipped when its bracketing reference samples are
/// more than max_gap apart. No spatial alignment. Throws Error(NoOverlap)
/// when the time spans overlap by less than min_overlap or no sample
/// survives.
TrajectoryError trajectory_error(std::span<const NominalState> estimate,
                                 std::span<const NominalState> reference, double max_gap = 0.05,
                                 double min_overlap = 1.0);

struct ReprojectionStats {
  double mean_px = 0.0;
  double median_px = 0.0;
  double p95_px = 0.0;
  std::size_t count = 0;
  std::vector<double> errors_px;
};

ReprojectionStats summarize_reprojection(std::vector<double> errors_px);

/// Pixel distance between each detected corner and the projection (with
/// distortion) of its mapped corner at the state interpolated to the
/// detection time. Detections without gate_id, or outside the state span,
/// are skipped.
ReprojectionStats reprojection_error(std::span<const NominalState> states,
                                     std::span<const GateDetection> detections, const GateMap& map,
                                     const CameraModel& cam, const Extrinsics& ext);

enum class AblationVariant { Huber, Chi2, Naive };
std::string_view to_string(AblationVariant v);

struct AblationRow {
  AblationVariant variant = AblationVariant::Huber;
  double e_t = 0.0;
  bool diverged = false;  ///< e_t > divergence_threshold (or the filter failed)
};

/// Runs the filter from the true initial state with each robust-weighting
/// variant and scores it against the scenario truth.
std::vector<AblationRow> robustness_ablation(const Scenario& scenario, const PipelineConfig& cfg,
                                             std::span<const AblationVariant> variants,
                                             double divergence_threshold = 5.0);

struct SweepRow {
  int min_corners = 0;
  double e_t = 0.0;
  std::size_t updates = 0;  ///< frames that produced an update
};

/// Re-runs the filter with each minimum-corner setting. Values up to 4 are
/// per-gate minimums; larger values require that many corners in total
/// across the gates of one frame (per-gate minimum 2).
std::vector<SweepRow> min_corner_sweep(const Scenario& scenario, const PipelineConfig& cfg,
                                       std::span<const int> values);

/// Filter run from the scenario's true initial state.
FilterRun run_filter_on(const Scenario& scenario, const PipelineConfig& cfg,
                        bool track_covariance = false);

/// CSV of a per-sample error series: t,err_t,err_r_deg,err_v.
std::string error_series_csv(const TrajectoryError& e);

}  // namespace gatevio
