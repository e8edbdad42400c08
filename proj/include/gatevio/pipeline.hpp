#pragma once

#include "gatevio/eskf.hpp"
#include "gatevio/fgo.hpp"
#include "gatevio/sim.hpp"
#include "gatevio/vision.hpp"

#include <span>
#include <vector>

namespace gatevio {

struct PipelineConfig {
  EskfConfig eskf;
  VisionConfig vision;
  CameraModel camera = default_sim_camera();
  Extrinsics ext = forward_camera();  ///< nominal camera-to-body transform
  FgoWeights fgo;
  LmOptions lm;
  GraphOptions graph;

  void validate() const;
};

struct FilterRun {
  /// Filter state at every IMU timestamp (after any update at that time).
  std::vector<NominalState> trajectory;
  std::vector<MeasurementFrame> frames;   ///< frontend output per detection frame
  std::vector<UpdateReport> reports;      ///< one per non-empty frame
  std::vector<GateDetection> associated;  ///< associated detections, gate_id set
  int reorder_skipped = 0;
  /// Covariance health, tracked when requested.
  double max_asymmetry = 0.0;
  double min_eigenvalue = 0.0;
};

/// Groups detections into frames by timestamp (input sorted by time).
std::vector<std::vector<GateDetection>> group_frames(std::span<const GateDetection> dets);

/// Runs propagate/update over the merged sensor streams. Frames are
/// processed after the IMU reading with the same or an earlier timestamp.
/// The vision frontend's per-gate corner minimum follows
/// cfg.eskf.min_corners_per_gate.
FilterRun run_filter(std::span<const ImuSample> imu, std::span<const GateDetection> dets,
                     const GateMap& map, const PipelineConfig& cfg, const NominalState& initial,
                     bool track_covariance = false);

/// Re-runs the frontend on every frame at the filter trajectory
/// (interpolated to the frame time).
std::vector<MeasurementFrame> frontend_frames(std::span<const GateDetection> dets,
                                              const GateMap& map,
                                              std::span<const NominalState> trajectory,
                                              const PipelineConfig& cfg);

struct SmootherRun {
  FactorGraph graph;
  FgoResult result;
  std::vector<NominalState> dense;  ///< densified smoothed trajectory
};

SmootherRun run_smoother(std::span<const ImuSample> imu, std::span<const GateDetection> dets,
                         const GateMap& map, std::span<const NominalState> vins,
                         const PipelineConfig& cfg);

}  // namespace gatevio
