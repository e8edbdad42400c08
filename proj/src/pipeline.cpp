#include "gatevio/pipeline.hpp"

#include "gatevio/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>

namespace gatevio {
namespace {

VisionConfig frontend_config(const PipelineConfig& cfg) {
  VisionConfig v = cfg.vision;
  v.min_corners_per_gate = cfg.eskf.min_corners_per_gate;
  return v;
}

}  // namespace

void PipelineConfig::validate() const {
  eskf.validate();
  frontend_config(*this).validate();
  camera.validate();
  fgo.validate();
}

std::vector<std::vector<GateDetection>> group_frames(std::span<const GateDetection> dets) {
  std::vector<std::vector<GateDetection>> frames;
  for (const GateDetection& d : dets) {
    if (!frames.empty() && frames.back().front().t == d.t) {
      frames.back().push_back(d);
      continue;
    }
    if (!frames.empty() && d.t < frames.back().front().t) {
      throw Error(ErrorCode::NonMonotonicTimestamp, "detections out of order at t=" + std::to_string(d.t));
    }
    frames.push_back({d});
  }
  return frames;
}

FilterRun run_filter(std::span<const ImuSample> imu, std::span<const GateDetection> dets,
                     const GateMap& map, const PipelineConfig& cfg, const NominalState& initial,
                     bool track_covariance) {
  cfg.validate();
  if (imu.empty()) throw Error(ErrorCode::EmptyStream, "no IMU readings");
  const VisionConfig vcfg = frontend_config(cfg);
  const auto frames = group_frames(dets);

  EskfEstimator est = EskfEstimator::initialize(initial.p, initial.q, cfg.eskf, imu.front().t);
  NominalState x0 = initial;
  x0.t = imu.front().t;
  est.set_nominal(x0);

  FilterRun run;
  run.trajectory.reserve(imu.size());
  run.min_eigenvalue = std::numeric_limits<double>::infinity();
  auto check_cov = [&] {
    if (!track_covariance) return;
    const Covariance15& P = est.covariance();
    run.max_asymmetry = std::max(run.max_asymmetry, (P - P.transpose()).cwiseAbs().maxCoeff());
    const Eigen::SelfAdjointEigenSolver<Mat15> es(0.5 * (P + P.transpose()), Eigen::EigenvaluesOnly);
    run.min_eigenvalue = std::min(run.min_eigenvalue, es.eigenvalues().minCoeff());
  };

  std::size_t f = 0;
  while (f < frames.size() && frames[f].front().t < imu.front().t) ++f;
  auto process_frame = [&](const std::vector<GateDetection>& frame) {
    const double t = frame.front().t;
    if (t > est.time()) est.propagate_to(t);
    FrontendOutput fe = build_measurements(frame, map, est.nominal(), cfg.ext, cfg.camera, vcfg);
    run.reorder_skipped += fe.reorder_skipped;
    for (GateDetection& d : fe.associated) run.associated.push_back(std::move(d));
    if (fe.measurements.empty()) return;
    run.reports.push_back(est.update(fe.measurements, cfg.ext));
    run.frames.push_back({t, std::move(fe.measurements)});
    check_cov();
  };

  for (std::size_t i = 0; i < imu.size(); ++i) {
    // Frames strictly between the previous reading and this one.
    while (f < frames.size() && i > 0 && frames[f].front().t < imu[i].t) process_frame(frames[f++]);
    est.propagate(imu[i]);
    check_cov();
    while (f < frames.size() && frames[f].front().t == imu[i].t) process_frame(frames[f++]);
    run.trajectory.push_back(est.nominal());
  }
  return run;
}

std::vector<MeasurementFrame> frontend_frames(std::span<const GateDetection> dets,
                                              const GateMap& map,
                                              std::span<const NominalState> trajectory,
                                              const PipelineConfig& cfg) {
  const VisionConfig vcfg = frontend_config(cfg);
  std::vector<MeasurementFrame> out;
  for (const auto& frame : group_frames(dets)) {
    const double t = frame.front().t;
    const auto x = interpolate_state(trajectory, t);
    if (!x) continue;
    FrontendOutput fe = build_measurements(frame, map, *x, cfg.ext, cfg.camera, vcfg);
    if (fe.measurements.empty()) continue;
    out.push_back({t, std::move(fe.measurements)});
  }
  return out;
}

SmootherRun run_smoother(std::span<const ImuSample> imu, std::span<const GateDetection> dets,
                         const GateMap& map, std::span<const NominalState> vins,
                         const PipelineConfig& cfg) {
  cfg.validate();
  const auto frames = frontend_frames(dets, map, vins, cfg);
  SmootherRun run;
  run.graph = build_factor_graph(imu, frames, vins, cfg.ext, cfg.fgo, cfg.eskf.noise, cfg.graph);
  run.result = optimize(run.graph, cfg.lm);
  run.dense = densify(run.graph, run.result.states);
  return run;
}

}  // namespace gatevio
