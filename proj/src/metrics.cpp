#include "gatevio/metrics.hpp"

#include "gatevio/error.hpp"
#include "gatevio/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

namespace gatevio {
namespace {

double rms(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

/// Linear-interpolated order statistic at fraction q in [0, 1].
double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double a = pos - static_cast<double>(lo);
  return (1.0 - a) * sorted[lo] + a * sorted[hi];
}

}  // namespace

TrajectoryError trajectory_error(std::span<const NominalState> est, std::span<const NominalState> ref,
                                 double max_gap, double min_overlap) {
  if (est.empty() || ref.empty()) throw Error(ErrorCode::NoOverlap, "empty trajectory");
  const double overlap = std::min(est.back().t, ref.back().t) - std::max(est.front().t, ref.front().t);
  if (overlap < min_overlap) {
    throw Error(ErrorCode::NoOverlap, "trajectories overlap for " + std::to_string(overlap) + " s");
  }
  TrajectoryError out;
  for (const NominalState& e : est) {
    if (e.t < ref.front().t || e.t > ref.back().t) continue;
    auto hi = std::lower_bound(ref.begin(), ref.end(), e.t,
                               [](const NominalState& s, double v) { return s.t < v; });
    NominalState r;
    if (hi->t == e.t) {
      r = *hi;
    } else {
      auto lo = std::prev(hi);
      if (hi->t - lo->t > max_gap) continue;
      r = *interpolate_state(ref, e.t);
    }
    out.t.push_back(e.t);
    out.err_t.push_back((e.p - r.p).norm());
    out.err_r.push_back(r.q.angle_to(e.q) * 180.0 / std::numbers::pi);
    out.err_v.push_back((e.v - r.v).norm());
  }
  if (out.t.empty()) throw Error(ErrorCode::NoOverlap, "no estimate sample within the reference");
  out.e_t = rms(out.err_t);
  out.e_r = rms(out.err_r);
  out.e_v = rms(out.err_v);
  return out;
}

ReprojectionStats summarize_reprojection(std::vector<double> errors) {
  ReprojectionStats s;
  s.count = errors.size();
  if (errors.empty()) return s;
  double sum = 0.0;
  for (double e : errors) sum += e;
  s.mean_px = sum / static_cast<double>(errors.size());
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  s.median_px = quantile(sorted, 0.5);
  s.p95_px = quantile(sorted, 0.95);
  s.errors_px = std::move(errors);
  return s;
}

ReprojectionStats reprojection_error(std::span<const NominalState> states,
                                     std::span<const GateDetection> detections, const GateMap& map,
                                     const CameraModel& cam, const Extrinsics& ext) {
  // Gather camera-frame map corners and detected pixels, then project,
  // distort and measure in one batch.
  std::vector<double> x, y, z, det_u, det_v;
  for (const GateDetection& d : detections) {
    if (!d.gate_id) continue;
    const Gate* gate = map.find(*d.gate_id);
    if (!gate) continue;
    const auto s = interpolate_state(states, d.t);
    if (!s) continue;
    for (int i = 0; i < 4; ++i) {
      if (!d.present(i) || !d.corners_px[static_cast<std::size_t>(i)]) continue;
      const Vec3 pc = world_to_camera(gate->corners_w[static_cast<std::size_t>(i)], s->p, s->q, ext);
      x.push_back(pc.x());
      y.push_back(pc.y());
      z.push_back(pc.z());
      det_u.push_back(d.corners_px[static_cast<std::size_t>(i)]->x());
      det_v.push_back(d.corners_px[static_cast<std::size_t>(i)]->y());
    }
  }
  const std::size_t n = x.size();
  std::vector<double> u(n), v(n), px(n), py(n), dist(n);
  std::vector<std::uint8_t> valid(n);
  kernels::project_points(x, y, z, u, v, valid);
  kernels::distort_to_pixel(cam, u, v, px, py);
  kernels::point_distances(px, py, det_u, det_v, dist);
  std::vector<double> errors;
  errors.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i]) errors.push_back(dist[i]);
  }
  return summarize_reprojection(std::move(errors));
}

std::string_view to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::Huber: return "huber";
    case AblationVariant::Chi2: return "chi2";
    case AblationVariant::Naive: return "naive";
  }
  return "?";
}

FilterRun run_filter_on(const Scenario& sc, const PipelineConfig& cfg, bool track_covariance) {
  const auto truth = sc.truth_states();
  return run_filter(sc.imu.imu, sc.detections, sc.map, cfg, truth.front(), track_covariance);
}

std::vector<AblationRow> robustness_ablation(const Scenario& sc, const PipelineConfig& cfg,
                                             std::span<const AblationVariant> variants,
                                             double divergence_threshold) {
  const auto truth = sc.truth_states();
  std::vector<AblationRow> rows;
  for (AblationVariant variant : variants) {
    PipelineConfig c = cfg;
    switch (variant) {
      case AblationVariant::Huber: c.eskf.robust_mode = RobustMode::Huber; break;
      case AblationVariant::Chi2: c.eskf.robust_mode = RobustMode::Chi2Gate; break;
      case AblationVariant::Naive: c.eskf.robust_mode = RobustMode::None; break;
    }
    AblationRow row;
    row.variant = variant;
    try {
      const FilterRun run = run_filter_on(sc, c);
      row.e_t = trajectory_error(run.trajectory, truth).e_t;
      row.diverged = !(row.e_t <= divergence_threshold);
    } catch (const Error&) {
      row.e_t = std::numeric_limits<double>::infinity();
      row.diverged = true;
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<SweepRow> min_corner_sweep(const Scenario& sc, const PipelineConfig& cfg,
                                       std::span<const int> values) {
  const auto truth = sc.truth_states();
  std::vector<SweepRow> rows;
  for (int value : values) {
    if (value < 1) throw Error(ErrorCode::ValidationError, "min-corner setting must be >= 1");
    PipelineConfig c = cfg;
    if (value <= 4) {
      c.eskf.min_corners_per_gate = value;
      c.vision.min_corners_per_frame = 0;
    } else {
      c.eskf.min_corners_per_gate = 2;
      c.vision.min_corners_per_frame = value;
    }
    const FilterRun run = run_filter_on(sc, c);
    SweepRow row;
    row.min_corners = value;
    row.e_t = trajectory_error(run.trajectory, truth).e_t;
    row.updates = run.reports.size();
    rows.push_back(row);
  }
  return rows;
}

std::string error_series_csv(const TrajectoryError& e) {
  std::string out = "t,err_t,err_r_deg,err_v\n";
  char buf[160];
  for (std::size_t i = 0; i < e.t.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", e.t[i], e.err_t[i], e.err_r[i],
                  e.err_v[i]);
    out += buf;
  }
  return out;
}

}  // namespace gatevio
