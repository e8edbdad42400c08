#include "gatevio/vision.hpp"

#include "gatevio/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gatevio {
namespace {

// Target quadrant per label: {up sign, right sign}.
constexpr std::array<std::array<double, 2>, 4> kQuadrant{{
    {+1.0, -1.0},  // TL
    {+1.0, +1.0},  // TR
    {-1.0, +1.0},  // BR
    {-1.0, -1.0},  // BL
}};

constexpr std::array<int, 4> kFlipped{1, 0, 3, 2};

std::optional<Vec2> pixel_of(const GateDetection& det, int i, const CameraModel& cam) {
  const auto k = static_cast<std::size_t>(i);
  if (!det.present(i)) return std::nullopt;
  if (det.corners_px[k]) return det.corners_px[k];
  if (det.corners_norm[k]) return cam.to_pixel(*det.corners_norm[k]);
  return std::nullopt;
}

/// Polygon area for 3-4 points in label order, squared chord length for 2.
double extent(const std::vector<Vec2>& pts) {
  if (pts.size() < 2) return 0.0;
  if (pts.size() == 2) return (pts[0] - pts[1]).squaredNorm();
  double twice = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2& a = pts[i];
    const Vec2& b = pts[(i + 1) % pts.size()];
    twice += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * std::abs(twice);
}

GateDetection permuted(const GateDetection& det, const std::array<int, 4>& target_of) {
  GateDetection out = det;
  out.corners_px.fill(std::nullopt);
  out.corners_norm.fill(std::nullopt);
  out.scores.fill(0.0);
  for (int c = 0; c < 4; ++c) {
    if (!det.present(c)) continue;
    const auto from = static_cast<std::size_t>(c);
    const auto to = static_cast<std::size_t>(target_of[from]);
    out.corners_px[to] = det.corners_px[from];
    out.corners_norm[to] = det.corners_norm[from];
    out.scores[to] = det.scores[from];
  }
  return out;
}

}  // namespace

void VisionConfig::validate() const {
  if (!(probe_depth_m > 0 && assoc_max_dist_px > 0 && assoc_min_area_ratio > 0 &&
        max_gate_range_m > 0)) {
    throw Error(ErrorCode::ValidationError, "vision thresholds must be positive");
  }
  if (!(min_corner_score >= 0.0 && min_corner_score <= 1.0)) {
    throw Error(ErrorCode::ValidationError, "min_corner_score must lie in [0, 1]");
  }
  if (min_corners_per_gate < 2 || min_corners_per_gate > 4) {
    throw Error(ErrorCode::ValidationError, "min_corners_per_gate must be 2, 3 or 4");
  }
  if (min_corners_per_frame < 0) throw Error(ErrorCode::ValidationError, "min_corners_per_frame < 0");
}

ImageAxes image_up_right(const NominalState& state, const Extrinsics& ext,
                         const Vec2& centroid_norm, const VisionConfig& cfg) {
  const double d = cfg.probe_depth_m;
  const Vec3 probe_c(centroid_norm.x() * d, centroid_norm.y() * d, d);
  const Vec3 probe_w = camera_to_world(probe_c, state.p, state.q, ext);
  const auto above = try_project(world_to_camera(probe_w + kWorldUp, state.p, state.q, ext));
  const auto below = try_project(world_to_camera(probe_w - kWorldUp, state.p, state.q, ext));
  if (!above || !below) {
    throw Error(ErrorCode::DegenerateProjection, "up probe behind the camera");
  }
  const Vec2 delta = *above - *below;
  const double n = delta.norm();
  if (!(n > 1e-12)) throw Error(ErrorCode::DegenerateProjection, "up probe projects to a point");
  ImageAxes axes;
  axes.up = delta / n;
  axes.right = Vec2(-axes.up.y(), axes.up.x());
  return axes;
}

GateDetection with_normalized(const GateDetection& det, const CameraModel& cam) {
  GateDetection out = det;
  for (int i = 0; i < 4; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!det.present(i) || out.corners_norm[k] || !det.corners_px[k]) continue;
    try {
      out.corners_norm[k] = undistort_normalize(*det.corners_px[k], cam);
    } catch (const Error&) {
      out.scores[k] = 0.0;
      out.corners_px[k].reset();
    }
  }
  return out;
}

GateDetection reorder_corners(const GateDetection& det, const Vec2& mu_up, const Vec2& mu_right) {
  std::vector<int> present;
  for (int i = 0; i < 4; ++i) {
    if (det.present(i)) {
      if (!det.corners_norm[static_cast<std::size_t>(i)]) return det;
      present.push_back(i);
    }
  }
  if (present.size() < 2) return det;

  Vec2 centroid = Vec2::Zero();
  for (int c : present) centroid += *det.corners_norm[static_cast<std::size_t>(c)];
  centroid /= static_cast<double>(present.size());

  // score[label][corner]
  std::array<std::array<double, 4>, 4> score{};
  for (int c : present) {
    const Vec2 delta = *det.corners_norm[static_cast<std::size_t>(c)] - centroid;
    const double up = delta.dot(mu_up);
    const double right = delta.dot(mu_right);
    for (int j = 0; j < 4; ++j) {
      score[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] =
          kQuadrant[static_cast<std::size_t>(j)][0] * up + kQuadrant[static_cast<std::size_t>(j)][1] * right;
    }
  }
  auto total = [&](const std::array<int, 4>& target_of) {
    double s = 0.0;
    for (int c : present) {
      s += score[static_cast<std::size_t>(target_of[static_cast<std::size_t>(c)])][static_cast<std::size_t>(c)];
    }
    return s;
  };

  // Relabel only on a clear win: ambiguous axes (e.g. across a two-corner
  // edge) differ by pixel noise alone and must keep the detector labels.
  double spread = 0.0;
  for (int c : present) spread += (*det.corners_norm[static_cast<std::size_t>(c)] - centroid).norm();
  const double margin = 0.5 * spread / static_cast<double>(present.size());

  std::array<int, 4> best{0, 1, 2, 3};
  const double identity_score = total(best);
  double best_score = identity_score;
  std::array<int, 4> labels{0, 1, 2, 3};
  do {
    std::array<int, 4> target_of{0, 1, 2, 3};
    for (std::size_t k = 0; k < present.size(); ++k) {
      target_of[static_cast<std::size_t>(present[k])] = labels[k];
    }
    const double s = total(target_of);
    if (s > best_score + 1e-12 && s > identity_score + margin) {
      best_score = s;
      best = target_of;
    }
  } while (std::next_permutation(labels.begin(), labels.end()));

  return permuted(det, best);
}

std::optional<PairCost> association_pair_cost(const GateDetection& det, const Gate& gate,
                                              const NominalState& state, const Extrinsics& ext,
                                              const CameraModel& cam, const VisionConfig& cfg) {
  const double depth = world_to_camera(gate.center(), state.p, state.q, ext).z();
  if (!(depth > 0.0 && depth <= cfg.max_gate_range_m)) return std::nullopt;

  std::array<std::optional<Vec2>, 4> map_px;
  bool any_in_view = false;
  for (std::size_t i = 0; i < 4; ++i) {
    map_px[i] = cam.project_to_pixel(world_to_camera(gate.corners_w[i], state.p, state.q, ext));
    if (map_px[i] && cam.in_image(*map_px[i])) any_in_view = true;
  }
  if (!any_in_view) return std::nullopt;

  std::vector<Vec2> det_pts;
  std::vector<Vec2> map_pts;
  for (int i = 0; i < 4; ++i) {
    const auto px = pixel_of(det, i, cam);
    if (!px) continue;
    const auto& m = map_px[static_cast<std::size_t>(i)];
    if (!m) return std::nullopt;
    det_pts.push_back(*px);
    map_pts.push_back(*m);
  }
  if (det_pts.empty()) return std::nullopt;

  const auto mean = [](const std::vector<Vec2>& pts) -> Vec2 {
    return std::accumulate(pts.begin(), pts.end(), Vec2(Vec2::Zero())) / static_cast<double>(pts.size());
  };
  PairCost pc;
  pc.distance_px = (mean(det_pts) - mean(map_pts)).norm();
  const double a_det = extent(det_pts);
  const double a_map = extent(map_pts);
  pc.area_ratio = (a_det > 0.0 && a_map > 0.0) ? std::min(a_det / a_map, a_map / a_det) : 0.0;
  return pc;
}

std::vector<Association> solve_assignment(
    const std::vector<std::vector<std::optional<PairCost>>>& table, std::span<const int> gate_ids,
    const VisionConfig& cfg) {
  const std::size_t n_det = table.size();
  const std::size_t n_gate = gate_ids.size();

  // Feasible gate options per detection.
  std::vector<std::vector<std::size_t>> options(n_det);
  for (std::size_t d = 0; d < n_det; ++d) {
    for (std::size_t g = 0; g < n_gate && g < table[d].size(); ++g) {
      const auto& pc = table[d][g];
      if (pc && pc->distance_px < cfg.assoc_max_dist_px && pc->area_ratio > cfg.assoc_min_area_ratio) {
        options[d].push_back(g);
      }
    }
  }

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> current(n_det, kNone);
  std::vector<std::size_t> best(n_det, kNone);
  std::vector<char> used(n_gate, 0);
  int best_count = 0;
  double best_cost = 0.0;

  // Depth-first search with an optimistic cardinality bound.
  auto search = [&](auto&& self, std::size_t d, int count, double cost) -> void {
    if (d == n_det) {
      if (count > best_count || (count == best_count && cost < best_cost - 1e-12)) {
        best_count = count;
        best_cost = cost;
        best = current;
      }
      return;
    }
    const int remaining = static_cast<int>(n_det - d);
    if (count + remaining < best_count) return;
    for (std::size_t g : options[d]) {
      if (used[g]) continue;
      used[g] = 1;
      current[d] = g;
      self(self, d + 1, count + 1, cost + table[d][g]->cost());
      used[g] = 0;
      current[d] = kNone;
    }
    self(self, d + 1, count, cost);
  };
  search(search, 0, 0, 0.0);

  std::vector<Association> out;
  for (std::size_t d = 0; d < n_det; ++d) {
    if (best[d] == kNone) continue;
    out.push_back({d, gate_ids[best[d]], *table[d][best[d]]});
  }
  return out;
}

std::vector<Association> associate(std::span<const GateDetection> dets, const GateMap& map,
                                   const NominalState& state, const Extrinsics& ext,
                                   const CameraModel& cam, const VisionConfig& cfg) {
  std::vector<int> ids;
  ids.reserve(map.gates.size());
  for (const Gate& g : map.gates) ids.push_back(g.id);
  std::vector<std::vector<std::optional<PairCost>>> table(dets.size());
  for (std::size_t d = 0; d < dets.size(); ++d) {
    table[d].reserve(map.gates.size());
    for (const Gate& g : map.gates) {
      table[d].push_back(association_pair_cost(dets[d], g, state, ext, cam, cfg));
    }
  }
  return solve_assignment(table, ids, cfg);
}

GateDetection resolve_flip(const GateDetection& det, const Gate& gate, const NominalState& state,
                           const Extrinsics& ext, const CameraModel& cam) {
  std::array<std::optional<Vec2>, 4> predicted;
  for (std::size_t i = 0; i < 4; ++i) {
    predicted[i] = try_project(world_to_camera(gate.corners_w[i], state.p, state.q, ext));
  }
  auto labeling_error = [&](const std::array<int, 4>& label_of) {
    double err = 0.0;
    for (int c = 0; c < 4; ++c) {
      if (!det.present(c)) continue;
      std::optional<Vec2> obs = det.corners_norm[static_cast<std::size_t>(c)];
      if (!obs && det.corners_px[static_cast<std::size_t>(c)]) {
        obs = undistort_normalize(*det.corners_px[static_cast<std::size_t>(c)], cam);
      }
      const auto& pred = predicted[static_cast<std::size_t>(label_of[static_cast<std::size_t>(c)])];
      if (!obs || !pred) return std::numeric_limits<double>::infinity();
      err += (*obs - *pred).norm();
    }
    return err;
  };
  const double keep = labeling_error({0, 1, 2, 3});
  const double swap = labeling_error(kFlipped);
  if (swap < keep) return permuted(det, kFlipped);
  return det;
}

FrontendOutput build_measurements(std::span<const GateDetection> dets, const GateMap& map,
                                  const NominalState& state, const Extrinsics& ext,
                                  const CameraModel& cam, const VisionConfig& cfg) {
  FrontendOutput out;
  std::vector<GateDetection> ordered;
  ordered.reserve(dets.size());
  for (const GateDetection& raw : dets) {
    GateDetection det = with_normalized(raw, cam);
    if (det.num_present() == 0) continue;
    if (det.num_present() >= 2) {
      Vec2 centroid = Vec2::Zero();
      for (int i = 0; i < 4; ++i) {
        if (det.present(i)) centroid += *det.corners_norm[static_cast<std::size_t>(i)];
      }
      centroid /= det.num_present();
      try {
        const ImageAxes axes = image_up_right(state, ext, centroid, cfg);
        det = reorder_corners(det, axes.up, axes.right);
      } catch (const Error&) {
        ++out.reorder_skipped;
      }
    }
    ordered.push_back(std::move(det));
  }

  const auto pairs = associate(ordered, map, state, ext, cam, cfg);
  std::vector<CornerMeasurement> candidate;
  for (const Association& a : pairs) {
    const Gate* gate = map.find(a.gate_id);
    GateDetection det = resolve_flip(ordered[a.detection], *gate, state, ext, cam);
    det.gate_id = a.gate_id;
    out.associated.push_back(det);

    const Vec3 center_c = world_to_camera(gate->center(), state.p, state.q, ext);
    if (center_c.norm() > cfg.max_gate_range_m) continue;
    std::vector<CornerMeasurement> kept;
    for (int i = 0; i < 4; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (!det.present(i) || det.scores[k] < cfg.min_corner_score || !det.corners_norm[k]) continue;
      CornerMeasurement m;
      m.t = det.t;
      m.u_norm = *det.corners_norm[k];
      m.p_gw = gate->corners_w[k];
      m.gate_id = a.gate_id;
      m.label = static_cast<CornerLabel>(i);
      m.score = det.scores[k];
      kept.push_back(m);
    }
    if (static_cast<int>(kept.size()) < cfg.min_corners_per_gate) continue;
    candidate.insert(candidate.end(), kept.begin(), kept.end());
  }
  if (static_cast<int>(candidate.size()) >= cfg.min_corners_per_frame) {
    out.measurements = std::move(candidate);
  }
  return out;
}

}  // namespace gatevio
