#include "gatevio/types.hpp"

#include "gatevio/error.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace gatevio {

NominalState compose_state(const NominalState& x, const ErrorState& dx) {
  NominalState out = x;
  out.p += dx.segment<3>(idx::kPos);
  out.v += dx.segment<3>(idx::kVel);
  out.q = x.q * so3_exp(dx.segment<3>(idx::kAtt));
  out.b_a += dx.segment<3>(idx::kBa);
  out.b_w += dx.segment<3>(idx::kBw);
  return out;
}

ErrorState state_difference(const NominalState& a, const NominalState& b) {
  ErrorState d;
  d.segment<3>(idx::kPos) = a.p - b.p;
  d.segment<3>(idx::kVel) = a.v - b.v;
  d.segment<3>(idx::kAtt) = so3_log(b.q.inverse() * a.q);
  d.segment<3>(idx::kBa) = a.b_a - b.b_a;
  d.segment<3>(idx::kBw) = a.b_w - b.b_w;
  return d;
}

Vec6 state_boxminus(const NominalState& a, const NominalState& b) {
  Vec6 d;
  d.head<3>() = a.p - b.p;
  d.tail<3>() = so3_log(b.q.inverse() * a.q);
  return d;
}

void NoiseParams::validate() const {
  if (!(sigma_a > 0 && sigma_w > 0 && sigma_ba > 0 && sigma_bw > 0)) {
    throw Error(ErrorCode::ValidationError, "noise densities must be positive");
  }
  if (!gravity.allFinite()) throw Error(ErrorCode::ValidationError, "gravity not finite");
}

std::string_view to_string(CornerLabel label) {
  switch (label) {
    case CornerLabel::TL: return "TL";
    case CornerLabel::TR: return "TR";
    case CornerLabel::BR: return "BR";
    case CornerLabel::BL: return "BL";
  }
  return "?";
}

std::optional<CornerLabel> corner_label_from_string(std::string_view s) {
  for (CornerLabel l : kCornerLabels) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

Vec3 Gate::center() const {
  return 0.25 * (corners_w[0] + corners_w[1] + corners_w[2] + corners_w[3]);
}

Vec3 Gate::normal() const {
  // From the front, TL->TR runs right and TL->BL runs down; right x down
  // points away from the viewer, i.e. along the pass-through direction.
  const Vec3 right = corners_w[1] - corners_w[0];
  const Vec3 down = corners_w[3] - corners_w[0];
  return right.cross(down).normalized();
}

Gate Gate::from_pose(int id, const Vec3& center, double yaw, double pitch, double roll,
                     double width, double height) {
  const Mat3 r = UnitQuaternion::from_ypr(yaw, pitch, roll).rotation_matrix();
  const double hw = 0.5 * width;
  const double hh = 0.5 * height;
  Gate g;
  g.id = id;
  g.corners_w = {center + r * Vec3(0.0, hw, hh), center + r * Vec3(0.0, -hw, hh),
                 center + r * Vec3(0.0, -hw, -hh), center + r * Vec3(0.0, hw, -hh)};
  return g;
}

void Gate::validate() const {
  const std::string name = "gate " + std::to_string(id);
  for (const Vec3& c : corners_w) {
    if (!c.allFinite()) throw Error(ErrorCode::ValidationError, name + ": non-finite corner");
  }
  for (int i = 0; i < 4; ++i) {
    if ((corners_w[i] - corners_w[(i + 1) % 4]).norm() < 1e-9) {
      throw Error(ErrorCode::ValidationError, name + ": consecutive corners coincide");
    }
  }
  // Plane through TL, TR, BL; BR must lie on it.
  const Vec3 n = (corners_w[1] - corners_w[0]).cross(corners_w[3] - corners_w[0]);
  if (n.norm() < 1e-12) throw Error(ErrorCode::ValidationError, name + ": collinear corners");
  const double off_plane = std::abs(n.normalized().dot(corners_w[2] - corners_w[0]));
  if (off_plane > 1e-6) {
    throw Error(ErrorCode::ValidationError,
                name + ": corners not coplanar (" + std::to_string(off_plane) + " m)");
  }
}

void GateMap::validate() const {
  std::set<int> seen;
  for (const Gate& g : gates) {
    if (!seen.insert(g.id).second) {
      throw Error(ErrorCode::ValidationError, "gate " + std::to_string(g.id) + ": duplicate id");
    }
    g.validate();
  }
}

const Gate* GateMap::find(int id) const {
  auto it = std::find_if(gates.begin(), gates.end(), [id](const Gate& g) { return g.id == id; });
  return it == gates.end() ? nullptr : &*it;
}

int GateDetection::num_present() const {
  return static_cast<int>(std::count_if(scores.begin(), scores.end(), [](double s) { return s > 0.0; }));
}

}  // namespace gatevio
