#include "gatevio/io.hpp"

#include "gatevio/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace gatevio::io {
namespace {

using json = nlohmann::json;
constexpr double kDeg = std::numbers::pi / 180.0;

[[noreturn]] void parse_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ParseError, where + ": " + what);
}

std::size_t line_of_byte(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    parse_fail(what + " line " + std::to_string(line_of_byte(text, e.byte)), e.what());
  }
}

/// Strict view of one JSON object: typed getters, and finish() rejects keys
/// nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) parse_fail(path_, "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }
  /// Marks a key as consumed by a caller that reads it directly.
  void mark(const char* key) { used_.insert(key); }

  void number(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) parse_fail(where(key), "expected a number");
      out = v->get<double>();
    }
  }
  void integer(const char* key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) parse_fail(where(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void boolean(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) parse_fail(where(key), "expected true/false");
      out = v->get<bool>();
    }
  }
  void string(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) parse_fail(where(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void unsigned64(const char* key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
        parse_fail(where(key), "expected a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  template <int N>
  void vector(const char* key, Eigen::Matrix<double, N, 1>& out) {
    if (const json* v = take(key)) out = to_vector<N>(*v, where(key));
  }
  template <std::size_t N>
  void array(const char* key, std::array<double, N>& out) {
    if (const json* v = take(key)) {
      const auto m = to_vector<static_cast<int>(N)>(*v, where(key));
      for (std::size_t i = 0; i < N; ++i) out[i] = m(static_cast<int>(i));
    }
  }
  std::optional<Section> sub(const char* key) {
    if (const json* v = take(key)) return Section(*v, where(key));
    return std::nullopt;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) parse_fail(where(it.key().c_str()), "unknown key");
    }
  }

  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  template <int N>
  static Eigen::Matrix<double, N, 1> to_vector(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != static_cast<std::size_t>(N)) {
      parse_fail(where, "expected an array of " + std::to_string(N) + " numbers");
    }
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) {
      const json& e = v[static_cast<std::size_t>(i)];
      if (!e.is_number()) parse_fail(where, "expected an array of numbers");
      out(i) = e.get<double>();
    }
    return out;
  }

 private:
  const json* take(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json quat_json(const UnitQuaternion& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

UnitQuaternion quat_from(const Eigen::Vector4d& v, const std::string& where) {
  if (!(v.norm() > 1e-9)) parse_fail(where, "zero quaternion");
  return UnitQuaternion::from_stored(v(0), v(1), v(2), v(3));
}

std::string_view robust_name(RobustMode m) {
  switch (m) {
    case RobustMode::Huber: return "huber";
    case RobustMode::Chi2Gate: return "chi2";
    case RobustMode::None: return "none";
  }
  return "?";
}

// --- section readers -----------------------------------------------------------------

void read_noise(Section s, NoiseParams& n) {
  s.number("sigma_a", n.sigma_a);
  s.number("sigma_w", n.sigma_w);
  s.number("sigma_ba", n.sigma_ba);
  s.number("sigma_bw", n.sigma_bw);
  s.vector<3>("gravity", n.gravity);
  s.finish();
}

void read_camera(Section s, CameraModel& c) {
  s.number("fx", c.fx);
  s.number("fy", c.fy);
  s.number("cx", c.cx);
  s.number("cy", c.cy);
  s.number("k1", c.k1);
  s.number("k2", c.k2);
  s.number("p1", c.p1);
  s.number("p2", c.p2);
  s.integer("width", c.width);
  s.integer("height", c.height);
  s.integer("undistort_iterations", c.undistort_iterations);
  s.finish();
}

/// {"q_bc": [w,x,y,z]} or {"tilt_deg": t, "offset_deg": [rx,ry,rz]}; plus "p_bc".
void read_extrinsics(Section s, Extrinsics& e) {
  if (s.has("q_bc") && (s.has("tilt_deg") || s.has("offset_deg"))) {
    parse_fail(s.where("q_bc"), "give either q_bc or tilt_deg/offset_deg");
  }
  Eigen::Vector4d q;
  if (s.has("q_bc")) {
    s.vector<4>("q_bc", q);
    e.R_bc = quat_from(q, s.where("q_bc"));
  } else if (s.has("tilt_deg") || s.has("offset_deg")) {
    double tilt = 0.0;
    Vec3 offset = Vec3::Zero();
    s.number("tilt_deg", tilt);
    s.vector<3>("offset_deg", offset);
    e.R_bc = forward_camera(tilt).R_bc * so3_exp(offset * kDeg);
  }
  s.vector<3>("p_bc", e.p_bc);
  s.finish();
}

void read_eskf(Section s, EskfConfig& c) {
  s.number("r_pixel_sigma", c.r_pixel_sigma);
  s.number("huber_tau", c.huber_tau);
  s.integer("min_corners_per_gate", c.min_corners_per_gate);
  std::string mode(robust_name(c.robust_mode));
  s.string("robust_mode", mode);
  if (mode == "huber") c.robust_mode = RobustMode::Huber;
  else if (mode == "chi2") c.robust_mode = RobustMode::Chi2Gate;
  else if (mode == "none") c.robust_mode = RobustMode::None;
  else parse_fail(s.where("robust_mode"), "expected huber, chi2 or none");
  s.boolean("scale_r_by_score", c.scale_r_by_score);
  s.number("max_measurement_age", c.max_measurement_age);
  s.number("max_dt", c.max_dt);
  s.vector<15>("initial_cov_diag", c.initial_cov_diag);
  s.finish();
}

void read_vision(Section s, VisionConfig& v) {
  s.number("probe_depth_m", v.probe_depth_m);
  s.number("assoc_max_dist_px", v.assoc_max_dist_px);
  s.number("assoc_min_area_ratio", v.assoc_min_area_ratio);
  s.number("max_gate_range_m", v.max_gate_range_m);
  s.number("min_corner_score", v.min_corner_score);
  s.integer("min_corners_per_frame", v.min_corners_per_frame);
  s.finish();
}

void read_fgo(Section s, PipelineConfig& p) {
  FgoWeights& w = p.fgo;
  Vec2 corner = w.sigma_corner.diagonal();
  Vec6 prior = w.sigma_prior.diagonal();
  Vec3 ext = w.sigma_ext.diagonal();
  s.vector<2>("sigma_corner_diag", corner);
  s.vector<6>("sigma_prior_diag", prior);
  s.vector<3>("sigma_ext_diag", ext);
  w.sigma_corner = corner.asDiagonal();
  w.sigma_prior = prior.asDiagonal();
  w.sigma_ext = ext.asDiagonal();
  s.number("huber_delta_corner", w.huber_delta_corner);
  s.number("kf_time_threshold", w.kf_time_threshold);
  s.boolean("bias_walk_factor", w.bias_walk_factor);
  s.integer("max_iters", p.lm.max_iters);
  s.number("lambda_init", p.lm.lambda_init);
  s.boolean("visual_less_keyframes", p.graph.visual_less_keyframes);
  s.boolean("refine_extrinsics", p.graph.refine_extrinsics);
  s.boolean("vins_priors", p.graph.vins_priors);
  s.finish();
}

void read_trajectory(Section s, TrajectorySpec& t) {
  std::string kind(to_string(t.kind));
  s.string("kind", kind);
  const auto k = trajectory_kind_from_string(kind);
  if (!k) parse_fail(s.where("kind"), "unknown trajectory kind '" + kind + "'");
  t.kind = *k;
  s.number("semi_major", t.semi_major);
  s.number("semi_minor", t.semi_minor);
  s.number("height", t.height);
  s.number("height_amplitude", t.height_amplitude);
  s.number("period", t.period);
  s.number("duration", t.duration);
  s.number("imu_rate_hz", t.imu_rate_hz);
  s.number("ramp_time", t.ramp_time);
  s.number("max_roll_deg", t.max_roll_deg);
  s.boolean("discrete_consistent", t.discrete_consistent);
  s.finish();
}

void read_corruption(Section s, CorruptionSpec& c) {
  s.number("pixel_noise_sigma", c.pixel_noise_sigma);
  s.number("dropout_prob", c.dropout_prob);
  s.array<4>("label_dropout_prob", c.label_dropout_prob);
  s.number("partial_prob", c.partial_prob);
  s.number("label_swap_prob", c.label_swap_prob);
  s.number("outlier_prob", c.outlier_prob);
  s.number("outlier_sigma", c.outlier_sigma);
  s.number("detection_rate_hz", c.detection_rate_hz);
  s.number("detection_range_m", c.detection_range_m);
  s.vector<3>("bias_a_true", c.bias_a_true);
  s.vector<3>("bias_w_true", c.bias_w_true);
  s.boolean("imu_noise", c.imu_noise);
  s.boolean("bias_walk", c.bias_walk);
  s.boolean("score_corruption", c.score_corruption);
  s.finish();
}

void read_simulation(Section s, ScenarioSpec& sc) {
  if (auto t = s.sub("trajectory")) read_trajectory(*t, sc.trajectory);
  if (auto c = s.sub("corruption")) read_corruption(*c, sc.corruption);
  s.integer("num_gates", sc.num_gates);
  s.number("gate_size", sc.gate_size);
  if (auto e = s.sub("ext_true")) read_extrinsics(*e, sc.ext_true);
  s.finish();
}

void read_state(Section s, NominalState& x) {
  Eigen::Vector4d q(x.q.w(), x.q.x(), x.q.y(), x.q.z());
  s.number("t", x.t);
  s.vector<3>("p", x.p);
  s.vector<3>("v", x.v);
  s.vector<4>("q_wxyz", q);
  s.vector<3>("b_a", x.b_a);
  s.vector<3>("b_w", x.b_w);
  x.q = quat_from(q, s.where("q_wxyz"));
  s.finish();
}

json state_json(const NominalState& x) {
  return {{"t", x.t},
          {"p", vec_json(x.p)},
          {"v", vec_json(x.v)},
          {"q_wxyz", quat_json(x.q)},
          {"b_a", vec_json(x.b_a)},
          {"b_w", vec_json(x.b_w)}};
}

json extrinsics_json(const Extrinsics& e) {
  return {{"q_bc", quat_json(e.R_bc)}, {"p_bc", vec_json(e.p_bc)}};
}

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

/// Calls fn(line_number, line) for every non-blank line.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    fn(line_no, line);
  }
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// --- files -------------------------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw Error(ErrorCode::ValidationError, "no such file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot rename onto " + path.string());
  }
}

// --- gate map ------------------------------------------------------------------------------

GateMap parse_gate_map(std::string_view text) {
  const json doc = parse_json(text, "gate map");
  Section root(doc, "");
  if (!doc.contains("gates") || !doc["gates"].is_array()) parse_fail("gates", "expected an array");
  root.mark("gates");
  root.finish();

  GateMap map;
  const json& gates = doc["gates"];
  for (std::size_t i = 0; i < gates.size(); ++i) {
    const std::string where = "gates[" + std::to_string(i) + "]";
    Section s(gates[i], where);
    if (!gates[i].contains("id")) parse_fail(where + ".id", "missing");
    int id = 0;
    s.integer("id", id);
    Gate gate;
    if (s.has("corners")) {
      if (s.has("center")) parse_fail(where, "give either corners or center, not both");
      const json& c = gates[i]["corners"];
      s.mark("corners");
      if (!c.is_array() || c.size() != 4) parse_fail(where + ".corners", "expected 4 corners");
      gate.id = id;
      for (std::size_t k = 0; k < 4; ++k) {
        gate.corners_w[k] = Section::to_vector<3>(c[k], where + ".corners[" + std::to_string(k) + "]");
      }
    } else if (s.has("center")) {
      Vec3 center = Vec3::Zero();
      double yaw = 0.0, pitch = 0.0, roll = 0.0, width = 0.0, height = 0.0;
      s.vector<3>("center", center);
      s.number("yaw_deg", yaw);
      s.number("pitch_deg", pitch);
      s.number("roll_deg", roll);
      if (!gates[i].contains("width") || !gates[i].contains("height")) {
        parse_fail(where, "pose-form gate needs width and height");
      }
      s.number("width", width);
      s.number("height", height);
      gate = Gate::from_pose(id, center, yaw * kDeg, pitch * kDeg, roll * kDeg, width, height);
    } else {
      parse_fail(where, "needs corners or center");
    }
    s.finish();
    map.gates.push_back(gate);
  }
  map.validate();
  return map;
}

GateMap load_gate_map(const fs::path& path) { return parse_gate_map(read_file(path)); }

std::string gate_map_json(const GateMap& map) {
  json gates = json::array();
  for (const Gate& g : map.gates) {
    json corners = json::array();
    for (const Vec3& c : g.corners_w) corners.push_back(vec_json(c));
    gates.push_back({{"id", g.id}, {"corners", corners}});
  }
  return json{{"gates", gates}}.dump(2) + "\n";
}

// --- sensor logs ----------------------------------------------------------------------------

std::vector<ImuSample> parse_imu_log(std::string_view text) {
  std::vector<ImuSample> out;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const std::string where = "imu line " + std::to_string(line_no);
    const json j = parse_json(line, where);
    Section s(j, where);
    ImuSample m;
    if (!j.contains("t") || !j.contains("a") || !j.contains("w")) parse_fail(where, "needs t, a, w");
    s.number("t", m.t);
    s.vector<3>("a", m.a_m);
    s.vector<3>("w", m.w_m);
    s.finish();
    if (!out.empty() && !(m.t > out.back().t)) {
      throw Error(ErrorCode::NonMonotonicTimestamp, where + ": t=" + fmt17(m.t) + " not after " +
                                                        fmt17(out.back().t));
    }
    out.push_back(m);
  });
  return out;
}

std::vector<GateDetection> parse_detection_log(std::string_view text) {
  std::vector<GateDetection> out;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const std::string where = "detection line " + std::to_string(line_no);
    const json j = parse_json(line, where);
    Section s(j, where);
    GateDetection d;
    if (!j.contains("t") || !j.contains("corners")) parse_fail(where, "needs t and corners");
    s.number("t", d.t);
    if (j.contains("gate_id")) {
      int id = 0;
      s.integer("gate_id", id);
      d.gate_id = id;
    }
    const json& corners = j["corners"];
    s.mark("corners");
    if (!corners.is_array() || corners.size() != 4) parse_fail(where + ".corners", "expected 4 entries");
    for (std::size_t i = 0; i < 4; ++i) {
      if (corners[i].is_null()) continue;
      Section c(corners[i], where + ".corners[" + std::to_string(i) + "]");
      double u = 0.0, v = 0.0, score = 1.0;
      if (!corners[i].contains("u") || !corners[i].contains("v")) parse_fail(c.where("u"), "needs u and v");
      c.number("u", u);
      c.number("v", v);
      c.number("score", score);
      c.finish();
      if (!(score > 0.0)) continue;
      d.corners_px[i] = Vec2(u, v);
      d.scores[i] = score;
    }
    s.finish();
    if (!out.empty() && d.t < out.back().t) {
      throw Error(ErrorCode::NonMonotonicTimestamp, where + ": t=" + fmt17(d.t) + " before " +
                                                        fmt17(out.back().t));
    }
    out.push_back(d);
  });
  return out;
}

SensorLogs load_sensor_logs(const fs::path& imu_path, const fs::path& det_path) {
  SensorLogs logs;
  logs.imu = parse_imu_log(read_file(imu_path));
  logs.detections = parse_detection_log(read_file(det_path));
  return logs;
}

std::string imu_log_jsonl(std::span<const ImuSample> imu) {
  std::string out;
  for (const ImuSample& m : imu) {
    out += json{{"t", m.t}, {"a", vec_json(m.a_m)}, {"w", vec_json(m.w_m)}}.dump();
    out += '\n';
  }
  return out;
}

std::string detection_log_jsonl(std::span<const GateDetection> dets) {
  std::string out;
  for (const GateDetection& d : dets) {
    json corners = json::array();
    for (std::size_t i = 0; i < 4; ++i) {
      if (d.present(static_cast<int>(i)) && d.corners_px[i]) {
        corners.push_back({{"u", d.corners_px[i]->x()}, {"v", d.corners_px[i]->y()}, {"score", d.scores[i]}});
      } else {
        corners.push_back(nullptr);
      }
    }
    json j{{"t", d.t}, {"corners", corners}};
    if (d.gate_id) j["gate_id"] = *d.gate_id;
    out += j.dump();
    out += '\n';
  }
  return out;
}

// --- trajectories -------------------------------------------------------------------------------

std::string trajectory_csv(std::span<const NominalState> states) {
  std::string out(kTrajectoryHeader);
  out += '\n';
  char buf[512];
  for (const NominalState& x : states) {
    std::snprintf(buf, sizeof(buf),
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", x.t,
                  x.p.x(), x.p.y(), x.p.z(), x.v.x(), x.v.y(), x.v.z(), x.q.w(), x.q.x(), x.q.y(),
                  x.q.z());
    out += buf;
  }
  return out;
}

std::vector<NominalState> parse_trajectory_csv(std::string_view text) {
  std::vector<NominalState> out;
  bool header = true;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const std::string where = "trajectory line " + std::to_string(line_no);
    if (header) {
      if (line != kTrajectoryHeader) parse_fail(where, "expected header " + std::string(kTrajectoryHeader));
      header = false;
      return;
    }
    std::array<double, 11> v{};
    std::size_t field = 0;
    while (true) {
      const auto comma = line.find(',');
      if (field >= v.size() || !parse_double(line.substr(0, comma), v[field])) {
        parse_fail(where, "field " + std::to_string(field + 1) + " is not a number");
      }
      ++field;
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (field != v.size()) parse_fail(where, "expected 11 fields, got " + std::to_string(field));
    NominalState x;
    x.t = v[0];
    x.p = Vec3(v[1], v[2], v[3]);
    x.v = Vec3(v[4], v[5], v[6]);
    const Eigen::Vector4d q(v[7], v[8], v[9], v[10]);
    x.q = quat_from(q, where);
    if (!out.empty() && !(x.t > out.back().t)) {
      throw Error(ErrorCode::NonMonotonicTimestamp, where + ": t=" + fmt17(x.t));
    }
    out.push_back(x);
  });
  if (header) parse_fail("trajectory", "missing header");
  return out;
}

std::vector<NominalState> load_trajectory(const fs::path& path) {
  return parse_trajectory_csv(read_file(path));
}

// --- reports ---------------------------------------------------------------------------------------

std::string update_reports_jsonl(std::span<const UpdateReport> reports) {
  std::string out;
  for (const UpdateReport& r : reports) {
    json entries = json::array();
    for (const UpdateEntry& e : r.entries) {
      entries.push_back({{"gate_id", e.gate_id},
                         {"label", std::string(to_string(e.label))},
                         {"mahalanobis", e.mahalanobis},
                         {"weight", e.weight},
                         {"applied", e.applied},
                         {"skip", std::string(to_string(e.skip))}});
    }
    out += json{{"t", r.t}, {"filter_t", r.filter_t}, {"applied", r.applied_count()}, {"entries", entries}}.dump();
    out += '\n';
  }
  return out;
}

std::string iteration_log_jsonl(const FgoResult& result) {
  std::string out;
  for (const LmIteration& it : result.log) {
    out += json{{"iter", it.iter},
                {"cost", it.cost},
                {"new_cost", it.new_cost},
                {"lambda", it.lambda},
                {"gradient_norm", it.gradient_norm},
                {"step_norm", it.step_norm},
                {"accepted", it.accepted}}
               .dump();
    out += '\n';
  }
  return out;
}

// --- configuration ------------------------------------------------------------------------------------

void RunConfig::validate() const {
  pipeline.validate();
  scenario.trajectory.validate();
  scenario.corruption.validate();
  scenario.camera.validate();
  if (scenario.num_gates < 1) throw Error(ErrorCode::ValidationError, "num_gates must be >= 1");
  if (!(scenario.gate_size > 0.0)) throw Error(ErrorCode::ValidationError, "gate_size must be positive");
}

void apply_config_json(std::string_view text, RunConfig& cfg) {
  const json doc = parse_json(text, "config");
  Section root(doc, "");
  root.unsigned64("seed", cfg.seed);
  if (auto s = root.sub("noise")) read_noise(*s, cfg.pipeline.eskf.noise);
  if (auto s = root.sub("camera")) read_camera(*s, cfg.pipeline.camera);
  if (auto s = root.sub("extrinsics")) {
    read_extrinsics(*s, cfg.pipeline.ext);
    cfg.scenario.ext_true = cfg.pipeline.ext;
  }
  if (auto s = root.sub("eskf")) read_eskf(*s, cfg.pipeline.eskf);
  if (auto s = root.sub("vision")) read_vision(*s, cfg.pipeline.vision);
  if (auto s = root.sub("fgo")) read_fgo(*s, cfg.pipeline);
  if (auto s = root.sub("simulation")) read_simulation(*s, cfg.scenario);
  if (auto s = root.sub("initial_state")) {
    NominalState x;
    read_state(*s, x);
    cfg.initial_state = x;
  }
  root.finish();
  cfg.scenario.noise = cfg.pipeline.eskf.noise;
  cfg.scenario.camera = cfg.pipeline.camera;
  cfg.scenario.seed = cfg.seed;
  cfg.scenario.trajectory.seed = cfg.seed;
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  apply_config_json(text, cfg);
  return cfg;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_file(path)); }

std::string run_config_json(const RunConfig& cfg) {
  const PipelineConfig& p = cfg.pipeline;
  const NoiseParams& n = p.eskf.noise;
  const CameraModel& c = p.camera;
  const ScenarioSpec& sc = cfg.scenario;
  const TrajectorySpec& t = sc.trajectory;
  const CorruptionSpec& k = sc.corruption;
  json doc;
  doc["seed"] = cfg.seed;
  doc["noise"] = {{"sigma_a", n.sigma_a},   {"sigma_w", n.sigma_w},
                  {"sigma_ba", n.sigma_ba}, {"sigma_bw", n.sigma_bw},
                  {"gravity", vec_json(n.gravity)}};
  doc["camera"] = {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
                   {"k1", c.k1}, {"k2", c.k2}, {"p1", c.p1}, {"p2", c.p2},
                   {"width", c.width}, {"height", c.height},
                   {"undistort_iterations", c.undistort_iterations}};
  doc["extrinsics"] = extrinsics_json(p.ext);
  doc["eskf"] = {{"r_pixel_sigma", p.eskf.r_pixel_sigma},
                 {"huber_tau", p.eskf.huber_tau},
                 {"min_corners_per_gate", p.eskf.min_corners_per_gate},
                 {"robust_mode", std::string(robust_name(p.eskf.robust_mode))},
                 {"scale_r_by_score", p.eskf.scale_r_by_score},
                 {"max_measurement_age", p.eskf.max_measurement_age},
                 {"max_dt", p.eskf.max_dt},
                 {"initial_cov_diag", vec_json(p.eskf.initial_cov_diag)}};
  doc["vision"] = {{"probe_depth_m", p.vision.probe_depth_m},
                   {"assoc_max_dist_px", p.vision.assoc_max_dist_px},
                   {"assoc_min_area_ratio", p.vision.assoc_min_area_ratio},
                   {"max_gate_range_m", p.vision.max_gate_range_m},
                   {"min_corner_score", p.vision.min_corner_score},
                   {"min_corners_per_frame", p.vision.min_corners_per_frame}};
  doc["fgo"] = {{"sigma_corner_diag", vec_json(p.fgo.sigma_corner.diagonal())},
                {"sigma_prior_diag", vec_json(p.fgo.sigma_prior.diagonal())},
                {"sigma_ext_diag", vec_json(p.fgo.sigma_ext.diagonal())},
                {"huber_delta_corner", p.fgo.huber_delta_corner},
                {"kf_time_threshold", p.fgo.kf_time_threshold},
                {"bias_walk_factor", p.fgo.bias_walk_factor},
                {"max_iters", p.lm.max_iters},
                {"lambda_init", p.lm.lambda_init},
                {"visual_less_keyframes", p.graph.visual_less_keyframes},
                {"refine_extrinsics", p.graph.refine_extrinsics},
                {"vins_priors", p.graph.vins_priors}};
  json labels = json::array();
  for (double v : k.label_dropout_prob) labels.push_back(v);
  doc["simulation"] = {
      {"trajectory",
       {{"kind", std::string(to_string(t.kind))},
        {"semi_major", t.semi_major},
        {"semi_minor", t.semi_minor},
        {"height", t.height},
        {"height_amplitude", t.height_amplitude},
        {"period", t.period},
        {"duration", t.duration},
        {"imu_rate_hz", t.imu_rate_hz},
        {"ramp_time", t.ramp_time},
        {"max_roll_deg", t.max_roll_deg},
        {"discrete_consistent", t.discrete_consistent}}},
      {"corruption",
       {{"pixel_noise_sigma", k.pixel_noise_sigma},
        {"dropout_prob", k.dropout_prob},
        {"label_dropout_prob", labels},
        {"partial_prob", k.partial_prob},
        {"label_swap_prob", k.label_swap_prob},
        {"outlier_prob", k.outlier_prob},
        {"outlier_sigma", k.outlier_sigma},
        {"detection_rate_hz", k.detection_rate_hz},
        {"detection_range_m", k.detection_range_m},
        {"bias_a_true", vec_json(k.bias_a_true)},
        {"bias_w_true", vec_json(k.bias_w_true)},
        {"imu_noise", k.imu_noise},
        {"bias_walk", k.bias_walk},
        {"score_corruption", k.score_corruption}}},
      {"num_gates", sc.num_gates},
      {"gate_size", sc.gate_size},
      {"ext_true", extrinsics_json(sc.ext_true)}};
  if (cfg.initial_state) doc["initial_state"] = state_json(*cfg.initial_state);
  return doc.dump(2) + "\n";
}

}  // namespace gatevio::io
