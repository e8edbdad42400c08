#pragma once

#include "gatevio/fgo.hpp"
#include "gatevio/metrics.hpp"
#include "gatevio/pipeline.hpp"
#include "gatevio/sim.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gatevio::io {

namespace fs = std::filesystem;

/// Whole file as a string. Throws Error(ValidationError) when the file does
/// not exist and Error(IoError) when it cannot be read.
std::string read_file(const fs::path& path);

/// Writes to a sibling temporary file, then renames it over path.
/// Throws Error(IoError).
void write_file_atomic(const fs::path& path, std::string_view content);

// --- gate map ------------------------------------------------------------------------

/// {"gates": [{"id": 1, "corners": [[x,y,z] x4 TL,TR,BR,BL]} |
///            {"id": 2, "center": [x,y,z], "yaw_deg": .., "pitch_deg": ..,
///             "roll_deg": .., "width": .., "height": ..}]}
/// Throws Error(ParseError) with line / field context, Error(ValidationError)
/// naming the gate id.
GateMap parse_gate_map(std::string_view text);
GateMap load_gate_map(const fs::path& path);
std::string gate_map_json(const GateMap& map);

// --- sensor logs -----------------------------------------------------------------------

struct SensorLogs {
  std::vector<ImuSample> imu;
  std::vector<GateDetection> detections;
};

/// One {"t", "a": [3], "w": [3]} object per line.
std::vector<ImuSample> parse_imu_log(std::string_view text);
/// One {"t", "corners": [4 x ({"u","v","score"} | null)], "gate_id"?} per line.
std::vector<GateDetection> parse_detection_log(std::string_view text);
/// Throws Error(ParseError) / Error(NonMonotonicTimestamp) naming the line.
SensorLogs load_sensor_logs(const fs::path& imu_path, const fs::path& det_path);

std::string imu_log_jsonl(std::span<const ImuSample> imu);
std::string detection_log_jsonl(std::span<const GateDetection> dets);

// --- trajectories ----------------------------------------------------------------------

inline constexpr std::string_view kTrajectoryHeader = "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz";

/// 17 significant digits per value; biases are not written.
std::string trajectory_csv(std::span<const NominalState> states);
std::vector<NominalState> parse_trajectory_csv(std::string_view text);
std::vector<NominalState> load_trajectory(const fs::path& path);

// --- reports ---------------------------------------------------------------------------

std::string update_reports_jsonl(std::span<const UpdateReport> reports);
std::string iteration_log_jsonl(const FgoResult& result);

// --- configuration ---------------------------------------------------------------------

/// Everything a CLI run needs besides file paths. Each section of the JSON
/// document is optional; missing keys keep their defaults, unknown keys are
/// rejected.
struct RunConfig {
  PipelineConfig pipeline;  ///< camera / noise / extrinsics shared with the scenario
  ScenarioSpec scenario;
  std::optional<NominalState> initial_state;
  std::uint64_t seed = 0;

  void validate() const;
};

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const fs::path& path);
/// All sections with their current values (with defaults: the reference
/// configuration).
std::string run_config_json(const RunConfig& cfg);

/// Overlays a config document onto cfg (same format as parse_run_config;
/// bundled scenario files are such documents).
void apply_config_json(std::string_view text, RunConfig& cfg);

}  // namespace gatevio::io
