#include "gatevio/cli.hpp"

#include "gatevio/error.hpp"
#include "gatevio/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

namespace gatevio {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string output_dir = ".";
};

/// Marks which errors are the caller's fault (exit 1) rather than a failure
/// of the computation (exit 2).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Fn>
auto load(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw InputError(e.what());
  }
}

io::RunConfig effective_config(const Globals& g, const std::string& spec_path) {
  return load([&] {
    io::RunConfig cfg;
    if (!g.config.empty()) io::apply_config_json(io::read_file(g.config), cfg);
    if (!spec_path.empty()) io::apply_config_json(io::read_file(spec_path), cfg);
    if (g.seed) {
      cfg.seed = *g.seed;
      cfg.scenario.seed = *g.seed;
      cfg.scenario.trajectory.seed = *g.seed;
    }
    cfg.validate();
    return cfg;
  });
}

fs::path output_dir(const Globals& g) {
  const fs::path dir(g.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create output directory " + dir.string());
  return dir;
}

json trajectory_error_json(const TrajectoryError& e) {
  return {{"e_t", e.e_t}, {"e_r_deg", e.e_r}, {"e_v", e.e_v}, {"count", e.count()}};
}

json reprojection_json(const ReprojectionStats& s) {
  return {{"mean_px", s.mean_px}, {"median_px", s.median_px}, {"p95_px", s.p95_px}, {"count", s.count}};
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

std::string quat_string(const UnitQuaternion& q) {
  std::ostringstream ss;
  ss.precision(17);
  ss << q.w() << "," << q.x() << "," << q.y() << "," << q.z();
  return ss.str();
}

// --- subcommands -----------------------------------------------------------------------

int cmd_simulate(const Globals& g, const std::string& spec, std::ostream& out) {
  const io::RunConfig cfg = effective_config(g, spec);
  const Scenario sc = make_scenario(cfg.scenario);
  const fs::path dir = output_dir(g);
  io::write_file_atomic(dir / "imu.jsonl", io::imu_log_jsonl(sc.imu.imu));
  io::write_file_atomic(dir / "detections.jsonl", io::detection_log_jsonl(sc.detections));
  io::write_file_atomic(dir / "gates.json", io::gate_map_json(sc.map));
  io::write_file_atomic(dir / "truth.csv", io::trajectory_csv(sc.truth_states()));
  io::write_file_atomic(dir / "config.json", io::run_config_json(cfg));
  out << "simulated " << sc.imu.imu.size() << " IMU readings, " << sc.detections.size()
      << " detections, " << sc.map.gates.size() << " gates -> " << dir.string() << "\n";
  return kExitOk;
}

struct SensorInputs {
  GateMap map;
  io::SensorLogs logs;
};

SensorInputs load_inputs(const std::string& map, const std::string& imu, const std::string& dets) {
  return load([&] {
    SensorInputs in;
    in.map = io::load_gate_map(map);
    in.logs = io::load_sensor_logs(imu, dets);
    if (in.logs.imu.empty()) throw Error(ErrorCode::EmptyStream, "IMU log is empty");
    return in;
  });
}

int cmd_run_vins(const Globals& g, const std::string& map, const std::string& imu,
                 const std::string& dets, const std::string& init_from, std::ostream& out) {
  const io::RunConfig cfg = effective_config(g, "");
  const SensorInputs in = load_inputs(map, imu, dets);
  const NominalState initial = load([&] {
    if (!init_from.empty()) {
      const auto ref = io::load_trajectory(init_from);
      const auto x = interpolate_state(ref, in.logs.imu.front().t);
      if (!x) throw Error(ErrorCode::ValidationError, "--init-from does not cover the first IMU time");
      return *x;
    }
    if (cfg.initial_state) return *cfg.initial_state;
    throw Error(ErrorCode::ValidationError, "no initial state: pass --init-from or set initial_state");
  });

  const FilterRun run = run_filter(in.logs.imu, in.logs.detections, in.map, cfg.pipeline, initial);
  const fs::path dir = output_dir(g);
  io::write_file_atomic(dir / "vins.csv", io::trajectory_csv(run.trajectory));
  io::write_file_atomic(dir / "updates.jsonl", io::update_reports_jsonl(run.reports));
  io::write_file_atomic(dir / "associated.jsonl", io::detection_log_jsonl(run.associated));
  out << "filtered " << run.trajectory.size() << " states, " << run.reports.size()
      << " updates -> " << (dir / "vins.csv").string() << "\n";
  return kExitOk;
}

int cmd_run_fgo(const Globals& g, const std::string& map, const std::string& imu,
                const std::string& dets, const std::string& vins_path, std::ostream& out) {
  const io::RunConfig cfg = effective_config(g, "");
  const SensorInputs in = load_inputs(map, imu, dets);
  const auto vins = load([&] { return io::load_trajectory(vins_path); });

  const SmootherRun run = run_smoother(in.logs.imu, in.logs.detections, in.map, vins, cfg.pipeline);
  const fs::path dir = output_dir(g);
  io::write_file_atomic(dir / "fgo.csv", io::trajectory_csv(run.dense));
  io::write_file_atomic(dir / "fgo_keyframes.csv", io::trajectory_csv(run.result.states));
  io::write_file_atomic(dir / "fgo_iterations.jsonl", io::iteration_log_jsonl(run.result));
  const UnitQuaternion& nominal = cfg.pipeline.ext.R_bc;
  const json ext{{"q_bc_nominal", {nominal.w(), nominal.x(), nominal.y(), nominal.z()}},
                 {"q_bc_refined",
                  {run.result.ext_rotation.w(), run.result.ext_rotation.x(),
                   run.result.ext_rotation.y(), run.result.ext_rotation.z()}},
                 {"correction_deg", nominal.angle_to(run.result.ext_rotation) * 180.0 / std::numbers::pi},
                 {"initial_cost", run.result.initial_cost},
                 {"final_cost", run.result.final_cost},
                 {"converged", run.result.converged},
                 {"termination", std::string(to_string(run.result.termination))},
                 {"iterations", run.result.log.size()},
                 {"keyframes", run.graph.keyframes.size()}};
  io::write_file_atomic(dir / "extrinsics.json", ext.dump(2) + "\n");
  out << "smoothed " << run.graph.keyframes.size() << " keyframes in " << run.result.log.size()
      << " iterations (cost " << run.result.initial_cost << " -> " << run.result.final_cost
      << "), R_bc = [" << quat_string(run.result.ext_rotation) << "]\n";
  return kExitOk;
}

int cmd_evaluate(const Globals& g, const std::string& reference,
                 const std::vector<std::string>& estimates,
                 const std::vector<std::string>& extrinsics, const std::string& dets,
                 const std::string& map_path, std::ostream& out) {
  const io::RunConfig cfg = effective_config(g, "");
  struct Named {
    std::string name;
    std::vector<NominalState> states;
    Extrinsics ext;
  };
  std::vector<Named> inputs;
  std::vector<GateDetection> detections;
  GateMap map;
  const auto ref = load([&] {
    for (const std::string& e : estimates) {
      const auto eq = e.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorCode::ValidationError, "--estimate expects name=path, got '" + e + "'");
      }
      inputs.push_back({e.substr(0, eq), io::load_trajectory(e.substr(eq + 1)), cfg.pipeline.ext});
    }
    for (const std::string& e : extrinsics) {
      const auto eq = e.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorCode::ValidationError, "--extrinsics expects name=path, got '" + e + "'");
      }
      const std::string name = e.substr(0, eq);
      auto it = std::find_if(inputs.begin(), inputs.end(), [&](const Named& n) { return n.name == name; });
      if (it == inputs.end()) throw Error(ErrorCode::ValidationError, "--extrinsics names unknown estimate " + name);
      const json doc = parse_json_file(e.substr(eq + 1));
      if (!doc.contains("q_bc_refined") || !doc["q_bc_refined"].is_array() || doc["q_bc_refined"].size() != 4) {
        throw Error(ErrorCode::ParseError, e.substr(eq + 1) + ": expected q_bc_refined [w, x, y, z]");
      }
      const json& q = doc["q_bc_refined"];
      it->ext.R_bc = UnitQuaternion(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
    }
    if (!dets.empty() != !map_path.empty()) {
      throw Error(ErrorCode::ValidationError, "--detections and --map must be given together");
    }
    if (!dets.empty()) {
      detections = io::parse_detection_log(io::read_file(dets));
      map = io::load_gate_map(map_path);
    }
    return io::load_trajectory(reference);
  });

  const fs::path dir = output_dir(g);
  json report{{"rotation_metric", "geodesic angle, degrees"}, {"alignment", "none"}, {"estimators", json::object()}};
  for (const Named& in : inputs) {
    const TrajectoryError e = trajectory_error(in.states, ref);
    json entry = trajectory_error_json(e);
    if (!detections.empty()) {
      entry["reprojection"] = reprojection_json(
          reprojection_error(in.states, detections, map, cfg.pipeline.camera, in.ext));
    }
    report["estimators"][in.name] = entry;
    io::write_file_atomic(dir / ("errors_" + in.name + ".csv"), error_series_csv(e));
    out << in.name << ": e_t=" << e.e_t << " m, e_r=" << e.e_r << " deg, e_v=" << e.e_v << " m/s\n";
  }
  io::write_file_atomic(dir / "metrics.json", report.dump(2) + "\n");
  return kExitOk;
}

int cmd_sweep(const Globals& g, const std::string& spec, const std::string& kind,
              const std::vector<int>& values, int seeds, std::ostream& out) {
  io::RunConfig cfg = effective_config(g, spec);
  if (kind != "min-corner" && kind != "robustness" && kind != "all") {
    throw InputError("--kind must be min-corner, robustness or all");
  }
  if (seeds < 1) throw InputError("--seeds must be >= 1");

  json report{{"min_corner", json::array()}, {"robustness", json::array()}};
  std::string csv = "sweep,seed,setting,e_t,extra\n";
  char buf[256];
  const std::array<AblationVariant, 3> variants{AblationVariant::Huber, AblationVariant::Chi2,
                                                AblationVariant::Naive};
  for (int i = 0; i < seeds; ++i) {
    ScenarioSpec spec_i = cfg.scenario;
    spec_i.seed = cfg.seed + static_cast<std::uint64_t>(i);
    const Scenario sc = make_scenario(spec_i);
    if (kind == "min-corner" || kind == "all") {
      for (const SweepRow& r : min_corner_sweep(sc, cfg.pipeline, values)) {
        report["min_corner"].push_back(
            {{"seed", spec_i.seed}, {"min_corners", r.min_corners}, {"e_t", r.e_t}, {"updates", r.updates}});
        std::snprintf(buf, sizeof(buf), "min_corner,%llu,%d,%.17g,%zu\n",
                      static_cast<unsigned long long>(spec_i.seed), r.min_corners, r.e_t, r.updates);
        csv += buf;
      }
    }
    if (kind == "robustness" || kind == "all") {
      for (const AblationRow& r : robustness_ablation(sc, cfg.pipeline, variants)) {
        report["robustness"].push_back({{"seed", spec_i.seed},
                                        {"variant", std::string(to_string(r.variant))},
                                        {"e_t", std::isfinite(r.e_t) ? json(r.e_t) : json(nullptr)},
                                        {"diverged", r.diverged}});
        std::snprintf(buf, sizeof(buf), "robustness,%llu,%s,%.17g,%d\n",
                      static_cast<unsigned long long>(spec_i.seed),
                      std::string(to_string(r.variant)).c_str(), r.e_t, r.diverged ? 1 : 0);
        csv += buf;
      }
    }
  }
  const fs::path dir = output_dir(g);
  io::write_file_atomic(dir / "sweep.json", report.dump(2) + "\n");
  io::write_file_atomic(dir / "sweep.csv", csv);
  out << "sweep over " << seeds << " seed(s) -> " << (dir / "sweep.json").string() << "\n";
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gate-relative monocular visual-inertial odometry toolkit", "gatevio"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (overrides the config)");
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--output-dir", g.output_dir, "Directory for output files")->capture_default_str();

  std::string spec, map, imu, dets, init_from, vins, reference, kind = "all";
  std::vector<std::string> estimates;
  std::vector<std::string> extrinsics;
  std::vector<int> values{2, 4, 6};
  int seeds = 5;

  auto* simulate = app.add_subcommand("simulate", "Synthesize sensor logs, gate map and ground truth");
  simulate->add_option("--spec", spec, "Scenario file (config document)");

  auto* run_vins = app.add_subcommand("run-vins", "Run the filter over sensor logs");
  run_vins->add_option("--map", map, "Gate map JSON")->required();
  run_vins->add_option("--imu", imu, "IMU log (JSONL)")->required();
  run_vins->add_option("--detections", dets, "Detection log (JSONL)")->required();
  run_vins->add_option("--init-from", init_from, "Trajectory CSV giving the initial state");

  auto* run_fgo = app.add_subcommand("run-fgo", "Smooth a filter trajectory with the factor graph");
  run_fgo->add_option("--map", map, "Gate map JSON")->required();
  run_fgo->add_option("--imu", imu, "IMU log (JSONL)")->required();
  run_fgo->add_option("--detections", dets, "Detection log (JSONL)")->required();
  run_fgo->add_option("--vins", vins, "Filter trajectory CSV")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Compare trajectories against a reference");
  evaluate->add_option("--reference", reference, "Reference trajectory CSV")->required();
  evaluate->add_option("--estimate", estimates, "name=path of an estimated trajectory (repeatable)")
      ->required();
  evaluate->add_option("--extrinsics", extrinsics,
                       "name=path of a run-fgo extrinsics.json whose refined rotation is used for "
                       "that estimate's reprojection (repeatable)");
  evaluate->add_option("--detections", dets, "Associated detections for reprojection statistics");
  evaluate->add_option("--map", map, "Gate map (with --detections)");

  auto* sweep = app.add_subcommand("sweep", "Min-corner and robustness ablations on simulated runs");
  sweep->add_option("--spec", spec, "Scenario file (config document)");
  sweep->add_option("--kind", kind, "min-corner, robustness or all")->capture_default_str();
  sweep->add_option("--values", values, "Min-corner settings")->delimiter(',')->capture_default_str();
  sweep->add_option("--seeds", seeds, "Number of seeds, starting at --seed")->capture_default_str();

  std::vector<std::string> argv_rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(argv_rest.begin(), argv_rest.end());
  try {
    app.parse(argv_rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitValidation;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(g, spec, out);
    if (run_vins->parsed()) return cmd_run_vins(g, map, imu, dets, init_from, out);
    if (run_fgo->parsed()) return cmd_run_fgo(g, map, imu, dets, vins, out);
    if (evaluate->parsed()) return cmd_evaluate(g, reference, estimates, extrinsics, dets, map, out);
    if (sweep->parsed()) return cmd_sweep(g, spec, kind, values, seeds, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    const ErrorCode c = e.code();
    const bool validation = c == ErrorCode::ValidationError || c == ErrorCode::InvalidSpec ||
                            c == ErrorCode::ParseError;
    return validation ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << app.help();
  return kExitValidation;
}

}  // namespace gatevio
