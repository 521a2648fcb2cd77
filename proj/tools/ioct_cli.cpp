// ioct: scenario-driven front end for the intraocular OCT capsule workflow.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ioct/ascan.hpp"
#include "ioct/error.hpp"
#include "ioct/io.hpp"
#include "ioct/scenario.hpp"
#include "ioct/workflow.hpp"

using namespace ioct;

namespace {

int finish(const WorkflowResult& r, const Scenario& sc, const char* section) {
  if (section && r.metrics.contains(section)) std::cout << r.metrics.at(section).dump(2) << '\n';
  for (const auto& [stage, seconds] : r.timings) std::fprintf(stderr, "  %-10s %7.2f s\n", stage.c_str(), seconds);
  if (r.exit_code != ExitCode::Ok) {
    std::cerr << "ioct: step '" << r.failed_step << "' failed: " << r.diagnostic << '\n';
  }
  std::cerr << "outputs in " << sc.output_dir.string() << '\n';
  return static_cast<int>(r.exit_code);
}

int run_stage(const std::string& scenario_path, Stage stop, bool feedback, const char* section,
              const std::string& output_override) {
  Scenario sc = load_scenario(scenario_path);
  if (!output_override.empty()) sc.output_dir = output_override;
  RunOptions opt;
  opt.stop_after = stop;
  opt.feedback = feedback;
  return finish(run_workflow(sc, opt), sc, section);
}

void print_report(const json& m) {
  auto num = [](const json& j, const char* key) { return j.contains(key) && j[key].is_number() ? j[key].get<double>() : NAN; };
  std::printf("scenario  %s\nseed      %s\n", m.value("scenario_digest", "?").c_str(), m.at("seed").dump().c_str());
  if (m.contains("registration")) {
    const json& r = m["registration"];
    std::printf("register  residual %.4f mm  rot err %.4f deg  trans err %.4f mm\n", num(r, "residual_rms_mm"),
                num(r, "rotation_error_deg"), num(r, "translation_error_mm"));
  }
  if (m.contains("refractive")) {
    const json& r = m["refractive"];
    std::printf("index     n %.4f (true %.4f)\n", num(r, "n"), num(r, "n_true"));
  }
  if (m.contains("spatial")) {
    const json& r = m["spatial"];
    std::printf("spatial   %s  points %d  raw rms %.4f mm  corrected rms %.4f mm\n",
                r.value("enabled", false) ? "refraction" : "axial-only", r.value("points", 0),
                num(r["raw"], "full_rms_mm"), num(r["corrected"], "full_rms_mm"));
  }
  if (m.contains("fiber_offset")) {
    const json& r = m["fiber_offset"];
    std::printf("offset    d_tip %.4f mm (true %.4f)\n", num(r, "d_tip_mm"), num(r, "d_tip_true_mm"));
  }
  if (m.contains("map")) {
    const json& r = m["map"];
    std::printf("map       alpha %.1f deg  waypoints %d  skipped %d  model rms %.4f mm\n", num(r, "alpha_deg"),
                r.value("waypoints", 0), r.value("skipped", 0), num(r, "model_rms_mm"));
  }
  if (m.contains("localization")) {
    for (const char* part : {"whole", "pupillary", "transpupillary"}) {
      const json& r = m["localization"][part];
      std::printf("locate    %-15s rms %.4f mm  full %.4f mm  flagged %d / %d\n", part, num(r, "rms_mm"),
                  num(r, "full_rms_mm"), r.value("flagged", 0), r.value("points", 0));
    }
  }
  if (m.contains("cleaning")) {
    const json& r = m["cleaning"];
    std::printf("clean     feedback %s  mean |e| %.4f mm  max |e| %.4f mm  min d %.4f mm  contacts %d\n",
                r.value("feedback", true) ? "on" : "off", num(r, "mean_abs_error_mm"), num(r, "max_abs_error_mm"),
                num(r, "min_distance_mm"), r.value("contacts", 0));
  }
  const json& s = m["status"];
  std::printf("status    exit %d %s\n", s.value("exit_code", -1), s.value("diagnostic", "").c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intraocular OCT capsule localization and cleaning simulator"};
  app.require_subcommand(1);
  app.allow_windows_style_options(false);

  std::string scenario_path;
  std::string output_dir;

  // phantom gen
  auto* phantom_cmd = app.add_subcommand("phantom", "Phantom utilities");
  phantom_cmd->require_subcommand(1);
  auto* gen = phantom_cmd->add_subcommand("gen", "Write default phantom, robot and scenario files");
  std::string gen_dir = ".";
  std::string chamber = "air";
  std::uint64_t gen_seed = 1;
  gen->add_option("--out", gen_dir, "Target directory")->capture_default_str();
  gen->add_option("--chamber", chamber, "Chamber medium (air, water, gel, bss, ...)")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Scenario seed")->capture_default_str();

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Run the workflow up to one calibration step");
  cal->require_subcommand(1);
  struct CalStep {
    const char* name;
    Stage stage;
    const char* section;
  };
  const CalStep steps[] = {{"register", Stage::Register, "registration"},
                           {"refractive", Stage::Refractive, "refractive"},
                           {"spatial", Stage::Spatial, "spatial"},
                           {"offset", Stage::FiberOffset, "fiber_offset"}};
  std::vector<CLI::App*> cal_cmds;
  for (const CalStep& s : steps) {
    auto* c = cal->add_subcommand(s.name, std::string("Run through the ") + s.name + " step");
    c->add_option("--scenario", scenario_path, "Scenario JSON")->required();
    c->add_option("--output", output_dir, "Override the output directory");
    cal_cmds.push_back(c);
  }

  auto* map_cmd = app.add_subcommand("map", "Plan, scan and score the capsule map");
  map_cmd->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  map_cmd->add_option("--output", output_dir, "Override the output directory");

  auto* clean_cmd = app.add_subcommand("clean", "Full workflow ending with the cleaning sweep");
  bool no_feedback = false;
  clean_cmd->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  clean_cmd->add_option("--output", output_dir, "Override the output directory");
  clean_cmd->add_flag("--no-feedback", no_feedback, "Disable the outer distance loop");

  auto* run_cmd = app.add_subcommand("run", "Full workflow");
  run_cmd->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  run_cmd->add_option("--output", output_dir, "Override the output directory");

  auto* report_cmd = app.add_subcommand("report", "Summarize a metrics file");
  std::string metrics_path;
  report_cmd->add_option("--metrics", metrics_path, "metrics.json written by run")->required();

  auto* detect_cmd = app.add_subcommand("detect", "Distance of the first surface in an A-scan CSV");
  std::string ascan_path;
  std::string model_name = "edge";
  double threshold = -1.0;
  double pitch = 9.4;
  detect_cmd->add_option("--ascan", ascan_path, "CSV with index,intensity")->required();
  detect_cmd->add_option("--model", model_name, "thresholding, peak or edge")
      ->check(CLI::IsMember({"thresholding", "peak", "edge"}))
      ->capture_default_str();
  detect_cmd->add_option("--threshold", threshold, "Absolute threshold (default: 4x noise floor)");
  detect_cmd->add_option("--pitch", pitch, "Sample pitch, um")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const std::filesystem::path dir = gen_dir;
      EyePhantom p = EyePhantom::default_phantom();
      p.chamber_medium = media::by_name(chamber);
      write_json_file(dir / "phantom.json", to_json(p));
      write_json_file(dir / "robot.json", to_json(RobotSetup::default_setup()));
      Scenario sc;
      sc.phantom = p;
      sc.phantom_path = "phantom.json";
      sc.robot_path = "robot.json";
      sc.output_dir = "out";
      sc.seed = gen_seed;
      write_json_file(dir / "scenario.json", to_json(sc));
      std::cout << "wrote " << (dir / "scenario.json").string() << '\n';
      return 0;
    }
    for (std::size_t i = 0; i < cal_cmds.size(); ++i) {
      if (cal_cmds[i]->parsed()) return run_stage(scenario_path, steps[i].stage, true, steps[i].section, output_dir);
    }
    if (map_cmd->parsed()) return run_stage(scenario_path, Stage::Map, true, "localization", output_dir);
    if (clean_cmd->parsed()) return run_stage(scenario_path, Stage::Clean, !no_feedback, "cleaning", output_dir);
    if (run_cmd->parsed()) return run_stage(scenario_path, Stage::Clean, true, "status", output_dir);
    if (report_cmd->parsed()) {
      print_report(read_json_file(metrics_path));
      return 0;
    }
    if (detect_cmd->parsed()) {
      const AScanSignal s = read_ascan_csv(ascan_path, pitch);
      const DistanceModel model = model_name == "thresholding" ? DistanceModel::Thresholding
                                  : model_name == "peak"       ? DistanceModel::PeakDetection
                                                               : DistanceModel::EdgeDetection;
      const double thr = threshold >= 0.0 ? threshold : 4.0 * noise_floor(s);
      std::printf("%.4f\n", detect_distance(s, model, thr));
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "ioct: config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "ioct: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
