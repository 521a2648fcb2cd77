#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ioct/control.hpp"
#include "ioct/io.hpp"

namespace ioct {

/// Which online calibration steps run. A disabled step falls back to its
/// nominal value: the design pose of the robot base, raw optical probe
/// distances (n = 1) with the device's nominal index for the V-scan, axial-only
/// V-scan scaling and d_tip = 0.
struct WorkflowFlags {
  bool registration = true;
  bool refractive = true;
  bool spatial = true;
  bool fiber_offset = true;
  bool cleaning = true;
};

struct Scenario {
  std::filesystem::path phantom_path;
  std::filesystem::path robot_path;
  std::filesystem::path output_dir = "out";
  EyePhantom phantom = EyePhantom::default_phantom();
  RobotSetup robot = RobotSetup::default_setup();
  NoiseModel noise;
  WorkflowFlags flags;
  std::uint64_t seed = 1;

  // registration
  int features = 20;
  ToolImaging tool_imaging{0.3, 3.0, 0.025, 12.5, 1.0, 1.0};
  // refractive index protocol
  int refractive_steps = 20;
  double refractive_step_mm = 0.05;
  double refractive_standoff = 2.0;
  /// Index the V-scan assumes for the chamber when the calibration is skipped (aqueous humour).
  double nominal_chamber_n = 1.336;
  // transpupillary volume
  double vscan_pitch = 0.1;
  double cornea_n_prior = 1.45;
  // fiber offset
  int offset_rays = 20;
  // mapping
  double alpha = 3.0;
  double standoff = 1.0;
  Vec3 k{1.0, 1.0, 10.0};
  int scan_averages = 400;
  double ground_truth_resolution = 0.5;  ///< deg
  // cleaning
  PIGains gains{0.2, 2.0, 6.0, 1.0, 6.0};
  double d_star = 1.0;
  double model_bias = 0.6;
  int clean_averages = 100;
  SweepSpec sweep;

  /// SHA-256 over the scenario, phantom and robot file contents (hex).
  std::string digest;
};

/// Parses a scenario file. Phantom and robot paths are resolved relative to
/// the scenario's directory. Throws ConfigError on a missing or invalid file.
Scenario load_scenario(const std::filesystem::path& path);

json to_json(const Scenario& s);

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace ioct
