#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ioct/calibration.hpp"
#include "ioct/control.hpp"
#include "ioct/eye_model.hpp"
#include "ioct/kinematics.hpp"
#include "ioct/mapping.hpp"
#include "ioct/oct_sim.hpp"

namespace ioct {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

json to_json(const Vec3& v);
Vec3 vec3_from_json(const json& j);
json to_json(const Ellipsoidd& e);
Ellipsoidd ellipsoid_from_json(const json& j);
json to_json(const Medium& m);
json to_json(const EyePhantom& p);
/// Missing fields keep their defaults; malformed values throw ConfigError.
EyePhantom phantom_from_json(const json& j);
json to_json(const NoiseModel& n);
NoiseModel noise_from_json(const json& j);
json to_json(const JointState& q);
json to_json(const RegistrationSolution& r);
json to_json(const ScanPlan& plan);
json to_json(const CapsuleMap& map);
json to_json(const PIGains& g);
PIGains gains_from_json(const json& j);
json to_json(const ControlMetrics& m);

/// The robot as configured: joint ranges and link length, where its base sits
/// relative to the OCT frame and the true fiber offset (simulation only).
struct RobotSetup {
  RobotParams params;
  Pose b_to_o = Pose::Identity();
  double fiber_offset_true = 0.0;

  /// RCM at the incision, tool axis along the optical axis at q = 0.
  RobotTruth truth(const EyePhantom& phantom) const;
  /// What the pipeline knows: the same kinematics with a given fiber offset.
  RobotParams nominal(const EyePhantom& phantom, double fiber_offset) const;
  static RobotSetup default_setup();
};

json to_json(const RobotSetup& r);
RobotSetup robot_from_json(const json& j);

/// Reads a JSON file; throws ConfigError on a missing file or parse failure.
json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

void write_point_cloud_csv(const std::filesystem::path& path, const CapsuleMap& map);
void write_point_cloud_csv(const std::filesystem::path& path, const PointCloud& cloud, const std::string& provenance);
void write_trace_csv(const std::filesystem::path& path, const ControlTrace& trace);
void write_ascan_csv(const std::filesystem::path& path, const AScanSignal& signal);
/// Columns index,intensity with a header row; the pitch comes from the caller.
AScanSignal read_ascan_csv(const std::filesystem::path& path, double sample_pitch_um = 9.4);
/// Raw little-endian float32 samples in (y, x, z) order plus a JSON sidecar.
void write_vscan(const std::filesystem::path& stem, const VScanVolume& volume);

}  // namespace ioct
