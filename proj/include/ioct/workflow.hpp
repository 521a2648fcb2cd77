#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ioct/calibration.hpp"
#include "ioct/control.hpp"
#include "ioct/mapping.hpp"
#include "ioct/scenario.hpp"

namespace ioct {

enum class ExitCode : int { Ok = 0, StepError = 1, Config = 2, NonConvergence = 3, Contact = 4 };

enum class Stage { Register, Refractive, Spatial, FiberOffset, Map, Clean };

const char* to_string(Stage s);

// ---------------------------------------------------------------- protocols

struct RegistrationProtocolResult {
  std::vector<FeatureObservation> features;
  RegistrationSolution solution;
};

/// Moves the tool through `count` random poses, images each tip in a tool
/// volume, detects it and registers {b} to {o}.
RegistrationProtocolResult registration_protocol(const RobotTruth& truth, const RobotParams& nominal, int count,
                                                 const ToolImaging& imaging, const NoiseModel& noise,
                                                 std::uint64_t seed);

struct RefractiveProtocolResult {
  double n = 1.0;
  std::vector<double> d3;
  std::vector<double> optical;
};

/// Aims the fiber `standoff` mm before `target_b`, then inserts `steps` times
/// by `step_mm`, measuring the optical distance after each move; n is the
/// slope of optical distance against insertion.
RefractiveProtocolResult refractive_protocol(const EyePhantom& phantom, const RobotTruth& truth,
                                             const RobotParams& nominal, const Vec3& target_b, double standoff,
                                             int steps, double step_mm, const ProbeOptions& options,
                                             std::uint64_t seed);

struct OffsetProtocolResult {
  std::vector<ProbeRay> rays;
  std::vector<double> distances;  ///< physical, NaN where nothing was found
  FiberOffsetResult fit;
};

/// Probes `count` points of the transpupillary cloud inside the pupil at
/// `standoff` and fits d_tip against that cloud.
OffsetProtocolResult fiber_offset_protocol(const EyePhantom& phantom, const RobotTruth& truth,
                                           const RobotParams& nominal, const RegistrationSolution& registration,
                                           double n, const PointCloud& reference_pc, int count, double standoff,
                                           const ProbeOptions& options, std::uint64_t seed);

/// RMS distance from the ground-truth points to the surface of `model`.
double model_rms(const Ellipsoidd& model, const PointCloud& ground_truth);

// ---------------------------------------------------------------- workflow

struct RunOptions {
  Stage stop_after = Stage::Clean;
  bool feedback = true;
  bool write_outputs = true;
};

struct WorkflowResult {
  ExitCode exit_code = ExitCode::Ok;
  std::string failed_step;
  std::string diagnostic;
  json metrics;

  RegistrationSolution registration;
  double n = 1.0;
  SpatialCorrectionResult spatial;
  double d_tip = 0.0;
  ScanPlan plan;
  CapsuleMap map;
  LocalizationError localization;  ///< intraocular points against the ground truth
  ControlTrace trace;
  /// Wall time per stage, s. Kept out of `metrics` so reports stay reproducible.
  std::map<std::string, double> timings;
};

/// register -> refractive -> spatial -> fiber offset -> plan/scan/refit ->
/// clean, honouring the scenario's disable flags. Errors are caught per stage
/// and reported through exit_code, failed_step and diagnostic.
WorkflowResult run_workflow(const Scenario& scenario, const RunOptions& options = {});

}  // namespace ioct
