#pragma once

#include <span>
#include <vector>

#include "ioct/ascan.hpp"
#include "ioct/conic_fit.hpp"
#include "ioct/kinematics.hpp"
#include "ioct/lm.hpp"
#include "ioct/oct_sim.hpp"
#include "ioct/types.hpp"

namespace ioct {

// ---------------------------------------------------------------- tool detection

struct ToolDetection {
  Vec3 position = Vec3::Zero();  ///< tooltip on the fitted axis, {o}
  Vec3 axis = Vec3::UnitZ();     ///< unit, pointing from the shaft towards the tip
  double radius = 0.0;
  int voxel_count = 0;
};

/// Locates a cylindrical tool in a volume: principal axis of the bright voxels,
/// refined by a least-squares cylinder fit; the tip is the extreme voxel along
/// the axis moved onto the axis. Throws DetectionError below `min_voxels`.
ToolDetection detect_tooltip(const VScanVolume& volume, double intensity_threshold = 0.5, int min_voxels = 50);

// ---------------------------------------------------------------- registration

struct FeatureObservation {
  Vec3 p_o = Vec3::Zero();
  Vec3 z_o = Vec3::UnitZ();
  Vec3 p_b = Vec3::Zero();
  Vec3 z_b = Vec3::UnitZ();
};

/// Rigid transform taking {b} coordinates into {o}: p_o = R(r_ob) p_b + p_ob.
struct RegistrationSolution {
  Vec3 r_ob = Vec3::Zero();  ///< axis-angle
  Vec3 p_ob = Vec3::Zero();  ///< mm
  double w = 1.0;
  double residual_rms = 0.0;
  std::vector<double> per_point_errors;
  int iterations = 0;
  std::vector<double> trace;

  Mat3 rotation() const { return rotation_from_vector(r_ob); }
  Pose b_to_o() const { return make_pose(rotation(), p_ob); }
  Pose o_to_b() const { return b_to_o().inverse(); }
  static RegistrationSolution from_pose(const Pose& b_to_o);
};

/// Levenberg-Marquardt over (r_ob, p_ob), seeded by a closed-form Umeyama
/// alignment. Throws DegenerateGeometryError on fewer than 3 or collinear
/// points and ConvergenceError when the iteration budget runs out.
RegistrationSolution register_frames(std::span<const FeatureObservation> observations, double w = 1.0,
                                     const LmOptions& options = {});

// ---------------------------------------------------------------- refractive index

/// |least-squares slope| of optical distance against insertion.
double calibrate_refractive_index(std::span<const double> d3_positions, std::span<const double> measured_distances);

// ---------------------------------------------------------------- spatial correction

struct SpatialCorrectionOptions {
  double ambient_n = 1.0;
  double cornea_n = 1.45;
  double chamber_n = 1.0;
  /// false: depth-only segment rescaling along the beam (no refraction).
  bool refraction = true;
  double lowpass_cutoff = 0.08;
  /// Step detector: difference of the means of `step_width` samples after and
  /// before each index; edges are its local maxima above median + gain * robust sigma.
  int step_width = 4;
  double threshold_gain = 6.0;
  /// Lower bound on the threshold as a fraction of the strongest step.
  double relative_floor = 0.02;
};

/// Sample indices of the rising edges of a column, in depth order.
std::vector<Eigen::Index> segment_column(const AScanSignal& column, const SpatialCorrectionOptions& options = {});

struct SegmentStep {
  Vec3 end;
  Vec3 direction;
};

/// Refracts `direction` at `start` (surface normal `normal`, indices n_before ->
/// n_after) and walks optical_length / n_after along the refracted ray.
SegmentStep propagate_segment(const Vec3& start, const Vec3& direction, const Vec3& normal, double n_before,
                              double n_after, double optical_length);

struct SpatialCorrectionResult {
  PointCloud corrected_pc;
  PointCloud raw_pc;
  std::vector<Ellipse2> cornea_outer_fit;  ///< per B-scan row (x, z)
  std::vector<Ellipse2> cornea_inner_fit;
  std::vector<double> per_point_shift;
  int skipped_columns = 0;
  int failed_scans = 0;
};

SpatialCorrectionResult correct_vscan_spatial(const VScanVolume& volume, const SpatialCorrectionOptions& options = {});

// ---------------------------------------------------------------- fiber offset

struct ProbeRay {
  Vec3 tooltip_b;
  Vec3 axis_b;
};

struct FiberOffsetOptions {
  double initial = 0.0;
  double gradient_step = 1e-3;  ///< mm, upper bound of the central-difference step
  double initial_step = 1.0;    ///< mm per unit gradient
  double armijo = 1e-4;
  double step_tolerance = 1e-7;
  int max_iterations = 200;
};

struct FiberOffsetResult {
  double d_tip = 0.0;
  double initial_objective = 0.0;  ///< mean nearest distance, mm
  double final_objective = 0.0;
  double initial_rms = 0.0;
  double final_rms = 0.0;
  int iterations = 0;
  int excluded = 0;
  std::vector<double> trace;
};

/// Projected points p = tooltip + axis (d + d_tip), mapped to {o}.
PointCloud project_probe_points(std::span<const ProbeRay> rays, std::span<const double> distances, double d_tip,
                                const RegistrationSolution& registration);

/// Gradient descent on the mean nearest distance between projected probe
/// points and `reference_pc` ({o}). Non-finite distances are excluded.
FiberOffsetResult calibrate_fiber_offset(std::span<const ProbeRay> rays, std::span<const double> distances,
                                         const PointCloud& reference_pc, const RegistrationSolution& registration,
                                         const FiberOffsetOptions& options = {});

}  // namespace ioct
