#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ioct/ascan.hpp"
#include "ioct/calibration.hpp"
#include "ioct/ellipsoid_fit.hpp"
#include "ioct/eye_model.hpp"
#include "ioct/kinematics.hpp"
#include "ioct/oct_sim.hpp"
#include "ioct/tsp.hpp"

namespace ioct {

enum class Provenance { Transpupillary, Intraocular };

const char* to_string(Provenance p);

struct MapPoint {
  Vec3 p;  ///< {o}, mm
  Provenance provenance = Provenance::Transpupillary;
};

struct CapsuleMap {
  std::vector<MapPoint> points;
  Ellipsoidd fitted;
  double fit_rms = 0.0;

  void append(const PointCloud& cloud, Provenance provenance);
  PointCloud cloud() const;
  PointCloud cloud(Provenance provenance) const;
  /// Refits the ellipsoid to every point.
  void refit();
};

struct Waypoint {
  JointState q;
  Vec3 surface_point = Vec3::Zero();  ///< {b}
  Vec3 target = Vec3::Zero();         ///< fiber face position, {b}
  double standoff = 1.0;
};

struct WaypointOptions {
  /// Posterior direction in {b}; exit points must lie on this side of the centre.
  Vec3 posterior = Vec3::UnitZ();
  /// Minimum height of an exit point above the equatorial plane, mm.
  double latitude_margin = 0.0;
};

/// Grid over (theta1, theta2) at multiples of `alpha_deg` inside the joint
/// limits. Each tool ray from the RCM is cut with `fitted` (expressed in {b});
/// the posterior exit point becomes the surface point and the fiber is placed
/// `offset` mm before it. Throws CoverageError when nothing survives.
std::vector<Waypoint> generate_waypoints(const Ellipsoidd& fitted, const RobotParams& robot, double alpha_deg,
                                         double offset = 1.0, const WaypointOptions& options = {});

struct ScanPlan {
  std::vector<Waypoint> waypoints;  ///< in visiting order
  double alpha = 3.0;
  double tour_cost = 0.0;
  Vec3 k{1.0, 1.0, 10.0};
};

ScanPlan plan_scan(const Ellipsoidd& fitted_b, const RobotParams& robot, double alpha_deg, double offset = 1.0,
                   const Vec3& k = Vec3(1.0, 1.0, 10.0), const WaypointOptions& options = {});

/// The simulated robot as it really is (unknown to the pipeline).
struct RobotTruth {
  RobotParams params;            ///< fiber_offset is the true d_tip
  Pose b_to_o = Pose::Identity();
};

struct ProbeOptions {
  int averages = 400;
  NoiseModel noise;
  OctConfig oct;
  double tracker_halfwidth = 0.25;
  double threshold_gain = 4.0;
  /// Tracker retries on the same signal, each with a 1.5x wider window.
  int max_attempts = 8;
  InnerLoopModel inner;
  double settle_time = 0.3;  ///< s
};

struct ProbeMeasurement {
  double optical = 0.0;  ///< NaN when no surface was found
  ProbeRay ray;          ///< commanded tooltip and axis, {b}
};

/// Moves the true robot to q (inner loop settled from `d3_from`), acquires an
/// averaged A-scan along the true fiber and tracks the surface near
/// `expected_optical`.
ProbeMeasurement probe_distance(const EyePhantom& phantom, const RobotTruth& truth, const RobotParams& nominal,
                                const JointState& q, double d3_from, double expected_optical,
                                const ProbeOptions& options, std::uint64_t seed);

struct ScanResult {
  CapsuleMap map;
  std::vector<ProbeMeasurement> measurements;
  int skipped = 0;
};

/// Visits every waypoint; physical distance = optical / n, the point is the
/// tooltip advanced by (distance + d_tip) along the axis, mapped to {o} through
/// `registration`. Waypoints without a surface are skipped and counted.
ScanResult execute_scan(const ScanPlan& plan, const EyePhantom& phantom, const RobotTruth& truth,
                        const RobotParams& nominal, const RegistrationSolution& registration, double n,
                        double d_tip, CapsuleMap map, const ProbeOptions& options, std::uint64_t seed);

struct LocalizationError {
  std::vector<double> errors;  ///< NaN where the window was empty
  int flagged = 0;
  double rms = 0.0;   ///< windowed rule, flagged points excluded
  double mean = 0.0;
  double std = 0.0;
  double full_rms = 0.0;  ///< unrestricted nearest neighbour over every point
};

/// Distance of every estimated point to the nearest ground-truth point inside
/// a cube of `window` mm edge centred on it.
LocalizationError localization_error(const PointCloud& estimated, const PointCloud& ground_truth,
                                     double window = 0.2);

}  // namespace ioct
