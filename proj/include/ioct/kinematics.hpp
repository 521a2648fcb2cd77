#pragma once

#include <array>
#include <string>

#include "ioct/types.hpp"

namespace ioct {

/// 4-DOF RCM configuration. Angles in degrees, insertion in mm.
struct JointState {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double d3 = 0.0;
  double theta4 = 0.0;

  bool operator==(const JointState&) const = default;
};

struct JointLimits {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct RobotParams {
  /// RCM point in the base frame {b}.
  Vec3 rcm_position = Vec3::Zero();
  /// Orientation of the RCM mechanism in {b}; its z-axis is the tool axis at q = 0.
  Mat3 mount_rotation = Mat3::Identity();
  /// Distance behind the RCM of the tooltip at d3 = 0.
  double retract_length = 10.0;
  JointLimits theta1_limits{-90.0, 0.0};
  JointLimits theta2_limits{-30.0, 30.0};
  JointLimits d3_limits{0.0, 40.0};
  JointLimits theta4_limits{-180.0, 180.0};
  /// Signed offset of the fiber face ahead of the metal tooltip along the tool axis (mm).
  double fiber_offset = 0.0;

  /// Throws LimitError naming the first joint outside its range.
  void check_limits(const JointState& q) const;
};

/// Elementary transforms H1..H4 (RCM tilt about x, tilt about the rotated y,
/// insertion along the tool axis, roll about the tool axis).
std::array<Pose, 4> link_transforms(const RobotParams& params, const JointState& q);

/// Tooltip pose in {b}: H1 H2 H3 H4.
Pose forward_kinematics(const RobotParams& params, const JointState& q);

struct FiberRay {
  Vec3 origin;     ///< fiber face in {b}
  Vec3 direction;  ///< unit tool axis in {b}
};

FiberRay fiber_ray(const RobotParams& params, const JointState& q);

/// Joint command whose tool axis passes through `target` with the fiber face
/// `standoff` mm short of it. Throws ReachabilityError when the direction or
/// insertion is infeasible.
JointState aim_at(const RobotParams& params, const Vec3& target, double standoff = 0.0, double theta4 = 0.0);

/// Tool-axis direction in {b} for the given tilt angles (degrees).
Vec3 tool_direction(const RobotParams& params, double theta1_deg, double theta2_deg);

/// Closed-loop insertion axis: two real poles, the dominant one at the
/// bandwidth and a secondary one `secondary_pole_ratio` times faster.
struct InnerLoopModel {
  double bandwidth_hz = 18.0;
  double sample_rate_hz = 1000.0;
  double secondary_pole_ratio = 10.0;
};

struct InnerLoopState {
  double stage1 = 0.0;
  double stage2 = 0.0;

  static InnerLoopState at_rest(double d3) { return {d3, d3}; }
};

/// One 1/sample_rate step towards `d3_ref`; returns the actual insertion.
double inner_loop_step(const InnerLoopModel& model, InnerLoopState& state, double d3_ref);

}  // namespace ioct
