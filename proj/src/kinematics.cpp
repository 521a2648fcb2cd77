#include "ioct/kinematics.hpp"

#include <algorithm>
#include <cmath>

#include "ioct/error.hpp"

namespace ioct {

namespace {

Mat3 rot_x(double deg) { return Eigen::AngleAxisd(deg2rad(deg), Vec3::UnitX()).toRotationMatrix(); }
Mat3 rot_y(double deg) { return Eigen::AngleAxisd(deg2rad(deg), Vec3::UnitY()).toRotationMatrix(); }
Mat3 rot_z(double deg) { return Eigen::AngleAxisd(deg2rad(deg), Vec3::UnitZ()).toRotationMatrix(); }

}  // namespace

void RobotParams::check_limits(const JointState& q) const {
  if (!theta1_limits.contains(q.theta1)) throw LimitError("theta1", q.theta1, theta1_limits.lo, theta1_limits.hi);
  if (!theta2_limits.contains(q.theta2)) throw LimitError("theta2", q.theta2, theta2_limits.lo, theta2_limits.hi);
  if (!d3_limits.contains(q.d3)) throw LimitError("d3", q.d3, d3_limits.lo, d3_limits.hi);
  if (!theta4_limits.contains(q.theta4)) throw LimitError("theta4", q.theta4, theta4_limits.lo, theta4_limits.hi);
}

std::array<Pose, 4> link_transforms(const RobotParams& params, const JointState& q) {
  std::array<Pose, 4> h;
  h[0] = make_pose(params.mount_rotation * rot_x(q.theta1), params.rcm_position);
  h[1] = make_pose(rot_y(q.theta2), Vec3::Zero());
  h[2] = make_pose(Mat3::Identity(), Vec3(0.0, 0.0, q.d3 - params.retract_length));
  h[3] = make_pose(rot_z(q.theta4), Vec3::Zero());
  return h;
}

Pose forward_kinematics(const RobotParams& params, const JointState& q) {
  params.check_limits(q);
  const auto h = link_transforms(params, q);
  return h[0] * h[1] * h[2] * h[3];
}

FiberRay fiber_ray(const RobotParams& params, const JointState& q) {
  const Pose tool = forward_kinematics(params, q);
  const Vec3 z = tool.linear().col(2);
  return {tool.translation() + params.fiber_offset * z, z};
}

Vec3 tool_direction(const RobotParams& params, double theta1_deg, double theta2_deg) {
  return params.mount_rotation * rot_x(theta1_deg) * rot_y(theta2_deg) * Vec3::UnitZ();
}

JointState aim_at(const RobotParams& params, const Vec3& target, double standoff, double theta4) {
  const Vec3 offset = target - params.rcm_position;
  const double dist = offset.norm();
  if (dist < 1e-9) throw ReachabilityError("target coincides with the RCM; tool direction undefined", 0.0);
  // Direction in the mount frame: (sin t2, -sin t1 cos t2, cos t1 cos t2).
  const Vec3 v = params.mount_rotation.transpose() * (offset / dist);
  JointState q;
  q.theta2 = rad2deg(std::asin(std::clamp(v.x(), -1.0, 1.0)));
  q.theta1 = rad2deg(std::atan2(-v.y(), v.z()));
  q.theta4 = theta4;
  if (!params.theta1_limits.contains(q.theta1)) {
    throw ReachabilityError("theta1 required for target is outside limits",
                            std::clamp(q.theta1, params.theta1_limits.lo, params.theta1_limits.hi));
  }
  if (!params.theta2_limits.contains(q.theta2)) {
    throw ReachabilityError("theta2 required for target is outside limits",
                            std::clamp(q.theta2, params.theta2_limits.lo, params.theta2_limits.hi));
  }
  q.d3 = dist - standoff - params.fiber_offset + params.retract_length;
  if (!params.d3_limits.contains(q.d3)) {
    throw ReachabilityError("insertion required for target is outside d3 limits", q.theta1);
  }
  return q;
}

double inner_loop_step(const InnerLoopModel& model, InnerLoopState& state, double d3_ref) {
  const double dt = 1.0 / model.sample_rate_hz;
  const double w1 = 2.0 * kPi * model.bandwidth_hz;
  const double p1 = std::exp(-w1 * dt);
  const double p2 = std::exp(-w1 * model.secondary_pole_ratio * dt);
  state.stage1 = p2 * state.stage1 + (1.0 - p2) * d3_ref;
  state.stage2 = p1 * state.stage2 + (1.0 - p1) * state.stage1;
  return state.stage2;
}

}  // namespace ioct
