#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace ioct {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Pose = Eigen::Isometry3d;
using PointCloud = std::vector<Vec3>;

inline constexpr double kPi = 3.14159265358979323846;

constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Rotation matrix from an axis-angle 3-vector (direction = axis, norm = angle in rad).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rotation_from_vector(const Eigen::Matrix<Scalar, 3, 1>& r) {
  const Scalar angle = r.norm();
  if (angle < Scalar(1e-15)) return Eigen::Matrix<Scalar, 3, 3>::Identity();
  return Eigen::AngleAxis<Scalar>(angle, r / angle).toRotationMatrix();
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> vector_from_rotation(const Eigen::Matrix<Scalar, 3, 3>& R) {
  const Eigen::AngleAxis<Scalar> aa(R);
  return aa.axis() * aa.angle();
}

inline Pose make_pose(const Mat3& R, const Vec3& t) {
  Pose p = Pose::Identity();
  p.linear() = R;
  p.translation() = t;
  return p;
}

}  // namespace ioct
