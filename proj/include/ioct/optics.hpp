#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "ioct/error.hpp"

namespace ioct {

/// Refraction angle for a ray crossing from index n1 into n2 at `incidence` (rad).
/// Throws TotalInternalReflection when no transmitted ray exists.
template <typename Scalar>
Scalar refract(Scalar n1, Scalar n2, Scalar incidence) {
  if (!(incidence >= Scalar(0)) || incidence >= Scalar(M_PI / 2)) {
    throw ArgumentError("incidence must lie in [0, pi/2)");
  }
  const Scalar s = n1 * std::sin(incidence) / n2;
  if (s > Scalar(1)) {
    throw TotalInternalReflection("total internal reflection: n1=" + std::to_string(double(n1)) +
                                  " n2=" + std::to_string(double(n2)));
  }
  return std::asin(s);
}

/// Fermat scaling of a path length: n1 * d1 = n2 * d1'.
template <typename Scalar>
Scalar apparent_depth(Scalar n1, Scalar n2, Scalar d1) {
  if (d1 < Scalar(0)) throw ArgumentError("apparent_depth: negative distance");
  return n1 * d1 / n2;
}

/// Piecewise depth rule: depths above the outer surface z_e are kept, depths
/// below are rescaled about z_e by `index_ratio` (air index over medium index).
template <typename Scalar>
Scalar correct_depth(Scalar z0, Scalar z_e, Scalar index_ratio) {
  return z0 < z_e ? z0 : z_e + index_ratio * (z0 - z_e);
}

/// Vector form of Snell's law. `normal` is any unit normal of the interface;
/// the transmitted direction continues on the far side. Throws on TIR.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> refract_direction(const Eigen::Matrix<Scalar, 3, 1>& direction,
                                              Eigen::Matrix<Scalar, 3, 1> normal, Scalar n1, Scalar n2) {
  Scalar cos_i = -normal.dot(direction);
  if (cos_i < Scalar(0)) {
    normal = -normal;
    cos_i = -cos_i;
  }
  const Scalar eta = n1 / n2;
  const Scalar k = Scalar(1) - eta * eta * (Scalar(1) - cos_i * cos_i);
  if (k < Scalar(0)) throw TotalInternalReflection("total internal reflection at interface");
  return (eta * direction + (eta * cos_i - std::sqrt(k)) * normal).normalized();
}

}  // namespace ioct
