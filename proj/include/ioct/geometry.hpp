#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "ioct/types.hpp"

namespace ioct {

/// Oriented ellipsoid. Columns of `rotation` are the principal axes in the
/// parent frame; `semi_axes` are the half-lengths along them.
template <typename Scalar>
struct Ellipsoid {
  using Vector = Eigen::Matrix<Scalar, 3, 1>;
  using Matrix = Eigen::Matrix<Scalar, 3, 3>;

  Vector center = Vector::Zero();
  Vector semi_axes = Vector::Ones();
  Matrix rotation = Matrix::Identity();

  Vector to_local(const Vector& p) const { return rotation.transpose() * (p - center); }
  Vector to_parent(const Vector& q) const { return rotation * q + center; }

  /// Implicit function: < 0 inside, 0 on the surface, > 0 outside.
  Scalar implicit(const Vector& p) const {
    return to_local(p).cwiseQuotient(semi_axes).squaredNorm() - Scalar(1);
  }

  bool contains(const Vector& p) const { return implicit(p) < Scalar(0); }

  /// Outward unit normal of the level set through p.
  Vector normal(const Vector& p) const {
    const Vector q = to_local(p);
    const Vector g = q.cwiseQuotient(semi_axes.cwiseProduct(semi_axes));
    return (rotation * g).normalized();
  }

  /// Surface point in the direction of the local unit vector `u` (scaled by the semi-axes).
  Vector surface_point(const Vector& u) const { return to_parent(semi_axes.cwiseProduct(u)); }

  bool valid() const {
    return (semi_axes.array() > Scalar(0)).all() &&
           (rotation.transpose() * rotation - Matrix::Identity()).norm() < Scalar(1e-9) &&
           rotation.determinant() > Scalar(0);
  }
};

using Ellipsoidd = Ellipsoid<double>;

/// Ray parameters (t0 <= t1) where origin + t * direction meets the ellipsoid.
template <typename Scalar>
std::optional<std::pair<Scalar, Scalar>> intersect(const Ellipsoid<Scalar>& e,
                                                   const Eigen::Matrix<Scalar, 3, 1>& origin,
                                                   const Eigen::Matrix<Scalar, 3, 1>& direction) {
  const Eigen::Matrix<Scalar, 3, 1> o = e.to_local(origin).cwiseQuotient(e.semi_axes);
  const Eigen::Matrix<Scalar, 3, 1> d = (e.rotation.transpose() * direction).cwiseQuotient(e.semi_axes);
  const Scalar a = d.squaredNorm();
  const Scalar b = o.dot(d);
  const Scalar c = o.squaredNorm() - Scalar(1);
  const Scalar disc = b * b - a * c;
  if (disc < Scalar(0) || a <= Scalar(0)) return std::nullopt;
  const Scalar s = std::sqrt(disc);
  // Numerically stable pair of roots.
  const Scalar q = (b > Scalar(0)) ? -(b + s) : -(b - s);
  Scalar t0, t1;
  if (q == Scalar(0)) {
    t0 = t1 = Scalar(0);
  } else {
    t0 = q / a;
    t1 = c / q;
  }
  if (t0 > t1) std::swap(t0, t1);
  return std::make_pair(t0, t1);
}

/// Orthogonal distance from p to the ellipsoid surface (unsigned), with the closest point.
template <typename Scalar>
std::pair<Scalar, Eigen::Matrix<Scalar, 3, 1>> closest_point(const Ellipsoid<Scalar>& e,
                                                             const Eigen::Matrix<Scalar, 3, 1>& p) {
  using Vector = Eigen::Matrix<Scalar, 3, 1>;
  const Vector q = e.to_local(p);
  // Work in the first octant with axes sorted descending.
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return e.semi_axes[i] > e.semi_axes[j]; });
  std::array<Scalar, 3> a{}, y{};
  const Scalar scale = e.semi_axes.maxCoeff();
  for (int k = 0; k < 3; ++k) {
    a[k] = e.semi_axes[order[k]];
    y[k] = std::abs(q[order[k]]);
    // Zero components make the root bracket degenerate; a tiny nudge keeps the
    // distance continuous.
    if (y[k] < scale * Scalar(1e-12)) y[k] = scale * Scalar(1e-12);
  }
  std::array<Scalar, 3> z{}, r{};
  for (int k = 0; k < 3; ++k) {
    z[k] = y[k] / a[k];
    r[k] = (a[k] / a[2]) * (a[k] / a[2]);
  }
  const Scalar g0 = z[0] * z[0] + z[1] * z[1] + z[2] * z[2] - Scalar(1);
  Scalar s = Scalar(0);
  if (g0 != Scalar(0)) {
    // g is convex and decreasing; Newton from the lower bracket approaches the
    // root monotonically from the left.
    s = z[2] - Scalar(1);
    for (int it = 0; it < 100; ++it) {
      Scalar gs = Scalar(-1), dg = Scalar(0);
      for (int k = 0; k < 3; ++k) {
        const Scalar v = r[k] * z[k] / (s + r[k]);
        gs += v * v;
        dg -= Scalar(2) * v * v / (s + r[k]);
      }
      if (gs <= Scalar(0) || dg >= Scalar(0)) break;
      const Scalar step = gs / dg;
      s -= step;
      if (std::abs(step) <= std::numeric_limits<Scalar>::epsilon() * (Scalar(1) + std::abs(s))) break;
    }
  }
  Vector x_local;
  for (int k = 0; k < 3; ++k) {
    const Scalar xk = r[k] * y[k] / (s + r[k]);
    const Scalar sign = q[order[k]] < Scalar(0) ? Scalar(-1) : Scalar(1);
    x_local[order[k]] = sign * xk;
  }
  const Vector x = e.to_parent(x_local);
  return {(x - p).norm(), x};
}

template <typename Scalar>
Scalar distance_to_surface(const Ellipsoid<Scalar>& e, const Eigen::Matrix<Scalar, 3, 1>& p) {
  return closest_point(e, p).first;
}

/// Ellipsoid expressed in another frame: returns pose * e.
inline Ellipsoidd transformed(const Ellipsoidd& e, const Pose& pose) {
  Ellipsoidd out = e;
  out.center = pose * e.center;
  out.rotation = pose.linear() * e.rotation;
  return out;
}

/// Distance from point p to the infinite line through `on_line` with unit direction `dir`.
inline double distance_to_line(const Vec3& p, const Vec3& on_line, const Vec3& dir) {
  const Vec3 v = p - on_line;
  return (v - v.dot(dir) * dir).norm();
}

}  // namespace ioct
