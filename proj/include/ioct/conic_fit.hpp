#pragma once

#include <optional>
#include <span>

#include <Eigen/Core>

namespace ioct {

struct Ellipse2 {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Vector2d semi_axes = Eigen::Vector2d::Ones();
  double angle = 0.0;  ///< rad, first axis from +x
};

/// Conic A x^2 + B x y + C y^2 + D x + E y + F = 0.
struct Conic2 {
  Eigen::Matrix<double, 6, 1> coeffs = Eigen::Matrix<double, 6, 1>::Zero();

  double operator()(double x, double y) const;
  Eigen::Vector2d gradient(double x, double y) const;
  bool is_ellipse() const { return coeffs[1] * coeffs[1] - 4.0 * coeffs[0] * coeffs[2] < 0.0; }
  /// Solves the conic for y at the given x, taking the root nearest `y_hint`.
  std::optional<double> solve_y(double x, double y_hint) const;
  /// dy/dx of the branch through (x, y) on the conic.
  double slope_at(double x, double y) const;
  Ellipse2 ellipse() const;
};

/// Direct least-squares ellipse fit (Fitzgibbon constraint, Halir-Flusser
/// partitioning) on centred and scaled data. Throws FitError on fewer than 5
/// points, collinear data or when no elliptical solution exists.
Conic2 fit_ellipse(std::span<const Eigen::Vector2d> points);

}  // namespace ioct
