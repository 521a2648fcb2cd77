#include "ioct/conic_fit.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "ioct/error.hpp"

namespace ioct {

double Conic2::operator()(double x, double y) const {
  const auto& c = coeffs;
  return c[0] * x * x + c[1] * x * y + c[2] * y * y + c[3] * x + c[4] * y + c[5];
}

Eigen::Vector2d Conic2::gradient(double x, double y) const {
  const auto& c = coeffs;
  return {2.0 * c[0] * x + c[1] * y + c[3], c[1] * x + 2.0 * c[2] * y + c[4]};
}

std::optional<double> Conic2::solve_y(double x, double y_hint) const {
  const auto& c = coeffs;
  const double a = c[2];
  const double b = c[1] * x + c[4];
  const double cc = c[0] * x * x + c[3] * x + c[5];
  if (std::abs(a) < 1e-300) {
    if (std::abs(b) < 1e-300) return std::nullopt;
    return -cc / b;
  }
  const double disc = b * b - 4.0 * a * cc;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  const double y1 = (-b + s) / (2.0 * a);
  const double y2 = (-b - s) / (2.0 * a);
  return std::abs(y1 - y_hint) < std::abs(y2 - y_hint) ? y1 : y2;
}

double Conic2::slope_at(double x, double y) const {
  const double yy = solve_y(x, y).value_or(y);
  const Eigen::Vector2d g = gradient(x, yy);
  if (std::abs(g.y()) < 1e-300) return std::numeric_limits<double>::infinity();
  return -g.x() / g.y();
}

Ellipse2 Conic2::ellipse() const {
  const auto& c = coeffs;
  Eigen::Matrix2d m;
  m << 2.0 * c[0], c[1], c[1], 2.0 * c[2];
  Ellipse2 e;
  e.center = m.fullPivLu().solve(Eigen::Vector2d(-c[3], -c[4]));
  const double f0 = c[5] + 0.5 * (c[3] * e.center.x() + c[4] * e.center.y());
  Eigen::Matrix2d q;
  q << c[0], 0.5 * c[1], 0.5 * c[1], c[2];
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(q);
  for (int i = 0; i < 2; ++i) e.semi_axes[i] = std::sqrt(std::abs(f0 / es.eigenvalues()[i]));
  const Eigen::Vector2d v = es.eigenvectors().col(0);
  e.angle = std::atan2(v.y(), v.x());
  return e;
}

Conic2 fit_ellipse(std::span<const Eigen::Vector2d> points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n < 5) throw FitError("ellipse fit needs at least 5 points");
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(n);
  Eigen::MatrixXd centered(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) centered.row(i) = (points[i] - mean).transpose();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[1] < 1e-9 * sv[0]) throw FitError("ellipse fit on collinear points");
  const double scale = sv[0] / std::sqrt(static_cast<double>(n));

  Eigen::MatrixXd d1(n, 3), d2(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = centered(i, 0) / scale;
    const double y = centered(i, 1) / scale;
    d1.row(i) << x * x, x * y, y * y;
    d2.row(i) << x, y, 1.0;
  }
  const Eigen::Matrix3d s1 = d1.transpose() * d1;
  const Eigen::Matrix3d s2 = d1.transpose() * d2;
  const Eigen::Matrix3d s3 = d2.transpose() * d2;
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
  if (!lu.isInvertible()) throw FitError("ellipse fit: singular scatter matrix");
  const Eigen::Matrix3d t = -lu.solve(s2.transpose());
  const Eigen::Matrix3d m = s1 + s2 * t;
  Eigen::Matrix3d mc;
  mc.row(0) = m.row(2) / 2.0;
  mc.row(1) = -m.row(1);
  mc.row(2) = m.row(0) / 2.0;
  const Eigen::EigenSolver<Eigen::Matrix3d> es(mc);
  Eigen::Vector3d a1;
  bool ok = false;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d v = es.eigenvectors().col(k).real();
    const double cond = 4.0 * v[0] * v[2] - v[1] * v[1];
    const double ev = std::abs(es.eigenvalues()[k].real());
    if (cond > 0.0 && ev < best) {
      best = ev;
      a1 = v;
      ok = true;
    }
  }
  if (!ok) throw FitError("ellipse fit: no elliptical solution");
  const Eigen::Vector3d a2 = t * a1;

  // Undo the normalisation x' = (x - mx) / s.
  const double s = scale, mx = mean.x(), my = mean.y();
  const double A = a1[0], B = a1[1], C = a1[2], D = a2[0], E = a2[1], F = a2[2];
  Conic2 c;
  c.coeffs[0] = A / (s * s);
  c.coeffs[1] = B / (s * s);
  c.coeffs[2] = C / (s * s);
  c.coeffs[3] = (-2.0 * A * mx - B * my) / (s * s) + D / s;
  c.coeffs[4] = (-2.0 * C * my - B * mx) / (s * s) + E / s;
  c.coeffs[5] = (A * mx * mx + B * mx * my + C * my * my) / (s * s) - (D * mx + E * my) / s + F;
  if (!c.is_ellipse()) throw FitError("ellipse fit: degenerate conic");
  return c;
}

}  // namespace ioct
