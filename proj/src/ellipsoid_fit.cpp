#include "ioct/ellipsoid_fit.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "ioct/error.hpp"
#include "ioct/lm.hpp"

namespace ioct {

Ellipsoidd fit_ellipsoid_algebraic(const PointCloud& points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n < 9) throw FitError("ellipsoid fit needs at least 9 points");
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : points) mean += p;
  mean /= static_cast<double>(n);
  Eigen::MatrixXd centered(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) centered.row(i) = (points[i] - mean).transpose();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const Vec3 sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[2] < 1e-9 * sv[0]) throw FitError("ellipsoid fit on a planar or degenerate cloud");
  const double scale = sv[0] / std::sqrt(static_cast<double>(n));

  // a x^2 + b y^2 + c z^2 + 2f yz + 2g xz + 2h xy + 2p x + 2q y + 2r z + d = 0
  Eigen::MatrixXd D(n, 10);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 p = centered.row(i).transpose() / scale;
    D.row(i) << p.x() * p.x(), p.y() * p.y(), p.z() * p.z(), 2 * p.y() * p.z(), 2 * p.x() * p.z(),
        2 * p.x() * p.y(), 2 * p.x(), 2 * p.y(), 2 * p.z(), 1.0;
  }
  const Eigen::MatrixXd S = D.transpose() * D;
  const Eigen::Matrix<double, 6, 6> S11 = S.topLeftCorner<6, 6>();
  const Eigen::Matrix<double, 6, 4> S12 = S.topRightCorner<6, 4>();
  const Eigen::Matrix4d S22 = S.bottomRightCorner<4, 4>();
  const Eigen::FullPivLU<Eigen::Matrix4d> lu22(S22);
  if (!lu22.isInvertible()) throw FitError("ellipsoid fit: singular linear block");
  const Eigen::Matrix<double, 4, 6> T = -lu22.solve(S12.transpose());
  const Eigen::Matrix<double, 6, 6> M = S11 + S12 * T;

  // Constraint matrix for k = 4.
  Eigen::Matrix<double, 6, 6> C = Eigen::Matrix<double, 6, 6>::Zero();
  C.topLeftCorner<3, 3>() << -1, 1, 1, 1, -1, 1, 1, 1, -1;
  C.bottomRightCorner<3, 3>().diagonal().setConstant(-4.0);
  const Eigen::Matrix<double, 6, 6> CinvM = C.inverse() * M;
  const Eigen::EigenSolver<Eigen::Matrix<double, 6, 6>> es(CinvM);
  // Admissible eigenvectors satisfy v^T C v > 0; among them the smallest
  // eigenvalue (zero for exact data) gives the least algebraic residual.
  int best = -1;
  double best_val = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 6; ++k) {
    if (std::abs(es.eigenvalues()[k].imag()) > 1e-9 * std::max(1.0, std::abs(es.eigenvalues()[k].real()))) continue;
    const Eigen::Matrix<double, 6, 1> v = es.eigenvectors().col(k).real();
    if (!(v.dot(C * v) > 0.0)) continue;
    const double val = es.eigenvalues()[k].real();
    if (val < best_val) {
      best_val = val;
      best = k;
    }
  }
  if (best < 0) throw FitError("ellipsoid fit: no admissible eigenvector");
  const Eigen::Matrix<double, 6, 1> v1 = es.eigenvectors().col(best).real();
  const Eigen::Vector4d v2 = T * v1;

  Mat3 A;
  A << v1[0], v1[5], v1[4], v1[5], v1[1], v1[3], v1[4], v1[3], v1[2];
  const Vec3 b(v2[0], v2[1], v2[2]);
  const double d = v2[3];
  const Eigen::FullPivLU<Mat3> luA(A);
  if (!luA.isInvertible()) throw FitError("ellipsoid fit: singular quadric");
  const Vec3 c = -luA.solve(b);
  const double k = b.dot(luA.solve(b)) - d;  // (x - c)^T A (x - c) = k
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(A / k);
  if (!(eig.eigenvalues().array() > 0.0).all()) throw FitError("ellipsoid fit: solution is not an ellipsoid");

  Ellipsoidd e;
  e.center = mean + scale * c;
  e.semi_axes = scale * eig.eigenvalues().cwiseSqrt().cwiseInverse();
  e.rotation = eig.eigenvectors();
  if (e.rotation.determinant() < 0.0) e.rotation.col(2) *= -1.0;
  return e;
}

double ellipsoid_rms(const Ellipsoidd& e, const PointCloud& points) {
  if (points.empty()) return 0.0;
  double sq = 0.0;
  for (const Vec3& p : points) {
    const double dist = distance_to_surface(e, p);
    sq += dist * dist;
  }
  return std::sqrt(sq / static_cast<double>(points.size()));
}

EllipsoidFit fit_ellipsoid(const PointCloud& points, bool refine) {
  const Ellipsoidd init = fit_ellipsoid_algebraic(points);
  EllipsoidFit out;
  out.ellipsoid = init;
  if (refine) {
    auto unpack = [&](const Eigen::VectorXd& x) {
      Ellipsoidd e;
      e.center = x.segment<3>(0);
      e.semi_axes = x.segment<3>(3).cwiseAbs();
      e.rotation = init.rotation * rotation_from_vector(Vec3(x.segment<3>(6)));
      return e;
    };
    auto residual = [&](const Eigen::VectorXd& x) {
      const Ellipsoidd e = unpack(x);
      Eigen::VectorXd r(static_cast<Eigen::Index>(points.size()));
      for (std::size_t i = 0; i < points.size(); ++i) {
        const double dist = distance_to_surface(e, points[i]);
        r[static_cast<Eigen::Index>(i)] = e.implicit(points[i]) < 0.0 ? -dist : dist;
      }
      return r;
    };
    Eigen::VectorXd x0(9);
    x0 << init.center, init.semi_axes, Vec3::Zero();
    LmOptions opt;
    opt.max_iterations = 100;
    const LmResult fit = levenberg_marquardt(residual, x0, opt);
    out.ellipsoid = unpack(fit.x);
    out.iterations = fit.iterations;
  }
  if (!out.ellipsoid.valid()) throw FitError("ellipsoid fit produced an invalid ellipsoid");
  out.fit_rms = ellipsoid_rms(out.ellipsoid, points);
  return out;
}

}  // namespace ioct
