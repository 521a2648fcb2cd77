#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace ioct {

struct LmOptions {
  double initial_damping = 1e-3;
  double damping_factor = 10.0;
  double step_tolerance = 1e-10;
  int max_iterations = 200;
  /// Relative step of the central-difference Jacobian.
  double jacobian_step = 1e-7;
};

struct LmResult {
  Eigen::VectorXd x;
  double cost = 0.0;  ///< 0.5 * ||r||^2
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

template <typename ResidualFn>
Eigen::MatrixXd numeric_jacobian(ResidualFn& fn, const Eigen::VectorXd& x, const Eigen::VectorXd& r0, double rel_step) {
  Eigen::MatrixXd J(r0.size(), x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = rel_step * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    const Eigen::VectorXd rp = fn(xp);
    xp[j] = x[j] - h;
    const Eigen::VectorXd rm = fn(xp);
    xp[j] = x[j];
    J.col(j) = (rp - rm) / (2.0 * h);
  }
  return J;
}

/// Levenberg-Marquardt on residual function fn(x) -> VectorXd, with a
/// central-difference Jacobian and multiplicative damping adaptation.
template <typename ResidualFn>
LmResult levenberg_marquardt(ResidualFn fn, Eigen::VectorXd x, const LmOptions& opt = {}) {
  LmResult res;
  Eigen::VectorXd r = fn(x);
  double cost = 0.5 * r.squaredNorm();
  res.trace.push_back(cost);
  double lambda = opt.initial_damping;
  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it + 1;
    if (cost < 1e-30) {
      res.converged = true;
      break;
    }
    const Eigen::MatrixXd J = numeric_jacobian(fn, x, r, opt.jacobian_step);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool accepted = false;
    while (lambda < 1e16) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      const Eigen::VectorXd xn = x + step;
      const Eigen::VectorXd rn = fn(xn);
      const double cn = 0.5 * rn.squaredNorm();
      if (std::isfinite(cn) && cn < cost) {
        x = xn;
        r = rn;
        cost = cn;
        lambda = std::max(lambda / opt.damping_factor, 1e-15);
        accepted = true;
        res.trace.push_back(cost);
        if (step.norm() < opt.step_tolerance) res.converged = true;
        break;
      }
      if (step.norm() < opt.step_tolerance) {
        // No decrease possible at this resolution: stationary point.
        res.converged = true;
        break;
      }
      lambda *= opt.damping_factor;
    }
    if (res.converged) break;
    if (!accepted) {
      res.converged = true;
      break;
    }
  }
  res.x = x;
  res.cost = cost;
  return res;
}

}  // namespace ioct
