#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ioct {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A joint value fell outside RobotParams limits.
class LimitError : public Error {
 public:
  LimitError(std::string joint, double value, double lo, double hi)
      : Error("joint " + joint + " = " + std::to_string(value) + " outside [" + std::to_string(lo) + ", " +
              std::to_string(hi) + "]"),
        joint_(std::move(joint)) {}
  const std::string& joint() const noexcept { return joint_; }

 private:
  std::string joint_;
};

class ReachabilityError : public Error {
 public:
  ReachabilityError(const std::string& what, double closest_angle_deg)
      : Error(what), closest_angle_deg_(closest_angle_deg) {}
  double closest_angle_deg() const noexcept { return closest_angle_deg_; }

 private:
  double closest_angle_deg_;
};

class TotalInternalReflection : public Error {
 public:
  using Error::Error;
};

class NoSurfaceError : public Error {
 public:
  using Error::Error;
};

class DetectionError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class CoverageError : public Error {
 public:
  using Error::Error;
};

/// Optimizer gave up; carries the last residual and the objective trace.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual, std::vector<double> trace = {})
      : Error(what), last_residual_(last_residual), trace_(std::move(trace)) {}
  double last_residual() const noexcept { return last_residual_; }
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  double last_residual_;
  std::vector<double> trace_;
};

}  // namespace ioct
