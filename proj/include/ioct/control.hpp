#pragma once

#include <cstdint>
#include <vector>

#include "ioct/ascan.hpp"
#include "ioct/eye_model.hpp"
#include "ioct/kinematics.hpp"
#include "ioct/mapping.hpp"

namespace ioct {

struct PIGains {
  double kp = 0.2;
  double ki = 0.6;                 ///< 1/s
  double output_limit = 6.0;       ///< |u| bound, mm
  double rate_limit = 1.0;         ///< |du| per outer step, mm
  double integrator_limit = 6.0;   ///< mm
};

struct PIState {
  double integrator = 0.0;
  double output = 0.0;
};

/// Positional PI on e = d_measured - d_star: I += ki e dt, u = kp e + I.
/// When u saturates the integrator keeps its previous value. Returns u, the
/// insertion added to the feedforward reference.
double outer_loop_step(const PIGains& gains, PIState& state, double d_measured, double d_star, double dt = 0.1);

/// Joint angles sampled at the outer-loop period.
struct CleaningTrajectory {
  double dt = 0.1;
  std::vector<double> theta1;
  std::vector<double> theta2;

  std::size_t size() const { return theta1.size(); }
  double duration() const { return dt * static_cast<double>(size()); }
};

struct SweepSpec {
  double theta1_from = -60.0;
  double theta1_to = -40.0;
  double theta2_center = 10.0;
  double amplitude = 10.0;  ///< deg
  double periods = 3.0;
  double duration = 30.0;   ///< s
  double dt = 0.1;
};

/// Raster-sine sweep: theta1 linear, theta2 = centre + amplitude sin(2 pi periods t / T).
/// Every sample's tool ray must leave `model_b` on its far wall, no further
/// forward than halfway from the equator to the anterior pole; throws
/// ArgumentError otherwise and LimitError outside the joint limits.
CleaningTrajectory generate_cleaning_trajectory(const Ellipsoidd& model_b, const RobotParams& robot,
                                                const SweepSpec& spec = {}, const Vec3& posterior_b = Vec3::UnitZ());

/// Holds one pose for `duration` seconds.
CleaningTrajectory stationary_trajectory(double theta1, double theta2, double duration, double dt = 0.1);

/// Insertion placing the fiber `standoff` mm before the exit of the tool ray
/// through `model_b`. Throws ArgumentError when the ray misses.
double feedforward_d3(const Ellipsoidd& model_b, const RobotParams& robot, double theta1, double theta2,
                      double standoff, double d_tip);

struct CleaningOptions {
  bool feedback = true;
  int averages = 100;
  /// A fresh measurement every this many outer ticks (zero-order hold between).
  int measurement_every = 2;
  int inner_steps_per_outer = 100;
  double hold_time = 3.0;  ///< s at the first pose before metrics start
  /// With feedback the tool starts this far behind the feedforward insertion
  /// and the integrator at -approach, so the loop closes in from a safe pose.
  double approach = 1.0;
  NoiseModel noise;
  OctConfig oct;
  double tracker_halfwidth = 0.25;
  double threshold_gain = 4.0;
  InnerLoopModel inner;
  double n = 1.0;      ///< calibrated index
  double d_tip = 0.0;  ///< calibrated fiber offset
};

struct ControlSample {
  double t = 0.0;
  double theta1 = 0.0, theta2 = 0.0;
  double d3_ref = 0.0, d3_actual = 0.0;
  double d_measured = 0.0, d_star = 0.0;
  double d_true = 0.0;
};

struct ControlMetrics {
  double mean_abs_error = 0.0;  ///< true distance vs set point, after the hold
  double max_abs_error = 0.0;
  double min_distance = 0.0;
  int contacts = 0;
  int missed_measurements = 0;
  std::vector<double> rise_times;          ///< per set-point step, s (NaN if never reached)
  std::vector<double> steady_state_errors; ///< mean signed error over the last second of each level
};

struct ControlTrace {
  std::vector<ControlSample> samples;  ///< outer-loop rate
  std::vector<double> inner_d3;        ///< 1 kHz insertion
  double inner_dt = 1e-3;
  ControlMetrics metrics;
  bool failed = false;
};

/// Multirate loop: inner 1 kHz position servo, outer PI at 1/trajectory.dt,
/// A-scan refresh every `measurement_every` outer ticks. `setpoints` holds d*
/// per outer tick (a single value is broadcast). The feedforward standoff is
/// the first set point; feedback adds the PI output. Distance <= 0 records a
/// contact and ends the run.
ControlTrace simulate_cleaning(const EyePhantom& phantom, const RobotTruth& truth, const RobotParams& nominal,
                               const Ellipsoidd& model_b, const CleaningTrajectory& trajectory,
                               const std::vector<double>& setpoints, const PIGains& gains,
                               const CleaningOptions& options, std::uint64_t seed);

/// d* staircase: `levels` values from `from` to `to`, each held `hold` seconds,
/// starting from rest at `start`.
std::vector<double> staircase_setpoints(double start, double from, double to, int levels, double hold,
                                        double dt = 0.1);

/// Closed loop of the outer controller around the ideal plant (flat surface,
/// noise-free measurement, same rates and hold). Returns distance per outer tick.
std::vector<double> simulate_ideal_loop(const PIGains& gains, const InnerLoopModel& inner, double initial_distance,
                                        const std::vector<double>& setpoints, int measurement_every = 2,
                                        double dt = 0.1, int inner_steps = 100);

struct ZieglerNichols {
  double ultimate_gain = 0.0;
  double ultimate_period = 0.0;  ///< s
  PIGains gains;
};

/// Ultimate-gain experiment on the ideal loop: bisects the proportional gain at
/// which a step response stops decaying, then applies the PI table
/// (kp = 0.45 Ku, ki = kp / (Tu / 1.2)).
ZieglerNichols ziegler_nichols_pi(const InnerLoopModel& inner, int measurement_every = 2, double dt = 0.1,
                                  int inner_steps = 100);

/// Time from each set-point change until the signal first covers 90% of it.
std::vector<double> rise_times(const std::vector<double>& signal, const std::vector<double>& setpoints, double dt);

}  // namespace ioct
