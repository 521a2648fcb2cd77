#include "ioct/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ioct/error.hpp"

namespace ioct {

double outer_loop_step(const PIGains& gains, PIState& state, double d_measured, double d_star, double dt) {
  const double e = d_measured - d_star;
  const double integrator =
      std::clamp(state.integrator + gains.ki * e * dt, -gains.integrator_limit, gains.integrator_limit);
  const double raw = gains.kp * e + integrator;
  const double lo = std::max(-gains.output_limit, state.output - gains.rate_limit);
  const double hi = std::min(gains.output_limit, state.output + gains.rate_limit);
  const double u = std::clamp(raw, lo, hi);
  if (u == raw) state.integrator = integrator;
  state.output = u;
  return u;
}

namespace {

std::optional<double> exit_distance(const Ellipsoidd& e, const Vec3& origin, const Vec3& dir) {
  const auto hit = intersect(e, origin, dir);
  if (!hit) return std::nullopt;
  return hit->second;
}

}  // namespace

double feedforward_d3(const Ellipsoidd& model_b, const RobotParams& robot, double theta1, double theta2,
                      double standoff, double d_tip) {
  const Vec3 dir = tool_direction(robot, theta1, theta2);
  const auto t = exit_distance(model_b, robot.rcm_position, dir);
  if (!t || *t <= 0.0) throw ArgumentError("tool ray misses the capsule model");
  return *t - standoff - d_tip + robot.retract_length;
}

CleaningTrajectory generate_cleaning_trajectory(const Ellipsoidd& model_b, const RobotParams& robot,
                                                const SweepSpec& spec, const Vec3& posterior_b) {
  if (!(spec.duration > 0.0) || !(spec.dt > 0.0)) throw ArgumentError("sweep duration and period must be positive");
  const Vec3 post = posterior_b.normalized();
  // Support of the model along the posterior direction; exits may reach halfway to the anterior pole.
  const Vec3 local = model_b.rotation.transpose() * post;
  const double reach = -0.5 * local.cwiseProduct(model_b.semi_axes).norm();
  CleaningTrajectory traj;
  traj.dt = spec.dt;
  const auto n = static_cast<std::size_t>(std::lround(spec.duration / spec.dt)) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(n - 1);
    const double t1 = spec.theta1_from + (spec.theta1_to - spec.theta1_from) * s;
    const double t2 = spec.theta2_center + spec.amplitude * std::sin(2.0 * kPi * spec.periods * s);
    if (!robot.theta1_limits.contains(t1)) throw LimitError("theta1", t1, robot.theta1_limits.lo, robot.theta1_limits.hi);
    if (!robot.theta2_limits.contains(t2)) throw LimitError("theta2", t2, robot.theta2_limits.lo, robot.theta2_limits.hi);
    traj.theta1.push_back(t1);
    traj.theta2.push_back(t2);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 dir = tool_direction(robot, traj.theta1[i], traj.theta2[i]);
    const auto t = exit_distance(model_b, robot.rcm_position, dir);
    if (!t || *t <= 0.0 || (robot.rcm_position + *t * dir - model_b.center).dot(post) < reach) {
      throw ArgumentError("cleaning trajectory leaves the posterior capsule model");
    }
  }
  return traj;
}

CleaningTrajectory stationary_trajectory(double theta1, double theta2, double duration, double dt) {
  CleaningTrajectory traj;
  traj.dt = dt;
  const auto n = static_cast<std::size_t>(std::lround(duration / dt));
  traj.theta1.assign(n, theta1);
  traj.theta2.assign(n, theta2);
  return traj;
}

std::vector<double> staircase_setpoints(double start, double from, double to, int levels, double hold, double dt) {
  if (levels < 1) throw ArgumentError("staircase needs at least one level");
  const auto per = static_cast<std::size_t>(std::lround(hold / dt));
  std::vector<double> sp(per, start);
  for (int i = 0; i < levels; ++i) {
    const double v = levels == 1 ? from : from + (to - from) * i / (levels - 1);
    sp.insert(sp.end(), per, v);
  }
  return sp;
}

std::vector<double> rise_times(const std::vector<double>& signal, const std::vector<double>& setpoints, double dt) {
  std::vector<double> out;
  for (std::size_t k = 1; k < setpoints.size() && k < signal.size(); ++k) {
    if (setpoints[k] == setpoints[k - 1]) continue;
    const double from = signal[k - 1];
    const double target = from + 0.9 * (setpoints[k] - from);
    const bool down = setpoints[k] < from;
    double rt = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t j = k; j < signal.size(); ++j) {
      if (j > k && setpoints[j] != setpoints[j - 1]) break;
      if (down ? signal[j] <= target : signal[j] >= target) {
        rt = static_cast<double>(j - k + 1) * dt;
        break;
      }
    }
    out.push_back(rt);
  }
  return out;
}

namespace {

std::vector<double> steady_state_errors(const std::vector<double>& signal, const std::vector<double>& setpoints,
                                        double dt, std::size_t first) {
  std::vector<double> out;
  const auto window = static_cast<std::size_t>(std::lround(1.0 / dt));
  std::size_t start = first;
  for (std::size_t k = first + 1; k <= setpoints.size(); ++k) {
    if (k == setpoints.size() || setpoints[k] != setpoints[k - 1]) {
      const std::size_t lo = k > start + window ? k - window : start;
      double sum = 0.0;
      for (std::size_t j = lo; j < k; ++j) sum += signal[j] - setpoints[j];
      out.push_back(sum / static_cast<double>(k - lo));
      start = k;
    }
  }
  return out;
}

}  // namespace

ControlTrace simulate_cleaning(const EyePhantom& phantom, const RobotTruth& truth, const RobotParams& nominal,
                               const Ellipsoidd& model_b, const CleaningTrajectory& trajectory,
                               const std::vector<double>& setpoints, const PIGains& gains,
                               const CleaningOptions& options, std::uint64_t seed) {
  if (trajectory.size() == 0) throw ArgumentError("empty cleaning trajectory");
  if (setpoints.empty()) throw ArgumentError("no distance set point");
  if (setpoints.size() != 1 && setpoints.size() != trajectory.size()) {
    throw ShapeError("set points must be a single value or one per trajectory sample");
  }
  if (options.measurement_every < 1 || options.inner_steps_per_outer < 1) throw ArgumentError("invalid loop rates");

  const double dt = trajectory.dt;
  const auto hold = static_cast<std::size_t>(std::lround(options.hold_time / dt));
  const std::size_t total = hold + trajectory.size();
  auto sample_index = [&](std::size_t k) { return k < hold ? std::size_t{0} : k - hold; };
  auto setpoint_at = [&](std::size_t k) { return setpoints.size() == 1 ? setpoints[0] : setpoints[sample_index(k)]; };
  const double ff_standoff = setpoints.front();

  ControlTrace trace;
  trace.inner_dt = 1.0 / options.inner.sample_rate_hz;
  const Pose b_to_o = truth.b_to_o;
  auto true_distance = [&](const JointState& q) {
    const FiberRay f = fiber_ray(truth.params, q);
    const auto t = exit_distance(phantom.capsule, b_to_o * f.origin, b_to_o.linear() * f.direction);
    return t ? *t : std::numeric_limits<double>::quiet_NaN();
  };

  JointState q;
  q.theta1 = trajectory.theta1.front();
  q.theta2 = trajectory.theta2.front();
  const double approach = options.feedback ? options.approach : 0.0;
  q.d3 = feedforward_d3(model_b, nominal, q.theta1, q.theta2, ff_standoff, options.d_tip) - approach;
  InnerLoopState inner = InnerLoopState::at_rest(q.d3);
  PIState pi;
  pi.integrator = pi.output = -approach;
  const double d0 = true_distance(q);
  TrackerState tracker = TrackerState::starting_at(options.n * ff_standoff, options.tracker_halfwidth,
                                                   options.threshold_gain);
  double d_measured = ff_standoff;
  double min_distance = std::isfinite(d0) ? d0 : std::numeric_limits<double>::infinity();

  for (std::size_t k = 0; k < total && !trace.failed; ++k) {
    const std::size_t s = sample_index(k);
    q.theta1 = trajectory.theta1[s];
    q.theta2 = trajectory.theta2[s];
    const double d_star = setpoint_at(k);

    if (k % static_cast<std::size_t>(options.measurement_every) == 0) {
      const FiberRay f = fiber_ray(truth.params, q);
      NoiseModel noise = options.noise;
      noise.rng_seed = mix_seed(seed, 0xc1ea, k);
      const AScanSignal sig = acquire_averaged(phantom, b_to_o * f.origin, b_to_o.linear() * f.direction, noise,
                                               options.averages, options.oct);
      bool found = false;
      for (int attempt = 0; attempt < 8 && !found; ++attempt) {
        const TrackResult r = track_distance(tracker, sig);
        tracker = r.state;
        found = r.found;
        if (found) d_measured = r.distance / options.n;
      }
      if (!found) ++trace.metrics.missed_measurements;
    }

    const double u = options.feedback ? outer_loop_step(gains, pi, d_measured, d_star, dt) : 0.0;
    const double d3_ref = feedforward_d3(model_b, nominal, q.theta1, q.theta2, ff_standoff, options.d_tip) + u;
    double d_true = 0.0;
    for (int i = 0; i < options.inner_steps_per_outer; ++i) {
      q.d3 = inner_loop_step(options.inner, inner, d3_ref);
      trace.inner_d3.push_back(q.d3);
      d_true = true_distance(q);
      if (std::isfinite(d_true)) min_distance = std::min(min_distance, d_true);
      if (!(d_true > 0.0)) {
        ++trace.metrics.contacts;
        trace.failed = true;
        break;
      }
    }
    trace.samples.push_back({static_cast<double>(k + 1) * dt, q.theta1, q.theta2, d3_ref, q.d3, d_measured, d_star,
                             d_true});
  }

  ControlMetrics& m = trace.metrics;
  m.min_distance = min_distance;
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<double> signal, sp;
  for (std::size_t k = 0; k < trace.samples.size(); ++k) {
    signal.push_back(trace.samples[k].d_true);
    sp.push_back(trace.samples[k].d_star);
    if (k < hold) continue;
    const double err = std::abs(trace.samples[k].d_true - trace.samples[k].d_star);
    sum += err;
    m.max_abs_error = std::max(m.max_abs_error, err);
    ++count;
  }
  m.mean_abs_error = count ? sum / static_cast<double>(count) : 0.0;
  m.rise_times = rise_times(signal, sp, dt);
  m.steady_state_errors = steady_state_errors(signal, sp, dt, 0);
  return trace;
}

std::vector<double> simulate_ideal_loop(const PIGains& gains, const InnerLoopModel& inner_model,
                                        double initial_distance, const std::vector<double>& setpoints,
                                        int measurement_every, double dt, int inner_steps) {
  std::vector<double> out;
  InnerLoopState inner = InnerLoopState::at_rest(0.0);
  PIState pi;
  double d3 = 0.0;
  double d_meas = initial_distance;
  for (std::size_t k = 0; k < setpoints.size(); ++k) {
    if (k % static_cast<std::size_t>(measurement_every) == 0) d_meas = initial_distance - d3;
    const double u = outer_loop_step(gains, pi, d_meas, setpoints[k], dt);
    for (int i = 0; i < inner_steps; ++i) d3 = inner_loop_step(inner_model, inner, u);
    out.push_back(initial_distance - d3);
  }
  return out;
}

namespace {

/// Peak-to-peak growth of the response: late window over early window.
double oscillation_ratio(const std::vector<double>& x) {
  const std::size_t n = x.size();
  auto amplitude = [&](std::size_t lo, std::size_t hi) {
    double mean = 0.0;
    for (std::size_t i = lo; i < hi; ++i) mean += x[i];
    mean /= static_cast<double>(hi - lo);
    double a = 0.0;
    for (std::size_t i = lo; i < hi; ++i) a = std::max(a, std::abs(x[i] - mean));
    return a;
  };
  const double early = amplitude(n / 4, n / 2);
  const double late = amplitude(3 * n / 4, n);
  if (!std::isfinite(late)) return std::numeric_limits<double>::infinity();
  return early > 1e-12 ? late / early : 0.0;
}

}  // namespace

ZieglerNichols ziegler_nichols_pi(const InnerLoopModel& inner, int measurement_every, double dt, int inner_steps) {
  const std::vector<double> sp(400, 0.5);
  auto response = [&](double kp) {
    PIGains g;
    g.kp = kp;
    g.ki = 0.0;
    g.output_limit = g.integrator_limit = g.rate_limit = 1e9;
    return simulate_ideal_loop(g, inner, 1.0, sp, measurement_every, dt, inner_steps);
  };
  double lo = 1e-3, hi = 1e3;
  if (oscillation_ratio(response(hi)) < 1.0) throw ConvergenceError("no ultimate gain found", hi);
  for (int it = 0; it < 60; ++it) {
    const double mid = std::sqrt(lo * hi);
    (oscillation_ratio(response(mid)) < 1.0 ? lo : hi) = mid;
  }
  ZieglerNichols zn;
  zn.ultimate_gain = hi;
  // Period from the mean spacing of same-direction mean crossings at the ultimate gain.
  const std::vector<double> x = response(hi);
  const std::size_t start = x.size() / 2;
  double mean = 0.0;
  for (std::size_t i = start; i < x.size(); ++i) mean += x[i];
  mean /= static_cast<double>(x.size() - start);
  std::vector<std::size_t> crossings;
  for (std::size_t i = start + 1; i < x.size(); ++i)
    if (x[i - 1] < mean && x[i] >= mean) crossings.push_back(i);
  if (crossings.size() < 2) throw ConvergenceError("ultimate oscillation too weak to time", hi);
  zn.ultimate_period =
      dt * static_cast<double>(crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
  zn.gains.kp = 0.45 * zn.ultimate_gain;
  zn.gains.ki = zn.gains.kp / (zn.ultimate_period / 1.2);
  return zn;
}

}  // namespace ioct
