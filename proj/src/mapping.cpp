#include "ioct/mapping.hpp"

#include <cmath>
#include <limits>

#include "ioct/error.hpp"
#include "ioct/spatial_index.hpp"

namespace ioct {

const char* to_string(Provenance p) {
  return p == Provenance::Transpupillary ? "transpupillary" : "intraocular";
}

void CapsuleMap::append(const PointCloud& cloud, Provenance provenance) {
  for (const Vec3& p : cloud) points.push_back({p, provenance});
}

PointCloud CapsuleMap::cloud() const {
  PointCloud out;
  out.reserve(points.size());
  for (const MapPoint& m : points) out.push_back(m.p);
  return out;
}

PointCloud CapsuleMap::cloud(Provenance provenance) const {
  PointCloud out;
  for (const MapPoint& m : points)
    if (m.provenance == provenance) out.push_back(m.p);
  return out;
}

void CapsuleMap::refit() {
  const EllipsoidFit fit = fit_ellipsoid(cloud());
  fitted = fit.ellipsoid;
  fit_rms = fit.fit_rms;
}

std::vector<Waypoint> generate_waypoints(const Ellipsoidd& fitted, const RobotParams& robot, double alpha_deg,
                                         double offset, const WaypointOptions& options) {
  if (!(alpha_deg > 0.0)) throw ArgumentError("alpha must be positive");
  if (!(offset > 0.0)) throw ArgumentError("offset must be positive");
  const Vec3 posterior = options.posterior.normalized();
  auto grid = [&](const JointLimits& lim) {
    std::vector<double> v;
    const auto lo = static_cast<long>(std::ceil(lim.lo / alpha_deg - 1e-9));
    const auto hi = static_cast<long>(std::floor(lim.hi / alpha_deg + 1e-9));
    for (long i = lo; i <= hi; ++i) v.push_back(static_cast<double>(i) * alpha_deg);
    return v;
  };
  std::vector<Waypoint> out;
  for (double t1 : grid(robot.theta1_limits)) {
    for (double t2 : grid(robot.theta2_limits)) {
      const Vec3 dir = tool_direction(robot, t1, t2);
      const auto hit = intersect(fitted, robot.rcm_position, dir);
      if (!hit || hit->second <= offset) continue;
      const Vec3 exit = robot.rcm_position + hit->second * dir;
      if ((exit - fitted.center).dot(posterior) < options.latitude_margin) continue;
      if (hit->second - offset <= std::max(hit->first, 0.0)) continue;
      Waypoint w;
      w.surface_point = exit;
      w.target = exit - offset * dir;
      w.standoff = offset;
      try {
        w.q = aim_at(robot, exit, offset);
      } catch (const ReachabilityError&) {
        continue;
      }
      out.push_back(w);
    }
  }
  if (out.empty()) throw CoverageError("no reachable waypoint on the posterior surface");
  return out;
}

ScanPlan plan_scan(const Ellipsoidd& fitted_b, const RobotParams& robot, double alpha_deg, double offset,
                   const Vec3& k, const WaypointOptions& options) {
  const std::vector<Waypoint> wps = generate_waypoints(fitted_b, robot, alpha_deg, offset, options);
  ScanPlan plan;
  plan.alpha = alpha_deg;
  plan.k = k;
  if (wps.size() == 1) {
    plan.waypoints = wps;
    return plan;
  }
  std::vector<JointState> qs;
  for (const Waypoint& w : wps) qs.push_back(w.q);
  const Tour tour = order_waypoints(qs, k);
  for (std::size_t i : tour.order) plan.waypoints.push_back(wps[i]);
  plan.tour_cost = tour.cost;
  return plan;
}

ProbeMeasurement probe_distance(const EyePhantom& phantom, const RobotTruth& truth, const RobotParams& nominal,
                                const JointState& q, double d3_from, double expected_optical,
                                const ProbeOptions& options, std::uint64_t seed) {
  InnerLoopState inner = InnerLoopState::at_rest(d3_from);
  const auto steps = static_cast<int>(std::lround(options.settle_time * options.inner.sample_rate_hz));
  double d3 = d3_from;
  for (int i = 0; i < steps; ++i) d3 = inner_loop_step(options.inner, inner, q.d3);
  JointState actual = q;
  actual.d3 = d3;

  ProbeMeasurement m;
  const Pose tool = forward_kinematics(nominal, actual);
  m.ray = {tool.translation(), tool.linear().col(2)};
  m.optical = std::numeric_limits<double>::quiet_NaN();

  const FiberRay fiber = fiber_ray(truth.params, actual);
  NoiseModel noise = options.noise;
  noise.rng_seed = seed;
  const AScanSignal signal = acquire_averaged(phantom, truth.b_to_o * fiber.origin, truth.b_to_o.linear() * fiber.direction,
                                              noise, options.averages, options.oct);
  TrackerState state = TrackerState::starting_at(expected_optical, options.tracker_halfwidth, options.threshold_gain);
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    const TrackResult r = track_distance(state, signal);
    if (r.found) {
      m.optical = r.distance;
      break;
    }
    state = r.state;
  }
  return m;
}

ScanResult execute_scan(const ScanPlan& plan, const EyePhantom& phantom, const RobotTruth& truth,
                        const RobotParams& nominal, const RegistrationSolution& registration, double n,
                        double d_tip, CapsuleMap map, const ProbeOptions& options, std::uint64_t seed) {
  if (!(n >= 1.0)) throw ArgumentError("refractive index must be >= 1");
  ScanResult result;
  const Pose b_to_o = registration.b_to_o();
  PointCloud found;
  double d3_prev = plan.waypoints.empty() ? 0.0 : plan.waypoints.front().q.d3;
  for (std::size_t i = 0; i < plan.waypoints.size(); ++i) {
    const Waypoint& w = plan.waypoints[i];
    const ProbeMeasurement m =
        probe_distance(phantom, truth, nominal, w.q, d3_prev, n * w.standoff, options, mix_seed(seed, 0x5ca7, i));
    d3_prev = w.q.d3;
    result.measurements.push_back(m);
    if (!std::isfinite(m.optical)) {
      ++result.skipped;
      continue;
    }
    found.push_back(b_to_o * (m.ray.tooltip_b + m.ray.axis_b * (m.optical / n + d_tip)));
  }
  map.append(found, Provenance::Intraocular);
  result.map = std::move(map);
  return result;
}

LocalizationError localization_error(const PointCloud& estimated, const PointCloud& ground_truth, double window) {
  if (ground_truth.empty()) throw ArgumentError("localization error: empty ground truth");
  LocalizationError out;
  const PointGrid grid(ground_truth, std::max(window, 1e-3));
  double sum = 0.0, sq = 0.0, full_sq = 0.0;
  int used = 0;
  for (const Vec3& p : estimated) {
    const auto nn = grid.nearest_in_cube(p, window / 2.0);
    const double full = grid.nearest(p).distance;
    full_sq += full * full;
    if (!nn) {
      out.errors.push_back(std::numeric_limits<double>::quiet_NaN());
      ++out.flagged;
      continue;
    }
    out.errors.push_back(nn->distance);
    sum += nn->distance;
    sq += nn->distance * nn->distance;
    ++used;
  }
  if (used > 0) {
    out.mean = sum / used;
    out.rms = std::sqrt(sq / used);
    out.std = std::sqrt(std::max(sq / used - out.mean * out.mean, 0.0));
  }
  if (!estimated.empty()) out.full_rms = std::sqrt(full_sq / static_cast<double>(estimated.size()));
  return out;
}

}  // namespace ioct
