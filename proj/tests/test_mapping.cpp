#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "ioct/ellipsoid_fit.hpp"
#include "ioct/error.hpp"
#include "ioct/io.hpp"
#include "ioct/mapping.hpp"
#include "ioct/tsp.hpp"

using namespace ioct;

namespace {

struct Setup {
  EyePhantom phantom = EyePhantom::default_phantom();
  RobotSetup robot = RobotSetup::default_setup();
  RobotTruth truth;
  RobotParams nominal;
  Pose o_to_b;
  Ellipsoidd capsule_b;
  WaypointOptions wo;

  Setup() {
    truth = robot.truth(phantom);
    nominal = robot.nominal(phantom, robot.fiber_offset_true);
    o_to_b = truth.b_to_o.inverse();
    capsule_b = transformed(phantom.capsule, o_to_b);
    wo.posterior = o_to_b.linear() * Vec3::UnitZ();
  }
};

std::vector<JointState> random_states(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> a(-60.0, -30.0), b(-20.0, 20.0), d(10.0, 20.0);
  std::vector<JointState> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({a(rng), b(rng), d(rng), 0.0});
  return s;
}

double brute_force(const std::vector<JointState>& s, const Vec3& k) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    best = std::min(best, tour_cost(s, order, k));
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

bool is_permutation_of(const std::vector<std::size_t>& order, std::size_t n) {
  std::set<std::size_t> seen(order.begin(), order.end());
  return order.size() == n && seen.size() == n && *seen.rbegin() == n - 1;
}

PointCloud sample_ellipsoid(const Ellipsoidd& e, double polar_max_deg, double step_deg) {
  PointCloud pts;
  for (double p = 0.0; p <= polar_max_deg + 1e-9; p += step_deg) {
    for (double a = 0.0; a < 360.0; a += step_deg) {
      const double pr = deg2rad(p), ar = deg2rad(a);
      pts.push_back(e.surface_point(Vec3(std::sin(pr) * std::cos(ar), std::sin(pr) * std::sin(ar), std::cos(pr))));
      if (p == 0.0) break;
    }
  }
  return pts;
}

}  // namespace

TEST_SUITE("capsule-mapping") {

TEST_CASE("ellipsoid fit recovers exact samples") {
  Ellipsoidd e;
  e.center = Vec3(0.3, -0.2, 16.1);
  e.semi_axes = Vec3(4.2, 3.8, 2.7);
  e.rotation = rotation_from_vector(Vec3(0.1, -0.05, 0.3));
  const EllipsoidFit f = fit_ellipsoid(sample_ellipsoid(e, 180.0, 10.0));
  CHECK(f.fit_rms < 1e-9);
  CHECK((f.ellipsoid.center - e.center).norm() < 1e-6);
  Vec3 got = f.ellipsoid.semi_axes, want = e.semi_axes;
  std::sort(got.data(), got.data() + 3);
  std::sort(want.data(), want.data() + 3);
  CHECK(((got - want).array() / want.array()).abs().maxCoeff() < 1e-6);
  CHECK(ellipsoid_rms(e, sample_ellipsoid(e, 90.0, 7.0)) < 1e-9);
}

TEST_CASE("ellipsoid fit rejects degenerate clouds") {
  PointCloud planar;
  for (int i = 0; i < 30; ++i) planar.emplace_back(std::cos(i * 0.3) * (1 + i * 0.1), std::sin(i * 0.7), 0.0);
  CHECK_THROWS_AS(fit_ellipsoid(planar), FitError);
  CHECK_THROWS_AS(fit_ellipsoid(PointCloud(5, Vec3::Ones())), FitError);
}

TEST_CASE("pupillary cap alone misplaces the equator more than the full refit") {
  const EyePhantom ph = EyePhantom::default_phantom();
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 0.025);
  PointCloud cap = ground_truth_capsule_cloud(ph, 2.0, true);
  for (Vec3& p : cap) p += Vec3(g(rng), g(rng), g(rng));
  auto equator_error = [](const Ellipsoidd& e) {
    Vec3 axes = e.semi_axes;
    std::sort(axes.data(), axes.data() + 3);
    return std::max(std::abs(axes[1] - 4.0), std::abs(axes[2] - 4.0));
  };
  const double cap_err = equator_error(fit_ellipsoid(cap).ellipsoid);

  PointCloud full = cap;
  for (const Vec3& p : ground_truth_capsule_cloud(ph, 3.0, false)) full.push_back(p + Vec3(g(rng), g(rng), g(rng)));
  const double full_err = equator_error(fit_ellipsoid(full).ellipsoid);
  CHECK(full_err < 0.05);
  CHECK(cap_err > full_err);
}

TEST_CASE("waypoints sit one millimetre before the surface and respect limits") {
  const Setup s;
  const auto wps = generate_waypoints(s.capsule_b, s.nominal, 3.0, 1.0, s.wo);
  REQUIRE(wps.size() > 50);
  double max_r = 0.0, min_r = 1e9;
  for (const Waypoint& w : wps) {
    CHECK_NOTHROW(s.nominal.check_limits(w.q));
    const FiberRay r = fiber_ray(s.nominal, w.q);
    CHECK((r.origin - w.target).norm() < 1e-9);
    CHECK(std::abs(s.capsule_b.implicit(w.target + 1.0 * r.direction)) < 1e-6);
    CHECK((w.target + r.direction - w.surface_point).norm() < 1e-6);
    const Vec3 surf_o = s.truth.b_to_o * w.surface_point;
    max_r = std::max(max_r, surf_o.head<2>().norm());
    min_r = std::min(min_r, surf_o.head<2>().norm());
  }
  // Pupillary and equatorial latitudes are both covered.
  CHECK(min_r < 1.5);
  CHECK(max_r > 3.0);
}

TEST_CASE("halving alpha roughly quadruples the waypoint count") {
  const Setup s;
  for (double alpha : {4.0, 6.0}) {
    const double coarse = static_cast<double>(generate_waypoints(s.capsule_b, s.nominal, alpha, 1.0, s.wo).size());
    const double fine = static_cast<double>(generate_waypoints(s.capsule_b, s.nominal, alpha / 2, 1.0, s.wo).size());
    CHECK(fine / coarse == doctest::Approx(4.0).epsilon(0.2));
  }
}

TEST_CASE("waypoint generation reports empty coverage") {
  const Setup s;
  Ellipsoidd far = s.capsule_b;
  far.center += Vec3(500, 0, 0);
  CHECK_THROWS_AS(generate_waypoints(far, s.nominal, 3.0, 1.0, s.wo), CoverageError);
}

TEST_CASE("two waypoints form a single pair") {
  const auto st = random_states(2, 3);
  const Vec3 k(1, 1, 10);
  const Tour t = order_waypoints(st, k);
  CHECK(is_permutation_of(t.order, 2));
  CHECK(t.cost == doctest::Approx(joint_distance(st[0], st[1], k)));
}

TEST_CASE("exact solver matches brute force") {
  const Vec3 k(1, 1, 10);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto st = random_states(7, seed);
    const Tour t = solve_tour_exact(st, k);
    CHECK(is_permutation_of(t.order, 7));
    CHECK(t.exact);
    CHECK(t.cost == doctest::Approx(brute_force(st, k)).epsilon(1e-12));
    CHECK(t.cost == doctest::Approx(tour_cost(st, t.order, k)).epsilon(1e-12));
  }
}

TEST_CASE("heuristic reaches the optimum at n = 8") {
  const Vec3 k(1, 1, 10);
  int equal = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto st = random_states(8, 1000 + seed);
    const double opt = brute_force(st, k);
    const Tour h = solve_tour_heuristic(st, k);
    CHECK(is_permutation_of(h.order, 8));
    CHECK(is_two_opt_optimal(st, h.order, k));
    if (std::abs(h.cost - opt) <= 1e-9 * opt) ++equal;
    else CHECK(h.cost <= 1.05 * opt);
  }
  CHECK(equal >= 48);
}

TEST_CASE("large tours are valid and 2-opt optimal") {
  const Vec3 k(1, 1, 10);
  const auto st = random_states(120, 77);
  const Tour t = order_waypoints(st, k);
  CHECK_FALSE(t.exact);
  CHECK(is_permutation_of(t.order, 120));
  CHECK(is_two_opt_optimal(st, t.order, k));
  CHECK(t.cost == doctest::Approx(tour_cost(st, t.order, k)));
}

TEST_CASE("scaling the weights leaves the tour unchanged") {
  const Vec3 k(1, 1, 10);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (std::size_t n : {9u, 40u}) {
      const auto st = random_states(n, 500 + seed);
      const Tour a = order_waypoints(st, k);
      // A power of two scales every cost exactly, so even ties resolve the same way.
      const Tour b = order_waypoints(st, 4.0 * k);
      CHECK(a.order == b.order);
      CHECK(b.cost == 4.0 * a.cost);
      // Any other factor: same optimum up to rounding (reversed open tours tie).
      const Tour c = order_waypoints(st, 3.5 * k);
      CHECK(tour_cost(st, c.order, k) == doctest::Approx(a.cost).epsilon(1e-12));
    }
  }
}

TEST_CASE("noiseless scan with perfect calibration lands on the capsule") {
  const Setup s;
  const ScanPlan plan = plan_scan(s.capsule_b, s.nominal, 6.0, 1.0, Vec3(1, 1, 10), s.wo);
  ProbeOptions opts;
  opts.averages = 1;
  opts.noise = NoiseModel::none();
  const ScanResult r = execute_scan(plan, s.phantom, s.truth, s.nominal, RegistrationSolution::from_pose(s.truth.b_to_o),
                                    1.0, s.robot.fiber_offset_true, CapsuleMap{}, opts, 1);
  CHECK(r.skipped == 0);
  REQUIRE(r.map.points.size() == plan.waypoints.size());
  const double half_pitch = 0.5 * OctConfig{}.sample_pitch_um * 1e-3;
  for (const MapPoint& p : r.map.points) {
    CHECK(p.provenance == Provenance::Intraocular);
    CHECK(distance_to_surface(s.phantom.capsule, p.p) <= half_pitch + 1e-6);
  }
  for (const ProbeMeasurement& m : r.measurements) CHECK(m.optical >= 0.0);
}

TEST_CASE("localization error: identity, constructed shift and isolated points") {
  const EyePhantom ph = EyePhantom::default_phantom();
  const PointCloud gt = ground_truth_capsule_cloud(ph, 0.5, false);
  PointCloud est;
  for (std::size_t i = 0; i < gt.size(); i += 97) est.push_back(gt[i]);
  const LocalizationError same = localization_error(est, gt);
  CHECK(same.rms == 0.0);
  CHECK(same.flagged == 0);

  // Shift each point 30 um along its outward normal.
  PointCloud shifted;
  for (const Vec3& p : est) shifted.push_back(p + 0.03 * ph.capsule.normal(p));
  const LocalizationError e = localization_error(shifted, gt);
  const double spacing = deg2rad(0.5) * 4.0;
  CHECK(std::abs(e.rms - 0.03) <= 0.5 * spacing);
  CHECK(e.flagged == 0);

  PointCloud lonely = est;
  lonely.push_back(Vec3(0, 0, 30));
  const LocalizationError f = localization_error(lonely, gt);
  CHECK(f.flagged == 1);
  CHECK(std::isnan(f.errors.back()));
  CHECK(f.rms == 0.0);
  CHECK(f.full_rms > 0.0);
}

TEST_CASE("capsule map keeps provenance and refits") {
  const EyePhantom ph = EyePhantom::default_phantom();
  CapsuleMap map;
  map.append(ground_truth_capsule_cloud(ph, 2.0, true), Provenance::Transpupillary);
  const std::size_t n_trans = map.points.size();
  map.append(ground_truth_capsule_cloud(ph, 4.0, false), Provenance::Intraocular);
  CHECK(map.cloud(Provenance::Transpupillary).size() == n_trans);
  CHECK(map.cloud().size() == map.points.size());
  map.refit();
  CHECK(map.fit_rms < 1e-6);
  CHECK((map.fitted.semi_axes.array() > 0.0).all());
  const json j = to_json(map);
  CHECK(j["points"].size() == map.points.size());
}

}  // TEST_SUITE
