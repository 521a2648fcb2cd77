#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ioct/calibration.hpp"
#include "ioct/conic_fit.hpp"
#include "ioct/error.hpp"
#include "ioct/io.hpp"
#include "ioct/optics.hpp"
#include "ioct/spatial_index.hpp"
#include "ioct/workflow.hpp"

using namespace ioct;

namespace {

Pose sample_transform() { return make_pose(rotation_from_vector(Vec3(0.25, -0.4, 1.1)), Vec3(-35.0, 120.0, 60.0)); }

std::vector<FeatureObservation> synth_features(const Pose& b_to_o, int count, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<FeatureObservation> out;
  for (int i = 0; i < count; ++i) {
    FeatureObservation f;
    f.p_b = Vec3(u(rng), u(rng), u(rng));
    f.z_b = Vec3(0.1 * u(rng), 0.1 * u(rng), 1.0).normalized();
    f.p_o = b_to_o * f.p_b;
    if (sigma > 0.0) f.p_o += Vec3(g(rng), g(rng), g(rng));
    f.z_o = b_to_o.linear() * f.z_b;
    out.push_back(f);
  }
  return out;
}

// Probe rays ending on reference points at a known distance, identity registration.
struct OffsetData {
  std::vector<ProbeRay> rays;
  std::vector<double> distances;
  PointCloud reference;
};

OffsetData synth_offset(double d_tip_true, std::uint64_t seed) {
  OffsetData d;
  d.reference = ground_truth_capsule_cloud(EyePhantom::default_phantom(), 1.0, true);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, d.reference.size() - 1);
  std::uniform_real_distribution<double> tilt(-0.15, 0.15), dist(0.8, 1.2);
  while (d.rays.size() < 20) {
    const Vec3 target = d.reference[pick(rng)];
    if (std::hypot(target.x(), target.y()) > 2.0) continue;
    const Vec3 axis = Vec3(tilt(rng), tilt(rng), 1.0).normalized();
    const double m = dist(rng);
    d.rays.push_back({target - axis * (m + d_tip_true), axis});
    d.distances.push_back(m);
  }
  return d;
}

}  // namespace

TEST_SUITE("calibration") {

TEST_CASE("tool detection on a cylinder across the volume") {
  const Vec3 tip(1.0, -2.0, 12.0);
  const ToolImaging imaging;
  const double half_voxel = 0.5 * imaging.lateral_pitch_mm;
  for (double tilt_deg : {0.0, 30.0}) {
    const double a = deg2rad(tilt_deg);
    const Vec3 axis(std::cos(a), 0.0, std::sin(a));
    const VScanVolume vol = simulate_tool_volume(tip, axis, imaging, NoiseModel::none());
    const ToolDetection det = detect_tooltip(vol);
    CHECK(std::acos(std::min(1.0, det.axis.dot(axis))) < 1e-3);
    CHECK((det.position - tip).norm() <= half_voxel);
    CHECK(det.radius == doctest::Approx(imaging.radius_mm).epsilon(0.05));
  }
}

TEST_CASE("tool detection fails on an empty volume") {
  VScanVolume vol = simulate_tool_volume(Vec3(0, 0, 10), Vec3::UnitX(), ToolImaging{}, NoiseModel::none());
  std::fill(vol.data.begin(), vol.data.end(), 0.0f);
  CHECK_THROWS_AS(detect_tooltip(vol), DetectionError);
}

TEST_CASE("registration recovers an exact rigid transform") {
  const Pose T = sample_transform();
  const auto obs = synth_features(T, 20, 0.0, 1);
  const RegistrationSolution s = register_frames(obs);
  CHECK((s.rotation() - T.linear()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((s.p_ob - T.translation()).norm() < 1e-9);
  CHECK(s.residual_rms < 1e-9);
  CHECK((s.rotation().transpose() * s.rotation() - Mat3::Identity()).norm() < 1e-12);
  CHECK(s.per_point_errors.size() == 20);

  const RegistrationSolution id = register_frames(synth_features(Pose::Identity(), 10, 0.0, 2));
  CHECK(id.r_ob.norm() < 1e-9);
  CHECK(id.p_ob.norm() < 1e-9);
}

TEST_CASE("registration residual with 25 um noise sits in the paper's band") {
  const Pose T = sample_transform();
  double mean = 0.0;
  const int trials = 50;
  for (int t = 0; t < trials; ++t) {
    const RegistrationSolution s = register_frames(synth_features(T, 20, 0.025, 100 + t));
    CHECK(s.residual_rms >= 0.0);
    mean += s.residual_rms / trials;
  }
  CHECK(mean >= 0.025);
  CHECK(mean <= 0.075);
}

TEST_CASE("registration residual is gauge invariant") {
  const Pose T = sample_transform();
  auto obs = synth_features(T, 20, 0.03, 7);
  const double before = register_frames(obs).residual_rms;
  const Pose G = make_pose(rotation_from_vector(Vec3(-0.7, 0.2, 0.3)), Vec3(5.0, -8.0, 2.0));
  for (auto& f : obs) {
    f.p_b = G * f.p_b;
    f.z_b = G.linear() * f.z_b;
    f.p_o = G * f.p_o;
    f.z_o = G.linear() * f.z_o;
  }
  CHECK(register_frames(obs).residual_rms == doctest::Approx(before).epsilon(1e-6));
}

TEST_CASE("registration rejects degenerate input and reports non-convergence") {
  std::vector<FeatureObservation> line;
  for (int i = 0; i < 6; ++i) {
    FeatureObservation f;
    f.p_b = f.p_o = Vec3(i, 2.0 * i, 0.5 * i);
    line.push_back(f);
  }
  CHECK_THROWS_AS(register_frames(line), DegenerateGeometryError);
  CHECK_THROWS_AS(register_frames(std::vector<FeatureObservation>(line.begin(), line.begin() + 2)),
                  DegenerateGeometryError);
  LmOptions tight;
  tight.max_iterations = 1;
  tight.step_tolerance = 0.0;
  try {
    register_frames(synth_features(sample_transform(), 20, 0.05, 3), 1.0, tight);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.last_residual() > 0.0);
    CHECK_FALSE(e.trace().empty());
  }
}

TEST_CASE("registration weight only reweights orientation") {
  const auto obs = synth_features(sample_transform(), 20, 0.02, 11);
  for (double w : {0.0, 0.1, 1.0, 10.0}) {
    const RegistrationSolution s = register_frames(obs, w);
    CHECK(s.w == w);
    CHECK(s.residual_rms < 0.06);
  }
}

TEST_CASE("refractive slope: exact data, affine offsets and bad input") {
  std::vector<double> d3, opt;
  for (int i = 0; i < 20; ++i) {
    d3.push_back(12.0 + 0.05 * i);
    opt.push_back(1.333 * (-0.05 * i));
  }
  CHECK(calibrate_refractive_index(d3, opt) == doctest::Approx(1.333).epsilon(1e-12));
  std::vector<double> shifted = opt;
  for (double& v : shifted) v += 7.25;
  CHECK(calibrate_refractive_index(d3, shifted) == doctest::Approx(calibrate_refractive_index(d3, opt)).epsilon(1e-12));
  CHECK_THROWS_AS(calibrate_refractive_index(std::vector<double>{1.0}, std::vector<double>{1.0}), ArgumentError);
  CHECK_THROWS_AS(calibrate_refractive_index(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 2.0}),
                  ArgumentError);
  CHECK_THROWS_AS(calibrate_refractive_index(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("refractive protocol recovers water and air") {
  for (const Medium& m : {media::water(), media::air()}) {
    EyePhantom ph = EyePhantom::default_phantom();
    ph.chamber_medium = m;
    const RobotSetup setup = RobotSetup::default_setup();
    const RobotTruth truth = setup.truth(ph);
    const RobotParams nominal = setup.nominal(ph, 0.0);
    const Vec3 target_b = truth.b_to_o.inverse() * ph.capsule.surface_point(Vec3::UnitZ());
    ProbeOptions opts;
    const RefractiveProtocolResult r = refractive_protocol(ph, truth, nominal, target_b, 2.0, 20, 0.05, opts, 3);
    CHECK(r.d3.size() == 20);
    CHECK(std::abs(r.n - m.n) / m.n < 0.01);
  }
}

TEST_CASE("a segment at 20 degree incidence follows the hand ray trace") {
  const double phi = deg2rad(20.0);
  const Vec3 normal(0.0, 0.0, -1.0);  // surface facing the incoming beam
  const Vec3 dir(std::sin(phi), 0.0, std::cos(phi));
  const Vec3 start(0.5, 0.2, 10.0);
  const double n1 = 1.0, n2 = 1.45, optical = 1.3;
  const SegmentStep s = propagate_segment(start, dir, normal, n1, n2, optical);
  const double phi_t = std::asin(n1 * std::sin(phi) / n2);
  const double len = optical / n2;
  const Vec3 want = start + len * Vec3(std::sin(phi_t), 0.0, std::cos(phi_t));
  CHECK((s.end - want).norm() < 1e-12);
  CHECK((s.direction - Vec3(std::sin(phi_t), 0.0, std::cos(phi_t))).norm() < 1e-12);
}

TEST_CASE("spatial correction with unit indices is the identity on depths") {
  EyePhantom ph = EyePhantom::default_phantom();
  ph.chamber_medium = media::gel();
  NoiseModel noise;
  noise.rng_seed = 5;
  const VScanVolume vol = simulate_vscan(ph, {-3.0, 3.0, -3.0, 3.0}, 0.25, noise);
  SpatialCorrectionOptions opt;
  opt.ambient_n = opt.cornea_n = opt.chamber_n = 1.0;
  const SpatialCorrectionResult r = correct_vscan_spatial(vol, opt);
  REQUIRE(r.corrected_pc.size() > 100);
  CHECK(r.corrected_pc.size() == r.raw_pc.size());
  for (std::size_t i = 0; i < r.raw_pc.size(); ++i) CHECK((r.corrected_pc[i] - r.raw_pc[i]).norm() < 1e-9);
}

TEST_CASE("spatial correction in gel approaches the ground truth") {
  EyePhantom ph = EyePhantom::default_phantom();
  ph.chamber_medium = media::gel();
  NoiseModel noise;
  noise.rng_seed = 6;
  const VScanVolume vol = simulate_vscan(ph, {-3.5, 3.5, -3.5, 3.5}, 0.2, noise);
  SpatialCorrectionOptions opt;
  opt.chamber_n = 1.384;
  const SpatialCorrectionResult r = correct_vscan_spatial(vol, opt);
  REQUIRE(r.corrected_pc.size() > 300);
  double raw = 0.0, corr = 0.0;
  for (std::size_t i = 0; i < r.raw_pc.size(); ++i) {
    raw += std::pow(distance_to_surface(ph.capsule, r.raw_pc[i]), 2);
    corr += std::pow(distance_to_surface(ph.capsule, r.corrected_pc[i]), 2);
  }
  raw = std::sqrt(raw / r.raw_pc.size());
  corr = std::sqrt(corr / r.corrected_pc.size());
  CHECK(corr <= 0.06);
  CHECK(raw >= 0.3);
  CHECK(r.per_point_shift.size() == r.corrected_pc.size());
}

TEST_CASE("column segmentation finds the cornea and capsule steps") {
  EyePhantom ph = EyePhantom::default_phantom();
  const VScanVolume vol = simulate_vscan(ph, {0.0, 0.0, 0.0, 0.0}, 0.1, NoiseModel{});
  const auto edges = segment_column(vol.column(0, 0));
  REQUIRE(edges.size() == 4);
  const double pitch = vol.sample_pitch_um * 1e-3;
  const double expect[] = {10.0, 11.45, 13.7, 13.7 + 5.5};
  for (int i = 0; i < 4; ++i) CHECK(std::abs(vol.depth_origin_mm + edges[i] * pitch - expect[i]) <= 1.5 * pitch);
}

TEST_CASE("ellipse fit recovers a sampled arc") {
  std::vector<Eigen::Vector2d> pts;
  for (double t = -0.6; t <= 0.6; t += 0.05) pts.emplace_back(1.0 + 12.0 * std::sin(t), 22.0 - 7.0 * std::cos(t));
  const Ellipse2 e = fit_ellipse(pts).ellipse();
  CHECK(e.center.x() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(e.center.y() == doctest::Approx(22.0).epsilon(1e-6));
  CHECK(std::max(e.semi_axes.x(), e.semi_axes.y()) == doctest::Approx(12.0).epsilon(1e-6));
  CHECK(std::min(e.semi_axes.x(), e.semi_axes.y()) == doctest::Approx(7.0).epsilon(1e-6));
  std::vector<Eigen::Vector2d> line;
  for (int i = 0; i < 10; ++i) line.emplace_back(i, 2.0 * i);
  CHECK_THROWS_AS(fit_ellipse(line), FitError);
}

TEST_CASE("fiber offset: zero and injected offsets") {
  const RegistrationSolution id;
  for (double truth : {0.0, 0.5, -0.5}) {
    const OffsetData d = synth_offset(truth, 17);
    const FiberOffsetResult r = calibrate_fiber_offset(d.rays, d.distances, d.reference, id);
    CHECK(std::abs(r.d_tip - truth) <= (truth == 0.0 ? 0.005 : 0.010));
    if (truth != 0.0) CHECK(r.final_rms <= 0.25 * r.initial_rms);
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] <= r.trace[i - 1]);
  }
}

TEST_CASE("fiber offset objective has a local minimum at the true offset") {
  const OffsetData d = synth_offset(0.5, 23);
  const PointGrid grid(d.reference);
  auto objective = [&](double d_tip) {
    double s = 0.0;
    const PointCloud pts = project_probe_points(d.rays, d.distances, d_tip, RegistrationSolution{});
    for (const Vec3& p : pts) s += grid.nearest(p).distance;
    return s / pts.size();
  };
  const double at_truth = objective(0.5);
  for (double delta = -0.2; delta <= 0.2001; delta += 0.01) CHECK(at_truth <= objective(0.5 + delta) + 1e-15);
}

TEST_CASE("fiber offset excludes missing rays and needs five") {
  OffsetData d = synth_offset(0.5, 29);
  for (int i = 0; i < 4; ++i) d.distances[i] = std::numeric_limits<double>::quiet_NaN();
  const FiberOffsetResult r = calibrate_fiber_offset(d.rays, d.distances, d.reference, RegistrationSolution{});
  CHECK(r.excluded == 4);
  CHECK(std::abs(r.d_tip - 0.5) < 0.01);
  for (int i = 4; i < 16; ++i) d.distances[i] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(calibrate_fiber_offset(d.rays, d.distances, d.reference, RegistrationSolution{}), ArgumentError);
}

}  // TEST_SUITE
