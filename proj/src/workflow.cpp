#include "ioct/workflow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "ioct/ellipsoid_fit.hpp"
#include "ioct/error.hpp"
#include "ioct/geometry.hpp"

namespace ioct {

const char* to_string(Stage s) {
  switch (s) {
    case Stage::Register: return "register";
    case Stage::Refractive: return "refractive";
    case Stage::Spatial: return "spatial";
    case Stage::FiberOffset: return "offset";
    case Stage::Map: return "map";
    case Stage::Clean: return "clean";
  }
  return "unknown";
}

RegistrationProtocolResult registration_protocol(const RobotTruth& truth, const RobotParams& nominal, int count,
                                                 const ToolImaging& imaging, const NoiseModel& noise,
                                                 std::uint64_t seed) {
  if (count < 3) throw ArgumentError("registration needs at least 3 poses");
  RegistrationProtocolResult out;
  std::mt19937_64 rng(mix_seed(seed, 0x4e9));
  std::uniform_real_distribution<double> t1(-70.0, -30.0), t2(-20.0, 20.0), depth(3.0, 9.0);
  for (int i = 0; i < count; ++i) {
    JointState q;
    q.theta1 = t1(rng);
    q.theta2 = t2(rng);
    q.d3 = depth(rng) + nominal.retract_length;
    nominal.check_limits(q);
    const Pose commanded = forward_kinematics(nominal, q);
    const Pose actual = forward_kinematics(truth.params, q);
    NoiseModel n = noise;
    n.rng_seed = mix_seed(seed, 0x70, static_cast<std::uint64_t>(i));
    const VScanVolume vol = simulate_tool_volume(truth.b_to_o * actual.translation(),
                                                 truth.b_to_o.linear() * actual.linear().col(2), imaging, n);
    const ToolDetection det = detect_tooltip(vol);
    out.features.push_back({det.position, det.axis, commanded.translation(), commanded.linear().col(2)});
  }
  out.solution = register_frames(out.features);
  return out;
}

RefractiveProtocolResult refractive_protocol(const EyePhantom& phantom, const RobotTruth& truth,
                                             const RobotParams& nominal, const Vec3& target_b, double standoff,
                                             int steps, double step_mm, const ProbeOptions& options,
                                             std::uint64_t seed) {
  if (steps < 2 || !(step_mm > 0.0)) throw ArgumentError("refractive protocol needs >= 2 positive steps");
  RefractiveProtocolResult out;
  JointState q = aim_at(nominal, target_b, standoff);
  // The first acquisition searches most of the range; later ones track.
  ProbeOptions first = options;
  first.tracker_halfwidth = std::max(options.tracker_halfwidth, 1.5 * standoff);
  double expected = 1.4 * standoff;
  double d3_prev = q.d3;
  for (int i = 0; i < steps; ++i) {
    const ProbeMeasurement m = probe_distance(phantom, truth, nominal, q, d3_prev, expected, i == 0 ? first : options,
                                              mix_seed(seed, 0x12e, static_cast<std::uint64_t>(i)));
    if (std::isfinite(m.optical)) {
      out.d3.push_back(q.d3);
      out.optical.push_back(m.optical);
      expected = m.optical - step_mm;
    }
    d3_prev = q.d3;
    q.d3 += step_mm;
  }
  if (out.d3.size() < 2) throw ConvergenceError("refractive protocol: surface lost", static_cast<double>(out.d3.size()));
  out.n = calibrate_refractive_index(out.d3, out.optical);
  return out;
}

OffsetProtocolResult fiber_offset_protocol(const EyePhantom& phantom, const RobotTruth& truth,
                                           const RobotParams& nominal, const RegistrationSolution& registration,
                                           double n, const PointCloud& reference_pc, int count, double standoff,
                                           const ProbeOptions& options, std::uint64_t seed) {
  if (reference_pc.empty()) throw ArgumentError("fiber offset: empty reference cloud");
  OffsetProtocolResult out;
  // Sunflower pattern over the central pupil, snapped to the nearest reference point.
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : reference_pc) centroid += p;
  centroid /= static_cast<double>(reference_pc.size());
  double max_r = 0.0;
  for (const Vec3& p : reference_pc) max_r = std::max(max_r, (p - centroid).head<2>().norm());
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  const Pose o_to_b = registration.o_to_b();
  for (int i = 0; i < count; ++i) {
    const double r = 0.7 * max_r * std::sqrt((i + 0.5) / count);
    const Eigen::Vector2d xy = centroid.head<2>() + r * Eigen::Vector2d(std::cos(i * golden), std::sin(i * golden));
    const Vec3* best = &reference_pc.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (const Vec3& p : reference_pc) {
      const double d = (p.head<2>() - xy).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = &p;
      }
    }
    const JointState q = aim_at(nominal, o_to_b * *best, standoff);
    const ProbeMeasurement m = probe_distance(phantom, truth, nominal, q, q.d3, n * standoff, options,
                                              mix_seed(seed, 0x0ff, static_cast<std::uint64_t>(i)));
    out.rays.push_back(m.ray);
    out.distances.push_back(m.optical / n);
  }
  out.fit = calibrate_fiber_offset(out.rays, out.distances, reference_pc, registration);
  return out;
}

double model_rms(const Ellipsoidd& model, const PointCloud& ground_truth) {
  if (ground_truth.empty()) return 0.0;
  double s = 0.0;
  for (const Vec3& p : ground_truth) {
    const double d = distance_to_surface(model, p);
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(ground_truth.size()));
}

namespace {

json errors_summary(const LocalizationError& e) {
  return {{"rms_mm", e.rms},
          {"mean_mm", e.mean},
          {"std_mm", e.std},
          {"full_rms_mm", e.full_rms},
          {"flagged", e.flagged},
          {"points", e.errors.size()}};
}

json ellipsoid_summary(const Ellipsoidd& e) {
  return {{"center_mm", to_json(e.center)}, {"semi_axes_mm", to_json(e.semi_axes)}};
}

class StageTimer {
 public:
  StageTimer(std::map<std::string, double>& sink, std::string name)
      : sink_(sink), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    sink_[name_] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::map<std::string, double>& sink_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

WorkflowResult run_workflow(const Scenario& sc, const RunOptions& options) {
  WorkflowResult res;
  json& m = res.metrics;
  m["schema_version"] = kSchemaVersion;
  m["scenario_digest"] = sc.digest;
  m["seed"] = sc.seed;
  m["chamber_medium"] = to_json(sc.phantom.chamber_medium);
  m["workflow"] = {{"registration", sc.flags.registration},
                   {"refractive", sc.flags.refractive},
                   {"spatial", sc.flags.spatial},
                   {"fiber_offset", sc.flags.fiber_offset},
                   {"cleaning", sc.flags.cleaning},
                   {"feedback", options.feedback}};

  const EyePhantom& phantom = sc.phantom;
  const RobotTruth truth = sc.robot.truth(phantom);
  RobotParams nominal = sc.robot.nominal(phantom, 0.0);
  ProbeOptions probe;
  probe.noise = sc.noise;
  probe.averages = sc.scan_averages;

  Stage stage = Stage::Register;
  auto done = [&](Stage s) { return s == options.stop_after; };
  try {
    // ------------------------------------------------------------ registration
    {
      StageTimer t(res.timings, "register");
      if (sc.flags.registration) {
        const RegistrationProtocolResult reg = registration_protocol(
            truth, nominal, sc.features, sc.tool_imaging, sc.noise, mix_seed(sc.seed, 1));
        res.registration = reg.solution;
      } else {
        res.registration = RegistrationSolution::from_pose(truth.b_to_o);
      }
      const Pose err = res.registration.b_to_o() * truth.b_to_o.inverse();
      m["registration"] = {{"enabled", sc.flags.registration},
                           {"residual_rms_mm", res.registration.residual_rms},
                           {"iterations", res.registration.iterations},
                           {"rotation_error_deg", rad2deg(Eigen::AngleAxisd(err.linear()).angle())},
                           {"translation_error_mm", err.translation().norm()}};
    }
    if (done(stage)) goto finish;

    // ------------------------------------------------------------ refractive index
    stage = Stage::Refractive;
    {
      StageTimer t(res.timings, "refractive");
      if (sc.flags.refractive) {
        const Vec3 pole_o = phantom.capsule.surface_point(Vec3::UnitZ());
        const RefractiveProtocolResult r =
            refractive_protocol(phantom, truth, nominal, res.registration.o_to_b() * pole_o, sc.refractive_standoff,
                                sc.refractive_steps, sc.refractive_step_mm, probe, mix_seed(sc.seed, 2));
        res.n = r.n;
        m["refractive"] = {{"enabled", true},
                           {"n", r.n},
                           {"n_true", phantom.chamber_medium.n},
                           {"relative_error", std::abs(r.n - phantom.chamber_medium.n) / phantom.chamber_medium.n},
                           {"samples", r.d3.size()}};
      } else {
        // Raw optical distances for the probe; the V-scan keeps the device's nominal index.
        res.n = 1.0;
        m["refractive"] = {{"enabled", false}, {"n", res.n}, {"n_true", phantom.chamber_medium.n}};
      }
    }
    if (done(stage)) goto finish;

    // ------------------------------------------------------------ transpupillary cloud
    stage = Stage::Spatial;
    {
      StageTimer t(res.timings, "spatial");
      NoiseModel vnoise = sc.noise;
      vnoise.rng_seed = mix_seed(sc.seed, 3);
      const VScanVolume vol = simulate_vscan(phantom, ScanRegion{}, sc.vscan_pitch, vnoise);
      SpatialCorrectionOptions so;
      so.ambient_n = phantom.ambient_medium.n;
      so.cornea_n = sc.cornea_n_prior;
      so.chamber_n = sc.flags.refractive ? res.n : sc.nominal_chamber_n;
      so.refraction = sc.flags.spatial;
      res.spatial = correct_vscan_spatial(vol, so);
      if (res.spatial.corrected_pc.size() < 9) throw FitError("transpupillary cloud too small to model");
      const PointCloud gt_visible = ground_truth_capsule_cloud(phantom, sc.ground_truth_resolution, true);
      const LocalizationError raw = localization_error(res.spatial.raw_pc, gt_visible);
      const LocalizationError cor = localization_error(res.spatial.corrected_pc, gt_visible);
      double mean_shift = 0.0;
      for (double s : res.spatial.per_point_shift) mean_shift += s;
      if (!res.spatial.per_point_shift.empty()) mean_shift /= static_cast<double>(res.spatial.per_point_shift.size());
      m["spatial"] = {{"enabled", sc.flags.spatial},
                      {"points", res.spatial.corrected_pc.size()},
                      {"skipped_columns", res.spatial.skipped_columns},
                      {"failed_scans", res.spatial.failed_scans},
                      {"mean_shift_mm", mean_shift},
                      {"raw", errors_summary(raw)},
                      {"corrected", errors_summary(cor)}};
    }
    if (done(stage)) goto finish;

    // ------------------------------------------------------------ fiber offset
    stage = Stage::FiberOffset;
    {
      StageTimer t(res.timings, "offset");
      if (sc.flags.fiber_offset) {
        const OffsetProtocolResult o =
            fiber_offset_protocol(phantom, truth, nominal, res.registration, res.n, res.spatial.corrected_pc,
                                  sc.offset_rays, sc.standoff, probe, mix_seed(sc.seed, 4));
        res.d_tip = o.fit.d_tip;
        m["fiber_offset"] = {{"enabled", true},
                             {"d_tip_mm", o.fit.d_tip},
                             {"d_tip_true_mm", sc.robot.fiber_offset_true},
                             {"initial_rms_mm", o.fit.initial_rms},
                             {"final_rms_mm", o.fit.final_rms},
                             {"iterations", o.fit.iterations},
                             {"excluded", o.fit.excluded}};
      } else {
        res.d_tip = 0.0;
        m["fiber_offset"] = {{"enabled", false}, {"d_tip_mm", 0.0}, {"d_tip_true_mm", sc.robot.fiber_offset_true}};
      }
      nominal.fiber_offset = res.d_tip;
    }
    if (done(stage)) goto finish;

    // ------------------------------------------------------------ plan, scan, refit
    stage = Stage::Map;
    {
      const Pose o_to_b = res.registration.o_to_b();
      const Vec3 posterior_b = o_to_b.linear() * Vec3::UnitZ();
      CapsuleMap map;
      map.append(res.spatial.corrected_pc, Provenance::Transpupillary);
      {
        StageTimer t(res.timings, "cap_fit");
        map.refit();
      }
      const Ellipsoidd cap_fit = map.fitted;
      {
        StageTimer t(res.timings, "plan");
        WaypointOptions wo;
        wo.posterior = posterior_b;
        res.plan = plan_scan(transformed(map.fitted, o_to_b), nominal, sc.alpha, sc.standoff, sc.k, wo);
      }
      ScanResult scan;
      {
        StageTimer t(res.timings, "scan");
        scan = execute_scan(res.plan, phantom, truth, nominal, res.registration, res.n, res.d_tip, std::move(map),
                            probe, mix_seed(sc.seed, 5));
      }
      {
        StageTimer t(res.timings, "refit");
        scan.map.refit();
      }
      res.map = std::move(scan.map);

      const PointCloud gt = ground_truth_capsule_cloud(phantom, sc.ground_truth_resolution, false);
      // Intraocular points seen through the pupil versus the whole scan.
      const PointCloud intra = res.map.cloud(Provenance::Intraocular);
      PointCloud pupillary;
      for (const Vec3& p : intra) {
        if ((p - phantom.iris.center).head<2>().norm() <= phantom.iris.pupil_radius) pupillary.push_back(p);
      }
      res.localization = localization_error(intra, gt);
      m["map"] = {{"alpha_deg", sc.alpha},
                  {"waypoints", res.plan.waypoints.size()},
                  {"tour_cost", res.plan.tour_cost},
                  {"skipped", scan.skipped},
                  {"cap_fit", ellipsoid_summary(cap_fit)},
                  {"refit", ellipsoid_summary(res.map.fitted)},
                  {"refit_rms_mm", res.map.fit_rms},
                  {"cap_model_rms_mm", model_rms(cap_fit, gt)},
                  {"model_rms_mm", model_rms(res.map.fitted, gt)}};
      m["localization"] = {{"whole", errors_summary(res.localization)},
                           {"pupillary", errors_summary(localization_error(pupillary, gt))},
                           {"transpupillary",
                            errors_summary(localization_error(res.map.cloud(Provenance::Transpupillary), gt))}};
    }
    if (done(stage) || !sc.flags.cleaning) goto finish;

    // ------------------------------------------------------------ cleaning
    stage = Stage::Clean;
    {
      StageTimer t(res.timings, "clean");
      const Pose o_to_b = res.registration.o_to_b();
      Ellipsoidd model_b = transformed(res.map.fitted, o_to_b);
      model_b.semi_axes.array() += sc.model_bias;
      const CleaningTrajectory traj =
          generate_cleaning_trajectory(model_b, nominal, sc.sweep, o_to_b.linear() * Vec3::UnitZ());
      CleaningOptions co;
      co.feedback = options.feedback;
      co.averages = sc.clean_averages;
      co.noise = sc.noise;
      co.n = res.n;
      co.d_tip = res.d_tip;
      res.trace = simulate_cleaning(phantom, truth, nominal, model_b, traj, {sc.d_star}, sc.gains, co,
                                    mix_seed(sc.seed, 6));
      m["cleaning"] = to_json(res.trace.metrics);
      m["cleaning"]["feedback"] = options.feedback;
      m["cleaning"]["d_star_mm"] = sc.d_star;
      m["cleaning"]["gains"] = to_json(sc.gains);
      m["cleaning"]["failed"] = res.trace.failed;
      if (res.trace.metrics.contacts > 0) {
        res.exit_code = ExitCode::Contact;
        res.failed_step = to_string(stage);
        res.diagnostic = "tool reached the capsule";
      }
    }
  } catch (const ConfigError& e) {
    res.exit_code = ExitCode::Config;
    res.failed_step = to_string(stage);
    res.diagnostic = e.what();
  } catch (const ConvergenceError& e) {
    res.exit_code = ExitCode::NonConvergence;
    res.failed_step = to_string(stage);
    res.diagnostic = e.what();
  } catch (const Error& e) {
    // Calibration steps that cannot produce a result count as non-convergence.
    const bool calibration = stage != Stage::Map && stage != Stage::Clean;
    res.exit_code = calibration ? ExitCode::NonConvergence : ExitCode::StepError;
    res.failed_step = to_string(stage);
    res.diagnostic = e.what();
  }

finish:
  m["status"] = {{"exit_code", static_cast<int>(res.exit_code)},
                 {"failed_step", res.failed_step},
                 {"diagnostic", res.diagnostic}};

  if (options.write_outputs) {
    const auto& dir = sc.output_dir;
    std::filesystem::create_directories(dir);
    write_json_file(dir / "metrics.json", m);
    write_json_file(dir / "registration.json", to_json(res.registration));
    if (!res.spatial.corrected_pc.empty()) {
      write_point_cloud_csv(dir / "transpupillary_raw.csv", res.spatial.raw_pc, "transpupillary");
      write_point_cloud_csv(dir / "transpupillary_corrected.csv", res.spatial.corrected_pc, "transpupillary");
    }
    if (!res.plan.waypoints.empty()) write_json_file(dir / "plan.json", to_json(res.plan));
    if (!res.map.points.empty()) {
      write_json_file(dir / "capsule_map.json", to_json(res.map));
      write_point_cloud_csv(dir / "capsule_map.csv", res.map);
    }
    if (!res.trace.samples.empty()) write_trace_csv(dir / "clean_trace.csv", res.trace);
  }
  return res;
}

}  // namespace ioct
