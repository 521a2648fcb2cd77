#include "ioct/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ioct/error.hpp"

namespace ioct {

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector, got " + j.dump());
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad 3-vector: ") + e.what());
  }
}

namespace {

Mat3 mat3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3x3 matrix as three rows");
  Mat3 m;
  for (int r = 0; r < 3; ++r) m.row(r) = vec3_from_json(j[r]).transpose();
  return m;
}

json to_json_mat(const Mat3& m) { return json::array({to_json(Vec3(m.row(0))), to_json(Vec3(m.row(1))), to_json(Vec3(m.row(2)))}); }

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

void read_vec(const json& j, const char* key, Vec3& out) {
  if (j.contains(key)) out = vec3_from_json(j.at(key));
}

Medium medium_from_json(const json& j) {
  if (j.is_string()) return media::by_name(j.get<std::string>());
  Medium m;
  read_opt(j, "name", m.name);
  read_opt(j, "n", m.n);
  if (!(m.n >= 1.0 && m.n <= 2.0)) throw ConfigError("refractive index of '" + m.name + "' outside [1, 2]");
  return m;
}

json limits_json(const JointLimits& l) { return json::array({l.lo, l.hi}); }

void read_limits(const json& j, const char* key, JointLimits& l) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2) throw ConfigError(std::string("limits '") + key + "' must be [lo, hi]");
  l.lo = v[0].get<double>();
  l.hi = v[1].get<double>();
  if (!(l.lo <= l.hi)) throw ConfigError(std::string("limits '") + key + "' have lo > hi");
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

}  // namespace

json to_json(const Ellipsoidd& e) {
  return {{"center", to_json(e.center)}, {"semi_axes", to_json(e.semi_axes)}, {"rotation", to_json_mat(e.rotation)}};
}

Ellipsoidd ellipsoid_from_json(const json& j) {
  Ellipsoidd e;
  read_vec(j, "center", e.center);
  read_vec(j, "semi_axes", e.semi_axes);
  if (j.contains("rotation")) e.rotation = mat3_from_json(j.at("rotation"));
  if (!e.valid()) throw ConfigError("ellipsoid must have positive semi-axes and a proper rotation");
  return e;
}

json to_json(const Medium& m) { return {{"name", m.name}, {"n", m.n}}; }

json to_json(const EyePhantom& p) {
  return {{"schema_version", kSchemaVersion},
          {"units", "mm"},
          {"frame", "o"},
          {"ambient_medium", to_json(p.ambient_medium)},
          {"cornea_present", p.cornea_present},
          {"cornea_outer", to_json(p.cornea_outer)},
          {"cornea_inner", to_json(p.cornea_inner)},
          {"cornea_cap_z", p.cornea_cap_z},
          {"cornea_medium", to_json(p.cornea_medium)},
          {"cornea_reflectivity", p.cornea_reflectivity},
          {"iris_present", p.iris_present},
          {"iris",
           {{"center", to_json(p.iris.center)},
            {"pupil_radius", p.iris.pupil_radius},
            {"outer_radius", p.iris.outer_radius},
            {"normal", to_json(p.iris.normal)}}},
          {"iris_reflectivity", p.iris_reflectivity},
          {"chamber_medium", to_json(p.chamber_medium)},
          {"capsule", to_json(p.capsule)},
          {"capsule_index", p.capsule_index},
          {"capsule_reflectivity", p.capsule_reflectivity},
          {"incision_point", to_json(p.incision_point)}};
}

EyePhantom phantom_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("phantom must be a JSON object");
  EyePhantom p = EyePhantom::default_phantom();
  try {
    if (j.contains("ambient_medium")) p.ambient_medium = medium_from_json(j.at("ambient_medium"));
    read_opt(j, "cornea_present", p.cornea_present);
    if (j.contains("cornea_outer")) p.cornea_outer = ellipsoid_from_json(j.at("cornea_outer"));
    if (j.contains("cornea_inner")) p.cornea_inner = ellipsoid_from_json(j.at("cornea_inner"));
    read_opt(j, "cornea_cap_z", p.cornea_cap_z);
    if (j.contains("cornea_medium")) p.cornea_medium = medium_from_json(j.at("cornea_medium"));
    read_opt(j, "cornea_reflectivity", p.cornea_reflectivity);
    read_opt(j, "iris_present", p.iris_present);
    if (j.contains("iris")) {
      const json& i = j.at("iris");
      read_vec(i, "center", p.iris.center);
      read_opt(i, "pupil_radius", p.iris.pupil_radius);
      read_opt(i, "outer_radius", p.iris.outer_radius);
      read_vec(i, "normal", p.iris.normal);
    }
    read_opt(j, "iris_reflectivity", p.iris_reflectivity);
    if (j.contains("chamber_medium")) p.chamber_medium = medium_from_json(j.at("chamber_medium"));
    if (j.contains("capsule")) p.capsule = ellipsoid_from_json(j.at("capsule"));
    read_opt(j, "capsule_index", p.capsule_index);
    read_opt(j, "capsule_reflectivity", p.capsule_reflectivity);
    read_vec(j, "incision_point", p.incision_point);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("phantom: ") + e.what());
  }
  p.validate();
  return p;
}

json to_json(const NoiseModel& n) {
  return {{"background_level", n.background_level},
          {"additive_sigma", n.additive_sigma},
          {"speckle_factor", n.speckle_factor}};
}

NoiseModel noise_from_json(const json& j) {
  NoiseModel n;
  read_opt(j, "background_level", n.background_level);
  read_opt(j, "additive_sigma", n.additive_sigma);
  read_opt(j, "speckle_factor", n.speckle_factor);
  if (n.background_level < 0.0 || n.additive_sigma < 0.0 || n.speckle_factor < 0.0 || n.speckle_factor >= 1.0) {
    throw ConfigError("noise levels must be non-negative and speckle below 1");
  }
  return n;
}

json to_json(const JointState& q) {
  return {{"theta1_deg", q.theta1}, {"theta2_deg", q.theta2}, {"d3_mm", q.d3}, {"theta4_deg", q.theta4}};
}

json to_json(const RegistrationSolution& r) {
  return {{"r_ob", to_json(r.r_ob)},
          {"p_ob_mm", to_json(r.p_ob)},
          {"w", r.w},
          {"residual_rms_mm", r.residual_rms},
          {"iterations", r.iterations},
          {"per_point_errors_mm", r.per_point_errors},
          {"trace", r.trace}};
}

json to_json(const ScanPlan& plan) {
  json wps = json::array();
  for (const Waypoint& w : plan.waypoints) {
    wps.push_back({{"q", to_json(w.q)},
                   {"surface_point_b", to_json(w.surface_point)},
                   {"target_b", to_json(w.target)},
                   {"standoff_mm", w.standoff}});
  }
  return {{"schema_version", kSchemaVersion},
          {"units", {{"angles", "deg"}, {"lengths", "mm"}}},
          {"alpha_deg", plan.alpha},
          {"k", to_json(plan.k)},
          {"tour_cost", plan.tour_cost},
          {"waypoints", wps}};
}

json to_json(const CapsuleMap& map) {
  json pts = json::array();
  for (const MapPoint& m : map.points) {
    pts.push_back({m.p.x(), m.p.y(), m.p.z(), to_string(m.provenance)});
  }
  return {{"schema_version", kSchemaVersion},
          {"units", "mm"},
          {"frame", "o"},
          {"fitted", to_json(map.fitted)},
          {"fit_rms_mm", map.fit_rms},
          {"points", pts}};
}

json to_json(const PIGains& g) {
  return {{"kp", g.kp},
          {"ki", g.ki},
          {"output_limit_mm", g.output_limit},
          {"rate_limit_mm", g.rate_limit},
          {"integrator_limit_mm", g.integrator_limit}};
}

PIGains gains_from_json(const json& j) {
  PIGains g;
  read_opt(j, "kp", g.kp);
  read_opt(j, "ki", g.ki);
  read_opt(j, "output_limit_mm", g.output_limit);
  read_opt(j, "rate_limit_mm", g.rate_limit);
  read_opt(j, "integrator_limit_mm", g.integrator_limit);
  if (g.kp < 0.0 || g.ki < 0.0 || !(g.output_limit > 0.0) || !(g.rate_limit > 0.0) || !(g.integrator_limit > 0.0)) {
    throw ConfigError("PI gains must be non-negative and limits positive");
  }
  return g;
}

json to_json(const ControlMetrics& m) {
  auto finite_or_null = [](const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    return a;
  };
  return {{"mean_abs_error_mm", m.mean_abs_error},
          {"max_abs_error_mm", m.max_abs_error},
          {"min_distance_mm", m.min_distance},
          {"contacts", m.contacts},
          {"missed_measurements", m.missed_measurements},
          {"rise_times_s", finite_or_null(m.rise_times)},
          {"steady_state_errors_mm", finite_or_null(m.steady_state_errors)}};
}

RobotSetup RobotSetup::default_setup() {
  RobotSetup r;
  r.b_to_o = make_pose(rotation_from_vector(Vec3(0.25, -0.4, 1.1)), Vec3(-35.0, 120.0, 60.0));
  r.fiber_offset_true = -0.5;
  return r;
}

RobotTruth RobotSetup::truth(const EyePhantom& phantom) const {
  RobotTruth t;
  t.params = nominal(phantom, fiber_offset_true);
  t.b_to_o = b_to_o;
  return t;
}

RobotParams RobotSetup::nominal(const EyePhantom& phantom, double fiber_offset) const {
  RobotParams p = params;
  p.rcm_position = b_to_o.inverse() * phantom.incision_point;
  p.mount_rotation = b_to_o.linear().transpose();
  p.fiber_offset = fiber_offset;
  return p;
}

json to_json(const RobotSetup& r) {
  return {{"schema_version", kSchemaVersion},
          {"units", {{"angles", "deg"}, {"lengths", "mm"}}},
          {"retract_length", r.params.retract_length},
          {"theta1_limits", limits_json(r.params.theta1_limits)},
          {"theta2_limits", limits_json(r.params.theta2_limits)},
          {"d3_limits", limits_json(r.params.d3_limits)},
          {"theta4_limits", limits_json(r.params.theta4_limits)},
          {"base_rotation_vector", to_json(vector_from_rotation(Mat3(r.b_to_o.linear())))},
          {"base_translation", to_json(Vec3(r.b_to_o.translation()))},
          {"fiber_offset_true", r.fiber_offset_true}};
}

RobotSetup robot_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("robot parameters must be a JSON object");
  RobotSetup r = RobotSetup::default_setup();
  try {
    read_opt(j, "retract_length", r.params.retract_length);
    read_limits(j, "theta1_limits", r.params.theta1_limits);
    read_limits(j, "theta2_limits", r.params.theta2_limits);
    read_limits(j, "d3_limits", r.params.d3_limits);
    read_limits(j, "theta4_limits", r.params.theta4_limits);
    Vec3 rv = vector_from_rotation(Mat3(r.b_to_o.linear()));
    Vec3 t = r.b_to_o.translation();
    read_vec(j, "base_rotation_vector", rv);
    read_vec(j, "base_translation", t);
    r.b_to_o = make_pose(rotation_from_vector(rv), t);
    read_opt(j, "fiber_offset_true", r.fiber_offset_true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("robot: ") + e.what());
  }
  if (r.params.retract_length < 0.0) throw ConfigError("retract_length must be non-negative");
  return r;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_point_cloud_csv(const std::filesystem::path& path, const CapsuleMap& map) {
  std::ofstream out = open_out(path);
  out << "x,y,z,provenance\n";
  for (const MapPoint& m : map.points) {
    out << m.p.x() << ',' << m.p.y() << ',' << m.p.z() << ',' << to_string(m.provenance) << '\n';
  }
}

void write_point_cloud_csv(const std::filesystem::path& path, const PointCloud& cloud, const std::string& provenance) {
  std::ofstream out = open_out(path);
  out << "x,y,z,provenance\n";
  for (const Vec3& p : cloud) out << p.x() << ',' << p.y() << ',' << p.z() << ',' << provenance << '\n';
}

void write_trace_csv(const std::filesystem::path& path, const ControlTrace& trace) {
  std::ofstream out = open_out(path);
  out << "t,theta1,theta2,d3_ref,d3_actual,d_measured,d_star,d_true\n";
  for (const ControlSample& s : trace.samples) {
    out << s.t << ',' << s.theta1 << ',' << s.theta2 << ',' << s.d3_ref << ',' << s.d3_actual << ',' << s.d_measured
        << ',' << s.d_star << ',' << s.d_true << '\n';
  }
}

void write_ascan_csv(const std::filesystem::path& path, const AScanSignal& signal) {
  std::ofstream out = open_out(path);
  out << "index,intensity\n";
  for (Eigen::Index i = 0; i < signal.n_samples(); ++i) out << i << ',' << signal.intensities[i] << '\n';
}

AScanSignal read_ascan_csv(const std::filesystem::path& path, double sample_pitch_um) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<double> values;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError(path.string() + ":" + std::to_string(row) + ": expected index,intensity");
    try {
      values.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ":" + std::to_string(row) + ": bad intensity");
    }
  }
  AScanSignal s;
  s.sample_pitch_um = sample_pitch_um;
  s.intensities = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return s;
}

void write_vscan(const std::filesystem::path& stem, const VScanVolume& volume) {
  static_assert(std::endian::native == std::endian::little, "volume export assumes a little-endian host");
  std::filesystem::path bin = stem;
  bin += ".f32";
  {
    std::ofstream out = open_out(bin);
    out.write(reinterpret_cast<const char*>(volume.data.data()),
              static_cast<std::streamsize>(volume.data.size() * sizeof(float)));
  }
  std::filesystem::path side = stem;
  side += ".json";
  write_json_file(side, {{"schema_version", kSchemaVersion},
                         {"data", bin.filename().string()},
                         {"dtype", "float32-le"},
                         {"order", "y,x,z"},
                         {"shape", {volume.ny, volume.nx, volume.n_samples}},
                         {"x0_mm", volume.x0},
                         {"y0_mm", volume.y0},
                         {"lateral_pitch_mm", volume.lateral_pitch_mm},
                         {"sample_pitch_um", volume.sample_pitch_um},
                         {"depth_origin_mm", volume.depth_origin_mm},
                         {"frame", volume.frame}});
}

}  // namespace ioct
