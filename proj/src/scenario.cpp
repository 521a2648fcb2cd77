#include "ioct/scenario.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "ioct/error.hpp"

namespace ioct {

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return out.str();
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_text(const std::string& text, const std::filesystem::path& path) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario field '") + key + "': " + e.what());
  }
}

}  // namespace

Scenario load_scenario(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  const json j = parse_text(text, path);
  if (!j.is_object()) throw ConfigError(path.string() + ": scenario must be a JSON object");

  Scenario s;
  std::string digest_input = text;
  const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

  std::string phantom_file;
  get(j, "phantom", phantom_file);
  if (!phantom_file.empty()) {
    s.phantom_path = base / phantom_file;
    const std::string ptext = slurp(s.phantom_path);
    s.phantom = phantom_from_json(parse_text(ptext, s.phantom_path));
    digest_input += ptext;
  }
  std::string robot_file;
  get(j, "robot", robot_file);
  if (!robot_file.empty()) {
    s.robot_path = base / robot_file;
    const std::string rtext = slurp(s.robot_path);
    s.robot = robot_from_json(parse_text(rtext, s.robot_path));
    digest_input += rtext;
  }

  // Media assignment overrides the phantom's own.
  if (j.contains("media")) {
    const json& m = j.at("media");
    try {
      if (m.contains("chamber")) s.phantom.chamber_medium = media::by_name(m.at("chamber").get<std::string>());
      if (m.contains("cornea")) s.phantom.cornea_medium = media::by_name(m.at("cornea").get<std::string>());
      if (m.contains("ambient")) s.phantom.ambient_medium = media::by_name(m.at("ambient").get<std::string>());
    } catch (const json::exception& e) {
      throw ConfigError(std::string("scenario media: ") + e.what());
    }
    s.phantom.validate();
  }
  if (j.contains("noise")) s.noise = noise_from_json(j.at("noise"));
  if (j.contains("workflow")) {
    const json& w = j.at("workflow");
    get(w, "registration", s.flags.registration);
    get(w, "refractive", s.flags.refractive);
    get(w, "spatial", s.flags.spatial);
    get(w, "fiber_offset", s.flags.fiber_offset);
    get(w, "cleaning", s.flags.cleaning);
  }
  get(j, "seed", s.seed);
  std::string out;
  get(j, "output_dir", out);
  if (!out.empty()) s.output_dir = std::filesystem::path(out).is_absolute() ? std::filesystem::path(out) : base / out;
  else s.output_dir = base / "out";

  get(j, "features", s.features);
  get(j, "refractive_steps", s.refractive_steps);
  get(j, "refractive_step_mm", s.refractive_step_mm);
  get(j, "refractive_standoff_mm", s.refractive_standoff);
  get(j, "nominal_chamber_n", s.nominal_chamber_n);
  get(j, "vscan_pitch_mm", s.vscan_pitch);
  get(j, "cornea_n_prior", s.cornea_n_prior);
  get(j, "offset_rays", s.offset_rays);
  get(j, "alpha_deg", s.alpha);
  get(j, "standoff_mm", s.standoff);
  if (j.contains("k")) s.k = vec3_from_json(j.at("k"));
  get(j, "scan_averages", s.scan_averages);
  get(j, "ground_truth_resolution_deg", s.ground_truth_resolution);
  if (j.contains("gains")) s.gains = gains_from_json(j.at("gains"));
  get(j, "d_star_mm", s.d_star);
  get(j, "model_bias_mm", s.model_bias);
  get(j, "clean_averages", s.clean_averages);
  if (j.contains("sweep")) {
    const json& w = j.at("sweep");
    get(w, "theta1_from", s.sweep.theta1_from);
    get(w, "theta1_to", s.sweep.theta1_to);
    get(w, "theta2_center", s.sweep.theta2_center);
    get(w, "amplitude", s.sweep.amplitude);
    get(w, "periods", s.sweep.periods);
    get(w, "duration", s.sweep.duration);
  }

  if (s.features < 3) throw ConfigError("features must be at least 3");
  if (s.refractive_steps < 2 || !(s.refractive_step_mm > 0.0)) throw ConfigError("refractive protocol needs >= 2 positive steps");
  if (!(s.nominal_chamber_n >= 1.0)) throw ConfigError("nominal_chamber_n must be at least 1");
  if (!(s.vscan_pitch > 0.0)) throw ConfigError("vscan_pitch_mm must be positive");
  if (s.offset_rays < 5) throw ConfigError("offset_rays must be at least 5");
  if (!(s.alpha > 0.0)) throw ConfigError("alpha_deg must be positive");
  if (!(s.standoff > 0.0) || !(s.d_star > 0.0)) throw ConfigError("standoff and d_star must be positive");
  if (s.scan_averages < 1 || s.clean_averages < 1) throw ConfigError("averages must be positive");
  if (!(s.ground_truth_resolution > 0.0)) throw ConfigError("ground_truth_resolution_deg must be positive");
  if (!(s.sweep.duration > 0.0)) throw ConfigError("sweep duration must be positive");

  s.digest = sha256_hex(digest_input);
  return s;
}

json to_json(const Scenario& s) {
  return {{"schema_version", kSchemaVersion},
          {"units", {{"angles", "deg"}, {"lengths", "mm"}, {"time", "s"}}},
          {"phantom", s.phantom_path.filename().string()},
          {"robot", s.robot_path.filename().string()},
          {"output_dir", s.output_dir.filename().string()},
          {"seed", s.seed},
          {"media", {{"chamber", s.phantom.chamber_medium.name}, {"cornea", s.phantom.cornea_medium.name}}},
          {"noise", to_json(s.noise)},
          {"workflow",
           {{"registration", s.flags.registration},
            {"refractive", s.flags.refractive},
            {"spatial", s.flags.spatial},
            {"fiber_offset", s.flags.fiber_offset},
            {"cleaning", s.flags.cleaning}}},
          {"features", s.features},
          {"refractive_steps", s.refractive_steps},
          {"refractive_step_mm", s.refractive_step_mm},
          {"refractive_standoff_mm", s.refractive_standoff},
          {"nominal_chamber_n", s.nominal_chamber_n},
          {"vscan_pitch_mm", s.vscan_pitch},
          {"cornea_n_prior", s.cornea_n_prior},
          {"offset_rays", s.offset_rays},
          {"alpha_deg", s.alpha},
          {"standoff_mm", s.standoff},
          {"k", to_json(s.k)},
          {"scan_averages", s.scan_averages},
          {"ground_truth_resolution_deg", s.ground_truth_resolution},
          {"gains", to_json(s.gains)},
          {"d_star_mm", s.d_star},
          {"model_bias_mm", s.model_bias},
          {"clean_averages", s.clean_averages},
          {"sweep",
           {{"theta1_from", s.sweep.theta1_from},
            {"theta1_to", s.sweep.theta1_to},
            {"theta2_center", s.sweep.theta2_center},
            {"amplitude", s.sweep.amplitude},
            {"periods", s.sweep.periods},
            {"duration", s.sweep.duration}}}};
}

}  // namespace ioct
