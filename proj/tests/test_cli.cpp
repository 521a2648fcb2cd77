#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "ioct/error.hpp"
#include "ioct/io.hpp"
#include "ioct/scenario.hpp"

using namespace ioct;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ioct_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// A scenario directory built from the defaults, as `phantom gen` writes it.
fs::path default_scenario_dir(const std::string& name) {
  const fs::path dir = scratch_dir(name);
  write_json_file(dir / "phantom.json", to_json(EyePhantom::default_phantom()));
  write_json_file(dir / "robot.json", to_json(RobotSetup::default_setup()));
  Scenario s;
  s.phantom_path = dir / "phantom.json";
  s.robot_path = dir / "robot.json";
  write_json_file(dir / "scenario.json", to_json(s));
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("sha256 matches the standard test vectors") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  }

  TEST_CASE("default scenario loads and round-trips") {
    const fs::path dir = default_scenario_dir("roundtrip");
    const Scenario s = load_scenario(dir / "scenario.json");
    CHECK(s.digest.size() == 64);
    CHECK(s.features == 20);
    CHECK(s.alpha == 3.0);
    CHECK(s.phantom.chamber_medium.name == "air");
    CHECK(s.robot.fiber_offset_true == doctest::Approx(-0.5));
    CHECK(s.output_dir == dir / "out");

    // Writing the loaded scenario back gives identical JSON.
    write_json_file(dir / "again.json", to_json(s));
    const Scenario t = load_scenario(dir / "again.json");
    CHECK(to_json(t).dump() == to_json(s).dump());
  }

  TEST_CASE("digest covers the phantom file") {
    const fs::path dir = default_scenario_dir("digest");
    const std::string before = load_scenario(dir / "scenario.json").digest;
    CHECK(load_scenario(dir / "scenario.json").digest == before);
    EyePhantom p = EyePhantom::default_phantom();
    p.iris.pupil_radius = 2.5;
    write_json_file(dir / "phantom.json", to_json(p));
    CHECK(load_scenario(dir / "scenario.json").digest != before);
  }

  TEST_CASE("media override") {
    const fs::path dir = default_scenario_dir("media");
    json j = read_json_file(dir / "scenario.json");
    j["media"]["chamber"] = "gel";
    write_json_file(dir / "scenario.json", j);
    CHECK(load_scenario(dir / "scenario.json").phantom.chamber_medium.n == doctest::Approx(1.384));
  }

  TEST_CASE("bad scenarios raise ConfigError") {
    const fs::path dir = default_scenario_dir("bad");
    CHECK_THROWS_AS(load_scenario(dir / "missing.json"), ConfigError);

    write_text(dir / "garbage.json", "{ not json");
    CHECK_THROWS_AS(load_scenario(dir / "garbage.json"), ConfigError);

    write_text(dir / "array.json", "[1, 2]");
    CHECK_THROWS_AS(load_scenario(dir / "array.json"), ConfigError);

    const json base = read_json_file(dir / "scenario.json");
    auto expect_bad = [&](const std::string& key, const json& value) {
      json j = base;
      j[key] = value;
      write_json_file(dir / "edited.json", j);
      CHECK_THROWS_AS(load_scenario(dir / "edited.json"), ConfigError);
    };
    expect_bad("features", 2);
    expect_bad("features", "twenty");
    expect_bad("alpha_deg", 0.0);
    expect_bad("offset_rays", 4);
    expect_bad("phantom", "nowhere.json");
    expect_bad("vscan_pitch_mm", -0.1);
    expect_bad("noise", json{{"speckle_factor", 1.5}});
    expect_bad("gains", json{{"kp", -1.0}});
    expect_bad("media", json{{"chamber", "mercury"}});
  }

  TEST_CASE("A-scan CSV round trip") {
    const fs::path dir = scratch_dir("csv");
    AScanSignal s;
    s.intensities = Eigen::VectorXd::LinSpaced(50, 0.0, 4.9);
    write_ascan_csv(dir / "a.csv", s);
    const AScanSignal r = read_ascan_csv(dir / "a.csv", 9.4);
    REQUIRE(r.n_samples() == 50);
    CHECK((r.intensities - s.intensities).cwiseAbs().maxCoeff() < 1e-9);

    write_text(dir / "b.csv", "index,intensity\n0,1.0\n1\n");
    CHECK_THROWS_AS(read_ascan_csv(dir / "b.csv"), ConfigError);
    write_text(dir / "c.csv", "index,intensity\n0,abc\n");
    CHECK_THROWS_AS(read_ascan_csv(dir / "c.csv"), ConfigError);
    CHECK_THROWS_AS(read_ascan_csv(dir / "none.csv"), ConfigError);
  }

  TEST_CASE("gains and noise JSON round trip") {
    const PIGains g{0.3, 1.5, 5.0, 0.5, 4.0};
    const PIGains h = gains_from_json(to_json(g));
    CHECK(h.kp == g.kp);
    CHECK(h.ki == g.ki);
    CHECK(h.output_limit == g.output_limit);
    CHECK(h.rate_limit == g.rate_limit);
    CHECK(h.integrator_limit == g.integrator_limit);

    NoiseModel n;
    n.background_level = 0.01;
    n.additive_sigma = 0.2;
    n.speckle_factor = 0.1;
    const NoiseModel m = noise_from_json(to_json(n));
    CHECK(m.background_level == n.background_level);
    CHECK(m.additive_sigma == n.additive_sigma);
    CHECK(m.speckle_factor == n.speckle_factor);
  }

  TEST_CASE("robot setup JSON round trip keeps the pose") {
    const RobotSetup r = RobotSetup::default_setup();
    const RobotSetup s = robot_from_json(to_json(r));
    CHECK((s.b_to_o.matrix() - r.b_to_o.matrix()).cwiseAbs().maxCoeff() < 1e-12);
  }
}
