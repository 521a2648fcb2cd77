#include <doctest.h>

#include <cmath>
#include <random>

#include "ioct/ascan.hpp"
#include "ioct/error.hpp"
#include "ioct/oct_sim.hpp"
#include "ioct/optics.hpp"

using namespace ioct;

namespace {

// Standalone sphere / ellipsoid tracing used as the oracle for the V-scan.
double sphere_hit(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
  const Vec3 oc = o - c;
  const double b = oc.dot(d), cc = oc.squaredNorm() - r * r;
  return -b - std::sqrt(b * b - cc);
}

Vec3 snell(const Vec3& d, const Vec3& n_out, double n1, double n2) {
  // n_out points back towards the incoming ray.
  const double cos_i = -n_out.dot(d);
  const double sin_t2 = (n1 / n2) * (n1 / n2) * (1.0 - cos_i * cos_i);
  const double cos_t = std::sqrt(1.0 - sin_t2);
  return (n1 / n2) * d + ((n1 / n2) * cos_i - cos_t) * n_out;
}

double capsule_hit(const Vec3& o, const Vec3& d) {
  // Axis-aligned ellipsoid (4, 4, 2.75) centred at (0, 0, 16).
  const Vec3 a(4.0, 4.0, 2.75);
  const Vec3 oo = (o - Vec3(0, 0, 16)).cwiseQuotient(a), dd = d.cwiseQuotient(a);
  const double A = dd.squaredNorm(), B = oo.dot(dd), C = oo.squaredNorm() - 1.0;
  return (-B - std::sqrt(B * B - A * C)) / A;
}

// Optical path from (x, y, 0) to the anterior capsule through both cornea shells.
double oracle_capsule_optical(double x, double y, double n_cornea, double n_chamber) {
  Vec3 o(x, y, 0.0), d = Vec3::UnitZ();
  const Vec3 c(0, 0, 22);
  const double t1 = sphere_hit(o, d, c, 12.0);
  Vec3 p = o + t1 * d;
  double optical = t1;
  d = snell(d, (p - c).normalized(), 1.0, n_cornea).normalized();
  const double t2 = sphere_hit(p, d, c, 11.0);
  p += t2 * d;
  optical += n_cornea * t2;
  d = snell(d, (p - c).normalized(), n_cornea, n_chamber).normalized();
  optical += n_chamber * capsule_hit(p, d);
  return optical;
}

EyePhantom probe_phantom(const Medium& chamber) {
  EyePhantom ph = EyePhantom::default_phantom();
  ph.chamber_medium = chamber;
  return ph;
}

}  // namespace

TEST_SUITE("oct-sim") {

TEST_CASE("refract at normal incidence and the 30 degree acrylic case") {
  CHECK(refract(1.0, 1.45, 0.0) == 0.0);
  const double r = refract(1.0, 1.45, deg2rad(30.0));
  CHECK(rad2deg(r) == doctest::Approx(20.171).epsilon(1e-4));
  CHECK(std::abs(1.0 * std::sin(deg2rad(30.0)) - 1.45 * std::sin(r)) < 1e-12);
  for (double a : {0.1, 0.5, 1.0, 1.5}) CHECK(refract(1.3, 1.3, a) == doctest::Approx(a).epsilon(1e-14));
}

TEST_CASE("refract throws on total internal reflection and bad incidence") {
  CHECK_THROWS_AS(refract(1.45, 1.0, deg2rad(60.0)), TotalInternalReflection);
  CHECK_THROWS_AS(refract(1.0, 1.45, kPi / 2), ArgumentError);
  CHECK_THROWS_AS(refract(1.0, 1.45, -0.1), ArgumentError);
}

TEST_CASE("refraction is reversible") {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> n(1.0, 1.6), a(0.0, 1.5);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const double n1 = n(rng), n2 = n(rng), phi = a(rng);
    if (n1 * std::sin(phi) / n2 >= 1.0) continue;
    CHECK(std::abs(refract(n2, n1, refract(n1, n2, phi)) - phi) < 1e-10);
    ++checked;
  }
  CHECK(checked > 1000);
}

TEST_CASE("apparent depth follows optical path scaling") {
  CHECK(apparent_depth(1.2, 1.2, 3.7) == doctest::Approx(3.7).epsilon(1e-15));
  CHECK(apparent_depth(1.333, 1.0, 3.0) == doctest::Approx(3.999).epsilon(1e-12));
  CHECK(apparent_depth(1.333, 1.0, 0.0) == 0.0);
  CHECK_THROWS_AS(apparent_depth(1.0, 1.0, -1.0), ArgumentError);
}

TEST_CASE("A-scan edge 2 mm ahead of the fiber in air and water") {
  const NoiseModel quiet = NoiseModel::none();
  const Vec3 origin(0, 0, 16.75), dir = Vec3::UnitZ();  // posterior capsule 2 mm ahead
  const AScanSignal air = simulate_ascan(probe_phantom(media::air()), origin, dir, quiet);
  CHECK(air.n_samples() == 1024);
  Eigen::Index k = 0;
  first_difference(air.intensities).maxCoeff(&k);
  CHECK(k == std::lround(2000.0 / 9.4));

  const auto events = trace_ray(probe_phantom(media::water()), origin, dir, OctConfig{}, 20.0);
  REQUIRE(events.size() == 1);
  CHECK(events[0].optical_path_mm == doctest::Approx(2.666).epsilon(1e-12));
  const AScanSignal water = simulate_ascan(probe_phantom(media::water()), origin, dir, quiet);
  CHECK(detect_distance(water, DistanceModel::EdgeDetection, 0.1) == doctest::Approx(2.666).epsilon(0.5 * 9.4e-3 / 2.666));
}

TEST_CASE("A-scans are deterministic and non-negative") {
  const EyePhantom ph = probe_phantom(media::gel());
  const Vec3 origin(0.5, 0.2, 15.0), dir = Vec3(0.05, 0.0, 1.0).normalized();
  const AScanSignal a = simulate_ascan(ph, origin, dir, NoiseModel::none());
  const AScanSignal b = simulate_ascan(ph, origin, dir, NoiseModel::none());
  CHECK(a.intensities == b.intensities);
  NoiseModel noise;
  noise.rng_seed = 42;
  const AScanSignal c = simulate_ascan(ph, origin, dir, noise);
  const AScanSignal d = simulate_ascan(ph, origin, dir, noise);
  CHECK(c.intensities == d.intensities);
  CHECK(c.intensities.minCoeff() >= 0.0);
  noise.rng_seed = 43;
  CHECK(simulate_ascan(ph, origin, dir, noise).intensities != c.intensities);
}

TEST_CASE("a ray that meets nothing gives a noise-only signal") {
  const EyePhantom ph = EyePhantom::default_phantom();
  const AScanSignal s = simulate_ascan(ph, Vec3(50, 50, 0), Vec3::UnitZ(), NoiseModel::none());
  CHECK(s.intensities.isZero());
}

TEST_CASE("interface positions do not depend on intensity parameters") {
  EyePhantom a = EyePhantom::default_phantom();
  EyePhantom b = a;
  b.capsule_reflectivity = 0.1;
  b.cornea_reflectivity = 0.05;
  OctConfig ca, cb;
  cb.source_power = 3.0;
  cb.depth_decay_mm = 2.0;
  const Vec3 o(1.2, -0.7, 0.0), d = Vec3::UnitZ();
  const auto ea = trace_ray(a, o, d, ca, 40.0), eb = trace_ray(b, o, d, cb, 40.0);
  REQUIRE(ea.size() == eb.size());
  for (std::size_t i = 0; i < ea.size(); ++i) {
    CHECK(ea[i].point == eb[i].point);
    CHECK(ea[i].optical_path_mm == eb[i].optical_path_mm);
  }
}

TEST_CASE("central V-scan column is only scaled in depth") {
  const EyePhantom ph = EyePhantom::default_phantom();
  const auto ev = trace_ray(ph, Vec3::Zero(), Vec3::UnitZ(), OctConfig{}, 40.0);
  REQUIRE(ev.size() >= 3);
  CHECK(ev[2].surface == SurfaceId::CapsuleAnterior);
  CHECK(ev[2].point.head<2>().norm() < 1e-12);
  CHECK(ev[2].optical_path_mm == doctest::Approx(10.0 + 1.45 + 2.25).epsilon(1e-9));
}

TEST_CASE("off-centre columns match a two-interface ray-trace oracle") {
  for (const Medium& chamber : {media::air(), media::gel(), media::water()}) {
    EyePhantom ph = EyePhantom::default_phantom();
    ph.chamber_medium = chamber;
    for (double x : {-2.5, -1.3, 0.7, 1.9, 2.8}) {
      for (double y : {-1.1, 0.0, 1.6}) {
        if (std::hypot(x, y) >= 3.0) continue;
        const auto ev = trace_ray(ph, Vec3(x, y, 0), Vec3::UnitZ(), OctConfig{}, 40.0);
        REQUIRE(ev.size() >= 3);
        CHECK(ev[2].surface == SurfaceId::CapsuleAnterior);
        CHECK(std::abs(ev[2].optical_path_mm - oracle_capsule_optical(x, y, 1.45, chamber.n)) < 1e-3);
      }
    }
  }
}

TEST_CASE("V-scan columns place the capsule edge at the traced optical depth") {
  EyePhantom ph = EyePhantom::default_phantom();
  ph.chamber_medium = media::gel();
  const VScanVolume vol = simulate_vscan(ph, {-2.0, 2.0, -1.0, 1.0}, 0.5, NoiseModel::none());
  CHECK(vol.nx == 9);
  CHECK(vol.ny == 5);
  CHECK(vol.data.size() == static_cast<std::size_t>(9 * 5 * vol.n_samples));
  for (int iy = 0; iy < vol.ny; ++iy) {
    for (int ix = 0; ix < vol.nx; ++ix) {
      const Vec3 o = vol.entry_origin(ix, iy);
      const double optical = oracle_capsule_optical(o.x(), o.y(), 1.45, 1.384);
      const Eigen::VectorXd col = vol.column(ix, iy).intensities;
      const auto k = std::lround((optical - vol.depth_origin_mm) / (vol.sample_pitch_um * 1e-3));
      // The capsule step is the jump at sample k.
      const Eigen::VectorXd diff = first_difference(col);
      CHECK(diff[k] > 0.5 * diff.segment(k - 5, 11).maxCoeff());
      CHECK(diff[k] == diff.segment(k - 5, 11).maxCoeff());
    }
  }
}

TEST_CASE("cornea removed with air in the chamber reproduces the true geometry") {
  EyePhantom ph = EyePhantom::default_phantom();
  ph.cornea_present = false;
  const VScanVolume vol = simulate_vscan(ph, {-3.5, 3.5, -3.5, 3.5}, 0.5, NoiseModel::none());
  const double half_pitch = 0.5 * vol.sample_pitch_um * 1e-3;
  int checked = 0;
  for (int iy = 0; iy < vol.ny; ++iy) {
    for (int ix = 0; ix < vol.nx; ++ix) {
      const Vec3 o = vol.entry_origin(ix, iy);
      const auto hit = intersect(ph.capsule, o, Vec3(Vec3::UnitZ()));
      if (!hit || std::hypot(o.x(), o.y()) > 2.9) continue;  // the iris hides the rest
      const AScanSignal col = vol.column(ix, iy);
      Eigen::Index k = 0;
      first_difference(col.intensities).maxCoeff(&k);
      CHECK(std::abs(vol.raw_point(ix, iy, static_cast<double>(k)).z() - (o.z() + hit->first)) <= half_pitch + 1e-9);
      ++checked;
    }
  }
  CHECK(checked > 80);
}

TEST_CASE("with unit indices and no cornea a V-scan column equals a stacked A-scan") {
  EyePhantom ph = EyePhantom::default_phantom();
  ph.cornea_present = false;
  VScanConfig cfg;
  cfg.depth_origin_mm = 0.0;
  cfg.oct = OctConfig{};
  const VScanVolume vol = simulate_vscan(ph, {-1.0, 1.0, 0.0, 0.0}, 0.5, NoiseModel::none(), cfg);
  for (int ix = 0; ix < vol.nx; ++ix) {
    const AScanSignal a = simulate_ascan(ph, vol.entry_origin(ix, 0), Vec3::UnitZ(), NoiseModel::none(), cfg.oct);
    const Eigen::VectorXd col = vol.column(ix, 0).intensities;
    CHECK((col - a.intensities).cwiseAbs().maxCoeff() < 1e-5 * (1.0 + a.intensities.maxCoeff()));
  }
}

TEST_CASE("iris truncates deeper interfaces") {
  const EyePhantom ph = EyePhantom::default_phantom();
  const auto ev = trace_ray(ph, Vec3(3.5, 0.0, 0.0), Vec3::UnitZ(), OctConfig{}, 40.0);
  REQUIRE_FALSE(ev.empty());
  CHECK(ev.back().surface == SurfaceId::Iris);
  CHECK(ev.back().opaque);
}

TEST_CASE("averaged acquisition reduces speckle variance") {
  const EyePhantom ph = probe_phantom(media::air());
  NoiseModel noise;
  noise.rng_seed = 9;
  const Vec3 o(0, 0, 16.75);
  const AScanSignal one = acquire_averaged(ph, o, Vec3::UnitZ(), noise, 1);
  const AScanSignal many = acquire_averaged(ph, o, Vec3::UnitZ(), noise, 100);
  auto tail_var = [](const AScanSignal& s) {
    const Eigen::VectorXd t = s.intensities.tail(200);
    return (t.array() - t.mean()).square().mean();
  };
  CHECK(tail_var(many) < 0.05 * tail_var(one));
  CHECK_THROWS_AS(acquire_averaged(ph, o, Vec3::UnitZ(), noise, 0), ArgumentError);
}

TEST_CASE("seed mixing separates grid coordinates") {
  CHECK(mix_seed(1, 2, 3) == mix_seed(1, 2, 3));
  CHECK(mix_seed(1, 2, 3) != mix_seed(1, 3, 2));
  CHECK(mix_seed(1, 2, 3) != mix_seed(2, 2, 3));
}

}  // TEST_SUITE
