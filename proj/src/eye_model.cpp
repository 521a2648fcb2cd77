#include "ioct/eye_model.hpp"

#include <algorithm>
#include <cmath>

#include "ioct/error.hpp"

namespace ioct {

Medium media::by_name(const std::string& name) {
  for (const Medium& m : {air(), acrylic(), human_cornea(), gel(), water(), bss(), lens(), vitreous()}) {
    if (m.name == name) return m;
  }
  throw ConfigError("unknown medium '" + name + "'");
}

const char* to_string(SurfaceId id) {
  switch (id) {
    case SurfaceId::CorneaOuter: return "cornea_outer";
    case SurfaceId::CorneaInner: return "cornea_inner";
    case SurfaceId::Iris: return "iris";
    case SurfaceId::CapsuleAnterior: return "capsule_anterior";
    case SurfaceId::CapsulePosterior: return "capsule_posterior";
  }
  return "unknown";
}

EyePhantom EyePhantom::default_phantom() {
  EyePhantom p;
  p.cornea_outer.center = Vec3(0.0, 0.0, 22.0);
  p.cornea_outer.semi_axes = Vec3::Constant(12.0);
  p.cornea_inner.center = Vec3(0.0, 0.0, 22.0);
  p.cornea_inner.semi_axes = Vec3::Constant(11.0);
  p.capsule.center = Vec3(0.0, 0.0, 16.0);
  p.capsule.semi_axes = Vec3(4.0, 4.0, 2.75);
  return p;
}

void EyePhantom::validate() const {
  auto check_medium = [](const Medium& m) {
    if (!(m.n >= 1.0 && m.n <= 2.0)) throw ConfigError("medium '" + m.name + "' index outside [1, 2]");
  };
  check_medium(ambient_medium);
  check_medium(cornea_medium);
  check_medium(chamber_medium);
  if (!cornea_outer.valid() || !cornea_inner.valid() || !capsule.valid()) {
    throw ConfigError("phantom ellipsoid with non-positive axes or improper rotation");
  }
  if (!(iris.pupil_radius > 0.0 && iris.pupil_radius < iris.outer_radius)) {
    throw ConfigError("pupil radius must be positive and below the iris outer radius");
  }
  if (!(capsule_reflectivity > 0.0 && capsule_reflectivity <= 1.0)) {
    throw ConfigError("capsule reflectivity must lie in (0, 1]");
  }
  // Capsule entirely behind the iris plane: the lowest capsule point along -normal.
  const Vec3 nrm = iris.normal.normalized();
  const Vec3 axis_local = capsule.rotation.transpose() * nrm;
  const double extent = capsule.semi_axes.cwiseProduct(axis_local).norm();
  if ((capsule.center - iris.center).dot(nrm) - extent <= 0.0) {
    throw ConfigError("capsule must lie posterior to the iris plane");
  }
  // Inner cornea strictly inside the outer shell (sampled on the inner surface).
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j <= 6; ++j) {
      const double az = 2.0 * kPi * i / 12.0;
      const double pol = kPi * j / 6.0;
      const Vec3 u(std::sin(pol) * std::cos(az), std::sin(pol) * std::sin(az), std::cos(pol));
      if (!cornea_outer.contains(cornea_inner.surface_point(u))) {
        throw ConfigError("cornea_inner must lie strictly inside cornea_outer");
      }
    }
  }
}

Medium EyePhantom::medium_at(const Vec3& p) const {
  const bool below_limbus = p.z() > cornea_cap_z;
  if (cornea_present && !below_limbus) {
    if (cornea_inner.contains(p)) return chamber_medium;
    if (cornea_outer.contains(p)) return cornea_medium;
    return ambient_medium;
  }
  if (below_limbus) return chamber_medium;
  // Cornea removed: the chamber is open to the ambient medium above the limbus.
  return cornea_outer.contains(p) ? chamber_medium : ambient_medium;
}

namespace {

void add_shell_hits(std::vector<SurfaceHit>& hits, const Ellipsoidd& shell, double cap_z, SurfaceId id,
                    const Medium& inside, const Medium& outside, const Vec3& o, const Vec3& d) {
  const auto roots = intersect(shell, o, d);
  if (!roots) return;
  for (const double t : {roots->first, roots->second}) {
    if (t <= 1e-12) continue;
    const Vec3 p = o + t * d;
    if (p.z() > cap_z) continue;
    Vec3 n = shell.normal(p);
    const bool entering = n.dot(d) < 0.0;
    if (!entering) n = -n;
    hits.push_back({id, t, p, n, entering ? inside : outside, false});
  }
}

}  // namespace

std::vector<SurfaceHit> ray_intersect(const EyePhantom& phantom, const Vec3& origin, const Vec3& direction) {
  std::vector<SurfaceHit> hits;
  const Vec3 d = direction.normalized();
  if (phantom.cornea_present) {
    add_shell_hits(hits, phantom.cornea_outer, phantom.cornea_cap_z, SurfaceId::CorneaOuter,
                   phantom.cornea_medium, phantom.ambient_medium, origin, d);
    add_shell_hits(hits, phantom.cornea_inner, phantom.cornea_cap_z, SurfaceId::CorneaInner,
                   phantom.chamber_medium, phantom.cornea_medium, origin, d);
  }
  if (phantom.iris_present) {
    const Vec3 n = phantom.iris.normal.normalized();
    const double denom = d.dot(n);
    if (std::abs(denom) > 1e-15) {
      const double t = (phantom.iris.center - origin).dot(n) / denom;
      const Vec3 p = origin + t * d;
      const double r = (p - phantom.iris.center).norm();
      if (t > 1e-12 && r >= phantom.iris.pupil_radius && r <= phantom.iris.outer_radius) {
        hits.push_back({SurfaceId::Iris, t, p, denom < 0.0 ? n : Vec3(-n), phantom.chamber_medium, true});
      }
    }
  }
  if (const auto roots = intersect(phantom.capsule, origin, d)) {
    const std::pair<double, SurfaceId> entries[] = {{roots->first, SurfaceId::CapsuleAnterior},
                                                    {roots->second, SurfaceId::CapsulePosterior}};
    for (const auto& [t, id] : entries) {
      if (t <= 1e-12) continue;
      const Vec3 p = origin + t * d;
      Vec3 n = phantom.capsule.normal(p);
      if (n.dot(d) > 0.0) n = -n;
      hits.push_back({id, t, p, n, phantom.chamber_medium, false});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const SurfaceHit& a, const SurfaceHit& b) { return a.t < b.t; });
  return hits;
}

bool is_occluded(const EyePhantom& phantom, const Vec3& point, const Vec3& view_direction) {
  if (!phantom.iris_present) return false;
  const Vec3 n = phantom.iris.normal.normalized();
  const double denom = view_direction.dot(n);
  if (std::abs(denom) < 1e-15) return false;
  const double t = (phantom.iris.center - point).dot(n) / denom;
  if (t <= 0.0) return false;
  const double r = (point + t * view_direction - phantom.iris.center).norm();
  return r >= phantom.iris.pupil_radius && r <= phantom.iris.outer_radius;
}

PointCloud ground_truth_capsule_cloud(const EyePhantom& phantom, double resolution_deg, bool occlude_by_iris) {
  if (!(resolution_deg > 0.0 && resolution_deg <= 10.0)) {
    throw ArgumentError("resolution must lie in (0, 10] degrees");
  }
  PointCloud cloud;
  const int n_polar = static_cast<int>(std::floor(90.0 / resolution_deg + 1e-9));
  const int n_az = static_cast<int>(std::ceil(360.0 / resolution_deg - 1e-9));
  const Vec3 view = objective_view_direction();
  for (int i = 0; i <= n_polar; ++i) {
    const double polar = deg2rad(i * resolution_deg);
    const int az_count = (i == 0) ? 1 : n_az;
    for (int j = 0; j < az_count; ++j) {
      const double az = deg2rad(j * resolution_deg);
      const Vec3 u(std::sin(polar) * std::cos(az), std::sin(polar) * std::sin(az), std::cos(polar));
      const Vec3 p = phantom.capsule.surface_point(u);
      if (occlude_by_iris && is_occluded(phantom, p, view)) continue;
      cloud.push_back(p);
    }
  }
  return cloud;
}

}  // namespace ioct
