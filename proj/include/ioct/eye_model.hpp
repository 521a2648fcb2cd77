#pragma once

#include <string>
#include <vector>

#include "ioct/geometry.hpp"
#include "ioct/types.hpp"

namespace ioct {

struct Medium {
  std::string name;
  double n = 1.0;
};

/// Nominal refractive indices of the media used by the scenarios.
namespace media {
inline Medium air() { return {"air", 1.0}; }
inline Medium acrylic() { return {"acrylic", 1.45}; }
inline Medium human_cornea() { return {"cornea", 1.38}; }
inline Medium gel() { return {"gel", 1.384}; }
inline Medium water() { return {"water", 1.333}; }
inline Medium bss() { return {"bss", 1.3345}; }
inline Medium lens() { return {"lens", 1.40}; }
inline Medium vitreous() { return {"vitreous", 1.336}; }
/// Lookup by name; throws ConfigError for unknown names.
Medium by_name(const std::string& name);
}  // namespace media

struct Iris {
  Vec3 center{0.0, 0.0, 13.0};
  double pupil_radius = 3.0;
  double outer_radius = 6.3;
  Vec3 normal{0.0, 0.0, 1.0};
};

enum class SurfaceId { CorneaOuter, CorneaInner, Iris, CapsuleAnterior, CapsulePosterior };

const char* to_string(SurfaceId id);

struct SurfaceHit {
  SurfaceId surface;
  double t = 0.0;  ///< ray parameter (mm)
  Vec3 point;
  Vec3 normal;     ///< unit normal, oriented against the incoming ray
  Medium entered;  ///< medium on the far side of the interface
  bool opaque = false;
};

/// Analytic eye phantom in the OCT frame {o}. The optical axis is +z, pointing
/// from the objective into the eye.
struct EyePhantom {
  Medium ambient_medium = media::air();

  bool cornea_present = true;
  Ellipsoidd cornea_outer;
  Ellipsoidd cornea_inner;
  /// The cornea shells exist only where z <= cornea_cap_z (limbus plane).
  double cornea_cap_z = 13.0;
  Medium cornea_medium = media::acrylic();
  double cornea_reflectivity = 0.5;

  bool iris_present = true;
  Iris iris;
  double iris_reflectivity = 0.8;

  Medium chamber_medium = media::air();

  Ellipsoidd capsule;
  /// Index of the capsule material; only sets the interface contrast.
  double capsule_index = 1.49;
  double capsule_reflectivity = 0.9;

  Vec3 incision_point{0.0, -4.795831523312719, 11.0};

  /// Default phantom: 12 mm / 11 mm concentric cornea shells, pupil of 3 mm
  /// radius, capsule of 8 mm equatorial diameter and 5.5 mm thickness.
  static EyePhantom default_phantom();

  /// Checks the structural invariants; throws ConfigError on violation.
  void validate() const;

  /// Medium at a point (ambient, cornea or chamber).
  Medium medium_at(const Vec3& p) const;
};

/// All surface crossings of the straight line origin + t * direction, t > 0,
/// sorted by t.
std::vector<SurfaceHit> ray_intersect(const EyePhantom& phantom, const Vec3& origin, const Vec3& direction);

/// True iff the ray from `point` along `view_direction` crosses the iris annulus.
bool is_occluded(const EyePhantom& phantom, const Vec3& point, const Vec3& view_direction);

/// Samples the posterior capsule hemisphere on a (polar, azimuth) grid with the
/// given angular step in degrees. With `occlude_by_iris`, points hidden from the
/// objective (viewing along -z) are dropped.
PointCloud ground_truth_capsule_cloud(const EyePhantom& phantom, double resolution_deg, bool occlude_by_iris);

/// Viewing direction of the transpupillary objective (towards the objective).
inline Vec3 objective_view_direction() { return Vec3(0.0, 0.0, -1.0); }

}  // namespace ioct
