#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ioct/eye_model.hpp"
#include "ioct/types.hpp"

namespace ioct {

/// Depth profile. Sample i sits at optical distance i * sample_pitch_um from the
/// reference (fiber face or the volume's depth origin).
struct AScanSignal {
  Eigen::VectorXd intensities;
  double sample_pitch_um = 9.4;

  Eigen::Index n_samples() const { return intensities.size(); }
  /// Optical distance of a sample index, in mm.
  double distance_mm(Eigen::Index index) const { return static_cast<double>(index) * sample_pitch_um * 1e-3; }
};

struct NoiseModel {
  double background_level = 0.02;
  double additive_sigma = 0.05;
  double speckle_factor = 0.3;
  std::uint64_t rng_seed = 1;

  static NoiseModel none() { return {0.0, 0.0, 0.0, 0}; }
};

/// Parameters of the simulated OCT engine shared by both modalities.
struct OctConfig {
  Eigen::Index n_samples = 1024;
  double sample_pitch_um = 9.4;
  /// Scales reflectivity x contrast into intensity units.
  double source_power = 30.0;
  /// Exponential tail after each interface step.
  double tail_length_um = 150.0;
  /// Attenuation of the step height with optical depth.
  double depth_decay_mm = 8.0;
  double iris_index = 1.5;
};

/// One interface met by a traced ray.
struct InterfaceEvent {
  SurfaceId surface;
  Vec3 point;
  double optical_path_mm = 0.0;  ///< sum of n_i * d_i from the ray origin
  double physical_path_mm = 0.0;
  double amplitude = 0.0;  ///< reflectivity x contrast, before source scaling
  bool opaque = false;
};

/// Follows a ray through the phantom, refracting at index changes, until it
/// leaves the eye, meets an opaque surface or exceeds `max_optical_mm`.
std::vector<InterfaceEvent> trace_ray(const EyePhantom& phantom, const Vec3& origin, const Vec3& direction,
                                      const OctConfig& config, double max_optical_mm);

/// Single intraocular A-scan along the ray.
AScanSignal simulate_ascan(const EyePhantom& phantom, const Vec3& origin, const Vec3& direction,
                           const NoiseModel& noise, const OctConfig& config = {});

/// Mean of `count` A-scans with independent noise draws (seeded from noise.rng_seed).
AScanSignal acquire_averaged(const EyePhantom& phantom, const Vec3& origin, const Vec3& direction,
                             const NoiseModel& noise, int count, const OctConfig& config = {});

/// Renders interface events into an A-scan; sample 0 sits at `depth_origin_mm`.
AScanSignal render_events(const std::vector<InterfaceEvent>& events, double depth_origin_mm,
                          const NoiseModel& noise, const OctConfig& config, std::uint64_t seed);

/// Lateral grid scanned by the transpupillary objective in {o}.
struct ScanRegion {
  double x_min = -4.0;
  double x_max = 4.0;
  double y_min = -4.0;
  double y_max = 4.0;
};

/// Grid of A-scans indexed by (x, y). Column (ix, iy) is the beam entering at
/// (x0 + ix * pitch, y0 + iy * pitch, 0) travelling along +z in {o}; sample k
/// of every column reports raw depth depth_origin_mm + k * sample_pitch.
struct VScanVolume {
  int nx = 0;
  int ny = 0;
  Eigen::Index n_samples = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double lateral_pitch_mm = 0.1;
  double sample_pitch_um = 9.4;
  double depth_origin_mm = 0.0;
  std::string frame = "o";
  /// Row-major (y, x, z).
  std::vector<float> data;

  float& at(int ix, int iy, Eigen::Index k) { return data[(static_cast<std::size_t>(iy) * nx + ix) * n_samples + k]; }
  float at(int ix, int iy, Eigen::Index k) const {
    return data[(static_cast<std::size_t>(iy) * nx + ix) * n_samples + k];
  }
  AScanSignal column(int ix, int iy) const;
  Vec3 entry_origin(int ix, int iy) const { return {x0 + ix * lateral_pitch_mm, y0 + iy * lateral_pitch_mm, 0.0}; }
  Vec3 entry_direction() const { return Vec3::UnitZ(); }
  /// Raw (uncorrected) position of sample k in column (ix, iy).
  Vec3 raw_point(int ix, int iy, double k) const {
    return {x0 + ix * lateral_pitch_mm, y0 + iy * lateral_pitch_mm, depth_origin_mm + k * sample_pitch_um * 1e-3};
  }
};

struct VScanConfig {
  OctConfig oct{1600, 9.4, 30.0, 150.0, 20.0};
  double depth_origin_mm = 9.0;
};

/// Transpupillary volume: every column refracts at the cornea shells and
/// records cumulative optical path as depth, so the raw volume carries the
/// refraction distortion.
VScanVolume simulate_vscan(const EyePhantom& phantom, const ScanRegion& region, double lateral_pitch_mm,
                           const NoiseModel& noise, const VScanConfig& config = {});

/// Voxel volume of a metal tool imaged from above: the half of the cylinder
/// wall facing the objective is bright.
struct ToolImaging {
  double radius_mm = 0.3;
  double length_mm = 3.0;
  double lateral_pitch_mm = 0.025;
  double sample_pitch_um = 12.5;
  double half_extent_mm = 1.6;
  double intensity = 1.0;
};

VScanVolume simulate_tool_volume(const Vec3& tip_o, const Vec3& axis_o, const ToolImaging& imaging,
                                 const NoiseModel& noise);

/// Stateless mixing of a seed with grid coordinates (splitmix64).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace ioct
