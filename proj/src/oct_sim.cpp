#include "ioct/oct_sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ioct/error.hpp"
#include "ioct/optics.hpp"

namespace ioct {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ (b * 0xD6E8FEB86659FD93ULL));
}

namespace {

double surface_reflectivity(const EyePhantom& phantom, SurfaceId id) {
  switch (id) {
    case SurfaceId::CorneaOuter:
    case SurfaceId::CorneaInner: return phantom.cornea_reflectivity;
    case SurfaceId::Iris: return phantom.iris_reflectivity;
    case SurfaceId::CapsuleAnterior:
    case SurfaceId::CapsulePosterior: return phantom.capsule_reflectivity;
  }
  return 0.0;
}

}  // namespace

std::vector<InterfaceEvent> trace_ray(const EyePhantom& phantom, const Vec3& origin, const Vec3& direction,
                                      const OctConfig& config, double max_optical_mm) {
  std::vector<InterfaceEvent> events;
  Vec3 dir = direction.normalized();
  Vec3 pos = origin;
  Medium medium = phantom.medium_at(origin + 1e-9 * dir);
  double optical = 0.0;
  double physical = 0.0;
  for (int guard = 0; guard < 32; ++guard) {
    const auto hits = ray_intersect(phantom, pos, dir);
    if (hits.empty()) break;
    const SurfaceHit& hit = hits.front();
    optical += medium.n * hit.t;
    physical += hit.t;
    if (optical > max_optical_mm) break;

    double other_n = hit.entered.n;
    if (hit.surface == SurfaceId::CapsuleAnterior || hit.surface == SurfaceId::CapsulePosterior) {
      other_n = phantom.capsule_index;
    } else if (hit.surface == SurfaceId::Iris) {
      other_n = config.iris_index;
    }
    const double contrast = std::abs(other_n - medium.n) / (other_n + medium.n);
    events.push_back({hit.surface, hit.point, optical, physical,
                      surface_reflectivity(phantom, hit.surface) * contrast, hit.opaque});
    if (hit.opaque) break;
    if (hit.entered.n != medium.n) {
      try {
        dir = refract_direction(dir, hit.normal, medium.n, hit.entered.n);
      } catch (const TotalInternalReflection&) {
        break;
      }
    }
    medium = hit.entered;
    pos = hit.point + 1e-9 * dir;
  }
  return events;
}

AScanSignal render_events(const std::vector<InterfaceEvent>& events, double depth_origin_mm,
                          const NoiseModel& noise, const OctConfig& config, std::uint64_t seed) {
  AScanSignal out;
  out.sample_pitch_um = config.sample_pitch_um;
  out.intensities = Eigen::VectorXd::Zero(config.n_samples);
  const double pitch_mm = config.sample_pitch_um * 1e-3;
  const Eigen::Index n = config.n_samples;
  for (const InterfaceEvent& e : events) {
    const double rel = e.optical_path_mm - depth_origin_mm;
    const auto k = static_cast<Eigen::Index>(std::llround(rel / pitch_mm));
    if (k >= n) continue;
    const double height = config.source_power * e.amplitude * std::exp(-std::max(rel, 0.0) / config.depth_decay_mm);
    const double decay = std::exp(-config.sample_pitch_um / config.tail_length_um);
    double v = height;
    Eigen::Index i = k;
    if (i < 0) {
      v *= std::pow(decay, static_cast<double>(-i));
      i = 0;
    }
    for (; i < n && v > 1e-12 * height; ++i, v *= decay) out.intensities[i] += v;
  }
  const bool noisy = noise.background_level > 0.0 || noise.additive_sigma > 0.0 || noise.speckle_factor > 0.0;
  if (noisy) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = (out.intensities[i] + noise.background_level) * (1.0 + noise.speckle_factor * uni(rng));
      v += noise.additive_sigma * gauss(rng);
      out.intensities[i] = std::max(v, 0.0);
    }
  }
  return out;
}

AScanSignal simulate_ascan(const EyePhantom& phantom, const Vec3& origin, const Vec3& direction,
                           const NoiseModel& noise, const OctConfig& config) {
  const double range = static_cast<double>(config.n_samples) * config.sample_pitch_um * 1e-3;
  const auto events = trace_ray(phantom, origin, direction, config, range);
  return render_events(events, 0.0, noise, config, mix_seed(noise.rng_seed, 0x5ca9));
}

AScanSignal acquire_averaged(const EyePhantom& phantom, const Vec3& origin, const Vec3& direction,
                             const NoiseModel& noise, int count, const OctConfig& config) {
  if (count < 1) throw ArgumentError("acquire_averaged: count must be positive");
  const double range = static_cast<double>(config.n_samples) * config.sample_pitch_um * 1e-3;
  const auto events = trace_ray(phantom, origin, direction, config, range);
  AScanSignal sum = render_events(events, 0.0, noise, config, mix_seed(noise.rng_seed, 0xa5, 0));
  for (int k = 1; k < count; ++k) {
    sum.intensities += render_events(events, 0.0, noise, config, mix_seed(noise.rng_seed, 0xa5, k)).intensities;
  }
  sum.intensities /= static_cast<double>(count);
  return sum;
}

AScanSignal VScanVolume::column(int ix, int iy) const {
  AScanSignal s;
  s.sample_pitch_um = sample_pitch_um;
  s.intensities.resize(n_samples);
  const float* base = &data[(static_cast<std::size_t>(iy) * nx + ix) * n_samples];
  for (Eigen::Index k = 0; k < n_samples; ++k) s.intensities[k] = base[k];
  return s;
}

VScanVolume simulate_vscan(const EyePhantom& phantom, const ScanRegion& region, double lateral_pitch_mm,
                           const NoiseModel& noise, const VScanConfig& config) {
  if (!(lateral_pitch_mm > 0.0)) throw ArgumentError("lateral pitch must be positive");
  VScanVolume vol;
  vol.nx = static_cast<int>(std::floor((region.x_max - region.x_min) / lateral_pitch_mm + 1e-9)) + 1;
  vol.ny = static_cast<int>(std::floor((region.y_max - region.y_min) / lateral_pitch_mm + 1e-9)) + 1;
  vol.n_samples = config.oct.n_samples;
  vol.x0 = region.x_min;
  vol.y0 = region.y_min;
  vol.lateral_pitch_mm = lateral_pitch_mm;
  vol.sample_pitch_um = config.oct.sample_pitch_um;
  vol.depth_origin_mm = config.depth_origin_mm;
  vol.data.assign(static_cast<std::size_t>(vol.nx) * vol.ny * vol.n_samples, 0.0f);
  const double max_optical =
      config.depth_origin_mm + static_cast<double>(config.oct.n_samples) * config.oct.sample_pitch_um * 1e-3;
  for (int iy = 0; iy < vol.ny; ++iy) {
    for (int ix = 0; ix < vol.nx; ++ix) {
      const auto events = trace_ray(phantom, vol.entry_origin(ix, iy), vol.entry_direction(), config.oct, max_optical);
      const AScanSignal col = render_events(events, config.depth_origin_mm, noise, config.oct,
                                            mix_seed(noise.rng_seed, static_cast<std::uint64_t>(ix),
                                                     static_cast<std::uint64_t>(iy)));
      for (Eigen::Index k = 0; k < vol.n_samples; ++k) vol.at(ix, iy, k) = static_cast<float>(col.intensities[k]);
    }
  }
  return vol;
}

VScanVolume simulate_tool_volume(const Vec3& tip_o, const Vec3& axis_o, const ToolImaging& imaging,
                                 const NoiseModel& noise) {
  const Vec3 axis = axis_o.normalized();
  VScanVolume vol;
  vol.lateral_pitch_mm = imaging.lateral_pitch_mm;
  vol.sample_pitch_um = imaging.sample_pitch_um;
  vol.nx = vol.ny = static_cast<int>(std::lround(2.0 * imaging.half_extent_mm / imaging.lateral_pitch_mm)) + 1;
  vol.n_samples = std::lround(2.0 * imaging.half_extent_mm / (imaging.sample_pitch_um * 1e-3)) + 1;
  vol.x0 = tip_o.x() - imaging.half_extent_mm;
  vol.y0 = tip_o.y() - imaging.half_extent_mm;
  vol.depth_origin_mm = tip_o.z() - imaging.half_extent_mm;
  vol.data.assign(static_cast<std::size_t>(vol.nx) * vol.ny * vol.n_samples, 0.0f);
  const double shell = 0.75 * std::max(imaging.lateral_pitch_mm, imaging.sample_pitch_um * 1e-3);
  std::mt19937_64 rng(mix_seed(noise.rng_seed, 0x7001));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int iy = 0; iy < vol.ny; ++iy) {
    for (int ix = 0; ix < vol.nx; ++ix) {
      for (Eigen::Index k = 0; k < vol.n_samples; ++k) {
        const Vec3 rel = vol.raw_point(ix, iy, static_cast<double>(k)) - tip_o;
        const double s = rel.dot(axis);
        double v = noise.background_level;
        if (s <= 0.0 && s >= -imaging.length_mm) {
          const Vec3 radial = rel - s * axis;
          // Only the wall facing the objective (-z) reflects back.
          if (std::abs(radial.norm() - imaging.radius_mm) <= shell && radial.z() < 0.0) v += imaging.intensity;
        }
        if (noise.additive_sigma > 0.0) v += noise.additive_sigma * gauss(rng);
        vol.at(ix, iy, k) = static_cast<float>(std::max(v, 0.0));
      }
    }
  }
  return vol;
}

}  // namespace ioct
