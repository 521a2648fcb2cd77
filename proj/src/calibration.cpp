#include "ioct/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "ioct/error.hpp"
#include "ioct/optics.hpp"
#include "ioct/spatial_index.hpp"

namespace ioct {

// ---------------------------------------------------------------- tool detection

namespace {

double box_margin(const VScanVolume& v, const Vec3& p) {
  const Vec3 lo(v.x0, v.y0, v.depth_origin_mm);
  const Vec3 hi = v.raw_point(v.nx - 1, v.ny - 1, static_cast<double>(v.n_samples - 1));
  return std::min((p - lo).minCoeff(), (hi - p).minCoeff());
}

}  // namespace

ToolDetection detect_tooltip(const VScanVolume& volume, double intensity_threshold, int min_voxels) {
  PointCloud pts;
  for (int iy = 0; iy < volume.ny; ++iy)
    for (int ix = 0; ix < volume.nx; ++ix)
      for (Eigen::Index k = 0; k < volume.n_samples; ++k)
        if (volume.at(ix, iy, k) > intensity_threshold) pts.push_back(volume.raw_point(ix, iy, static_cast<double>(k)));
  if (static_cast<int>(pts.size()) < std::max(min_voxels, 6)) {
    throw DetectionError("tool detection: only " + std::to_string(pts.size()) + " voxels above threshold");
  }
  const auto n = static_cast<double>(pts.size());
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : pts) centroid += p;
  centroid /= n;
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : pts) cov += (p - centroid) * (p - centroid).transpose();
  const Eigen::SelfAdjointEigenSolver<Mat3> es(cov / n);
  Vec3 e3 = es.eigenvectors().col(2);
  Vec3 e1 = es.eigenvectors().col(0);
  Vec3 e2 = e3.cross(e1);

  // The shaft leaves the volume; the tip is the end further from the boundary.
  auto extreme = [&](const Vec3& dir) {
    return *std::max_element(pts.begin(), pts.end(),
                             [&](const Vec3& a, const Vec3& b) { return a.dot(dir) < b.dot(dir); });
  };
  if (box_margin(volume, extreme(-e3)) > box_margin(volume, extreme(e3))) {
    e3 = -e3;
    e2 = -e2;
  }

  // Circle fit of the cross-section seeds the axis point and radius.
  Eigen::MatrixXd A(pts.size(), 3);
  Eigen::VectorXd b(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double u = (pts[i] - centroid).dot(e1), v = (pts[i] - centroid).dot(e2);
    A.row(static_cast<Eigen::Index>(i)) << u, v, 1.0;
    b[static_cast<Eigen::Index>(i)] = -(u * u + v * v);
  }
  const Eigen::Vector3d c = A.colPivHouseholderQr().solve(b);
  const double cu = -c[0] / 2.0, cv = -c[1] / 2.0;
  const double r0 = std::sqrt(std::max(cu * cu + cv * cv - c[2], 1e-12));

  auto axis_of = [&](const Eigen::VectorXd& x) { return (e3 + x[0] * e1 + x[1] * e2).normalized(); };
  auto point_of = [&](const Eigen::VectorXd& x) { return Vec3(centroid + x[2] * e1 + x[3] * e2); };
  auto residual = [&](const Eigen::VectorXd& x) {
    const Vec3 d = axis_of(x), q = point_of(x);
    Eigen::VectorXd r(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) r[static_cast<Eigen::Index>(i)] = distance_to_line(pts[i], q, d) - x[4];
    return r;
  };
  Eigen::VectorXd x0(5);
  x0 << 0.0, 0.0, cu, cv, r0;
  const LmResult fit = levenberg_marquardt(residual, x0);

  ToolDetection out;
  out.axis = axis_of(fit.x);
  const Vec3 q = point_of(fit.x);
  double s_max = -std::numeric_limits<double>::infinity();
  for (const Vec3& p : pts) s_max = std::max(s_max, (p - q).dot(out.axis));
  out.position = q + s_max * out.axis;
  out.radius = std::abs(fit.x[4]);
  out.voxel_count = static_cast<int>(pts.size());
  return out;
}

// ---------------------------------------------------------------- registration

RegistrationSolution RegistrationSolution::from_pose(const Pose& b_to_o) {
  RegistrationSolution s;
  const Mat3 R = b_to_o.linear();
  s.r_ob = vector_from_rotation(R);
  s.p_ob = b_to_o.translation();
  return s;
}

namespace {

void require_spread(const Eigen::Matrix3Xd& pts, const char* what) {
  const Eigen::Matrix3Xd centered = pts.colwise() - pts.rowwise().mean();
  const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  const auto sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[1] < 1e-9 * sv[0]) {
    throw DegenerateGeometryError(std::string("registration: collinear ") + what + " points");
  }
}

}  // namespace

RegistrationSolution register_frames(std::span<const FeatureObservation> observations, double w,
                                     const LmOptions& options) {
  const auto n = static_cast<Eigen::Index>(observations.size());
  if (n < 3) throw DegenerateGeometryError("registration needs at least 3 observations");
  if (!(w >= 0.0)) throw ArgumentError("registration weight must be non-negative");
  Eigen::Matrix3Xd pb(3, n), po(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    pb.col(i) = observations[i].p_b;
    po.col(i) = observations[i].p_o;
  }
  require_spread(pb, "robot");
  require_spread(po, "OCT");

  const Eigen::Matrix4d T0 = Eigen::umeyama(pb, po, false);
  const Mat3 R0 = T0.topLeftCorner<3, 3>();
  Eigen::VectorXd x0(6);
  x0 << vector_from_rotation(R0), T0.topRightCorner<3, 1>();

  auto residual = [&](const Eigen::VectorXd& x) {
    const Mat3 R = rotation_from_vector(Vec3(x.head<3>()));
    const Vec3 p = x.tail<3>();
    Eigen::VectorXd r(6 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const FeatureObservation& f = observations[i];
      r.segment<3>(6 * i) = f.p_o - (R * f.p_b + p);
      r.segment<3>(6 * i + 3) = w * (f.z_o - R * f.z_b);
    }
    return r;
  };
  const LmResult fit = levenberg_marquardt(residual, x0, options);
  if (!fit.converged) throw ConvergenceError("registration did not converge", std::sqrt(2.0 * fit.cost), fit.trace);

  RegistrationSolution s;
  s.r_ob = fit.x.head<3>();
  s.p_ob = fit.x.tail<3>();
  s.w = w;
  s.iterations = fit.iterations;
  s.trace = fit.trace;
  const Mat3 R = s.rotation();
  double sum = 0.0;
  for (const FeatureObservation& f : observations) {
    const double e = (f.p_o - (R * f.p_b + s.p_ob)).norm();
    s.per_point_errors.push_back(e);
    sum += e * e;
  }
  s.residual_rms = std::sqrt(sum / static_cast<double>(n));
  return s;
}

// ---------------------------------------------------------------- refractive index

double calibrate_refractive_index(std::span<const double> d3_positions, std::span<const double> measured_distances) {
  if (d3_positions.size() != measured_distances.size()) throw ShapeError("refractive calibration: size mismatch");
  if (d3_positions.size() < 2) throw ArgumentError("refractive calibration needs at least 2 samples");
  const auto n = static_cast<double>(d3_positions.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < d3_positions.size(); ++i) {
    mx += d3_positions[i];
    my += measured_distances[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < d3_positions.size(); ++i) {
    const double dx = d3_positions[i] - mx;
    sxx += dx * dx;
    sxy += dx * (measured_distances[i] - my);
  }
  if (!(sxx > 0.0)) throw ArgumentError("refractive calibration: zero insertion span");
  return std::abs(sxy / sxx);
}

// ---------------------------------------------------------------- spatial correction

std::vector<Eigen::Index> segment_column(const AScanSignal& column, const SpatialCorrectionOptions& options) {
  std::vector<Eigen::Index> edges;
  const Eigen::Index n = column.n_samples();
  const Eigen::Index w = std::max(1, options.step_width);
  if (n < 4 * w) return edges;
  const Eigen::VectorXd f = lowpass_zero_phase(column, options.lowpass_cutoff).intensities;

  // Step strength: mean of the next w samples minus mean of the previous w.
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = w; k + w <= n; ++k) s[k] = (f.segment(k, w).sum() - f.segment(k - w, w).sum()) / w;
  std::vector<double> tmp(s.data(), s.data() + n);
  auto median_of = [](std::vector<double>& v) {
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
  };
  const double med = median_of(tmp);
  for (Eigen::Index i = 0; i < n; ++i) tmp[static_cast<std::size_t>(i)] = std::abs(s[i] - med);
  const double sigma = 1.4826 * median_of(tmp);
  const double threshold = med + std::max(options.threshold_gain * sigma, options.relative_floor * (s.maxCoeff() - med));

  const Eigen::Index suppress = 2 * w;
  // The padded filter ends are not trusted.
  for (Eigen::Index k = 3 * w; k + 3 * w <= n; ++k) {
    if (!(s[k] > threshold)) continue;
    const Eigen::Index lo = std::max<Eigen::Index>(w, k - suppress);
    const Eigen::Index hi = std::min<Eigen::Index>(n - w, k + suppress);
    bool is_max = true;
    for (Eigen::Index j = lo; j <= hi && is_max; ++j) {
      if (s[j] > s[k] || (s[j] == s[k] && j < k)) is_max = false;
    }
    if (!is_max) continue;
    // Filter ringing around a much stronger step is not an interface.
    const Eigen::Index far = 5 * w;
    const double strongest = s.segment(std::max<Eigen::Index>(0, k - far),
                                       std::min<Eigen::Index>(n, k + far + 1) - std::max<Eigen::Index>(0, k - far))
                                 .maxCoeff();
    if (s[k] < 0.2 * strongest) continue;
    // Steepest single-sample rise near the step centre.
    Eigen::Index best = k;
    double best_slope = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = std::max<Eigen::Index>(1, k - w); j <= std::min<Eigen::Index>(n - 1, k + w); ++j) {
      const double slope = f[j] - f[j - 1];
      if (slope > best_slope) {
        best_slope = slope;
        best = j;
      }
    }
    if (edges.empty() || best > edges.back()) edges.push_back(best);
  }
  return edges;
}

SegmentStep propagate_segment(const Vec3& start, const Vec3& direction, const Vec3& normal, double n_before,
                              double n_after, double optical_length) {
  const Vec3 dir = refract_direction(direction, normal, n_before, n_after);
  return {start + dir * (optical_length / n_after), dir};
}

namespace {

struct ColumnEdges {
  int ix = 0, iy = 0;
  double z1r = 0.0, z2r = 0.0, z3r = 0.0;
  bool has_pc = false;
  bool valid = true;
  Vec3 p1, p2, t1;
};

/// Per-slice ellipse fits; index = slice, empty when the fit failed.
std::vector<std::optional<Conic2>> fit_slices(const std::vector<ColumnEdges>& cols, int n_slices, bool by_row,
                                              bool inner, int& failed) {
  std::vector<std::vector<Eigen::Vector2d>> pts(static_cast<std::size_t>(n_slices));
  for (const ColumnEdges& c : cols) {
    if (!c.valid) continue;
    const Vec3& p = inner ? c.p2 : c.p1;
    pts[static_cast<std::size_t>(by_row ? c.iy : c.ix)].emplace_back(by_row ? p.x() : p.y(), p.z());
  }
  std::vector<std::optional<Conic2>> fits(static_cast<std::size_t>(n_slices));
  for (int s = 0; s < n_slices; ++s) {
    const auto& v = pts[static_cast<std::size_t>(s)];
    if (v.empty()) continue;
    try {
      fits[static_cast<std::size_t>(s)] = fit_ellipse(v);
    } catch (const FitError&) {
      ++failed;
    }
  }
  return fits;
}

std::optional<Vec3> slice_normal(const std::vector<std::optional<Conic2>>& rows,
                                 const std::vector<std::optional<Conic2>>& cols, int ix, int iy, const Vec3& p) {
  const auto& row = rows[static_cast<std::size_t>(iy)];
  const auto& col = cols[static_cast<std::size_t>(ix)];
  if (!row || !col) return std::nullopt;
  const double sx = row->slope_at(p.x(), p.z());
  const double sy = col->slope_at(p.y(), p.z());
  if (!std::isfinite(sx) || !std::isfinite(sy)) return std::nullopt;
  return Vec3(-sx, -sy, 1.0).normalized();
}

std::vector<Ellipse2> slice_parameters(const std::vector<std::optional<Conic2>>& fits) {
  std::vector<Ellipse2> out;
  for (const auto& f : fits) {
    Ellipse2 e;
    if (f) {
      e = f->ellipse();
    } else {
      e.center.setConstant(std::numeric_limits<double>::quiet_NaN());
      e.semi_axes.setConstant(std::numeric_limits<double>::quiet_NaN());
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace

SpatialCorrectionResult correct_vscan_spatial(const VScanVolume& volume, const SpatialCorrectionOptions& options) {
  if (!(options.ambient_n >= 1.0 && options.cornea_n >= 1.0 && options.chamber_n >= 1.0)) {
    throw ArgumentError("spatial correction: refractive indices must be >= 1");
  }
  SpatialCorrectionResult result;
  const double pitch_mm = volume.sample_pitch_um * 1e-3;
  std::vector<ColumnEdges> cols;
  for (int iy = 0; iy < volume.ny; ++iy) {
    for (int ix = 0; ix < volume.nx; ++ix) {
      const auto edges = segment_column(volume.column(ix, iy), options);
      if (edges.size() < 2) {
        ++result.skipped_columns;
        continue;
      }
      ColumnEdges c;
      c.ix = ix;
      c.iy = iy;
      auto depth = [&](Eigen::Index k) { return volume.depth_origin_mm + static_cast<double>(k) * pitch_mm; };
      c.z1r = depth(edges[0]);
      c.z2r = depth(edges[1]);
      c.has_pc = edges.size() >= 4;
      c.z3r = depth(edges.back());
      const Vec3 entry = volume.entry_origin(ix, iy);
      c.p1 = Vec3(entry.x(), entry.y(), c.z1r / options.ambient_n);
      cols.push_back(c);
    }
  }

  const Vec3 beam = volume.entry_direction();
  if (options.refraction) {
    const auto outer_rows = fit_slices(cols, volume.ny, true, false, result.failed_scans);
    const auto outer_cols = fit_slices(cols, volume.nx, false, false, result.failed_scans);
    result.cornea_outer_fit = slice_parameters(outer_rows);
    for (ColumnEdges& c : cols) {
      const auto normal = slice_normal(outer_rows, outer_cols, c.ix, c.iy, c.p1);
      if (!normal) {
        c.valid = false;
        continue;
      }
      try {
        const SegmentStep s =
            propagate_segment(c.p1, beam, *normal, options.ambient_n, options.cornea_n, c.z2r - c.z1r);
        c.p2 = s.end;
        c.t1 = s.direction;
      } catch (const TotalInternalReflection&) {
        c.valid = false;
      }
    }
    const auto inner_rows = fit_slices(cols, volume.ny, true, true, result.failed_scans);
    const auto inner_cols = fit_slices(cols, volume.nx, false, true, result.failed_scans);
    result.cornea_inner_fit = slice_parameters(inner_rows);
    for (const ColumnEdges& c : cols) {
      if (!c.has_pc) continue;
      const auto normal = c.valid ? slice_normal(inner_rows, inner_cols, c.ix, c.iy, c.p2) : std::nullopt;
      if (!normal) {
        ++result.skipped_columns;
        continue;
      }
      try {
        const SegmentStep s = propagate_segment(c.p2, c.t1, *normal, options.cornea_n, options.chamber_n, c.z3r - c.z2r);
        const Vec3 raw(c.p1.x(), c.p1.y(), c.z3r);
        result.corrected_pc.push_back(s.end);
        result.raw_pc.push_back(raw);
        result.per_point_shift.push_back((s.end - raw).norm());
      } catch (const TotalInternalReflection&) {
        ++result.skipped_columns;
      }
    }
  } else {
    for (const ColumnEdges& c : cols) {
      if (!c.has_pc) continue;
      const double z1 = c.p1.z();
      const double z2 = correct_depth(c.z2r, c.z1r, 1.0 / options.cornea_n) - c.z1r + z1;
      const double z3 = z2 + (c.z3r - c.z2r) / options.chamber_n;
      const Vec3 raw(c.p1.x(), c.p1.y(), c.z3r);
      const Vec3 corrected(c.p1.x(), c.p1.y(), z3);
      result.corrected_pc.push_back(corrected);
      result.raw_pc.push_back(raw);
      result.per_point_shift.push_back((corrected - raw).norm());
    }
  }
  return result;
}

// ---------------------------------------------------------------- fiber offset

PointCloud project_probe_points(std::span<const ProbeRay> rays, std::span<const double> distances, double d_tip,
                                const RegistrationSolution& registration) {
  if (rays.size() != distances.size()) throw ShapeError("probe rays and distances differ in length");
  const Pose T = registration.b_to_o();
  PointCloud out;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    if (!std::isfinite(distances[i])) continue;
    out.push_back(T * (rays[i].tooltip_b + rays[i].axis_b.normalized() * (distances[i] + d_tip)));
  }
  return out;
}

FiberOffsetResult calibrate_fiber_offset(std::span<const ProbeRay> rays, std::span<const double> distances,
                                         const PointCloud& reference_pc, const RegistrationSolution& registration,
                                         const FiberOffsetOptions& options) {
  if (rays.size() != distances.size()) throw ShapeError("probe rays and distances differ in length");
  if (reference_pc.empty()) throw ArgumentError("fiber offset: empty reference cloud");
  FiberOffsetResult res;
  for (double d : distances)
    if (!std::isfinite(d)) ++res.excluded;
  if (rays.size() - static_cast<std::size_t>(res.excluded) < 5) {
    throw ArgumentError("fiber offset needs at least 5 rays on the surface");
  }
  const PointGrid grid(reference_pc, 0.2);
  auto stats = [&](double d_tip) {
    const PointCloud pts = project_probe_points(rays, distances, d_tip, registration);
    double sum = 0.0, sq = 0.0;
    for (const Vec3& p : pts) {
      const double e = grid.nearest(p).distance;
      sum += e;
      sq += e * e;
    }
    const auto n = static_cast<double>(pts.size());
    return std::pair{sum / n, std::sqrt(sq / n)};
  };
  auto objective = [&](double d_tip) { return stats(d_tip).first; };

  double d = options.initial;
  double J = objective(d);
  res.trace.push_back(J);
  res.initial_objective = J;
  res.initial_rms = stats(d).second;
  // Near the kink of the mean-distance objective a central difference over a
  // wide h underestimates the slope, so h shrinks with the accepted step.
  double h = options.gradient_step;
  bool converged = false;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const double g = (objective(d + h) - objective(d - h)) / (2.0 * h);
    if (std::abs(g) < 1e-12) {
      converged = true;
      break;
    }
    bool accepted = false;
    for (double t = options.initial_step; t * std::abs(g) >= options.step_tolerance; t /= 2.0) {
      const double dn = d - t * g;
      const double Jn = objective(dn);
      if (Jn <= J - options.armijo * t * g * g) {
        h = std::clamp(std::abs(dn - d), 1e-9, options.gradient_step);
        d = dn;
        J = Jn;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      converged = true;
      break;
    }
    res.trace.push_back(J);
  }
  res.iterations = it;
  if (!converged) throw ConvergenceError("fiber offset calibration did not converge", J, res.trace);
  res.d_tip = d;
  res.final_objective = J;
  res.final_rms = stats(d).second;
  return res;
}

}  // namespace ioct
