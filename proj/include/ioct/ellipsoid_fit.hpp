#pragma once

#include "ioct/geometry.hpp"
#include "ioct/types.hpp"

namespace ioct {

struct EllipsoidFit {
  Ellipsoidd ellipsoid;
  double fit_rms = 0.0;  ///< RMS orthogonal distance, mm
  int iterations = 0;
};

/// Algebraic ellipsoid fit under the 4J - I^2 > 0 constraint, which never
/// returns a hyperboloid. Throws FitError on fewer than 9 points, a planar
/// cloud or a non-elliptic solution.
Ellipsoidd fit_ellipsoid_algebraic(const PointCloud& points);

/// Algebraic fit refined by Levenberg-Marquardt on orthogonal distances.
EllipsoidFit fit_ellipsoid(const PointCloud& points, bool refine = true);

/// RMS orthogonal distance of the points to the ellipsoid.
double ellipsoid_rms(const Ellipsoidd& e, const PointCloud& points);

}  // namespace ioct
