#include "ioct/spatial_index.hpp"

#include <algorithm>
#include <cmath>

#include "ioct/error.hpp"

namespace ioct {

PointGrid::PointGrid(PointCloud points, double cell_size) : points_(std::move(points)), cell_(cell_size) {
  if (!(cell_ > 0.0)) throw ArgumentError("PointGrid: cell size must be positive");
  lo_ = {INT64_MAX, INT64_MAX, INT64_MAX};
  hi_ = {INT64_MIN, INT64_MIN, INT64_MIN};
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto c = cell_of(points_[i]);
    cells_[key(c[0], c[1], c[2])].push_back(i);
    for (int a = 0; a < 3; ++a) {
      lo_[a] = std::min(lo_[a], c[a]);
      hi_[a] = std::max(hi_[a], c[a]);
    }
  }
}

PointGrid::Key PointGrid::key(std::int64_t i, std::int64_t j, std::int64_t k) const {
  constexpr std::int64_t kOff = 1 << 20;
  const auto u = [](std::int64_t v) { return static_cast<std::uint64_t>(v + kOff) & 0x1FFFFFULL; };
  return (u(i) << 42) | (u(j) << 21) | u(k);
}

std::array<std::int64_t, 3> PointGrid::cell_of(const Vec3& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_)), static_cast<std::int64_t>(std::floor(p.y() / cell_)),
          static_cast<std::int64_t>(std::floor(p.z() / cell_))};
}

void PointGrid::scan_cell(std::int64_t i, std::int64_t j, std::int64_t k, const Vec3& q, Neighbor& best,
                          bool& found) const {
  const auto it = cells_.find(key(i, j, k));
  if (it == cells_.end()) return;
  for (const std::size_t idx : it->second) {
    const double d = (points_[idx] - q).norm();
    if (!found || d < best.distance || (d == best.distance && idx < best.index)) {
      best = {idx, d};
      found = true;
    }
  }
}

Neighbor PointGrid::nearest(const Vec3& query) const {
  if (points_.empty()) throw ArgumentError("PointGrid: nearest() on empty cloud");
  const auto c = cell_of(query);
  std::int64_t max_ring = 0;
  for (int a = 0; a < 3; ++a) max_ring = std::max({max_ring, std::abs(c[a] - lo_[a]), std::abs(c[a] - hi_[a])});
  Neighbor best;
  bool found = false;
  for (std::int64_t r = 0; r <= max_ring; ++r) {
    for (std::int64_t i = c[0] - r; i <= c[0] + r; ++i) {
      for (std::int64_t j = c[1] - r; j <= c[1] + r; ++j) {
        const bool face_ij = std::abs(i - c[0]) == r || std::abs(j - c[1]) == r;
        if (face_ij) {
          for (std::int64_t k = c[2] - r; k <= c[2] + r; ++k) scan_cell(i, j, k, query, best, found);
        } else {
          scan_cell(i, j, c[2] - r, query, best, found);
          if (r > 0) scan_cell(i, j, c[2] + r, query, best, found);
        }
      }
    }
    // Every point in ring r + 1 lies at least r * cell away.
    if (found && best.distance <= static_cast<double>(r) * cell_) break;
  }
  return best;
}

std::optional<Neighbor> PointGrid::nearest_in_cube(const Vec3& query, double half_width) const {
  const auto lo = cell_of(query - Vec3::Constant(half_width));
  const auto hi = cell_of(query + Vec3::Constant(half_width));
  Neighbor best;
  bool found = false;
  for (std::int64_t i = lo[0]; i <= hi[0]; ++i) {
    for (std::int64_t j = lo[1]; j <= hi[1]; ++j) {
      for (std::int64_t k = lo[2]; k <= hi[2]; ++k) {
        const auto it = cells_.find(key(i, j, k));
        if (it == cells_.end()) continue;
        for (const std::size_t idx : it->second) {
          const Vec3 diff = points_[idx] - query;
          if (diff.cwiseAbs().maxCoeff() > half_width) continue;
          const double d = diff.norm();
          if (!found || d < best.distance || (d == best.distance && idx < best.index)) {
            best = {idx, d};
            found = true;
          }
        }
      }
    }
  }
  if (!found) return std::nullopt;
  return best;
}

}  // namespace ioct
