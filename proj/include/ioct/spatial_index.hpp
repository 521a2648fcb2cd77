#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "ioct/types.hpp"

namespace ioct {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Uniform hash grid over a point cloud for nearest-neighbour queries.
class PointGrid {
 public:
  explicit PointGrid(PointCloud points, double cell_size = 0.2);

  /// Exact nearest neighbour (expanding shell search). Throws on an empty grid.
  Neighbor nearest(const Vec3& query) const;

  /// Nearest point inside the axis-aligned cube of half-width `half_width`
  /// centred on the query, or nothing when the cube is empty.
  std::optional<Neighbor> nearest_in_cube(const Vec3& query, double half_width) const;

  const PointCloud& points() const noexcept { return points_; }
  double cell_size() const noexcept { return cell_; }

 private:
  using Key = std::uint64_t;
  Key key(std::int64_t i, std::int64_t j, std::int64_t k) const;
  std::array<std::int64_t, 3> cell_of(const Vec3& p) const;
  void scan_cell(std::int64_t i, std::int64_t j, std::int64_t k, const Vec3& q, Neighbor& best, bool& found) const;

  PointCloud points_;
  double cell_;
  std::unordered_map<Key, std::vector<std::size_t>> cells_;
  std::array<std::int64_t, 3> lo_{}, hi_{};
};

}  // namespace ioct
