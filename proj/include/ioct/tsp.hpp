#pragma once

#include <cstddef>
#include <vector>

#include "ioct/kinematics.hpp"

namespace ioct {

/// Weighted joint travel k . (|d theta1|, |d theta2|, |d d3|).
double joint_distance(const JointState& a, const JointState& b, const Vec3& k);

struct Tour {
  std::vector<std::size_t> order;
  double cost = 0.0;
  bool exact = false;
};

/// Cost of the open path visiting `states` in `order`.
double tour_cost(const std::vector<JointState>& states, const std::vector<std::size_t>& order, const Vec3& k);

/// Held-Karp dynamic program over open paths (free start and end). n <= 20.
Tour solve_tour_exact(const std::vector<JointState>& states, const Vec3& k);

/// Nearest-neighbour construction (ties to the lowest index) followed by 2-opt
/// segment reversals until no reversal improves the open path. Up to 50 nodes
/// every start is tried and Or-opt moves (relocating runs of 1-3 nodes)
/// alternate with 2-opt.
Tour solve_tour_heuristic(const std::vector<JointState>& states, const Vec3& k);

/// Exact for n <= exact_limit, heuristic otherwise.
Tour order_waypoints(const std::vector<JointState>& states, const Vec3& k = Vec3(1.0, 1.0, 10.0),
                     std::size_t exact_limit = 12);

/// True iff no single segment reversal lowers the tour cost.
bool is_two_opt_optimal(const std::vector<JointState>& states, const std::vector<std::size_t>& order, const Vec3& k);

}  // namespace ioct
