#include "ioct/tsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ioct/error.hpp"

namespace ioct {

double joint_distance(const JointState& a, const JointState& b, const Vec3& k) {
  return k[0] * std::abs(a.theta1 - b.theta1) + k[1] * std::abs(a.theta2 - b.theta2) + k[2] * std::abs(a.d3 - b.d3);
}

double tour_cost(const std::vector<JointState>& states, const std::vector<std::size_t>& order, const Vec3& k) {
  double c = 0.0;
  for (std::size_t i = 1; i < order.size(); ++i) c += joint_distance(states[order[i - 1]], states[order[i]], k);
  return c;
}

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix distance_matrix(const std::vector<JointState>& states, const Vec3& k) {
  const std::size_t n = states.size();
  Matrix d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i][j] = joint_distance(states[i], states[j], k);
  return d;
}

void check_weights(const Vec3& k) {
  if (!(k.array() > 0.0).all()) throw ArgumentError("tour weights must be positive");
}

double path_cost(const Matrix& d, const std::vector<std::size_t>& order) {
  double c = 0.0;
  for (std::size_t i = 1; i < order.size(); ++i) c += d[order[i - 1]][order[i]];
  return c;
}

/// Change in cost from reversing order[i..j] of an open path.
double reversal_gain(const Matrix& d, const std::vector<std::size_t>& o, std::size_t i, std::size_t j) {
  double before = 0.0, after = 0.0;
  if (i > 0) {
    before += d[o[i - 1]][o[i]];
    after += d[o[i - 1]][o[j]];
  }
  if (j + 1 < o.size()) {
    before += d[o[j]][o[j + 1]];
    after += d[o[i]][o[j + 1]];
  }
  return before - after;
}

void two_opt(const Matrix& d, std::vector<std::size_t>& order) {
  const std::size_t n = order.size();
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (reversal_gain(d, order, i, j) > 1e-12) {
          std::reverse(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(j) + 1);
          improved = true;
        }
      }
    }
  }
}

/// Moves order[i..i+len) to sit between order[j-1] and order[j] (j outside
/// the segment) when that shortens the path; returns true on a move.
bool relocate_segment(const Matrix& d, std::vector<std::size_t>& o, std::size_t i, std::size_t len, std::size_t j) {
  const std::size_t n = o.size();
  const std::size_t e = i + len - 1;
  auto link = [&](std::size_t a, std::size_t b) { return (a < n && b < n) ? d[o[a]][o[b]] : 0.0; };
  const std::size_t none = n;
  const std::size_t prev = i > 0 ? i - 1 : none;
  const std::size_t next = e + 1 < n ? e + 1 : none;
  const std::size_t left = j > 0 ? j - 1 : none;
  const std::size_t right = j < n ? j : none;
  const double removed = link(prev, i) + link(e, next) + link(left, right);
  // Both orientations of the segment are tried at the new position.
  const double fwd = link(prev, next) + link(left, i) + link(e, right);
  const double rev = link(prev, next) + link(left, e) + link(i, right);
  const double best = std::min(fwd, rev);
  if (removed - best <= 1e-12) return false;
  std::vector<std::size_t> seg(o.begin() + static_cast<std::ptrdiff_t>(i), o.begin() + static_cast<std::ptrdiff_t>(e) + 1);
  if (rev < fwd) std::reverse(seg.begin(), seg.end());
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t p = 0; p <= n; ++p) {
    if (p == j) out.insert(out.end(), seg.begin(), seg.end());
    if (p < n && (p < i || p > e)) out.push_back(o[p]);
  }
  o = std::move(out);
  return true;
}

/// Or-opt pass over segments of one to three nodes; true if anything moved.
bool or_opt(const Matrix& d, std::vector<std::size_t>& order) {
  const std::size_t n = order.size();
  for (std::size_t len = 1; len <= 3 && len < n; ++len) {
    for (std::size_t i = 0; i + len <= n; ++i) {
      for (std::size_t j = 0; j <= n; ++j) {
        if (j >= i && j <= i + len) continue;
        if (relocate_segment(d, order, i, len, j)) return true;
      }
    }
  }
  return false;
}

std::vector<std::size_t> nearest_neighbour(const Matrix& d, std::size_t start) {
  const std::size_t n = d.size();
  std::vector<bool> used(n, false);
  std::vector<std::size_t> order{start};
  used[start] = true;
  for (std::size_t step = 1; step < n; ++step) {
    const std::size_t cur = order.back();
    std::size_t best = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (!used[j] && (best == n || d[cur][j] < d[cur][best])) best = j;
    }
    used[best] = true;
    order.push_back(best);
  }
  return order;
}

}  // namespace

Tour solve_tour_exact(const std::vector<JointState>& states, const Vec3& k) {
  check_weights(k);
  const std::size_t n = states.size();
  if (n > 20) throw ArgumentError("exact tour limited to 20 waypoints");
  Tour t;
  t.exact = true;
  if (n <= 1) {
    t.order.resize(n);
    std::iota(t.order.begin(), t.order.end(), 0);
    return t;
  }
  const Matrix d = distance_matrix(states, k);
  const std::size_t full = std::size_t{1} << n;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(full * n, inf);
  std::vector<int> parent(full * n, -1);
  for (std::size_t i = 0; i < n; ++i) dp[(std::size_t{1} << i) * n + i] = 0.0;
  for (std::size_t mask = 1; mask < full; ++mask) {
    for (std::size_t last = 0; last < n; ++last) {
      const double base = dp[mask * n + last];
      if (!(mask & (std::size_t{1} << last)) || base == inf) continue;
      for (std::size_t next = 0; next < n; ++next) {
        if (mask & (std::size_t{1} << next)) continue;
        const std::size_t m2 = mask | (std::size_t{1} << next);
        const double c = base + d[last][next];
        if (c < dp[m2 * n + next]) {
          dp[m2 * n + next] = c;
          parent[m2 * n + next] = static_cast<int>(last);
        }
      }
    }
  }
  std::size_t mask = full - 1;
  std::size_t last = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (dp[mask * n + i] < dp[mask * n + last]) last = i;
  t.cost = dp[mask * n + last];
  while (true) {
    t.order.push_back(last);
    const int p = parent[mask * n + last];
    if (p < 0) break;
    mask &= ~(std::size_t{1} << last);
    last = static_cast<std::size_t>(p);
  }
  std::reverse(t.order.begin(), t.order.end());
  return t;
}

Tour solve_tour_heuristic(const std::vector<JointState>& states, const Vec3& k) {
  check_weights(k);
  const std::size_t n = states.size();
  Tour t;
  if (n <= 1) {
    t.order.resize(n);
    std::iota(t.order.begin(), t.order.end(), 0);
    return t;
  }
  const Matrix d = distance_matrix(states, k);
  const std::size_t starts = n <= 50 ? n : 1;
  t.cost = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < starts; ++s) {
    std::vector<std::size_t> order = nearest_neighbour(d, s);
    // Or-opt catches the relocations 2-opt cannot express; repeat until both are stable.
    do {
      two_opt(d, order);
    } while (n <= 50 && or_opt(d, order));
    const double c = path_cost(d, order);
    if (c < t.cost - 1e-12) {
      t.cost = c;
      t.order = std::move(order);
    }
  }
  return t;
}

Tour order_waypoints(const std::vector<JointState>& states, const Vec3& k, std::size_t exact_limit) {
  if (states.size() < 2) throw ArgumentError("ordering needs at least 2 waypoints");
  return states.size() <= exact_limit ? solve_tour_exact(states, k) : solve_tour_heuristic(states, k);
}

bool is_two_opt_optimal(const std::vector<JointState>& states, const std::vector<std::size_t>& order, const Vec3& k) {
  const Matrix d = distance_matrix(states, k);
  for (std::size_t i = 0; i + 1 < order.size(); ++i)
    for (std::size_t j = i + 1; j < order.size(); ++j)
      if (reversal_gain(d, order, i, j) > 1e-9) return false;
  return true;
}

}  // namespace ioct
