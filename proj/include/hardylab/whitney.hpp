#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "hardylab/error.hpp"
#include "hardylab/grid.hpp"

namespace hardylab {

// Bounded open subset of the 1-D box, a union of open intervals (lo, hi)
// with integer endpoints in units of (box side) * 2^-level.
struct IntervalSet {
  int level = 0;
  std::vector<std::array<std::int64_t, 2>> intervals;

  std::int64_t units() const { return std::int64_t{1} << level; }
  bool empty() const { return intervals.empty(); }

  std::int64_t measure() const {
    std::int64_t m = 0;
    for (const auto& iv : intervals) m += iv[1] - iv[0];
    return m;
  }

  // Index of the interval whose closure holds the unit segment [u0, u1],
  // or -1.
  long component_of(std::int64_t u0, std::int64_t u1) const {
    auto it = std::upper_bound(intervals.begin(), intervals.end(), u0,
                               [](std::int64_t v, const std::array<std::int64_t, 2>& iv) { return v < iv[1]; });
    if (it == intervals.end() || (*it)[0] > u0 || (*it)[1] < u1) return -1;
    return static_cast<long>(it - intervals.begin());
  }

  // The open segment (u0, u1) meets the set.
  bool meets(std::int64_t u0, std::int64_t u1) const {
    auto it = std::upper_bound(intervals.begin(), intervals.end(), u0,
                               [](std::int64_t v, const std::array<std::int64_t, 2>& iv) { return v < iv[1]; });
    return it != intervals.end() && (*it)[0] < u1;
  }

  bool touches_boundary() const {
    return !intervals.empty() && (intervals.front()[0] <= 0 || intervals.back()[1] >= units());
  }

  bool subset_of(const IntervalSet& o) const {
    require(level == o.level, "interval sets must share a resolution");
    for (const auto& iv : intervals)
      if (o.component_of(iv[0], iv[1]) < 0) return false;
    return true;
  }
};

// Sorts and validates; touching intervals are kept apart (the shared point
// is not in the open set).
inline IntervalSet make_interval_set(int level, std::vector<std::array<std::int64_t, 2>> intervals) {
  require(level >= 0 && level <= 40, "interval set level must lie in [0, 40]");
  std::sort(intervals.begin(), intervals.end());
  IntervalSet s;
  s.level = level;
  for (const auto& iv : intervals) {
    require(iv[0] < iv[1], "intervals must have lo < hi");
    require(iv[0] >= 0 && iv[1] <= s.units(), "intervals must lie in the box");
    require(s.intervals.empty() || s.intervals.back()[1] <= iv[0], "intervals must be disjoint");
    s.intervals.push_back(iv);
  }
  return s;
}

// Interior of the union of the marked cells; cell i is the unit [i, i+1].
inline IntervalSet interval_set_from_cells(const std::vector<bool>& mask) {
  std::size_t n = mask.size();
  int level = 0;
  while ((std::size_t{1} << level) < n) ++level;
  require((std::size_t{1} << level) == n, "cell mask length must be a power of two");
  IntervalSet s;
  s.level = level;
  std::size_t i = 0;
  while (i < n) {
    if (!mask[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && mask[j]) ++j;
    s.intervals.push_back({static_cast<std::int64_t>(i), static_cast<std::int64_t>(j)});
    i = j;
  }
  return s;
}

inline std::vector<bool> cells_of(const IntervalSet& s) {
  std::vector<bool> mask(static_cast<std::size_t>(s.units()), false);
  for (const auto& iv : s.intervals)
    for (std::int64_t u = iv[0]; u < iv[1]; ++u) mask[static_cast<std::size_t>(u)] = true;
  return mask;
}

struct WhitneyCover {
  IntervalSet set;
  int finest_level = 0;
  // Disjoint interiors, ordered left to right.
  std::vector<DyadicCube> cubes;
  // Units of the set next to its boundary that no cube of level
  // <= finest_level can cover.
  std::vector<std::int64_t> residual_units;

  std::int64_t unit_lo(const DyadicCube& q) const { return q.index[0] << (set.level - q.level); }
  std::int64_t unit_hi(const DyadicCube& q) const { return (q.index[0] + 1) << (set.level - q.level); }
  std::int64_t side(const DyadicCube& q) const { return std::int64_t{1} << (set.level - q.level); }
};

// Distance from the closed segment [u0, u1] to the complement of the set;
// 0 when the segment is not inside one component.
inline std::int64_t distance_to_complement(const IntervalSet& s, std::int64_t u0, std::int64_t u1) {
  long c = s.component_of(u0, u1);
  if (c < 0) return 0;
  const auto& iv = s.intervals[static_cast<std::size_t>(c)];
  return std::min(u0 - iv[0], iv[1] - u1);
}

// Maximal dyadic intervals Q of level <= finest_level with
// diam(Q) <= dist(Q, complement). Maximality gives dist <= 4 diam.
inline WhitneyCover whitney(const IntervalSet& set, int finest_level) {
  require(finest_level >= 0 && finest_level <= set.level, "finest Whitney level must lie in [0, set level]");
  require(!set.touches_boundary(), "open set touches the box boundary");
  WhitneyCover cover;
  cover.set = set;
  cover.finest_level = finest_level;
  if (set.empty()) return cover;
  struct Node {
    int level;
    std::int64_t index;
  };
  // Depth-first, left child last pushed first popped, so output is ordered.
  std::vector<Node> stack{{0, 0}};
  while (!stack.empty()) {
    Node nd = stack.back();
    stack.pop_back();
    std::int64_t side = std::int64_t{1} << (set.level - nd.level);
    std::int64_t u0 = nd.index * side, u1 = u0 + side;
    if (!set.meets(u0, u1)) continue;
    if (distance_to_complement(set, u0, u1) >= side) {
      DyadicCube q;
      q.level = nd.level;
      q.index = {nd.index, 0};
      cover.cubes.push_back(q);
      continue;
    }
    if (nd.level == finest_level) {
      for (std::int64_t u = u0; u < u1; ++u)
        if (set.meets(u, u + 1)) cover.residual_units.push_back(u);
      continue;
    }
    stack.push_back({nd.level + 1, 2 * nd.index + 1});
    stack.push_back({nd.level + 1, 2 * nd.index});
  }
  return cover;
}

}  // namespace hardylab
