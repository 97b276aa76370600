#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "hardylab/rng.hpp"
#include "hardylab/whitney.hpp"

using namespace hardylab;

namespace {

// Distance from [u0, u1] to the complement by scanning every integer point;
// interval endpoints are integers, so the nearest complement point is one.
std::int64_t brute_distance(const IntervalSet& s, std::int64_t u0, std::int64_t u1) {
  std::int64_t best = s.units() + 1;
  for (std::int64_t x = 0; x <= s.units(); ++x) {
    bool inside = false;
    for (const auto& iv : s.intervals) inside = inside || (iv[0] < x && x < iv[1]);
    if (inside) continue;
    std::int64_t d = x < u0 ? u0 - x : (x > u1 ? x - u1 : 0);
    best = std::min(best, d);
  }
  return best;
}

IntervalSet random_union(Rng& rng, int level) {
  std::int64_t U = std::int64_t{1} << level;
  int count = 1 + static_cast<int>(rng.uniform() * 5);
  std::set<std::int64_t> ends;
  while (static_cast<int>(ends.size()) < 2 * count)
    ends.insert(1 + static_cast<std::int64_t>(rng.uniform() * static_cast<double>(U - 2)));
  std::vector<std::int64_t> e(ends.begin(), ends.end());
  std::vector<std::array<std::int64_t, 2>> iv;
  for (std::size_t k = 0; k + 1 < e.size(); k += 2) iv.push_back({e[k], e[k + 1]});
  return make_interval_set(level, iv);
}

}  // namespace

TEST(Whitney, UnitIntervalOnWideBox) {
  // Box [-2, 2] at 2^12 units; (0, 1) is (2048, 3072).
  auto s = make_interval_set(12, {{{2048, 3072}}});
  auto cover = whitney(s, 12);
  std::int64_t biggest = 0;
  for (const auto& q : cover.cubes) biggest = std::max(biggest, cover.side(q));
  EXPECT_EQ(biggest, 256);  // side 1/4
  std::vector<std::array<std::int64_t, 2>> big;
  for (const auto& q : cover.cubes)
    if (cover.side(q) == biggest) big.push_back({cover.unit_lo(q), cover.unit_hi(q)});
  ASSERT_EQ(big.size(), 2u);
  EXPECT_EQ(big[0][0], 2048 + 256);
  EXPECT_EQ(big[1][1], 3072 - 256);
  std::set<std::array<std::int64_t, 2>> all;
  for (const auto& q : cover.cubes) all.insert({cover.unit_lo(q), cover.unit_hi(q)});
  for (const auto& iv : all) EXPECT_TRUE(all.count({2048 + 3072 - iv[1], 2048 + 3072 - iv[0]})) << iv[0];
  EXPECT_EQ(cover.residual_units, (std::vector<std::int64_t>{2048, 3071}));
}

TEST(Whitney, EmptySet) {
  auto cover = whitney(make_interval_set(8, {}), 8);
  EXPECT_TRUE(cover.cubes.empty());
  EXPECT_TRUE(cover.residual_units.empty());
}

TEST(Whitney, RejectsBoxBoundaryAndBadInput) {
  EXPECT_THROW(whitney(make_interval_set(6, {{{0, 10}}}), 6), InvalidArgument);
  EXPECT_THROW(whitney(make_interval_set(6, {{{10, 64}}}), 6), InvalidArgument);
  EXPECT_THROW(make_interval_set(6, {{{5, 5}}}), InvalidArgument);
  EXPECT_THROW(make_interval_set(6, {{{1, 8}}, {{5, 9}}}), InvalidArgument);
}

TEST(Whitney, RandomUnionsAgainstBruteForce) {
  Rng rng(2024);
  const int level = 9;
  for (int trial = 0; trial < 100; ++trial) {
    auto s = random_union(rng, level);
    int finest = level - (trial % 3);
    auto cover = whitney(s, finest);
    auto mask = cells_of(s);
    std::vector<int> hits(mask.size(), 0);
    for (const auto& q : cover.cubes) {
      std::int64_t lo = cover.unit_lo(q), hi = cover.unit_hi(q), side = hi - lo;
      for (std::int64_t u = lo; u < hi; ++u) ++hits[static_cast<std::size_t>(u)];
      std::int64_t dist = brute_distance(s, lo, hi);
      EXPECT_LE(side, dist);
      EXPECT_LE(dist, 4 * side);
      // The parent fails the test (maximality).
      if (q.level > 0) {
        std::int64_t plo = lo - (q.index[0] % 2) * side;
        EXPECT_GT(2 * side, brute_distance(s, plo, plo + 2 * side));
      }
    }
    for (std::int64_t u : cover.residual_units) {
      ++hits[static_cast<std::size_t>(u)];
      EXPECT_LT(brute_distance(s, u, u + 1), std::int64_t{2} << (level - finest));
    }
    for (std::size_t u = 0; u < mask.size(); ++u) ASSERT_EQ(hits[u], mask[u] ? 1 : 0) << "trial " << trial << " unit " << u;
  }
}

TEST(IntervalSet, CellsRoundTrip) {
  std::vector<bool> mask(16, false);
  for (int i : {2, 3, 4, 9, 12, 13}) mask[static_cast<std::size_t>(i)] = true;
  auto s = interval_set_from_cells(mask);
  ASSERT_EQ(s.intervals.size(), 3u);
  EXPECT_EQ(s.measure(), 6);
  EXPECT_EQ(cells_of(s), mask);
  EXPECT_TRUE(make_interval_set(4, {{{3, 4}}}).subset_of(s));
  EXPECT_FALSE(make_interval_set(4, {{{4, 6}}}).subset_of(s));
}
