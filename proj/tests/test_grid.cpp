#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hardylab/grid.hpp"
#include "hardylab/norms.hpp"

using namespace hardylab;

TEST(BallMeasure, ClosedForms) {
  EXPECT_DOUBLE_EQ(ball_lebesgue_measure(Ball(0.0, 1.0), 1), 2.0);
  EXPECT_DOUBLE_EQ(ball_lebesgue_measure(Ball(0.0, 2.0), 1), 4.0);
  EXPECT_NEAR(ball_lebesgue_measure(Ball(Point{0, 0}, 1.0), 2), std::numbers::pi, 1e-12);
  EXPECT_THROW(Ball(0.0, 0.0), InvalidArgument);
  EXPECT_THROW(Ball(0.0, -1.0), InvalidArgument);
}

TEST(BallScaling, ScaledKeepsCenter) {
  Ball b(Point{0.25, -0.5}, 0.5);
  Ball c = b.scaled(3.0);
  EXPECT_EQ(c.center, b.center);
  EXPECT_DOUBLE_EQ(c.radius, 1.5);
}

TEST(GridTest, Geometry) {
  Grid g(1, 1.0, 8);
  EXPECT_DOUBLE_EQ(g.spacing() * 8, 2.0);
  EXPECT_DOUBLE_EQ(g.coordinate(0), -1.0 + 0.125);
  EXPECT_EQ(g.levels(), 3);
  EXPECT_THROW(Grid(1, 1.0, 6), InvalidArgument);
  EXPECT_THROW(Grid(3, 1.0, 8), InvalidArgument);
  Grid g2(2, 1.0, 4);
  EXPECT_EQ(g2.size(), 16u);
  auto c = g2.cell_center(1 * 4 + 2);
  EXPECT_DOUBLE_EQ(c[0], -0.25);
  EXPECT_DOUBLE_EQ(c[1], 0.25);
}

TEST(GridFunctionTest, RejectsNonFiniteAndWrongLength) {
  Grid g(1, 1.0, 4);
  EXPECT_THROW(GridFunction(g, {1, 2, 3}), InvalidArgument);
  EXPECT_THROW(GridFunction(g, {1, 2, 3, NAN}), InvalidArgument);
}

TEST(WeightedNorm, UnweightedConstant) {
  Grid g(1, 1.0, 64);
  GridFunction f = GridFunction::sample(g, [](const Point&) { return 1.0; });
  EXPECT_NEAR(weighted_lp_norm(f, 2.0, WeightSpec::one()).value, std::sqrt(2.0), 1e-12);
}

TEST(WeightedNorm, PowerWeightExactMass) {
  Grid g(1, 1.0, 64);
  GridFunction f = GridFunction::sample(g, [](const Point&) { return 1.0; });
  EXPECT_NEAR(weighted_lp_norm(f, 1.0, WeightSpec::power(1.0)).value, 1.0, 1e-10);
}

TEST(WeightedNorm, Region) {
  Grid g(1, 1.0, 256);
  GridFunction f = GridFunction::sample(g, [](const Point& x) { return x[0] >= 0 && x[0] <= 1 ? 1.0 : 0.0; });
  double v = weighted_lp_norm(f, 1.0, WeightSpec::one(), Ball(0.0, 0.5)).value;
  EXPECT_NEAR(v, 0.5, g.spacing());
}

TEST(WeightedNorm, DivergedOnNonIntegrableWeight) {
  Grid g(1, 1.0, 64);
  GridFunction f = GridFunction::sample(g, [](const Point&) { return 1.0; });
  auto m = weighted_lp_norm(f, 1.0, WeightSpec::power(-1.0));
  EXPECT_TRUE(m.diverged);
  EXPECT_THROW(weighted_lp_norm(f, 0.0, WeightSpec::one()), InvalidArgument);
}

TEST(WeightedNorm, Homogeneity) {
  Grid g(1, 2.0, 128);
  GridFunction f = GridFunction::sample(g, [](const Point& x) { return std::sin(3 * x[0]) + 0.2; });
  auto w = WeightSpec::power(-0.5);
  for (double p : {0.5, 1.0, 2.0, 3.5}) {
    double a = weighted_lp_norm(f, p, w).value;
    double b = weighted_lp_norm(f.scaled(-3.0), p, w).value;
    EXPECT_NEAR(b, 3.0 * a, 1e-13 * b);
  }
}

TEST(WeightedNorm, RefinementConvergence) {
  auto norm_at = [](std::size_t N) {
    Grid g(1, 1.0, N);
    GridFunction f = GridFunction::sample(g, [](const Point& x) { return std::exp(-4 * x[0] * x[0]); });
    return weighted_lp_norm(f, 2.0, WeightSpec::power(0.5)).value;
  };
  double n1 = norm_at(64), n2 = norm_at(128), n3 = norm_at(256), n4 = norm_at(512);
  double r1 = std::abs(n1 - n2) / std::abs(n2 - n3);
  double r2 = std::abs(n2 - n3) / std::abs(n3 - n4);
  EXPECT_GE(r1, 1.5);
  EXPECT_GE(r2, 1.5);
}

TEST(Moments, Examples) {
  Grid g(1, 1.0, 256);
  GridFunction odd = GridFunction::sample(g, [](const Point& x) { return x[0]; });
  EXPECT_NEAR(moment(odd, {0, 0}), 0.0, 1e-12);
  GridFunction one = GridFunction::sample(g, [](const Point&) { return 1.0; });
  double h = g.spacing();
  EXPECT_NEAR(moment(one, {2, 0}), 2.0 / 3.0, 2 * h * h);
  GridFunction zero(g);
  for (auto a : multi_indices(1, 5)) EXPECT_EQ(moment(zero, a), 0.0);
  EXPECT_THROW(moment(one, {13, 0}), InvalidArgument);
}

TEST(Moments, Linearity) {
  Grid g(2, 1.0, 32);
  GridFunction f = GridFunction::sample(g, [](const Point& x) { return std::cos(x[0] + 2 * x[1]); });
  GridFunction h = GridFunction::sample(g, [](const Point& x) { return x[0] * x[1] - 0.3; });
  std::vector<double> comb(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) comb[i] = 2.5 * f[i] - 1.5 * h[i];
  GridFunction c(g, comb);
  for (auto a : multi_indices(2, 3)) {
    double lhs = moment(c, a), rhs = 2.5 * moment(f, a) - 1.5 * moment(h, a);
    EXPECT_NEAR(lhs, rhs, 1e-13);
  }
}

TEST(DyadicCubes, IntersectOrNest) {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> level(0, 6);
  for (int trial = 0; trial < 2000; ++trial) {
    int dim = 1 + trial % 2;
    DyadicCube a, b;
    a.level = level(gen);
    b.level = level(gen);
    for (int k = 0; k < dim; ++k) {
      a.index[k] = static_cast<int>(gen() % (1u << a.level));
      b.index[k] = static_cast<int>(gen() % (1u << b.level));
    }
    bool overlap = cubes_overlap(a, b, dim);
    bool nested = cube_contains(a, b, dim) || cube_contains(b, a, dim);
    EXPECT_EQ(overlap, nested);
  }
}

TEST(GridText, RoundTrip) {
  for (int dim : {1, 2}) {
    Grid g(dim, 1.5, 8);
    GridFunction f = GridFunction::sample(g, [](const Point& x) { return std::exp(x[0]) / 3.0 - x[1] * 1e-300; });
    GridFunction back = parse_grid_text(to_grid_text(f));
    EXPECT_EQ(back.grid(), g);
    EXPECT_EQ(back.values(), f.values());
  }
  EXPECT_THROW(parse_grid_text("#hardylab-grid v1 n=1 N=4 R=1\n1,2,3\n"), InvalidArgument);
  EXPECT_THROW(parse_grid_text("#hardylab-grid v2 n=1 N=4 R=1\n1,2,3,4\n"), InvalidArgument);
}
