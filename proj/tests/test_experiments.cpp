#include <gtest/gtest.h>

#include <cmath>

#include "hardylab/experiments.hpp"

using namespace hardylab;

namespace {

ExperimentConfig uniform_bound_config(int trials) {
  ExperimentConfig c;
  c.kind = ExperimentKind::atom_uniform_bound;
  c.p = 1.0;
  c.p0 = 2.0;
  c.d = 0;
  c.trials = trials;
  c.seed = 7;
  c.grid = Grid(1, 1.0, 1024);
  return c;
}

ExperimentConfig potential_config(ExperimentKind kind, int trials) {
  ExperimentConfig c;
  c.kind = kind;
  c.op = OperatorSpec::riesz_potential(0.5);
  c.weight = WeightSpec::power(-0.25);
  c.p = 2.0 / 3.0;
  c.p0 = 1.6;
  c.trials = trials;
  c.seed = 3;
  c.grid = Grid(1, 1.0, 1024);
  return c;
}

}  // namespace

TEST(IndexInequalities, ConstantWeightIsTrivial) {
  ExperimentConfig c;
  c.kind = ExperimentKind::index_inequalities;
  c.p = 0.5;
  c.q = 0.75;
  auto rep = run_experiment(c);
  EXPECT_TRUE(rep.hypotheses_ok);
  EXPECT_TRUE(rep.conclusion_ok);
  EXPECT_EQ(rep.indices.at("w.r_capped"), 1.0);
  EXPECT_EQ(rep.indices.at("w^p.r_capped"), 1.0);
}

TEST(IndexInequalities, QuarterPowerChain) {
  ExperimentConfig c;
  c.kind = ExperimentKind::index_inequalities;
  c.weight = WeightSpec::power(-0.25);
  c.p = 0.5;
  auto rep = run_experiment(c);
  ASSERT_TRUE(rep.hypotheses_ok);
  EXPECT_NEAR(rep.indices.at("w.r_critical"), 4.0, 0.1);
  EXPECT_NEAR(rep.indices.at("w^p.r_critical"), 8.0, 0.2);
  EXPECT_TRUE(rep.conclusion_ok);
}

TEST(IndexInequalities, PositivePowerFailsHypothesis) {
  ExperimentConfig c;
  c.kind = ExperimentKind::index_inequalities;
  c.weight = WeightSpec::power(1.0);
  c.p = 0.5;
  auto rep = run_experiment(c);
  EXPECT_FALSE(rep.hypotheses_ok);
  EXPECT_FALSE(rep.conclusion_ok);
  EXPECT_EQ(rep.indices.count("w.r_critical"), 0u);
}

TEST(AtomUniformBound, ZeroTrialsGiveEmptyReport) {
  auto rep = run_experiment(uniform_bound_config(0));
  EXPECT_TRUE(rep.trials.empty());
  EXPECT_TRUE(rep.running_max.empty());
  EXPECT_EQ(rep.max_value, 0.0);
  EXPECT_TRUE(rep.hypotheses_ok);
}

TEST(AtomUniformBound, HilbertOnConstantWeightIsStable) {
  auto rep = run_experiment(uniform_bound_config(12));
  ASSERT_EQ(rep.trials.size(), 12u);
  EXPECT_TRUE(std::isfinite(rep.max_value));
  EXPECT_GT(rep.max_value, 0.0);
  EXPECT_TRUE(rep.stable) << rep.stability_ratio;
  EXPECT_TRUE(rep.conclusion_ok);
  for (std::size_t t = 1; t < rep.running_max.size(); ++t) EXPECT_GE(rep.running_max[t], rep.running_max[t - 1]);
  EXPECT_EQ(rep.running_max.back(), rep.max_value);
}

TEST(AtomUniformBound, ExponentRelationsAndHypotheses) {
  auto c = potential_config(ExperimentKind::atom_uniform_bound, 2);
  c.p = 1.0;
  c.q = 3.0;  // 1/q must be 1/2
  EXPECT_THROW(run_experiment(c), InvalidArgument);
  c.q = 2.0;
  c.p0 = 2.5;  // above n/alpha
  EXPECT_THROW(run_experiment(c), InvalidArgument);
  // |x|^{-1/2}: r_w/(r_w - 1) = 2 is not below n/alpha = 2.
  c.p0 = 1.6;
  c.weight = WeightSpec::power(-0.5);
  auto rep = run_experiment(c);
  EXPECT_FALSE(rep.hypotheses_ok);
  EXPECT_TRUE(rep.trials.empty());
}

TEST(MoleculeCertification, HilbertAndPotentialPass) {
  ExperimentConfig h;
  h.kind = ExperimentKind::molecule_certification;
  h.weight = WeightSpec::power(-0.5);
  h.p = 2.0 / 3.0;
  h.p0 = 4.0;
  h.d = 1;
  h.trials = 8;
  h.seed = 11;
  // 512 cells under-resolve the smallest balls on the coarse pass.
  h.grid = Grid(1, 1.0, 2048);
  auto rh = run_experiment(h);
  EXPECT_TRUE(rh.all_pass);
  EXPECT_TRUE(rh.stable) << rh.stability_ratio;
  for (const auto& t : rh.trials) EXPECT_LE(t.extra.at("decay_fit"), t.extra.at("decay_expected") + 0.1);

  auto ri = run_experiment(potential_config(ExperimentKind::molecule_certification, 8));
  EXPECT_EQ(ri.indices.at("d_in"), 4.0);
  EXPECT_EQ(ri.indices.at("q"), 1.0);
  EXPECT_NEAR(ri.indices.at("q0"), 8.0, 1e-12);
  EXPECT_TRUE(ri.all_pass);
  EXPECT_TRUE(ri.stable) << ri.stability_ratio;
}

TEST(MolecularSynthesis, SingleAtomMatchesDirectNorm) {
  ExperimentConfig c;
  c.kind = ExperimentKind::molecular_synthesis;
  c.weight = WeightSpec::power(-0.5);
  c.p = 2.0 / 3.0;
  c.p0 = 4.0;
  c.d = 1;
  c.molecules = 1;
  c.trials = 1;
  c.seed = 5;
  c.grid = Grid(1, 1.0, 1024);
  c.refinement = false;
  auto rep = run_experiment(c);
  ASSERT_EQ(rep.trials.size(), 1u);
  // Re-derive the trial's atom from the documented seed streams.
  std::uint64_t s = derive_seed(c.seed, 0);
  Rng rng(s);
  rng.uniform();  // the single λ
  AtomParams a;
  a.p = c.p;
  a.p0 = c.p0;
  a.d = 1;
  a.weight = c.weight;
  a.ball = detail::random_trial_ball(rng, c.grid);
  GridFunction atom = make_random_atom(c.grid, a, derive_seed(s, 100));
  double direct = std::pow(hardy_norm(atom, c.weight, c.p).value, c.p);
  EXPECT_NEAR(rep.trials[0].value, direct, 1e-12 * direct);
  // Scaling f by t scales hardy_norm^p by t^p.
  double scaled = std::pow(hardy_norm(atom.scaled(4.0), c.weight, c.p).value, c.p);
  EXPECT_NEAR(scaled, std::pow(4.0, c.p) * direct, 1e-12 * scaled);
}

TEST(MolecularSynthesis, MixedMoleculesStable) {
  ExperimentConfig c;
  c.kind = ExperimentKind::molecular_synthesis;
  c.weight = WeightSpec::power(-0.5);
  c.p = 2.0 / 3.0;
  c.p0 = 4.0;
  c.d = 1;
  c.trials = 20;
  c.seed = 19;
  c.grid = Grid(1, 1.0, 1024);
  auto rep = run_experiment(c);
  EXPECT_TRUE(rep.hypotheses_ok);
  EXPECT_TRUE(std::isfinite(rep.max_value));
  EXPECT_TRUE(rep.stable) << rep.stability_ratio;
}

TEST(HardyBoundedness, ClassicalRows) {
  ExperimentConfig h;
  h.kind = ExperimentKind::hardy_boundedness;
  h.p = 1.0;
  h.p0 = 2.0;
  h.trials = 3;
  h.seed = 2;
  h.grid = Grid(1, 1.0, 2048);
  auto rh = run_experiment(h);
  EXPECT_TRUE(rh.conclusion_ok);
  for (const auto& t : rh.trials) {
    EXPECT_LE(t.extra.at("linearity_residual"), 1e-6);
    EXPECT_GT(t.extra.at("atoms"), 0.0);
  }

  ExperimentConfig i = h;
  i.op = OperatorSpec::riesz_potential(0.5);
  i.p = 2.0 / 3.0;
  i.p0 = 1.6;
  auto ri = run_experiment(i);
  EXPECT_EQ(ri.indices.at("q"), 1.0);
  EXPECT_TRUE(ri.conclusion_ok) << ri.stability_ratio;
}

TEST(Reproducibility, ThreadCountDoesNotChangeValues) {
  auto c = potential_config(ExperimentKind::molecule_certification, 4);
  ExperimentConfig b;
  b.kind = ExperimentKind::hardy_boundedness;
  b.trials = 3;
  b.seed = 8;
  b.grid = Grid(1, 1.0, 1024);
  for (const auto& cfg : {c, b}) {
    set_thread_count(1);
    auto one = run_experiment(cfg);
    set_thread_count(4);
    auto four = run_experiment(cfg);
    set_thread_count(0);
    ASSERT_EQ(one.trials.size(), four.trials.size());
    for (std::size_t t = 0; t < one.trials.size(); ++t) {
      EXPECT_EQ(one.trials[t].value, four.trials[t].value);
      EXPECT_EQ(one.trials[t].coarse_value, four.trials[t].coarse_value);
      EXPECT_EQ(one.trials[t].extra, four.trials[t].extra);
    }
  }
}
