#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hardylab/atoms.hpp"
#include "hardylab/czdecomp.hpp"
#include "hardylab/error.hpp"
#include "hardylab/maximal.hpp"
#include "hardylab/norms.hpp"
#include "hardylab/operators.hpp"
#include "hardylab/parallel.hpp"
#include "hardylab/rng.hpp"
#include "hardylab/weights.hpp"

namespace hardylab {

inline constexpr const char* kLibraryVersion = "1.0.0";

enum class ExperimentKind { atom_uniform_bound, molecule_certification, molecular_synthesis, index_inequalities, hardy_boundedness };

inline std::string experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::atom_uniform_bound: return "atom_uniform_bound";
    case ExperimentKind::molecule_certification: return "molecule_certification";
    case ExperimentKind::molecular_synthesis: return "molecular_synthesis";
    case ExperimentKind::index_inequalities: return "index_inequalities";
    case ExperimentKind::hardy_boundedness: return "hardy_boundedness";
  }
  return "unknown";
}

inline ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::atom_uniform_bound, ExperimentKind::molecule_certification,
                 ExperimentKind::molecular_synthesis, ExperimentKind::index_inequalities,
                 ExperimentKind::hardy_boundedness})
    if (experiment_name(k) == s) return k;
  throw InvalidArgument("unknown experiment kind: " + s);
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::atom_uniform_bound;
  WeightSpec weight = WeightSpec::one();
  OperatorSpec op = OperatorSpec::hilbert();
  double p = 1.0;
  double p0 = 2.0;
  // Vanishing moments of the input atoms; -1 picks the smallest value the
  // relevant statement allows.
  int d = -1;
  // Target exponents for the Riesz potential; 0 derives them from
  // 1/q = 1/p - alpha/n and 1/q0 = 1/p0 - alpha/n. For index_inequalities,
  // q > p enables the second chain.
  double q = 0.0;
  double q0 = 0.0;
  int trials = 0;
  std::uint64_t seed = 0;
  Grid grid{1, 1.0, 2048};
  MaximalConfig maximal{};
  int molecules = 8;
  // Repeat every trial at N/2 and compare the maxima.
  bool refinement = true;
  // Family depth and grid size for the critical-index checks.
  int family_depth = 10;
  std::size_t index_cells = 1024;
};

struct HypothesisCheck {
  std::string name;
  bool ok = false;
  double value = 0;
  double bound = 0;
};

struct TrialRecord {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  double value = 0;
  double coarse_value = 0;
  bool pass = true;
  std::map<std::string, double> extra;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::string version = kLibraryVersion;
  std::vector<HypothesisCheck> hypotheses;
  bool hypotheses_ok = true;
  std::map<std::string, double> indices;
  std::vector<TrialRecord> trials;
  // max over trials 0..t of value.
  std::vector<double> running_max;
  double max_value = 0;
  double median_value = 0;
  double max_coarse = 0;
  double stability_ratio = 1;
  bool stable = true;
  bool all_pass = true;
  bool diverged = false;
  bool conclusion_ok = true;
  std::vector<std::string> notes;
  double wall_seconds = 0;
};

inline constexpr double kStabilityLow = 0.8;
inline constexpr double kStabilityHigh = 1.25;

namespace detail {

struct ResolvedParams {
  AtomParams in;
  AtomParams out;
  double q = 0, q0 = 0;
  bool potential = false;
};

inline int floor_index(int n, double p) { return std::max(0, static_cast<int>(std::floor(n * (1.0 / p - 1.0) + 1e-12))); }

inline ResolvedParams resolve(const ExperimentConfig& c) {
  int n = c.grid.dim();
  require(c.p > 0 && c.p <= 1.0, "p must lie in (0, 1]");
  require(c.p0 > 1.0, "p0 must exceed 1");
  require(c.trials >= 0, "trials must be nonnegative");
  require(c.d >= -1 && c.d <= 12, "d must lie in [0, 12] or be -1");
  ResolvedParams r;
  r.potential = c.op.kind == OperatorKind::riesz_potential;
  r.in.p = c.p;
  r.in.p0 = c.p0;
  r.in.weight = c.weight;
  if (r.potential) {
    double alpha = c.op.alpha;
    require(alpha > 0 && alpha < n, "alpha must lie in (0, n)");
    double inv_q = 1.0 / c.p - alpha / n, inv_q0 = 1.0 / c.p0 - alpha / n;
    require(inv_q > 0, "1/p - alpha/n must be positive");
    require(inv_q0 > 0, "p0 must be below n/alpha");
    if (c.q > 0) require(std::abs(1.0 / c.q - inv_q) <= 1e-12, "q must satisfy 1/q = 1/p - alpha/n");
    if (c.q0 > 0) require(std::abs(1.0 / c.q0 - inv_q0) <= 1e-12, "q0 must satisfy 1/q0 = 1/p0 - alpha/n");
    r.q = 1.0 / inv_q;
    r.q0 = 1.0 / inv_q0;
    r.in.weight = c.weight.pow(c.p);
    r.out.p = std::min(r.q, 1.0);
    r.out.p0 = r.q0;
    r.out.weight = c.weight.pow(r.q);
    r.out.d = floor_index(n, r.q);
    if (c.d >= 0) {
      r.in.d = c.d;
    } else if (c.kind == ExperimentKind::atom_uniform_bound) {
      r.in.d = floor_index(n, c.p);
    } else {
      r.in.d = 2 * r.out.d + 3 + static_cast<int>(std::floor(alpha)) + n;
    }
  } else {
    r.in.d = c.d >= 0 ? c.d : floor_index(n, c.p);
    r.out = r.in;
    r.q = c.p;
    r.q0 = c.p0;
  }
  return r;
}

inline Ball random_trial_ball(Rng& rng, const Grid& g) {
  double R = g.half_extent();
  double r = rng.uniform(0.05, 0.15) * R;
  Point c{0.0, 0.0};
  for (int k = 0; k < g.dim(); ++k) c[k] = rng.uniform(-0.5 * R + r, 0.5 * R - r);
  return Ball(c, r);
}

inline Grid coarse_grid(const Grid& g) {
  require(g.cells_per_axis() >= 64, "refinement check needs at least 64 cells per axis");
  return Grid(g.dim(), g.half_extent(), g.cells_per_axis() / 2);
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct IndexContext {
  Grid grid;
  BallFamily family;
};

inline IndexContext index_context(const ExperimentConfig& c) {
  std::size_t cells = c.grid.dim() == 1 ? c.index_cells : std::min<std::size_t>(c.index_cells, 64);
  Grid g(c.grid.dim(), c.grid.half_extent(), cells);
  int depth = std::min(g.levels(), c.grid.dim() == 1 ? c.family_depth : std::min(c.family_depth, 6));
  return IndexContext{g, BallFamily::dyadic(g, depth)};
}

inline HypothesisCheck a1_check(const std::string& name, const WeightSpec& w, const BallFamily& fam) {
  auto ch = ap_characteristic(w, 1.0, fam);
  return HypothesisCheck{name, !ch.diverged && ch.value < kDivergenceThreshold, ch.value, kDivergenceThreshold};
}

inline void echo_indices(ExperimentReport& rep, const std::string& prefix, const CriticalIndices& ci) {
  rep.indices[prefix + "q_critical"] = ci.q_critical;
  rep.indices[prefix + "r_critical"] = ci.r_capped ? ci.r_cap : ci.r_critical;
  rep.indices[prefix + "r_capped"] = ci.r_capped ? 1.0 : 0.0;
}

// Hypotheses of the statement each kind witnesses, checked numerically.
inline void check_hypotheses(const ExperimentConfig& c, const ResolvedParams& rp, const IndexContext& ctx,
                             ExperimentReport& rep) {
  int n = c.grid.dim();
  CriticalIndices ci = critical_indices(c.weight, ctx.family);
  echo_indices(rep, "w.", ci);
  auto add = [&](HypothesisCheck h) { rep.hypotheses.push_back(std::move(h)); };
  if (rp.potential) {
    double alpha = c.op.alpha, conj = ci.r_conjugate();
    add({"r_w/(r_w-1) < n/alpha", conj < n / alpha, conj, n / alpha});
    add({"r_w/(r_w-1) < p0", conj < c.p0, conj, c.p0});
    if (c.kind == ExperimentKind::atom_uniform_bound) {
      // w^{n/((n-alpha)s)} in A_1 with s = p (s -> 1 when p = 1).
      add(a1_check("w^{n/((n-alpha)p)} in A_1", c.weight.pow(n / ((n - alpha) * c.p)), ctx.family));
    } else {
      add({"p <= n/(n+alpha)", c.p <= n / (n + alpha) + 1e-12, c.p, n / (n + alpha)});
      add(a1_check("w^{1/p} in A_1", c.weight.pow(1.0 / c.p), ctx.family));
    }
    return;
  }
  if (c.kind == ExperimentKind::atom_uniform_bound) {
    add({"p0 > r_w/(r_w-1)", c.p0 > ci.r_conjugate(), c.p0, ci.r_conjugate()});
    double lhs = c.p * (n + rp.in.d + 1) / n;
    add({"p(n+d+1)/n > q_w", lhs > ci.q_critical, lhs, ci.q_critical});
    return;
  }
  auto adm = check_parameters(rp.in, ci, n);
  add({"p0 > p r_w/(r_w-1)", adm.p0_ok, c.p0, adm.p0_lower});
  add({"d >= floor(n(q_w/p - 1))", adm.d_ok, static_cast<double>(rp.in.d), static_cast<double>(adm.d_min)});
}

// Random smooth f with vanishing moments up to d and max |f| = 1.
inline GridFunction smooth_test_function(const Grid& g, std::uint64_t seed, int d) {
  Rng rng(seed);
  AtomParams a;
  a.d = d;
  a.ball = random_trial_ball(rng, g);
  a.ball.radius *= 2.0;
  double R = g.half_extent();
  for (int k = 0; k < g.dim(); ++k)
    a.ball.center[k] = std::clamp(a.ball.center[k], -0.5 * R + a.ball.radius, 0.5 * R - a.ball.radius);
  GridFunction f = make_random_atom(g, a, derive_seed(seed, 1));
  return f.scaled(1.0 / lp_norm(f, kInf));
}

inline Measured target_norm(const GridFunction& v, const AtomParams& out, double q) {
  return weighted_lp_norm(v, q, cell_masses(out.weight, v.grid()));
}

struct TrialOutput {
  double value = 0;
  bool pass = true;
  bool diverged = false;
  std::map<std::string, double> extra;
};

inline TrialOutput atom_bound_trial(const ExperimentConfig& c, const ResolvedParams& rp, const Grid& g,
                                    std::uint64_t seed) {
  Rng rng(seed);
  AtomParams in = rp.in;
  in.ball = random_trial_ball(rng, g);
  GridFunction a = make_random_atom(g, in, derive_seed(seed, 2));
  GridFunction Ta = apply_operator(a, c.op).values;
  AtomParams target = rp.potential ? rp.out : rp.in;
  Measured m = target_norm(Ta, target, rp.q);
  return TrialOutput{m.value, true, m.diverged, {{"radius", in.ball.radius}}};
}

inline TrialOutput certification_trial(const ExperimentConfig& c, const ResolvedParams& rp, const Grid& g,
                                       std::uint64_t seed) {
  Rng rng(seed);
  AtomParams in = rp.in;
  in.ball = random_trial_ball(rng, g);
  GridFunction a = make_random_atom(g, in, derive_seed(seed, 2));
  ImageReport rep = molecule_image_report(a, in, c.op, rp.out);
  TrialOutput t;
  t.value = rep.normalization;
  t.pass = rep.validation.pass;
  t.extra = {{"decay_fit", rep.decay_fit},
             {"decay_expected", rep.decay_expected},
             {"decay_max_violation", rep.validation.decay_max_violation},
             {"size_residual", rep.validation.size_residual},
             {"tail_amplitude", rep.tail_amplitude},
             {"radius", in.ball.radius}};
  return t;
}

// f = Σ λ_j m_j with Σ λ_j^p = 1; even j are atoms, odd j molecules.
inline TrialOutput synthesis_trial(const ExperimentConfig& c, const ResolvedParams& rp, const Grid& g,
                                   std::uint64_t seed) {
  Rng rng(seed);
  int M = c.molecules;
  std::vector<double> lambda(static_cast<std::size_t>(M));
  double mass = 0;
  for (auto& l : lambda) mass += std::pow(l = rng.uniform(0.1, 1.0), c.p);
  std::vector<double> sum(g.size(), 0.0);
  for (int j = 0; j < M; ++j) {
    AtomParams prm = rp.in;
    prm.ball = random_trial_ball(rng, g);
    std::uint64_t s = derive_seed(seed, 100 + static_cast<std::uint64_t>(j));
    GridFunction m = j % 2 == 0 ? make_random_atom(g, prm, s) : make_random_molecule(g, prm, s);
    double l = lambda[static_cast<std::size_t>(j)] * std::pow(mass, -1.0 / c.p);
    for (std::size_t i = 0; i < g.size(); ++i) sum[i] += l * m[i];
  }
  Measured h = hardy_norm(GridFunction(g, std::move(sum)), rp.in.weight, c.p, c.maximal);
  return TrialOutput{std::pow(h.value, c.p), true, h.diverged, {}};
}

inline TrialOutput boundedness_trial(const ExperimentConfig& c, const ResolvedParams& rp, const Grid& g,
                                     std::uint64_t seed, const CriticalIndices& ci_in) {
  GridFunction f = smooth_test_function(g, seed, rp.in.d);
  AtomicDecomposition dec = decompose(f, rp.in, ci_in);
  GridFunction Tf = apply_operator(f, c.op).values;
  std::vector<double> synth(g.size(), 0.0);
  std::vector<double> target_masses = cell_masses(rp.out.weight, g);
  double atom_sum = 0;
  for (const auto& e : dec.entries) {
    GridFunction Ta = apply_operator(e.atom(g), c.op).values;
    for (std::size_t i = 0; i < g.size(); ++i) synth[i] += e.lambda * Ta[i];
    atom_sum += std::pow(e.lambda * weighted_lp_norm(Ta, rp.q, target_masses).value, std::min(rp.q, 1.0));
  }
  double diff = 0, ref = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    diff += (synth[i] - Tf[i]) * (synth[i] - Tf[i]);
    ref += Tf[i] * Tf[i];
  }
  Measured hf = hardy_norm(f, rp.in.weight, c.p, c.maximal);
  Measured target = rp.q <= 1.0 ? hardy_norm(Tf, rp.out.weight, rp.q, c.maximal)
                                : weighted_lp_norm(Tf, rp.q, target_masses);
  Measured lebesgue = weighted_lp_norm(Tf, rp.q, target_masses);
  TrialOutput t;
  t.diverged = hf.diverged || target.diverged || lebesgue.diverged;
  t.value = target.value / hf.value;
  t.pass = dec.all_atoms_pass && dec.reconstruction_ok;
  t.extra = {{"atoms", static_cast<double>(dec.entries.size())},
             {"coefficient_ratio", std::pow(dec.coefficient_mass_p, 1.0 / c.p) / hf.value},
             {"lebesgue_ratio", lebesgue.value / hf.value},
             {"synthesized_bound_ratio", std::pow(atom_sum, 1.0 / std::min(rp.q, 1.0)) / hf.value},
             {"linearity_residual", ref > 0 ? std::sqrt(diff / ref) : 0.0}};
  return t;
}

inline void run_index_chains(const ExperimentConfig& c, const IndexContext& ctx, ExperimentReport& rep) {
  require(c.p > 0 && c.p < 1.0, "index chains need 0 < p < 1");
  require(c.q == 0 || c.q > c.p, "the second chain needs q > p");
  auto add = [&](HypothesisCheck h) {
    rep.hypotheses_ok = rep.hypotheses_ok && h.ok;
    rep.hypotheses.push_back(std::move(h));
  };
  add(a1_check("w^{1/p} in A_1", c.weight.pow(1.0 / c.p), ctx.family));
  if (c.q > 0) add(a1_check("w^q in A_1", c.weight.pow(c.q), ctx.family));
  if (!rep.hypotheses_ok) {
    rep.notes.push_back("hypothesis not satisfied; chains not evaluated");
    rep.conclusion_ok = false;
    return;
  }
  CriticalIndices w = critical_indices(c.weight, ctx.family);
  CriticalIndices wp = critical_indices(c.weight.pow(c.p), ctx.family);
  echo_indices(rep, "w.", w);
  echo_indices(rep, "w^p.", wp);
  // lhs <= rhs up to the bisection tolerance, with a capped index read as +inf.
  auto chain = [&](const std::string& name, double cl, bool lcap, double cr, bool rcap, double lv, double rv) {
    bool ok;
    if (rcap) ok = true;
    else if (lcap) ok = false;
    else ok = cl * lv <= cr * rv + (cl + cr) * w.tolerance;
    rep.notes.push_back(name + (ok ? ": holds" : ": fails"));
    rep.conclusion_ok = rep.conclusion_ok && ok;
    rep.indices["chain." + name] = ok ? 1.0 : 0.0;
    rep.indices["chain." + name + ".lhs"] = lcap ? kInf : cl * lv;
    rep.indices["chain." + name + ".rhs"] = rcap ? kInf : cr * rv;
  };
  chain("p r_{w^p} <= r_w", c.p, wp.r_capped, 1.0, w.r_capped, wp.r_critical, w.r_critical);
  chain("r_w <= r_{w^p}", 1.0, w.r_capped, 1.0, wp.r_capped, w.r_critical, wp.r_critical);
  if (c.q > 0) {
    CriticalIndices wq = critical_indices(c.weight.pow(c.q), ctx.family);
    echo_indices(rep, "w^q.", wq);
    chain("p r_{w^p} <= q r_{w^q}", c.p, wp.r_capped, c.q, wq.r_capped, wp.r_critical, wq.r_critical);
  }
}

}  // namespace detail

inline ExperimentReport run_experiment(const ExperimentConfig& c) {
  auto start = std::chrono::steady_clock::now();
  ExperimentReport rep;
  rep.config = c;
  auto ctx = detail::index_context(c);
  if (c.kind == ExperimentKind::index_inequalities) {
    detail::run_index_chains(c, ctx, rep);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
  }
  detail::ResolvedParams rp = detail::resolve(c);
  if (c.kind == ExperimentKind::hardy_boundedness)
    require(c.grid.dim() == 1, "hardy_boundedness uses the 1-D decomposition");
  rep.indices["q"] = rp.q;
  rep.indices["q0"] = rp.q0;
  rep.indices["d_in"] = rp.in.d;
  rep.indices["d_out"] = rp.out.d;
  detail::check_hypotheses(c, rp, ctx, rep);
  for (const auto& h : rep.hypotheses) rep.hypotheses_ok = rep.hypotheses_ok && h.ok;
  if (!rep.hypotheses_ok) {
    rep.notes.push_back("hypothesis not satisfied; trials skipped");
    rep.conclusion_ok = false;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
  }

  CriticalIndices ci_in;
  if (c.kind == ExperimentKind::hardy_boundedness) ci_in = critical_indices(rp.in.weight, ctx.family);
  auto run_trial = [&](const Grid& g, std::uint64_t s) {
    switch (c.kind) {
      case ExperimentKind::atom_uniform_bound: return detail::atom_bound_trial(c, rp, g, s);
      case ExperimentKind::molecule_certification: return detail::certification_trial(c, rp, g, s);
      case ExperimentKind::molecular_synthesis: return detail::synthesis_trial(c, rp, g, s);
      case ExperimentKind::hardy_boundedness: return detail::boundedness_trial(c, rp, g, s, ci_in);
      default: break;
    }
    return detail::TrialOutput{};
  };

  std::size_t T = static_cast<std::size_t>(c.trials);
  rep.trials.resize(T);
  Grid coarse = c.refinement ? detail::coarse_grid(c.grid) : c.grid;
  std::vector<std::uint8_t> diverged(T, 0);
  parallel_for(T, [&](std::size_t t) {
    TrialRecord& r = rep.trials[t];
    r.trial = t;
    r.seed = derive_seed(c.seed, t);
    auto fine = run_trial(c.grid, r.seed);
    r.value = fine.value;
    r.pass = fine.pass;
    r.extra = fine.extra;
    bool div = fine.diverged;
    if (c.refinement) {
      auto crs = run_trial(coarse, r.seed);
      r.coarse_value = crs.value;
      r.pass = r.pass && crs.pass;
      div = div || crs.diverged;
    }
    diverged[t] = div ? 1 : 0;
  });

  std::vector<double> values;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& r = rep.trials[t];
    rep.max_value = std::max(rep.max_value, r.value);
    rep.max_coarse = std::max(rep.max_coarse, r.coarse_value);
    rep.running_max.push_back(rep.max_value);
    rep.all_pass = rep.all_pass && r.pass;
    rep.diverged = rep.diverged || diverged[t];
    values.push_back(r.value);
  }
  rep.median_value = detail::median_of(values);
  if (c.refinement && T > 0) {
    rep.stability_ratio = rep.max_coarse > 0 ? rep.max_value / rep.max_coarse : kInf;
    rep.stable = rep.stability_ratio >= kStabilityLow && rep.stability_ratio <= kStabilityHigh;
  }
  rep.conclusion_ok = rep.all_pass && rep.stable && !rep.diverged && std::isfinite(rep.max_value);
  if (T == 0) rep.notes.push_back("no trials");
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace hardylab
