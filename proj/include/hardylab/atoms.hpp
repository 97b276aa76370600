#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hardylab/error.hpp"
#include "hardylab/grid.hpp"
#include "hardylab/norms.hpp"
#include "hardylab/rng.hpp"
#include "hardylab/weights.hpp"

namespace hardylab {

// p0 = +inf is written as kInf.
struct AtomParams {
  double p = 1.0;
  double p0 = 2.0;
  int d = 0;
  Ball ball{};
  WeightSpec weight = WeightSpec::one();
};

struct AdmissibilityReport {
  bool p_ok = false;
  bool p0_ok = false;
  bool d_ok = false;
  double p0_lower = 1.0;  // max{1, p r_w/(r_w - 1)}
  double p0_margin = 0.0;
  int d_min = 0;          // floor(n (q_w/p - 1))
  double q_critical = 1.0;
  double r_critical = kInf;
  bool r_capped = true;
  // (p0/p)' and whether RH at that exponent was finite, when checked.
  double rh_exponent = 1.0;
  std::optional<bool> rh_witness_finite;
  bool pass = false;
};

inline AdmissibilityReport check_parameters(const AtomParams& params, const CriticalIndices& ci, int dim,
                                            const BallFamily* family = nullptr) {
  AdmissibilityReport r;
  r.q_critical = ci.q_critical;
  r.r_critical = ci.r_critical;
  r.r_capped = ci.r_capped;
  r.p_ok = params.p > 0 && params.p <= 1.0;
  r.p0_lower = std::max(1.0, params.p * ci.r_conjugate());
  r.p0_margin = params.p0 - r.p0_lower;
  r.p0_ok = params.p0 > r.p0_lower;
  r.d_min = params.p > 0 ? static_cast<int>(std::floor(dim * (ci.q_critical / params.p - 1.0))) : 0;
  r.d_min = std::max(r.d_min, 0);
  r.d_ok = params.d >= r.d_min;
  if (params.p0 > params.p && params.p > 0) {
    double t = params.p0 / params.p;
    r.rh_exponent = std::isinf(t) ? 1.0 : t / (t - 1.0);
    if (family != nullptr && r.rh_exponent > 1.0)
      r.rh_witness_finite = !rh_characteristic(params.weight, r.rh_exponent, *family).diverged;
  }
  r.pass = r.p_ok && r.p0_ok && r.d_ok;
  return r;
}

inline AdmissibilityReport check_parameters(const AtomParams& params, const WeightProfile& profile, int dim,
                                            const BallFamily* family = nullptr) {
  return check_parameters(params, profile.indices, dim, family);
}

struct ValidationTolerances {
  double moment = 1e-9;
  double size = 1e-9;
  double decay = 1e-9;
};

struct ValidationReport {
  std::string kind;
  // (a1): mass of |a| on cells that do not meet the closed ball.
  double outside_mass = 0;
  // (a2)/(m1): 1 - norm/bound; positive is slack.
  double size_residual = 0;
  double norm = 0;
  double bound = 0;
  // (m2): max over cells outside 2B of |m|/envelope - 1.
  double decay_max_violation = 0;
  int decay_exponent = 0;
  // Max |∫ (x - x0)^α a| over |α| = k, and the matching thresholds.
  std::vector<double> moment_residuals;
  std::vector<double> moment_thresholds;
  // ‖m‖_{L^{p0}(box)} / (|B|^{1/p0} w(B)^{-1/p}).
  double full_norm_ratio = 0;
  bool support_ok = true;
  bool size_ok = false;
  bool decay_ok = true;
  bool moments_ok = false;
  bool pass = false;
  ValidationTolerances tolerances;
};

namespace detail {

inline void check_atom_inputs(const GridFunction& a, const AtomParams& params) {
  require(params.p > 0 && params.p <= 1.0, "p must lie in (0, 1]");
  require(params.p0 > 1.0, "p0 must exceed 1");
  require(params.d >= 0 && params.d <= 12, "d must lie in [0, 12]");
  const Grid& g = a.grid();
  require(ball_inside_box(g, params.ball), "ball must lie inside the grid box");
  require(params.ball.radius >= g.spacing(), "ball radius must be at least one grid cell");
}

// |B|^{1/p0} w(B)^{-1/p}.
inline double size_bound(const Grid& g, const AtomParams& params) {
  double vol = ball_lebesgue_measure(params.ball, g.dim());
  double wb = WeightMeasure(params.weight, g).mass(params.ball);
  require(wb > 0 && wb < kInf, "weight mass of the ball must be finite and positive");
  double vol_part = std::isinf(params.p0) ? 1.0 : std::pow(vol, 1.0 / params.p0);
  return vol_part * std::pow(wb, -1.0 / params.p);
}

inline double lebesgue_norm(const GridFunction& f, double p0, const std::optional<Ball>& region) {
  const Grid& g = f.grid();
  double acc = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (region && !center_in_ball(g, i, *region)) continue;
    double v = std::abs(f[i]);
    if (std::isinf(p0)) {
      acc = std::max(acc, v);
    } else if (v != 0.0) {
      acc += std::pow(v, p0);
    }
  }
  return std::isinf(p0) ? acc : std::pow(acc * g.cell_volume(), 1.0 / p0);
}

inline void fill_moments(const GridFunction& a, const AtomParams& params, double tol, ValidationReport& rep) {
  const Grid& g = a.grid();
  double l1 = lp_norm(a, 1.0);
  rep.moment_residuals.assign(params.d + 1, 0.0);
  rep.moment_thresholds.assign(params.d + 1, 0.0);
  rep.moments_ok = true;
  for (const auto& alpha : multi_indices(g.dim(), params.d)) {
    int k = alpha[0] + alpha[1];
    double m = std::abs(moment_about(a, alpha, params.ball.center));
    rep.moment_residuals[k] = std::max(rep.moment_residuals[k], m);
  }
  for (int k = 0; k <= params.d; ++k) {
    rep.moment_thresholds[k] = tol * l1 * std::pow(params.ball.radius, k);
    if (rep.moment_residuals[k] > rep.moment_thresholds[k]) rep.moments_ok = false;
  }
}

}  // namespace detail

inline ValidationReport validate_atom(const GridFunction& a, const AtomParams& params,
                                      const ValidationTolerances& tol = {}) {
  detail::check_atom_inputs(a, params);
  const Grid& g = a.grid();
  ValidationReport rep;
  rep.kind = "atom";
  rep.tolerances = tol;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != 0.0 && !cell_meets_ball(g, i, params.ball)) rep.outside_mass += std::abs(a[i]) * g.cell_volume();
  rep.support_ok = rep.outside_mass == 0.0;
  rep.bound = detail::size_bound(g, params);
  rep.norm = detail::lebesgue_norm(a, params.p0, std::nullopt);
  rep.size_residual = 1.0 - rep.norm / rep.bound;
  rep.size_ok = rep.size_residual >= -tol.size;
  rep.full_norm_ratio = rep.norm / rep.bound;
  detail::fill_moments(a, params, tol.moment, rep);
  rep.pass = rep.support_ok && rep.size_ok && rep.moments_ok;
  return rep;
}

inline int molecule_decay_exponent(int dim, int d) { return 2 * dim + 2 * d + 3; }

inline ValidationReport validate_molecule(const GridFunction& m, const AtomParams& params,
                                          const ValidationTolerances& tol = {}) {
  detail::check_atom_inputs(m, params);
  const Grid& g = m.grid();
  ValidationReport rep;
  rep.kind = "molecule";
  rep.tolerances = tol;
  Ball twice = params.ball.scaled(2.0);
  rep.bound = detail::size_bound(g, params);
  rep.norm = detail::lebesgue_norm(m, params.p0, twice);
  rep.size_residual = 1.0 - rep.norm / rep.bound;
  rep.size_ok = rep.size_residual >= -tol.size;

  double wneg = std::pow(WeightMeasure(params.weight, g).mass(params.ball), -1.0 / params.p);
  rep.decay_exponent = molecule_decay_exponent(g.dim(), params.d);
  double worst = -1.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (center_in_ball(g, i, twice)) continue;
    double rho = distance(g.cell_center(i), params.ball.center, g.dim()) / params.ball.radius;
    double env = wneg * std::pow(1.0 + rho, -rep.decay_exponent);
    worst = std::max(worst, std::abs(m[i]) / env - 1.0);
  }
  rep.decay_max_violation = worst;
  rep.decay_ok = worst <= tol.decay;
  rep.full_norm_ratio = detail::lebesgue_norm(m, params.p0, std::nullopt) / rep.bound;
  detail::fill_moments(m, params, tol.moment, rep);
  rep.pass = rep.size_ok && rep.decay_ok && rep.moments_ok;
  return rep;
}

namespace detail {

inline double unit_bump(double r2) { return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0; }

struct MomentProjection {
  double condition = 0;
};

// Subtracts from `values` the combination Σ c_α ψ u^α (u = (x - x0)/r) that
// cancels all moments of degree <= d. `psi` carries ψ on the grid.
inline MomentProjection remove_moments(std::vector<double>& values, const std::vector<double>& psi, const Grid& g,
                                       const Ball& ball, int d) {
  auto alphas = multi_indices(g.dim(), d);
  std::size_t m = alphas.size();
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < psi.size(); ++i)
    if (psi[i] != 0.0) support.push_back(i);
  require(support.size() > m, "ball holds too few cells for the requested moments");
  Eigen::MatrixXd mono(support.size(), m);
  for (std::size_t s = 0; s < support.size(); ++s) {
    Point x = g.cell_center(support[s]);
    double u0 = (x[0] - ball.center[0]) / ball.radius;
    double u1 = g.dim() == 2 ? (x[1] - ball.center[1]) / ball.radius : 0.0;
    for (std::size_t k = 0; k < m; ++k) mono(s, k) = std::pow(u0, alphas[k][0]) * std::pow(u1, alphas[k][1]);
  }
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t s = 0; s < support.size(); ++s) {
    auto row = mono.row(s);
    gram.noalias() += psi[support[s]] * row.transpose() * row;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gram);
  const auto& sv = svd.singularValues();
  MomentProjection out;
  out.condition = sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1) : kInf;
  if (!(out.condition <= 1e12)) return out;
  auto solver = gram.colPivHouseholderQr();
  // Two passes: the second removes the rounding left by the first.
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] == 0.0) continue;
      Point x = g.cell_center(i);
      double u0 = (x[0] - ball.center[0]) / ball.radius;
      double u1 = g.dim() == 2 ? (x[1] - ball.center[1]) / ball.radius : 0.0;
      for (std::size_t k = 0; k < m; ++k) rhs(k) += values[i] * std::pow(u0, alphas[k][0]) * std::pow(u1, alphas[k][1]);
    }
    Eigen::VectorXd c = solver.solve(rhs);
    for (std::size_t s = 0; s < support.size(); ++s) values[support[s]] -= psi[support[s]] * mono.row(s).dot(c);
  }
  return out;
}

// Random smooth oscillation on B: a few plane waves in u = (x - x0)/r.
inline std::vector<double> random_waves(const Grid& g, const Ball& ball, Rng& rng, std::vector<double>& psi) {
  constexpr int kWaves = 6;
  std::array<double, kWaves> amp{}, phase{}, f0{}, f1{};
  for (int k = 0; k < kWaves; ++k) {
    amp[k] = rng.uniform(-1.0, 1.0);
    phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    f0[k] = rng.uniform(0.0, 4.0);
    f1[k] = g.dim() == 2 ? rng.uniform(0.0, 4.0) : 0.0;
  }
  std::vector<double> v(g.size(), 0.0);
  psi.assign(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    Point x = g.cell_center(i);
    double u0 = (x[0] - ball.center[0]) / ball.radius;
    double u1 = g.dim() == 2 ? (x[1] - ball.center[1]) / ball.radius : 0.0;
    double b = unit_bump(u0 * u0 + u1 * u1);
    if (b == 0.0) continue;
    psi[i] = b;
    double s = 0;
    for (int k = 0; k < kWaves; ++k) s += amp[k] * std::cos(2 * std::numbers::pi * (f0[k] * u0 + f1[k] * u1) + phase[k]);
    v[i] = b * s;
  }
  return v;
}

inline void require_half_box(const Grid& g, const Ball& b) {
  double half = 0.5 * g.half_extent();
  for (int k = 0; k < g.dim(); ++k)
    require(b.center[k] - b.radius >= -half && b.center[k] + b.radius <= half, "ball must lie inside the half-box");
}

}  // namespace detail

// Smooth random atom on params.ball: ψ-weighted waves with moments up to d
// removed, scaled so that (a2) holds with equality.
inline GridFunction make_random_atom(const Grid& g, const AtomParams& params, std::uint64_t seed) {
  GridFunction probe(g);
  detail::check_atom_inputs(probe, params);
  detail::require_half_box(g, params.ball);
  constexpr int kAttempts = 6;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Rng rng(attempt == 0 ? seed : derive_seed(seed, 0x9e37u + attempt));
    std::vector<double> psi;
    auto v = detail::random_waves(g, params.ball, rng, psi);
    auto proj = detail::remove_moments(v, psi, g, params.ball, params.d);
    if (!(proj.condition <= 1e12)) continue;
    GridFunction raw(g, v);
    double norm = detail::lebesgue_norm(raw, params.p0, std::nullopt);
    if (!(norm > 0)) continue;
    return raw.scaled(detail::size_bound(g, params) / norm);
  }
  throw GridResolutionError("moment projection stayed degenerate after retries; refine the grid or enlarge the ball");
}

// Random molecule that does not have compact support: an atom-like core plus
// a tail decaying one power faster than the (m2) envelope, with vanishing
// moments over the whole box, scaled so (m1) and (m2) hold.
inline GridFunction make_random_molecule(const Grid& g, const AtomParams& params, std::uint64_t seed) {
  GridFunction probe(g);
  detail::check_atom_inputs(probe, params);
  detail::require_half_box(g, params.ball);
  Rng rng(seed);
  std::vector<double> psi;
  auto v = detail::random_waves(g, params.ball, rng, psi);
  int beta = molecule_decay_exponent(g.dim(), params.d) + 1;
  double freq = rng.uniform(0.5, 2.0), phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double amp = rng.uniform(0.2, 1.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double rho = distance(g.cell_center(i), params.ball.center, g.dim()) / params.ball.radius;
    if (rho < 1.0) continue;
    v[i] += amp * std::pow(1.0 + rho, -beta) * std::cos(freq * rho + phase);
  }
  auto proj = detail::remove_moments(v, psi, g, params.ball, params.d);
  if (!(proj.condition <= 1e12)) throw GridResolutionError("molecule moment projection is degenerate; refine the grid");
  GridFunction raw(g, v);
  double bound = detail::size_bound(g, params);
  double wneg = std::pow(WeightMeasure(params.weight, g).mass(params.ball), -1.0 / params.p);
  Ball twice = params.ball.scaled(2.0);
  double scale = bound / detail::lebesgue_norm(raw, params.p0, twice);
  int e = molecule_decay_exponent(g.dim(), params.d);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (center_in_ball(g, i, twice) || v[i] == 0.0) continue;
    double rho = distance(g.cell_center(i), params.ball.center, g.dim()) / params.ball.radius;
    scale = std::min(scale, wneg * std::pow(1.0 + rho, -e) / std::abs(v[i]));
  }
  return raw.scaled(scale);
}

}  // namespace hardylab
