#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "hardylab/atoms.hpp"
#include "hardylab/error.hpp"
#include "hardylab/grid.hpp"
#include "hardylab/maximal.hpp"
#include "hardylab/parallel.hpp"
#include "hardylab/weights.hpp"
#include "hardylab/whitney.hpp"

namespace hardylab {

// O_j = {M_phi f > 2^j} for j in [j_min, j_max], as open cell unions.
struct LevelSetFamily {
  double base = 2.0;
  int j_min = 0;
  int j_max = -1;
  std::map<int, IntervalSet> sets;
  std::vector<double> maximal;

  bool empty() const { return j_max < j_min; }
};

inline LevelSetFamily level_sets(const GridFunction& f, const MaximalConfig& cfg = {}) {
  require(f.grid().dim() == 1, "level sets are implemented for n = 1");
  LevelSetFamily fam;
  GridFunction m = smooth_maximal(f, cfg).values;
  fam.maximal = m.values();
  double lo = kInf, hi = 0;
  for (double v : fam.maximal)
    if (v > 0) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi == 0) return fam;
  fam.j_min = static_cast<int>(std::floor(std::log2(lo)));
  fam.j_max = static_cast<int>(std::ceil(std::log2(hi)));
  std::vector<bool> mask(m.size());
  for (int j = fam.j_min; j <= fam.j_max; ++j) {
    double level = std::ldexp(1.0, j);
    for (std::size_t i = 0; i < m.size(); ++i) mask[i] = m[i] > level;
    fam.sets.emplace(j, interval_set_from_cells(mask));
  }
  return fam;
}

inline MaximalConfig nontangential_config() {
  MaximalConfig cfg;
  cfg.aperture = 1.0;
  return cfg;
}

struct DecompositionConfig {
  // Level sets use the nontangential smooth maximal function.
  MaximalConfig maximal = nontangential_config();
  // Q* is the cube dilated by this factor about its center.
  double dilation = 9.0 / 8.0;
  // Smallest Whitney cube, in cells; 0 picks max(4, 2(d + 1)) rounded up
  // to a power of two.
  int min_cube_cells = 0;
  ValidationTolerances tolerances{1e-8, 1e-8, 1e-8};
  std::vector<double> reconstruction_exponents{2.0, 4.0};
  double reconstruction_tolerance = 1e-6;
};

struct DecompositionEntry {
  int j = 0;
  std::size_t k = 0;
  // The bottom term g^{j_lo}, which is not one of the A_k^j.
  bool remainder = false;
  double lambda = 0;
  Ball ball{};
  // Atom values on cells [first_cell, first_cell + values.size()).
  std::size_t first_cell = 0;
  std::vector<double> values;
  // sup|A| / 2^j, lambda / (2^j w(B)^{1/p}) and the c1 of B ⊂ c1 Q.
  double height = 0;
  double coefficient_ratio = 0;
  double containment = 0;
  ValidationReport validation;

  GridFunction atom(const Grid& g) const {
    std::vector<double> v(g.size(), 0.0);
    std::copy(values.begin(), values.end(), v.begin() + static_cast<std::ptrdiff_t>(first_cell));
    return GridFunction(g, std::move(v));
  }
};

struct AtomicDecomposition {
  Grid grid{1, 1.0, 2};
  AtomParams params;
  double dilation = 9.0 / 8.0;
  int min_cube_cells = 4;
  int j_lo = 0;
  int j_hi = -1;
  std::vector<DecompositionEntry> entries;
  std::map<double, double> reconstruction_error;
  bool reconstruction_ok = true;
  double coefficient_mass_p = 0;
  double hardy_norm_p = 0;
  double mass_ratio = 0;
  double height_constant = 0;
  double coefficient_constant = 0;
  double containment_constant = 0;
  // max_i |{k : Q_k^{j*} meets Q_i^{j+1*}}|
  std::size_t max_overlap = 0;
  double support_outside_mass = 0;
  // Pieces with sup|A| below 1e-9 of their summands are set to zero.
  std::size_t dropped_pieces = 0;
  std::size_t atoms_failed = 0;
  bool all_atoms_pass = true;

  GridFunction reconstruct() const {
    std::vector<double> v(grid.size(), 0.0);
    for (const auto& e : entries)
      for (std::size_t t = 0; t < e.values.size(); ++t) v[e.first_cell + t] += e.lambda * e.values[t];
    return GridFunction(grid, std::move(v));
  }
};

namespace detail {

inline double smooth_step(double tau) {
  if (tau <= 0) return 0;
  if (tau >= 1) return 1;
  double a = std::exp(-1.0 / tau), b = std::exp(-1.0 / (1.0 - tau));
  return a / (a + b);
}

struct LevelPiece {
  DyadicCube cube;
  std::int64_t lo = 0, hi = 0;       // Q in cells [lo, hi)
  double star_lo = 0, star_hi = 0;   // Q* in cell units
  std::size_t first = 0;             // window of supp ζ
  std::vector<double> zeta;
  std::vector<double> b;             // (f - P) ζ
  double center = 0, scale = 1;      // u = (x - center) / scale
  Eigen::MatrixXd gram;
};

struct Level {
  int j = 0;
  std::vector<LevelPiece> pieces;
};

inline double local_power(const LevelPiece& pc, const Grid& g, std::size_t cell, int a) {
  return std::pow((g.coordinate(cell) - pc.center) / pc.scale, a);
}

inline Level build_level(const GridFunction& f, int j, const IntervalSet& set, int finest, double dilation, int d) {
  const Grid& g = f.grid();
  Level lev;
  lev.j = j;
  auto cover = whitney(set, finest);
  if (cover.cubes.empty()) return lev;
  std::size_t N = g.cells_per_axis();
  std::vector<bool> inside(N, false);
  for (const auto& q : cover.cubes)
    for (std::int64_t u = cover.unit_lo(q); u < cover.unit_hi(q); ++u) inside[static_cast<std::size_t>(u)] = true;

  std::vector<std::vector<double>> eta(cover.cubes.size());
  std::vector<double> total(N, 0.0);
  lev.pieces.resize(cover.cubes.size());
  for (std::size_t k = 0; k < cover.cubes.size(); ++k) {
    LevelPiece& pc = lev.pieces[k];
    pc.cube = cover.cubes[k];
    pc.lo = cover.unit_lo(pc.cube);
    pc.hi = cover.unit_hi(pc.cube);
    double side = static_cast<double>(pc.hi - pc.lo);
    double ext = 0.5 * (dilation - 1.0) * side;
    pc.star_lo = static_cast<double>(pc.lo) - ext;
    pc.star_hi = static_cast<double>(pc.hi) + ext;
    auto first = static_cast<std::int64_t>(std::ceil(pc.star_lo - 0.5));
    auto last = static_cast<std::int64_t>(std::floor(pc.star_hi - 0.5));
    first = std::max<std::int64_t>(first, 0);
    last = std::min<std::int64_t>(last, static_cast<std::int64_t>(N) - 1);
    pc.first = static_cast<std::size_t>(first);
    eta[k].assign(static_cast<std::size_t>(last - first + 1), 0.0);
    for (std::int64_t c = first; c <= last; ++c) {
      if (!inside[static_cast<std::size_t>(c)]) continue;
      double x = static_cast<double>(c) + 0.5;
      double gap = std::max({0.0, static_cast<double>(pc.lo) - x, x - static_cast<double>(pc.hi)});
      double e = gap == 0.0 ? 1.0 : (ext > 0 ? smooth_step(1.0 - gap / ext) : 0.0);
      eta[k][static_cast<std::size_t>(c - first)] = e;
      total[static_cast<std::size_t>(c)] += e;
    }
    pc.center = -g.half_extent() + 0.5 * static_cast<double>(pc.lo + pc.hi) * g.spacing();
    pc.scale = 0.5 * side * g.spacing();
  }

  for (std::size_t k = 0; k < lev.pieces.size(); ++k) {
    LevelPiece& pc = lev.pieces[k];
    pc.zeta = eta[k];
    for (std::size_t t = 0; t < pc.zeta.size(); ++t)
      if (pc.zeta[t] != 0.0) pc.zeta[t] /= total[pc.first + t];
    pc.gram = Eigen::MatrixXd::Zero(d + 1, d + 1);
    for (std::size_t t = 0; t < pc.zeta.size(); ++t) {
      if (pc.zeta[t] == 0.0) continue;
      for (int a = 0; a <= d; ++a)
        for (int c = 0; c <= d; ++c) pc.gram(a, c) += pc.zeta[t] * local_power(pc, g, pc.first + t, a + c);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(pc.gram);
    const auto& sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > 0 && sv(0) / sv(sv.size() - 1) <= 1e12))
      throw GridResolutionError("refine grid: Whitney cube too small for degree-" + std::to_string(d) +
                                " moment projection");
    // b = (f - P) ζ with P the ζ-weighted projection of f; the second pass
    // removes rounding left by the first.
    pc.b.assign(pc.zeta.size(), 0.0);
    for (std::size_t t = 0; t < pc.zeta.size(); ++t) pc.b[t] = f[pc.first + t] * pc.zeta[t];
    auto solver = pc.gram.colPivHouseholderQr();
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(d + 1);
      for (std::size_t t = 0; t < pc.zeta.size(); ++t)
        for (int a = 0; a <= d; ++a) r(a) += pc.b[t] * local_power(pc, g, pc.first + t, a);
      Eigen::VectorXd c = solver.solve(r);
      for (std::size_t t = 0; t < pc.zeta.size(); ++t) {
        if (pc.zeta[t] == 0.0) continue;
        double p = 0;
        for (int a = 0; a <= d; ++a) p += c(a) * local_power(pc, g, pc.first + t, a);
        pc.b[t] -= p * pc.zeta[t];
      }
    }
  }
  return lev;
}

inline bool stars_meet(const LevelPiece& a, const LevelPiece& b) {
  return a.star_lo <= b.star_hi && b.star_lo <= a.star_hi;
}

inline void add_window(std::vector<double>& acc, std::size_t acc_first, const std::vector<double>& v,
                       std::size_t v_first, double sign) {
  for (std::size_t t = 0; t < v.size(); ++t) acc[v_first + t - acc_first] += sign * v[t];
}

inline double window_norm(const std::vector<double>& v, double p0, double h) {
  double acc = 0;
  for (double x : v) {
    double a = std::abs(x);
    if (std::isinf(p0)) {
      acc = std::max(acc, a);
    } else if (a != 0.0) {
      acc += std::pow(a, p0);
    }
  }
  return std::isinf(p0) ? acc : std::pow(acc * h, 1.0 / p0);
}

struct RawPiece {
  int j = 0;
  std::size_t k = 0;
  bool remainder = false;
  std::size_t first = 0;
  std::vector<double> values;
  double lo = 0, hi = 0;          // hull of the admissible support, cell units
  double cube_lo = 0, cube_hi = 0;
  double outside_mass = 0;
  double dropped_sup = 0;
};

inline constexpr double kCancellationFloor = 1e-9;

// A_k^j = b_k^j - Σ_{i ∈ E_k^j} (b_i^{j+1} ζ_k^j - P_{i,k} ζ_i^{j+1}), where
// P_{i,k} is the ζ_i-weighted projection of b_i^{j+1} ζ_k^j.
inline std::vector<RawPiece> level_pieces(const Grid& g, const Level& cur, const Level& next, int d,
                                          std::size_t& overlap) {
  std::vector<RawPiece> out;
  std::vector<std::size_t> degree(next.pieces.size(), 0);
  for (std::size_t k = 0; k < cur.pieces.size(); ++k) {
    const LevelPiece& pk = cur.pieces[k];
    std::vector<std::size_t> E;
    for (std::size_t i = 0; i < next.pieces.size(); ++i)
      if (stars_meet(pk, next.pieces[i])) {
        E.push_back(i);
        ++degree[i];
      }
    RawPiece rp;
    rp.j = cur.j;
    rp.k = k;
    rp.cube_lo = static_cast<double>(pk.lo);
    rp.cube_hi = static_cast<double>(pk.hi);
    rp.lo = pk.star_lo;
    rp.hi = pk.star_hi;
    std::size_t first = pk.first, last = pk.first + pk.zeta.size();
    for (std::size_t i : E) {
      const LevelPiece& pi = next.pieces[i];
      first = std::min(first, pi.first);
      last = std::max(last, pi.first + pi.zeta.size());
      rp.lo = std::min(rp.lo, pi.star_lo);
      rp.hi = std::max(rp.hi, pi.star_hi);
    }
    std::vector<double> A(last - first, 0.0);
    add_window(A, first, pk.b, pk.first, 1.0);
    double scale = 0;
    for (double v : pk.b) scale = std::max(scale, std::abs(v));
    for (std::size_t i : E) {
      const LevelPiece& pi = next.pieces[i];
      std::vector<double> term(pi.zeta.size(), 0.0);
      for (std::size_t t = 0; t < pi.zeta.size(); ++t) {
        std::size_t cell = pi.first + t;
        if (cell >= pk.first && cell < pk.first + pk.zeta.size()) term[t] = pi.b[t] * pk.zeta[cell - pk.first];
      }
      // ζ_i-weighted moments of term / ζ_i are the plain moments of term.
      Eigen::VectorXd r = Eigen::VectorXd::Zero(d + 1);
      for (std::size_t t = 0; t < term.size(); ++t)
        if (term[t] != 0.0)
          for (int a = 0; a <= d; ++a) r(a) += term[t] * local_power(pi, g, pi.first + t, a);
      Eigen::VectorXd c = pi.gram.colPivHouseholderQr().solve(r);
      for (std::size_t t = 0; t < term.size(); ++t) {
        if (pi.zeta[t] == 0.0) continue;
        double p = 0;
        for (int a = 0; a <= d; ++a) p += c(a) * local_power(pi, g, pi.first + t, a);
        term[t] -= p * pi.zeta[t];
      }
      for (double v : term) scale = std::max(scale, std::abs(v));
      add_window(A, first, term, pi.first, -1.0);
    }
    // Cubes shared by both levels leave only rounding noise.
    double sup = 0;
    for (double v : A) sup = std::max(sup, std::abs(v));
    if (sup <= kCancellationFloor * scale) {
      rp.dropped_sup = sup;
      std::fill(A.begin(), A.end(), 0.0);
    }
    for (std::size_t t = 0; t < A.size(); ++t) {
      if (A[t] == 0.0) continue;
      double x = static_cast<double>(first + t) + 0.5;
      bool covered = x >= pk.star_lo && x <= pk.star_hi;
      for (std::size_t i : E) covered = covered || (x >= next.pieces[i].star_lo && x <= next.pieces[i].star_hi);
      if (!covered) rp.outside_mass += std::abs(A[t]) * g.spacing();
    }
    rp.first = first;
    rp.values = std::move(A);
    out.push_back(std::move(rp));
  }
  for (std::size_t c : degree) overlap = std::max(overlap, c);
  return out;
}

inline int default_min_cube_cells(int d) {
  int c = 4;
  while (c < 2 * (d + 1)) c *= 2;
  return c;
}

}  // namespace detail

// Calderón-Zygmund atomic decomposition of a 1-D grid function whose
// moments up to degree params.d vanish. params.ball is ignored.
inline AtomicDecomposition decompose(const GridFunction& f, const AtomParams& params, const CriticalIndices& ci,
                                     const DecompositionConfig& cfg = {}) {
  const Grid& g = f.grid();
  require(g.dim() == 1, "the atomic decomposition is implemented for n = 1");
  require(params.p > 0 && params.p <= 1.0, "p must lie in (0, 1]");
  require(params.p0 > 1.0, "p0 must exceed 1");
  require(params.d >= 0 && params.d <= 12, "d must lie in [0, 12]");
  require(cfg.dilation > 1.0 && cfg.dilation < 2.0, "dilation must lie in (1, 2)");
  auto adm = check_parameters(params, ci, 1);
  require(adm.pass, "parameters are not admissible for this weight");

  AtomicDecomposition out;
  out.grid = g;
  out.params = params;
  out.dilation = cfg.dilation;
  int min_cells = cfg.min_cube_cells > 0 ? cfg.min_cube_cells : detail::default_min_cube_cells(params.d);
  require((min_cells & (min_cells - 1)) == 0, "min_cube_cells must be a power of two");
  out.min_cube_cells = min_cells;
  if (min_cells < 4 || min_cells < params.d + 2)
    throw GridResolutionError("refine grid: Whitney cubes need at least max(4, d + 2) cells");
  int finest = g.levels() - static_cast<int>(std::lround(std::log2(min_cells)));
  if (finest < 2) throw GridResolutionError("refine grid: too few cells for the Whitney cover");
  for (auto& r : cfg.reconstruction_exponents) out.reconstruction_error[r] = 0.0;
  if (is_zero(f)) return out;

  double l1 = lp_norm(f, 1.0), R = g.half_extent();
  for (int k = 0; k <= params.d; ++k)
    require(std::abs(moment(f, {k, 0})) <= cfg.tolerances.moment * l1 * std::pow(R, k),
            "f must have vanishing moments up to degree d");

  LevelSetFamily ls = level_sets(f, cfg.maximal);
  int j_lo = ls.j_max + 1;
  for (int j = ls.j_min; j <= ls.j_max; ++j)
    if (!ls.sets.at(j).touches_boundary()) {
      j_lo = j;
      break;
    }
  if (j_lo > ls.j_max) throw GridResolutionError("refine grid: every level set reaches the box boundary");

  int count = ls.j_max - j_lo + 1;
  std::vector<detail::Level> levels(static_cast<std::size_t>(count));
  parallel_for(levels.size(), [&](std::size_t t) {
    int j = j_lo + static_cast<int>(t);
    levels[t] = detail::build_level(f, j, ls.sets.at(j), finest, cfg.dilation, params.d);
  });
  while (!levels.empty() && levels.back().pieces.empty()) levels.pop_back();
  if (levels.empty() || levels.front().pieces.empty())
    throw GridResolutionError("refine grid: no level set holds a Whitney cube of the minimal size");
  out.j_lo = j_lo;
  out.j_hi = levels.back().j;
  detail::Level empty_level;
  empty_level.j = out.j_hi + 1;

  std::vector<std::vector<detail::RawPiece>> raw(levels.size());
  std::vector<std::size_t> overlaps(levels.size(), 0);
  parallel_for(levels.size(), [&](std::size_t t) {
    const detail::Level& next = t + 1 < levels.size() ? levels[t + 1] : empty_level;
    raw[t] = detail::level_pieces(g, levels[t], next, params.d, overlaps[t]);
  });

  // g^{j_lo} = f - Σ_k b_k^{j_lo}.
  detail::RawPiece rem;
  rem.j = j_lo - 1;
  rem.remainder = true;
  {
    std::vector<double> v = f.values();
    for (const auto& pc : levels.front().pieces)
      for (std::size_t t = 0; t < pc.b.size(); ++t) v[pc.first + t] -= pc.b[t];
    std::size_t a = v.size(), b = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] != 0.0) {
        a = std::min(a, i);
        b = i + 1;
      }
    if (a < b) {
      rem.first = a;
      rem.values.assign(v.begin() + static_cast<std::ptrdiff_t>(a), v.begin() + static_cast<std::ptrdiff_t>(b));
      rem.lo = rem.cube_lo = static_cast<double>(a);
      rem.hi = rem.cube_hi = static_cast<double>(b);
    }
  }

  std::vector<detail::RawPiece> all;
  if (!rem.values.empty()) all.push_back(std::move(rem));
  for (auto& lv : raw)
    for (auto& rp : lv) all.push_back(std::move(rp));
  for (std::size_t c : overlaps) out.max_overlap = std::max(out.max_overlap, c);

  WeightMeasure wm(params.weight, g);
  double h = g.spacing();
  std::vector<DecompositionEntry> entries(all.size());
  std::vector<char> keep(all.size(), 0);
  parallel_for(all.size(), [&](std::size_t t) {
    const detail::RawPiece& rp = all[t];
    double norm = detail::window_norm(rp.values, params.p0, h);
    if (!(norm > 0)) return;
    DecompositionEntry e;
    e.j = rp.j;
    e.k = rp.k;
    e.remainder = rp.remainder;
    double lo = -R + rp.lo * h, hi = -R + rp.hi * h;
    e.ball = Ball(0.5 * (lo + hi), std::max(0.5 * (hi - lo), h));
    AtomParams ap = params;
    ap.ball = e.ball;
    double bound = detail::size_bound(g, ap);
    e.lambda = norm / bound;
    e.first_cell = rp.first;
    e.values = rp.values;
    for (double& v : e.values) v /= e.lambda;
    double sup = 0;
    for (double v : rp.values) sup = std::max(sup, std::abs(v));
    double two_j = std::ldexp(1.0, rp.remainder ? rp.j + 1 : rp.j);
    e.height = sup / two_j;
    e.coefficient_ratio = e.lambda / (two_j * std::pow(wm.mass(e.ball), 1.0 / params.p));
    double qc = -R + 0.5 * (rp.cube_lo + rp.cube_hi) * h, qh = 0.5 * (rp.cube_hi - rp.cube_lo) * h;
    e.containment = std::max(std::abs(hi - qc), std::abs(qc - lo)) / qh;
    e.validation = validate_atom(e.atom(g), ap, cfg.tolerances);
    entries[t] = std::move(e);
    keep[t] = 1;
  });
  for (std::size_t t = 0; t < all.size(); ++t) {
    out.support_outside_mass += all[t].outside_mass;
    if (all[t].dropped_sup > 0) ++out.dropped_pieces;
    if (!keep[t]) continue;
    const auto& e = entries[t];
    out.coefficient_mass_p += std::pow(e.lambda, params.p);
    if (!e.remainder) {
      out.height_constant = std::max(out.height_constant, e.height);
      out.coefficient_constant = std::max(out.coefficient_constant, e.coefficient_ratio);
      out.containment_constant = std::max(out.containment_constant, e.containment);
    }
    if (!e.validation.pass) ++out.atoms_failed;
    out.entries.push_back(std::move(entries[t]));
  }
  out.all_atoms_pass = out.atoms_failed == 0;

  GridFunction rec = out.reconstruct();
  std::vector<double> diff(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) diff[i] = f[i] - rec[i];
  GridFunction dfun(g, std::move(diff));
  for (auto& [s, err] : out.reconstruction_error) {
    err = lp_norm(dfun, s) / lp_norm(f, s);
    if (!(err <= cfg.reconstruction_tolerance)) out.reconstruction_ok = false;
  }
  out.hardy_norm_p = std::pow(hardy_norm(f, params.weight, params.p, cfg.maximal).value, params.p);
  out.mass_ratio = out.coefficient_mass_p / out.hardy_norm_p;
  return out;
}

inline AtomicDecomposition decompose(const GridFunction& f, const AtomParams& params,
                                     const DecompositionConfig& cfg = {}) {
  int depth = std::min(f.grid().levels(), 10);
  return decompose(f, params, critical_indices(params.weight, f.grid(), depth), cfg);
}

}  // namespace hardylab
