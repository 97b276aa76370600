#pragma once

#include <algorithm>
#include <climits>
#include <cmath>
#include <vector>

#include "hardylab/error.hpp"
#include "hardylab/fft.hpp"
#include "hardylab/grid.hpp"
#include "hardylab/norms.hpp"
#include "hardylab/parallel.hpp"
#include "hardylab/weights.hpp"

namespace hardylab {

enum class BumpProfile { exp_cutoff, plateau };

inline constexpr int kAutoScale = INT_MIN;

struct MaximalConfig {
  // Family for the Hardy-Littlewood and fractional operators; -1 means the
  // grid resolution (every grid-aligned interval in 1-D).
  int family_depth = -1;
  // Dyadic scales t = 2^k for the smooth maximal function; kAutoScale
  // selects [ceil(log2 h), floor(log2 2R)].
  int k_min = kAutoScale;
  int k_max = kAutoScale;
  BumpProfile bump = BumpProfile::exp_cutoff;
  // Restricts the Hardy-Littlewood/fractional family to balls with |B| at
  // least this large; 0 keeps everything.
  double min_ball_volume = 0.0;
  // Nontangential aperture a for the smooth maximal function:
  // sup over |y - x| < a t of |phi_t * f(y)| (a square window in 2-D).
  // 0 gives the radial function.
  double aperture = 0.0;
};

inline double bump_value(BumpProfile profile, double r) {
  if (r >= 1.0) return 0.0;
  if (profile == BumpProfile::exp_cutoff) return std::exp(-1.0 / (1.0 - r * r));
  if (r <= 0.5) return 1.0;
  double tau = (1.0 - r) / 0.5;
  double a = std::exp(-1.0 / tau), b = std::exp(-1.0 / (1.0 - tau));
  return tau >= 1.0 ? 1.0 : a / (a + b);
}

namespace detail {

// out[i] = max of v over [i - w, i + w] along one axis of a row-major
// array, via a monotone deque.
inline void sliding_max_axis(std::vector<double>& v, std::size_t N, int dim, int axis, std::size_t w) {
  std::size_t lines = dim == 1 ? 1 : N;
  std::size_t stride = dim == 2 && axis == 0 ? N : 1;
  std::vector<double> line(N), out(N);
  std::vector<std::size_t> dq(N);
  for (std::size_t l = 0; l < lines; ++l) {
    std::size_t base = dim == 1 ? 0 : (axis == 0 ? l : l * N);
    for (std::size_t i = 0; i < N; ++i) line[i] = v[base + i * stride];
    std::size_t head = 0, tail = 0, next = 0;
    for (std::size_t i = 0; i < N; ++i) {
      std::size_t hi = std::min(N - 1, i + w);
      for (; next <= hi; ++next) {
        while (tail > head && line[dq[tail - 1]] <= line[next]) --tail;
        dq[tail++] = next;
      }
      while (dq[head] + w < i) ++head;
      out[i] = line[dq[head]];
    }
    for (std::size_t i = 0; i < N; ++i) v[base + i * stride] = out[i];
  }
}

inline int resolved_depth(const MaximalConfig& cfg, const Grid& g) {
  int d = cfg.family_depth < 0 ? g.levels() : cfg.family_depth;
  return std::min(d, g.levels());
}

// Shared engine for the 1-D Hardy-Littlewood (alpha = 0) and fractional
// maximal functions over all intervals with endpoints on the depth-D lattice.
inline GridFunction lattice_maximal_1d(const GridFunction& f, double alpha, const MaximalConfig& cfg) {
  const Grid& g = f.grid();
  int depth = resolved_depth(cfg, g);
  std::size_t M = std::size_t{1} << depth;
  std::size_t per = g.size() / M;
  double step = 2.0 * g.half_extent() / static_cast<double>(M);
  std::vector<double> cell(M, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) cell[i / per] += std::abs(f[i]) * g.spacing();

  constexpr std::size_t kChunks = 64;
  std::size_t chunks = std::min(kChunks, M);
  std::vector<std::vector<double>> local(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    std::vector<double> best(M, 0.0);
    std::vector<double> value(M + 1);
    for (std::size_t a = M * c / chunks; a < M * (c + 1) / chunks; ++a) {
      double run = 0;
      for (std::size_t b = a + 1; b <= M; ++b) {
        run += cell[b - 1];
        double vol = static_cast<double>(b - a) * step;
        value[b] = vol < cfg.min_ball_volume ? 0.0 : run * std::pow(vol, alpha - 1.0);
      }
      double suffix = 0;
      for (std::size_t l = M; l-- > a;) {
        suffix = std::max(suffix, value[l + 1]);
        best[l] = std::max(best[l], suffix);
      }
    }
    local[c] = std::move(best);
  });
  std::vector<double> lat(M, 0.0);
  for (const auto& b : local)
    for (std::size_t l = 0; l < M; ++l) lat[l] = std::max(lat[l], b[l]);
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = lat[i / per];
  return GridFunction(g, std::move(out));
}

inline GridFunction ball_family_maximal_2d(const GridFunction& f, double alpha, const MaximalConfig& cfg) {
  const Grid& g = f.grid();
  BallFamily fam = BallFamily::dyadic(g, resolved_depth(cfg, g));
  const auto& balls = fam.balls();
  std::vector<double> avg(balls.size());
  std::vector<std::vector<std::size_t>> members(balls.size());
  double vol = g.cell_volume();
  parallel_for(balls.size(), [&](std::size_t k) {
    members[k] = cells_in_ball(g, balls[k]);
    double s = 0;
    for (std::size_t i : members[k]) s += std::abs(f[i]);
    double measure = static_cast<double>(members[k].size()) * vol;
    avg[k] = members[k].empty() || measure < cfg.min_ball_volume ? 0.0 : s * vol * std::pow(measure, alpha / 2.0 - 1.0);
  });
  // The inscribed ball of each finest cell keeps corner cells covered.
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    out[i] = vol < cfg.min_ball_volume ? 0.0 : std::abs(f[i]) * std::pow(vol, alpha / 2.0);
  for (std::size_t k = 0; k < balls.size(); ++k)
    for (std::size_t i : members[k]) out[i] = std::max(out[i], avg[k]);
  return GridFunction(g, std::move(out));
}

}  // namespace detail

inline GridFunction hl_maximal(const GridFunction& f, const MaximalConfig& cfg = {}) {
  if (f.grid().dim() == 1) return detail::lattice_maximal_1d(f, 0.0, cfg);
  return detail::ball_family_maximal_2d(f, 0.0, cfg);
}

inline GridFunction fractional_maximal(const GridFunction& f, double alpha, const MaximalConfig& cfg = {}) {
  int n = f.grid().dim();
  require(alpha > 0 && alpha < n, "fractional order must lie in (0, n)");
  if (n == 1) return detail::lattice_maximal_1d(f, alpha, cfg);
  return detail::ball_family_maximal_2d(f, alpha, cfg);
}

struct SmoothMaximal {
  GridFunction values;
  int k_min = 0;
  int k_max = 0;
  bool clipped = false;
};

struct ScaleRange {
  int k_min = 0;
  int k_max = 0;
  bool clipped = false;
};

inline ScaleRange resolve_scales(const MaximalConfig& cfg, const Grid& g) {
  int lo = static_cast<int>(std::ceil(std::log2(g.spacing()) - 1e-12));
  int hi = static_cast<int>(std::floor(std::log2(2.0 * g.half_extent()) + 1e-12));
  ScaleRange r{lo, hi, false};
  if (cfg.k_min != kAutoScale) {
    r.k_min = cfg.k_min;
    if (r.k_min < lo) {
      r.k_min = lo;
      r.clipped = true;
    }
  }
  if (cfg.k_max != kAutoScale) {
    r.k_max = cfg.k_max;
    if (r.k_max > hi) {
      r.k_max = hi;
      r.clipped = true;
    }
  }
  if (cfg.k_min != kAutoScale && cfg.k_max != kAutoScale)
    require(cfg.k_min < cfg.k_max, "scale range needs k_min < k_max");
  require(r.k_min <= r.k_max, "scale range is empty after clipping to the grid");
  return r;
}

// M_phi f = max over dyadic t of |phi_t * f|, phi_t sampled on the grid and
// normalized to unit discrete sum (so at t = h it is the identity).
inline SmoothMaximal smooth_maximal(const GridFunction& f, const MaximalConfig& cfg = {}) {
  const Grid& g = f.grid();
  ScaleRange sr = resolve_scales(cfg, g);
  require(cfg.aperture >= 0 && std::isfinite(cfg.aperture), "aperture must be finite and nonnegative");
  std::size_t N = g.cells_per_axis();
  std::size_t P = 2 * N;
  double h = g.spacing();
  int n = g.dim();
  std::vector<double> padded(n == 1 ? P : P * P, 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (n == 1) {
      padded[i] = f[i];
    } else {
      padded[(i / N) * P + (i % N)] = f[i];
    }
  }
  auto F = n == 1 ? fft::forward(padded, P) : fft::forward(padded, P, P);

  int scales = sr.k_max - sr.k_min + 1;
  std::vector<std::vector<double>> per_scale(scales);
  parallel_for(static_cast<std::size_t>(scales), [&](std::size_t s) {
    double t = std::ldexp(1.0, sr.k_min + static_cast<int>(s));
    long W = static_cast<long>(std::ceil(t / h));
    std::vector<double> kern(padded.size(), 0.0);
    double total = 0;
    auto wrap = [P](long m) { return static_cast<std::size_t>((m % static_cast<long>(P) + static_cast<long>(P)) % static_cast<long>(P)); };
    if (n == 1) {
      for (long m = -W; m <= W; ++m) {
        double v = bump_value(cfg.bump, std::abs(static_cast<double>(m)) * h / t);
        if (v == 0.0) continue;
        kern[wrap(m)] += v;
        total += v;
      }
    } else {
      for (long a = -W; a <= W; ++a)
        for (long b = -W; b <= W; ++b) {
          double v = bump_value(cfg.bump, std::hypot(static_cast<double>(a), static_cast<double>(b)) * h / t);
          if (v == 0.0) continue;
          kern[wrap(a) * P + wrap(b)] += v;
          total += v;
        }
    }
    for (double& v : kern) v /= total;
    auto K = n == 1 ? fft::forward(kern, P) : fft::forward(kern, P, P);
    for (std::size_t k = 0; k < K.size(); ++k) K[k] *= F[k];
    auto conv = n == 1 ? fft::inverse(K, P) : fft::inverse(K, P, P);
    std::vector<double> vals(f.size());
    for (std::size_t i = 0; i < f.size(); ++i)
      vals[i] = std::abs(n == 1 ? conv[i] : conv[(i / N) * P + (i % N)]);
    if (cfg.aperture > 0) {
      auto w = static_cast<std::size_t>(std::floor(cfg.aperture * t / h));
      for (int axis = 0; axis < n; ++axis) detail::sliding_max_axis(vals, N, n, axis, w);
    }
    per_scale[s] = std::move(vals);
  });
  std::vector<double> out(f.size(), 0.0);
  for (const auto& v : per_scale)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], v[i]);
  if (is_zero(f)) std::fill(out.begin(), out.end(), 0.0);
  return SmoothMaximal{GridFunction(g, std::move(out)), sr.k_min, sr.k_max, sr.clipped};
}

// Discrete H^p_w quasi-norm: the weighted L^p norm of M_phi f.
inline Measured hardy_norm(const GridFunction& f, const std::vector<double>& weight_cell_masses, double p,
                           const MaximalConfig& cfg = {}) {
  require(p > 0, "exponent must be positive");
  return weighted_lp_norm(smooth_maximal(f, cfg).values, p, weight_cell_masses);
}

inline Measured hardy_norm(const GridFunction& f, const WeightSpec& w, double p, const MaximalConfig& cfg = {}) {
  return hardy_norm(f, cell_masses(w, f.grid()), p, cfg);
}

}  // namespace hardylab
