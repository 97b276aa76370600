#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "hardylab/grid.hpp"
#include "hardylab/weights.hpp"

namespace hardylab {

struct Measured {
  double value = 0;
  bool diverged = false;
};

// (Σ |f_i|^p w(cell_i))^{1/p} over cells whose centers lie in `region`,
// with precomputed cell masses of w.
inline Measured weighted_lp_norm(const GridFunction& f, double p, const std::vector<double>& masses,
                                 const std::optional<Ball>& region = std::nullopt) {
  require(p > 0 && std::isfinite(p), "norm exponent must be positive");
  require(masses.size() == f.size(), "cell mass count does not match the grid");
  const Grid& g = f.grid();
  Measured out;
  double sum = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (region && !center_in_ball(g, i, *region)) continue;
    if (!(masses[i] < kInf)) {
      out.diverged = true;
      continue;
    }
    double v = std::abs(f[i]);
    if (v != 0.0) sum += std::pow(v, p) * masses[i];
  }
  out.value = out.diverged ? kInf : std::pow(sum, 1.0 / p);
  return out;
}

inline Measured weighted_lp_norm(const GridFunction& f, double p, const WeightSpec& w,
                                 const std::optional<Ball>& region = std::nullopt) {
  return weighted_lp_norm(f, p, cell_masses(w, f.grid()), region);
}

}  // namespace hardylab
