#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "hardylab/error.hpp"
#include "hardylab/grid.hpp"
#include "hardylab/parallel.hpp"

namespace hardylab {

inline constexpr double kDivergenceThreshold = 1e6;
inline constexpr double kOverflowCap = 1e30;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct PowerTerm {
  double exponent = 0.0;
  Point center{0.0, 0.0};
};

// A weight: |x - c|^a, a product of such factors, or a piecewise-constant
// table (raised to a stored power, so w^s stays cheap to form).
class WeightSpec {
 public:
  enum class Kind { power, tabulated, product };

  static WeightSpec one() { return power(0.0); }

  static WeightSpec power(double a, Point c = {0.0, 0.0}) {
    require(std::isfinite(a), "power exponent must be finite");
    WeightSpec w;
    w.kind_ = Kind::power;
    w.terms_ = {PowerTerm{a, c}};
    return w;
  }

  static WeightSpec product(std::vector<PowerTerm> terms) {
    require(!terms.empty(), "product weight needs at least one factor");
    for (const auto& t : terms) require(std::isfinite(t.exponent), "power exponent must be finite");
    WeightSpec w;
    w.kind_ = Kind::product;
    w.terms_ = std::move(terms);
    return w;
  }

  static WeightSpec tabulated(GridFunction table, std::string source = {}) {
    for (double v : table.values()) require(v > 0, "tabulated weight values must be strictly positive");
    WeightSpec w;
    w.kind_ = Kind::tabulated;
    w.table_ = std::make_shared<const GridFunction>(std::move(table));
    w.source_ = std::move(source);
    return w;
  }

  WeightSpec pow(double s) const {
    require(std::isfinite(s), "weight power must be finite");
    WeightSpec w = *this;
    if (kind_ == Kind::tabulated) {
      w.table_power_ = table_power_ * s;
    } else {
      for (auto& t : w.terms_) t.exponent *= s;
    }
    return w;
  }

  Kind kind() const noexcept { return kind_; }
  const std::vector<PowerTerm>& terms() const noexcept { return terms_; }
  const GridFunction& table() const { return *table_; }
  double table_power() const noexcept { return table_power_; }
  const std::string& source() const noexcept { return source_; }

  bool is_one() const {
    if (kind_ == Kind::tabulated) return table_power_ == 0.0;
    for (const auto& t : terms_)
      if (t.exponent != 0.0) return false;
    return true;
  }

  double table_value(std::size_t i) const {
    double v = (*table_)[i];
    return table_power_ == 1.0 ? v : std::pow(v, table_power_);
  }

  double value(const Point& x, int dim) const {
    if (kind_ == Kind::tabulated) {
      const Grid& tg = table_->grid();
      std::size_t i = tg.axis_index(x[0]);
      if (tg.dim() == 2) i = i * tg.cells_per_axis() + tg.axis_index(x[1]);
      return table_value(i);
    }
    double v = 1.0;
    for (const auto& t : terms_) {
      if (t.exponent == 0.0) continue;
      v *= std::pow(distance(x, t.center, dim), t.exponent);
    }
    return v;
  }

  // Spec-grammar rendering, used for report echoes.
  std::string describe() const {
    auto term_text = [](const PowerTerm& t) {
      std::string s = "power:a=" + format_real(t.exponent);
      if (t.center[0] != 0.0 || t.center[1] != 0.0) {
        s += ",c=" + format_real(t.center[0]);
        if (t.center[1] != 0.0) s += ":" + format_real(t.center[1]);
      }
      return s;
    };
    switch (kind_) {
      case Kind::power:
        if (is_one()) return "one";
        return term_text(terms_[0]);
      case Kind::product: {
        std::string s = "prod:";
        for (std::size_t i = 0; i < terms_.size(); ++i) s += (i ? ";" : "") + term_text(terms_[i]);
        return s;
      }
      case Kind::tabulated: {
        std::string s = "table:" + source_;
        if (table_power_ != 1.0) s += "^" + format_real(table_power_);
        return s;
      }
    }
    return {};
  }

 private:
  WeightSpec() = default;
  Kind kind_ = Kind::power;
  std::vector<PowerTerm> terms_;
  std::shared_ptr<const GridFunction> table_;
  double table_power_ = 1.0;
  std::string source_;
};

// `one` | `power:a=<real>[,c=<real>]` | `table:<path>` | `prod:power:a=..;power:a=..`
// A 2-D center is written c=<x>:<y>.
inline WeightSpec parse_weight_spec(const std::string& text) {
  auto parse_real = [](const std::string& s, const std::string& what) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    require(!s.empty() && end && *end == '\0' && std::isfinite(v), "malformed " + what + " '" + s + "'");
    return v;
  };
  auto parse_term = [&](const std::string& s) {
    require(s.rfind("power:", 0) == 0, "expected 'power:' factor in weight spec, got '" + s + "'");
    PowerTerm t;
    bool has_a = false;
    std::string rest = s.substr(6);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      std::size_t comma = rest.find(',', pos);
      if (comma == std::string::npos) comma = rest.size();
      std::string kv = rest.substr(pos, comma - pos);
      auto eq = kv.find('=');
      require(eq != std::string::npos, "malformed weight parameter '" + kv + "'");
      std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      if (key == "a") {
        t.exponent = parse_real(val, "exponent");
        has_a = true;
      } else if (key == "c") {
        auto colon = val.find(':');
        if (colon == std::string::npos) {
          t.center = {parse_real(val, "center"), 0.0};
        } else {
          t.center = {parse_real(val.substr(0, colon), "center"), parse_real(val.substr(colon + 1), "center")};
        }
      } else {
        throw InvalidArgument("unknown weight parameter '" + key + "'");
      }
      pos = comma + 1;
    }
    require(has_a, "power weight needs a=<exponent>");
    return t;
  };
  if (text == "one") return WeightSpec::one();
  if (text.rfind("power:", 0) == 0) {
    PowerTerm t = parse_term(text);
    return WeightSpec::power(t.exponent, t.center);
  }
  if (text.rfind("table:", 0) == 0) {
    std::string path = text.substr(6);
    require(!path.empty(), "table weight needs a path");
    return WeightSpec::tabulated(read_grid_file(path), path);
  }
  if (text.rfind("prod:", 0) == 0) {
    std::vector<PowerTerm> terms;
    std::string rest = text.substr(5);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      std::size_t semi = rest.find(';', pos);
      if (semi == std::string::npos) semi = rest.size();
      terms.push_back(parse_term(rest.substr(pos, semi - pos)));
      pos = semi + 1;
    }
    return WeightSpec::product(std::move(terms));
  }
  throw InvalidArgument("unknown weight spec '" + text + "'");
}

namespace detail {

// ∫_a^b t^e dt for 0 <= a <= b, written to stay accurate for short intervals.
inline double power_segment_mass(double a, double b, double e) {
  if (b <= a) return 0.0;
  if (e == 0.0) return b - a;
  if (a == 0.0) return e > -1.0 ? std::pow(b, e + 1.0) / (e + 1.0) : kInf;
  double rel = std::log1p((b - a) / a);
  if (e == -1.0) return rel;
  double k = e + 1.0;
  if (k > 0.0) return std::pow(b, k) * -std::expm1(-k * rel) / k;
  return std::pow(a, k) * std::expm1(k * rel) / k;
}

// ∫_lo^hi |t - c|^e dt.
inline double power_interval_mass(double lo, double hi, double c, double e) {
  double t0 = lo - c, t1 = hi - c;
  if (t0 >= 0.0) return power_segment_mass(t0, t1, e);
  if (t1 <= 0.0) return power_segment_mass(-t1, -t0, e);
  return power_segment_mass(0.0, -t0, e) + power_segment_mass(0.0, t1, e);
}

inline double power_interval_inf(double lo, double hi, double c, double e) {
  if (e == 0.0) return 1.0;
  double t0 = lo - c, t1 = hi - c;
  if (e > 0.0) {
    double gap = (t0 <= 0.0 && t1 >= 0.0) ? 0.0 : std::min(std::abs(t0), std::abs(t1));
    return std::pow(gap, e);
  }
  return std::pow(std::max(std::abs(t0), std::abs(t1)), e);
}

inline void check_table_covers(const GridFunction& table, const Grid& g) {
  require(table.grid().dim() == g.dim(), "tabulated weight dimension does not match the grid");
  require(table.grid().half_extent() >= g.half_extent(), "tabulated weight does not cover the grid box");
}

// ∫_0^A ∫_0^B (x² + y²)^{e/2} dy dx in polar form.
inline double corner_rect_integral(double A, double B, double e) {
  if (A <= 0.0 || B <= 0.0) return 0.0;
  if (e <= -2.0) return kInf;
  double k = e + 2.0;
  double theta0 = std::atan2(B, A);
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  auto f1 = [&](double t) { return std::pow(A / std::cos(t), k) / k; };
  auto f2 = [&](double t) { return std::pow(B / std::sin(t), k) / k; };
  return GK::integrate(f1, 0.0, theta0, 12, 1e-14) + GK::integrate(f2, theta0, std::numbers::pi / 2, 12, 1e-14);
}

inline double signed_corner(double X, double Y, double e) {
  double s = (X < 0) != (Y < 0) ? -1.0 : 1.0;
  return s * corner_rect_integral(std::abs(X), std::abs(Y), e);
}

inline constexpr std::array<double, 4> kGaussNodes{-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                                   0.8611363115940526};
inline constexpr std::array<double, 4> kGaussWeights{0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                                     0.3478548451374538};

template <class Fn>
double gauss_rect(Fn&& f, double x0, double x1, double y0, double y1) {
  double hx = 0.5 * (x1 - x0), hy = 0.5 * (y1 - y0);
  double mx = 0.5 * (x0 + x1), my = 0.5 * (y0 + y1);
  double s = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      s += kGaussWeights[i] * kGaussWeights[j] * f(mx + hx * kGaussNodes[i], my + hy * kGaussNodes[j]);
  return s * hx * hy;
}

inline double rect_distance(const Point& c, double x0, double x1, double y0, double y1) {
  double dx = std::max({x0 - c[0], 0.0, c[0] - x1});
  double dy = std::max({y0 - c[1], 0.0, c[1] - y1});
  return std::hypot(dx, dy);
}

inline double power_rect_mass(double x0, double x1, double y0, double y1, const PowerTerm& t) {
  double e = t.exponent;
  if (e == 0.0) return (x1 - x0) * (y1 - y0);
  double side = std::max(x1 - x0, y1 - y0);
  if (rect_distance(t.center, x0, x1, y0, y1) > 8.0 * side) {
    auto f = [&](double x, double y) { return std::pow(std::hypot(x - t.center[0], y - t.center[1]), e); };
    return gauss_rect(f, x0, x1, y0, y1);
  }
  double a0 = x0 - t.center[0], a1 = x1 - t.center[0];
  double b0 = y0 - t.center[1], b1 = y1 - t.center[1];
  bool touches = a0 <= 0 && a1 >= 0 && b0 <= 0 && b1 >= 0;
  if (touches && e <= -2.0) return kInf;
  return signed_corner(a1, b1, e) - signed_corner(a0, b1, e) - signed_corner(a1, b0, e) + signed_corner(a0, b0, e);
}

inline double product_rect_mass(double x0, double x1, double y0, double y1, const std::vector<PowerTerm>& terms,
                                int depth) {
  double side = std::max(x1 - x0, y1 - y0);
  bool near = false;
  for (const auto& t : terms) {
    if (t.exponent >= 0.0) continue;
    double d = rect_distance(t.center, x0, x1, y0, y1);
    if (d == 0.0 && t.exponent <= -2.0) return kInf;
    if (d < 2.0 * side) near = true;
  }
  auto f = [&](double x, double y) {
    double v = 1.0;
    for (const auto& t : terms) v *= std::pow(std::hypot(x - t.center[0], y - t.center[1]), t.exponent);
    return v;
  };
  if (!near || depth >= 8) return gauss_rect(f, x0, x1, y0, y1);
  double mx = 0.5 * (x0 + x1), my = 0.5 * (y0 + y1);
  return product_rect_mass(x0, mx, y0, my, terms, depth + 1) + product_rect_mass(mx, x1, y0, my, terms, depth + 1) +
         product_rect_mass(x0, mx, my, y1, terms, depth + 1) + product_rect_mass(mx, x1, my, y1, terms, depth + 1);
}

}  // namespace detail

// ∫_lo^hi w for a one-dimensional weight; +inf when w is not integrable there.
inline double interval_mass(const WeightSpec& w, double lo, double hi) {
  require(hi >= lo, "interval endpoints out of order");
  if (hi == lo) return 0.0;
  switch (w.kind()) {
    case WeightSpec::Kind::power: {
      const auto& t = w.terms()[0];
      return detail::power_interval_mass(lo, hi, t.center[0], t.exponent);
    }
    case WeightSpec::Kind::product: {
      std::vector<double> cuts{lo, hi};
      for (const auto& t : w.terms()) {
        double c = t.center[0];
        if (c >= lo && c <= hi) {
          if (t.exponent <= -1.0) return kInf;
          if (c > lo && c < hi) cuts.push_back(c);
        }
      }
      std::sort(cuts.begin(), cuts.end());
      auto f = [&](double x) { return w.value(Point{x, 0.0}, 1); };
      boost::math::quadrature::tanh_sinh<double> integrator;
      double total = 0;
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        if (cuts[i + 1] > cuts[i]) total += integrator.integrate(f, cuts[i], cuts[i + 1], 1e-13);
      return total;
    }
    case WeightSpec::Kind::tabulated: {
      const Grid& tg = w.table().grid();
      double R = tg.half_extent(), h = tg.spacing();
      require(lo >= -R && hi <= R, "interval leaves the tabulated weight's box");
      std::size_t i0 = tg.axis_index(lo), i1 = tg.axis_index(hi);
      double total = 0;
      for (std::size_t i = i0; i <= i1; ++i) {
        double a = std::max(lo, -R + static_cast<double>(i) * h);
        double b = std::min(hi, -R + static_cast<double>(i + 1) * h);
        if (b > a) total += w.table_value(i) * (b - a);
      }
      return total;
    }
  }
  return kInf;
}

// ess inf of a one-dimensional weight over [lo, hi].
inline double interval_ess_inf(const WeightSpec& w, double lo, double hi) {
  switch (w.kind()) {
    case WeightSpec::Kind::power: {
      const auto& t = w.terms()[0];
      return detail::power_interval_inf(lo, hi, t.center[0], t.exponent);
    }
    case WeightSpec::Kind::product: {
      for (const auto& t : w.terms())
        if (t.exponent > 0.0 && t.center[0] >= lo && t.center[0] <= hi) return 0.0;
      double m = kInf;
      constexpr int kSamples = 256;
      for (int i = 0; i <= kSamples; ++i) {
        double x = lo + (hi - lo) * i / kSamples;
        m = std::min(m, w.value(Point{x, 0.0}, 1));
      }
      return m;
    }
    case WeightSpec::Kind::tabulated: {
      const Grid& tg = w.table().grid();
      double R = tg.half_extent(), h = tg.spacing();
      std::size_t i0 = tg.axis_index(lo), i1 = tg.axis_index(hi);
      double m = kInf;
      for (std::size_t i = i0; i <= i1; ++i) {
        double a = std::max(lo, -R + static_cast<double>(i) * h);
        double b = std::min(hi, -R + static_cast<double>(i + 1) * h);
        if (b > a || (lo == hi)) m = std::min(m, w.table_value(i));
      }
      return m;
    }
  }
  return 0.0;
}

// Mass of w over each cell of the grid (exact for power weights in 1-D and
// near the singular point in 2-D; Gauss or midpoint rules elsewhere).
inline std::vector<double> cell_masses(const WeightSpec& w, const Grid& g) {
  std::vector<double> m(g.size());
  double h = g.spacing(), R = g.half_extent();
  if (w.kind() == WeightSpec::Kind::tabulated) detail::check_table_covers(w.table(), g);
  if (g.dim() == 1) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      double lo = -R + static_cast<double>(i) * h;
      m[i] = interval_mass(w, lo, lo + h);
    }
    return m;
  }
  std::size_t N = g.cells_per_axis();
  parallel_for(N, [&](std::size_t ix) {
    double x0 = -R + static_cast<double>(ix) * h, x1 = x0 + h;
    for (std::size_t iy = 0; iy < N; ++iy) {
      double y0 = -R + static_cast<double>(iy) * h, y1 = y0 + h;
      std::size_t flat = ix * N + iy;
      switch (w.kind()) {
        case WeightSpec::Kind::power:
          m[flat] = detail::power_rect_mass(x0, x1, y0, y1, w.terms()[0]);
          break;
        case WeightSpec::Kind::product:
          m[flat] = detail::product_rect_mass(x0, x1, y0, y1, w.terms(), 0);
          break;
        case WeightSpec::Kind::tabulated:
          m[flat] = w.value(g.cell_center(flat), 2) * h * h;
          break;
      }
    }
  });
  return m;
}

// ---- ball families ----

// Balls over which characteristics are maximized.
//  n = 1, dyadic(depth): every interval whose endpoints lie on the lattice
//    -R + k 2R/2^depth (this contains all dyadic intervals and their shifts
//    by multiples of the finest side).
//  n = 2, dyadic(depth): circumscribed balls of the dyadic squares down to
//    `depth`, plus copies shifted by (1/3, 0), (0, 1/3), (1/3, 1/3) of the
//    side; balls leaving the box are dropped.
//  listed: an explicit list.
class BallFamily {
 public:
  enum class Kind { lattice, dyadic, listed };

  static BallFamily dyadic(const Grid& g, int depth) {
    require(depth >= 0, "family depth must be nonnegative");
    BallFamily f(g);
    f.depth_ = depth;
    if (g.dim() == 1) {
      require(depth <= 13, "one-dimensional family depth is limited to 13");
      f.kind_ = Kind::lattice;
      return f;
    }
    require(depth <= g.levels(), "family depth exceeds the grid resolution");
    f.kind_ = Kind::dyadic;
    double R = g.half_extent();
    const std::array<std::array<double, 2>, 4> shifts{{{0, 0}, {1.0 / 3, 0}, {0, 1.0 / 3}, {1.0 / 3, 1.0 / 3}}};
    for (int level = 0; level <= depth; ++level) {
      double side = 2 * R * std::ldexp(1.0, -level);
      std::size_t count = std::size_t{1} << level;
      for (const auto& s : shifts)
        for (std::size_t i = 0; i < count; ++i)
          for (std::size_t j = 0; j < count; ++j) {
            Point c{-R + (static_cast<double>(i) + 0.5 + s[0]) * side, -R + (static_cast<double>(j) + 0.5 + s[1]) * side};
            Ball b(c, side / std::numbers::sqrt2);
            if (ball_inside_box(g, b)) f.balls_.push_back(b);
          }
    }
    return f;
  }

  static BallFamily listed(const Grid& g, std::vector<Ball> balls) {
    require(!balls.empty(), "ball family must be nonempty");
    for (const auto& b : balls) require(ball_inside_box(g, b), "family ball leaves the grid box");
    BallFamily f(g);
    f.kind_ = Kind::listed;
    f.balls_ = std::move(balls);
    return f;
  }

  const Grid& grid() const noexcept { return grid_; }
  Kind kind() const noexcept { return kind_; }
  int depth() const noexcept { return depth_; }
  std::size_t lattice_cells() const noexcept { return std::size_t{1} << depth_; }

  std::size_t size() const {
    if (kind_ == Kind::lattice) {
      std::size_t M = lattice_cells();
      return M * (M + 1) / 2;
    }
    return balls_.size();
  }

  const std::vector<Ball>& balls() const noexcept { return balls_; }

  double lattice_node(std::size_t k) const {
    double R = grid_.half_extent();
    return -R + static_cast<double>(k) * (2 * R * std::ldexp(1.0, -depth_));
  }

  Ball lattice_ball(std::size_t a, std::size_t b) const {
    double lo = lattice_node(a), hi = lattice_node(b);
    return Ball(0.5 * (lo + hi), 0.5 * (hi - lo));
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    if (kind_ == Kind::lattice) {
      std::size_t M = lattice_cells();
      for (std::size_t a = 0; a < M; ++a)
        for (std::size_t b = a + 1; b <= M; ++b) fn(lattice_ball(a, b));
      return;
    }
    for (const auto& b : balls_) fn(b);
  }

 private:
  explicit BallFamily(const Grid& g) : grid_(g) {}
  Grid grid_;
  Kind kind_ = Kind::listed;
  int depth_ = 0;
  std::vector<Ball> balls_;
};

// Cells whose centers lie in the closed ball.
inline std::vector<std::size_t> cells_in_ball(const Grid& g, const Ball& b) {
  std::vector<std::size_t> out;
  std::size_t lo0 = g.axis_index(b.center[0] - b.radius), hi0 = g.axis_index(b.center[0] + b.radius);
  if (g.dim() == 1) {
    for (std::size_t i = lo0; i <= hi0; ++i)
      if (center_in_ball(g, i, b)) out.push_back(i);
    return out;
  }
  std::size_t lo1 = g.axis_index(b.center[1] - b.radius), hi1 = g.axis_index(b.center[1] + b.radius);
  std::size_t N = g.cells_per_axis();
  for (std::size_t i = lo0; i <= hi0; ++i)
    for (std::size_t j = lo1; j <= hi1; ++j)
      if (center_in_ball(g, i * N + j, b)) out.push_back(i * N + j);
  return out;
}

// Measure-side data of one ball for a list of weight exponents e: masses of
// w^e, the ball volume and (optionally) ess inf w.
struct BallStats {
  double volume = 0;
  std::array<double, 3> mass{0, 0, 0};
  double ess_inf = 0;
};

struct Characteristic {
  double value = 1.0;
  bool diverged = false;
  std::size_t balls = 0;
  Ball witness{};
  // Balls skipped because a mass underflowed to zero or a subnormal.
  std::size_t unresolved = 0;
  double threshold = kDivergenceThreshold;
  double overflow_cap = kOverflowCap;
};

// Mass of w over a ball: exact intervals in 1-D, sums of cell masses over
// cells with centers in the ball in 2-D (volume = count * h^2 there).
class WeightMeasure {
 public:
  WeightMeasure(const WeightSpec& w, const Grid& g) : w_(w), grid_(g) {
    if (w.kind() == WeightSpec::Kind::tabulated) detail::check_table_covers(w.table(), g);
    if (g.dim() == 2) cells_ = cell_masses(w, g);
  }

  const Grid& grid() const noexcept { return grid_; }
  const WeightSpec& weight() const noexcept { return w_; }

  double mass(const Ball& b) const {
    if (grid_.dim() == 1) return interval_mass(w_, b.center[0] - b.radius, b.center[0] + b.radius);
    double s = 0;
    for (std::size_t i : cells_in_ball(grid_, b)) s += cells_[i];
    return s;
  }

  double volume(const Ball& b) const {
    if (grid_.dim() == 1) return 2.0 * b.radius;
    return static_cast<double>(cells_in_ball(grid_, b).size()) * grid_.cell_volume();
  }

 private:
  WeightSpec w_;
  Grid grid_;
  std::vector<double> cells_;
};

namespace detail {

inline void check_jensen(double q) {
  if (q < 1.0 - 1e-9) throw std::logic_error("characteristic quotient below 1: " + format_real(q));
}

// Supremum over the family of quotient(stats). Exponents list the powers of
// w whose masses the quotient needs.
template <class Quotient>
Characteristic family_supremum(const WeightSpec& w, const BallFamily& fam, const std::vector<double>& exps,
                               bool need_inf, Quotient&& quotient) {
  const Grid& g = fam.grid();
  if (w.kind() == WeightSpec::Kind::tabulated) check_table_covers(w.table(), g);
  std::vector<WeightSpec> powered;
  for (double e : exps) powered.push_back(w.pow(e));
  Characteristic out;
  out.balls = fam.size();

  struct Partial {
    double value = 1.0;
    bool diverged = false;
    Ball witness{};
    std::size_t unresolved = 0;
  };
  const std::size_t used = exps.size();
  auto consider = [used](Partial& part, double q, const BallStats& st, const Ball& b) {
    bool bad = !(q < kInf) || std::isnan(q);
    bool tiny = false;
    for (std::size_t k = 0; k < used; ++k) {
      if (st.mass[k] > kOverflowCap) bad = true;
      if (st.mass[k] < std::numeric_limits<double>::min()) tiny = true;
    }
    if (bad) {
      if (!part.diverged) part.witness = b;
      part.diverged = true;
      return;
    }
    if (tiny) {
      ++part.unresolved;
      return;
    }
    check_jensen(q);
    if (!part.diverged && q > part.value) {
      part.value = q;
      part.witness = b;
    }
  };

  if (fam.kind() == BallFamily::Kind::lattice) {
    std::size_t M = fam.lattice_cells();
    std::vector<std::vector<double>> cell(exps.size(), std::vector<double>(M));
    std::vector<double> cell_inf(need_inf ? M : 0);
    for (std::size_t m = 0; m < M; ++m) {
      double lo = fam.lattice_node(m), hi = fam.lattice_node(m + 1);
      for (std::size_t k = 0; k < exps.size(); ++k) cell[k][m] = interval_mass(powered[k], lo, hi);
      if (need_inf) cell_inf[m] = interval_ess_inf(w, lo, hi);
    }
    double step = fam.lattice_node(1) - fam.lattice_node(0);
    std::vector<Partial> parts(M);
    parallel_for(M, [&](std::size_t a) {
      Partial part;
      BallStats st;
      std::array<double, 3> run{0, 0, 0};
      double run_inf = kInf;
      for (std::size_t b = a + 1; b <= M; ++b) {
        for (std::size_t k = 0; k < exps.size(); ++k) run[k] += cell[k][b - 1];
        if (need_inf) run_inf = std::min(run_inf, cell_inf[b - 1]);
        st.volume = static_cast<double>(b - a) * step;
        st.mass = run;
        st.ess_inf = run_inf;
        double q = quotient(st);
        consider(part, q, st, fam.lattice_ball(a, b));
        if (part.diverged) break;
      }
      parts[a] = part;
    });
    for (const auto& p : parts) {
      out.unresolved += p.unresolved;
      if (p.diverged && !out.diverged) {
        out.diverged = true;
        out.witness = p.witness;
      } else if (!out.diverged && p.value > out.value) {
        out.value = p.value;
        out.witness = p.witness;
      }
    }
    if (out.diverged) out.value = kInf;
    return out;
  }

  const auto& balls = fam.balls();
  std::vector<Partial> parts(balls.size());
  if (g.dim() == 1) {
    parallel_for(balls.size(), [&](std::size_t i) {
      const Ball& b = balls[i];
      double lo = b.center[0] - b.radius, hi = b.center[0] + b.radius;
      BallStats st;
      st.volume = hi - lo;
      for (std::size_t k = 0; k < exps.size(); ++k) st.mass[k] = interval_mass(powered[k], lo, hi);
      if (need_inf) st.ess_inf = interval_ess_inf(w, lo, hi);
      consider(parts[i], quotient(st), st, b);
    });
  } else {
    std::vector<std::vector<double>> cm;
    for (const auto& pw : powered) cm.push_back(cell_masses(pw, g));
    std::vector<double> unit;
    if (need_inf) unit = cell_masses(w, g);
    double vol = g.cell_volume();
    parallel_for(balls.size(), [&](std::size_t i) {
      const Ball& b = balls[i];
      auto cells = cells_in_ball(g, b);
      BallStats st;
      st.volume = static_cast<double>(cells.size()) * vol;
      st.ess_inf = kInf;
      for (std::size_t c : cells) {
        for (std::size_t k = 0; k < exps.size(); ++k) st.mass[k] += cm[k][c];
        if (need_inf) st.ess_inf = std::min(st.ess_inf, unit[c] / vol);
      }
      if (cells.empty()) return;
      consider(parts[i], quotient(st), st, b);
    });
  }
  for (const auto& p : parts) {
    out.unresolved += p.unresolved;
    if (p.diverged && !out.diverged) {
      out.diverged = true;
      out.witness = p.witness;
    } else if (!out.diverged && p.value > out.value) {
      out.value = p.value;
      out.witness = p.witness;
    }
  }
  if (out.diverged) out.value = kInf;
  return out;
}

}  // namespace detail

inline Characteristic ap_characteristic(const WeightSpec& w, double p, const BallFamily& fam) {
  require(p >= 1.0 && std::isfinite(p), "A_p exponent must satisfy p >= 1");
  if (p == 1.0) {
    return detail::family_supremum(w, fam, {1.0}, true, [](const BallStats& s) {
      double avg = s.mass[0] / s.volume;
      return s.ess_inf > 0 ? avg / s.ess_inf : kInf;
    });
  }
  double e = -1.0 / (p - 1.0);
  return detail::family_supremum(w, fam, {1.0, e}, false, [p](const BallStats& s) {
    return (s.mass[0] / s.volume) * std::pow(s.mass[1] / s.volume, p - 1.0);
  });
}

inline Characteristic rh_characteristic(const WeightSpec& w, double s, const BallFamily& fam) {
  require(s > 1.0 && std::isfinite(s), "reverse Hoelder exponent must satisfy s > 1");
  return detail::family_supremum(w, fam, {s, 1.0}, false, [s](const BallStats& st) {
    return std::pow(st.mass[0] / st.volume, 1.0 / s) / (st.mass[1] / st.volume);
  });
}

inline Characteristic apq_characteristic(const WeightSpec& w, double p, double q, const BallFamily& fam) {
  require(p >= 1.0 && std::isfinite(p), "A_{p,q} needs p >= 1");
  require(q >= p && std::isfinite(q), "A_{p,q} needs q >= p");
  if (p == 1.0) {
    return detail::family_supremum(w, fam, {q}, true, [q](const BallStats& s) {
      double avg = std::pow(s.mass[0] / s.volume, 1.0 / q);
      return s.ess_inf > 0 ? avg / s.ess_inf : kInf;
    });
  }
  double pp = p / (p - 1.0);
  return detail::family_supremum(w, fam, {q, -pp}, false, [q, pp](const BallStats& s) {
    return std::pow(s.mass[0] / s.volume, 1.0 / q) * std::pow(s.mass[1] / s.volume, 1.0 / pp);
  });
}

struct CriticalIndices {
  double q_critical = 1.0;
  bool q_exceeds_cap = false;
  double r_critical = kInf;
  bool r_capped = true;
  double p_cap = 16.0;
  double r_cap = 64.0;
  double threshold = kDivergenceThreshold;
  double tolerance = 1e-7;
  int family_depth = 0;

  // r/(r-1), read as 1 when r is capped.
  double r_conjugate() const { return r_capped ? 1.0 : r_critical / (r_critical - 1.0); }
};

inline CriticalIndices critical_indices(const WeightSpec& w, const BallFamily& fam, double p_cap = 16.0,
                                        double r_cap = 64.0) {
  require(p_cap > 1.0 && r_cap > 1.0, "caps must exceed 1");
  CriticalIndices out;
  out.p_cap = p_cap;
  out.r_cap = r_cap;
  out.family_depth = fam.depth();
  auto good_p = [&](double p) { return ap_characteristic(w, p, fam).value < kDivergenceThreshold; };
  auto good_s = [&](double s) { return rh_characteristic(w, s, fam).value < kDivergenceThreshold; };
  const double tol = out.tolerance;

  if (good_p(1.0)) {
    out.q_critical = 1.0;
  } else if (!good_p(p_cap)) {
    out.q_critical = p_cap;
    out.q_exceeds_cap = true;
  } else {
    double lo = 1.0, hi = p_cap;
    while (hi - lo > tol) {
      double mid = 0.5 * (lo + hi);
      (good_p(mid) ? hi : lo) = mid;
    }
    out.q_critical = hi;
  }

  if (good_s(r_cap)) {
    out.r_critical = kInf;
    out.r_capped = true;
  } else {
    out.r_capped = false;
    double lo = 1.0, hi = r_cap;
    while (hi - lo > tol) {
      double mid = 0.5 * (lo + hi);
      (good_s(mid) ? lo : hi) = mid;
    }
    out.r_critical = lo;
  }
  return out;
}

inline CriticalIndices critical_indices(const WeightSpec& w, const Grid& g, int family_depth, double p_cap = 16.0,
                                        double r_cap = 64.0) {
  return critical_indices(w, BallFamily::dyadic(g, family_depth), p_cap, r_cap);
}

struct WeightProfile {
  std::map<double, Characteristic> ap_char;
  std::map<double, Characteristic> rh_char;
  CriticalIndices indices;
  int family_depth = 0;
};

inline WeightProfile weight_profile(const WeightSpec& w, const BallFamily& fam, const std::vector<double>& p_samples,
                                    const std::vector<double>& s_samples, double p_cap = 16.0, double r_cap = 64.0) {
  WeightProfile prof;
  prof.family_depth = fam.depth();
  for (double p : p_samples) prof.ap_char[p] = ap_characteristic(w, p, fam);
  for (double s : s_samples) prof.rh_char[s] = rh_characteristic(w, s, fam);
  prof.indices = critical_indices(w, fam, p_cap, r_cap);
  return prof;
}

struct DoublingReport {
  double max_ratio = 0;
  double bound = 0;
  double ap_char = 1;
  bool pass = false;
  std::size_t balls_used = 0;
  std::size_t skipped = 0;
  Ball witness{};
};

// max over family balls B (with lambda B inside the box) of w(lambda B)/w(B),
// against lambda^{np} [w]_{A_p} over the same family.
inline DoublingReport doubling_gap(const WeightSpec& w, double p, double lambda, const BallFamily& fam) {
  require(lambda > 1.0, "dilation factor must exceed 1");
  const Grid& g = fam.grid();
  WeightMeasure mu(w, g);
  DoublingReport rep;
  fam.for_each([&](const Ball& b) {
    Ball big = b.scaled(lambda);
    if (!ball_inside_box(g, big)) {
      ++rep.skipped;
      return;
    }
    double small = mu.mass(b);
    if (!(small > 0)) {
      ++rep.skipped;
      return;
    }
    ++rep.balls_used;
    double r = mu.mass(big) / small;
    if (r > rep.max_ratio) {
      rep.max_ratio = r;
      rep.witness = b;
    }
  });
  Characteristic c = ap_characteristic(w, p, fam);
  rep.ap_char = c.value;
  rep.bound = std::pow(lambda, g.dim() * p) * c.value;
  rep.pass = rep.max_ratio <= rep.bound * (1 + 1e-12);
  return rep;
}

struct Lemma6Report {
  double max_lhs_over_rhs = 0;
  double rh_bound = 0;
  bool pass = false;
};

// max over B of [w^p(B)]^{-1/p} [w^q(B)]^{1/q} / |B|^{-alpha/n}, against
// [w^p]_{RH_{q/p}}^{1/p} over the same family.
inline Lemma6Report lemma6_gap(const WeightSpec& w, double p, double q, double alpha, const BallFamily& fam) {
  int n = fam.grid().dim();
  require(alpha > 0 && alpha < n, "alpha must lie in (0, n)");
  require(p > 0 && p < n / alpha, "need 0 < p < n/alpha");
  double expected = 1.0 / p - alpha / n;
  require(std::abs(1.0 / q - expected) <= 1e-12 * std::max(1.0, expected), "exponents must satisfy 1/q = 1/p - alpha/n");
  Lemma6Report rep;
  WeightMeasure mp(w.pow(p), fam.grid()), mq(w.pow(q), fam.grid());
  double best = 0;
  fam.for_each([&](const Ball& b) {
    double v = std::pow(mp.mass(b), -1.0 / p) * std::pow(mq.mass(b), 1.0 / q) * std::pow(mp.volume(b), alpha / n);
    if (v > best) best = v;
  });
  rep.max_lhs_over_rhs = best;
  Characteristic rh = rh_characteristic(w.pow(p), q / p, fam);
  rep.rh_bound = rh.diverged ? kInf : std::pow(rh.value, 1.0 / p);
  rep.pass = best <= rep.rh_bound * (1 + 1e-10) + 1e-12;
  return rep;
}

}  // namespace hardylab
