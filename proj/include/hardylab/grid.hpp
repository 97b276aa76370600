#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "hardylab/error.hpp"

namespace hardylab {

// Points carry two coordinates; only the first `dim` are meaningful.
using Point = std::array<double, 2>;
using MultiIndex = std::array<int, 2>;

class Grid {
 public:
  Grid(int dim, double half_extent, std::size_t cells_per_axis)
      : dim_(dim), half_extent_(half_extent), cells_(cells_per_axis) {
    require(dim == 1 || dim == 2, "grid dimension must be 1 or 2");
    require(std::isfinite(half_extent) && half_extent > 0, "grid half extent must be positive");
    require(cells_per_axis >= 2 && (cells_per_axis & (cells_per_axis - 1)) == 0,
            "cells per axis must be a power of two >= 2");
    spacing_ = 2.0 * half_extent / static_cast<double>(cells_per_axis);
    levels_ = 0;
    while ((std::size_t{1} << levels_) < cells_per_axis) ++levels_;
  }

  int dim() const noexcept { return dim_; }
  double half_extent() const noexcept { return half_extent_; }
  std::size_t cells_per_axis() const noexcept { return cells_; }
  double spacing() const noexcept { return spacing_; }
  // log2 of cells_per_axis.
  int levels() const noexcept { return levels_; }
  std::size_t size() const noexcept { return dim_ == 1 ? cells_ : cells_ * cells_; }
  double cell_volume() const noexcept { return dim_ == 1 ? spacing_ : spacing_ * spacing_; }

  double coordinate(std::size_t i) const noexcept {
    return -half_extent_ + (static_cast<double>(i) + 0.5) * spacing_;
  }

  // Flat index i0 * N + i1 for n = 2 (row-major, first axis slowest).
  Point cell_center(std::size_t flat) const noexcept {
    if (dim_ == 1) return {coordinate(flat), 0.0};
    return {coordinate(flat / cells_), coordinate(flat % cells_)};
  }

  // Index of the cell containing coordinate x along one axis, clamped.
  std::size_t axis_index(double x) const noexcept {
    double t = std::floor((x + half_extent_) / spacing_);
    if (t < 0) return 0;
    if (t >= static_cast<double>(cells_)) return cells_ - 1;
    return static_cast<std::size_t>(t);
  }

  bool operator==(const Grid& o) const noexcept {
    return dim_ == o.dim_ && half_extent_ == o.half_extent_ && cells_ == o.cells_;
  }
  bool operator!=(const Grid& o) const noexcept { return !(*this == o); }

  Grid refined() const { return Grid(dim_, half_extent_, cells_ * 2); }
  Grid coarsened() const { return Grid(dim_, half_extent_, cells_ / 2); }

 private:
  int dim_;
  double half_extent_;
  std::size_t cells_;
  double spacing_ = 0;
  int levels_ = 0;
};

struct Ball {
  Point center{0.0, 0.0};
  double radius = 1.0;

  Ball() = default;
  Ball(Point c, double r) : center(c), radius(r) {
    require(std::isfinite(r) && r > 0, "ball radius must be positive");
    require(std::isfinite(c[0]) && std::isfinite(c[1]), "ball center must be finite");
  }
  Ball(double c, double r) : Ball(Point{c, 0.0}, r) {}

  Ball scaled(double c) const { return Ball(center, c * radius); }
};

inline double ball_lebesgue_measure(const Ball& b, int n) {
  require(b.radius > 0, "ball radius must be positive");
  require(n == 1 || n == 2, "dimension must be 1 or 2");
  return n == 1 ? 2.0 * b.radius : std::numbers::pi * b.radius * b.radius;
}

inline double distance(const Point& a, const Point& b, int dim) {
  double dx = a[0] - b[0];
  if (dim == 1) return std::abs(dx);
  double dy = a[1] - b[1];
  return std::hypot(dx, dy);
}

inline bool ball_inside_box(const Grid& g, const Ball& b) {
  double R = g.half_extent();
  for (int k = 0; k < g.dim(); ++k)
    if (b.center[k] - b.radius < -R || b.center[k] + b.radius > R) return false;
  return true;
}

// Cell center lies in the closed ball.
inline bool center_in_ball(const Grid& g, std::size_t flat, const Ball& b) {
  return distance(g.cell_center(flat), b.center, g.dim()) <= b.radius;
}

// The closed cell meets the closed ball (cells straddling the sphere count).
inline bool cell_meets_ball(const Grid& g, std::size_t flat, const Ball& b) {
  Point c = g.cell_center(flat);
  double half = 0.5 * g.spacing();
  double acc = 0;
  for (int k = 0; k < g.dim(); ++k) {
    double gap = std::abs(c[k] - b.center[k]) - half;
    if (gap > 0) acc += gap * gap;
  }
  return std::sqrt(acc) <= b.radius;
}

// Dyadic cube of the grid's tree: level j has side 2R * 2^-j; index k counts
// cubes from the lower box corner along each axis.
struct DyadicCube {
  int level = 0;
  std::array<std::int64_t, 2> index{0, 0};

  double side(const Grid& g) const { return 2.0 * g.half_extent() * std::ldexp(1.0, -level); }
  double lower(const Grid& g, int axis) const {
    return -g.half_extent() + static_cast<double>(index[axis]) * side(g);
  }
  double center(const Grid& g, int axis) const { return lower(g, axis) + 0.5 * side(g); }

  bool operator==(const DyadicCube& o) const { return level == o.level && index == o.index; }
};

// a contains b (a == b included). Exact integer arithmetic.
inline bool cube_contains(const DyadicCube& a, const DyadicCube& b, int dim) {
  if (a.level > b.level) return false;
  int shift = b.level - a.level;
  for (int k = 0; k < dim; ++k)
    if ((b.index[k] >> shift) != a.index[k]) return false;
  return true;
}

inline bool cubes_overlap(const DyadicCube& a, const DyadicCube& b, int dim) {
  return cube_contains(a, b, dim) || cube_contains(b, a, dim);
}

class GridFunction {
 public:
  explicit GridFunction(const Grid& g) : grid_(g), values_(g.size(), 0.0) {}
  GridFunction(const Grid& g, std::vector<double> values) : grid_(g), values_(std::move(values)) {
    require(values_.size() == grid_.size(), "value count must equal N^n");
    for (double v : values_) require(std::isfinite(v), "grid function values must be finite");
  }

  template <class Fn>
  static GridFunction sample(const Grid& g, Fn&& fn) {
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(g.cell_center(i));
    return GridFunction(g, std::move(v));
  }

  const Grid& grid() const noexcept { return grid_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  GridFunction scaled(double c) const {
    GridFunction out(*this);
    for (double& v : out.values_) v *= c;
    return out;
  }

 private:
  Grid grid_;
  std::vector<double> values_;
};

inline bool is_zero(const GridFunction& f) {
  for (double v : f.values())
    if (v != 0.0) return false;
  return true;
}

// Midpoint value of  ∫ (x - center)^alpha f(x) dx.
inline double moment_about(const GridFunction& f, MultiIndex alpha, const Point& center) {
  const Grid& g = f.grid();
  require(alpha[0] >= 0 && alpha[1] >= 0, "multi-index entries must be nonnegative");
  require(alpha[0] + alpha[1] <= 12, "moment order must not exceed 12");
  require(g.dim() == 2 || alpha[1] == 0, "second index must be 0 in one dimension");
  double sum = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double v = f[i];
    if (v == 0.0) continue;
    Point x = g.cell_center(i);
    double term = v;
    for (int k = 0; k < g.dim(); ++k)
      for (int e = 0; e < alpha[k]; ++e) term *= x[k] - center[k];
    sum += term;
  }
  return sum * g.cell_volume();
}

inline double moment(const GridFunction& f, MultiIndex alpha) {
  return moment_about(f, alpha, Point{0.0, 0.0});
}

// All multi-indices with |alpha| <= d, ordered by total degree.
inline std::vector<MultiIndex> multi_indices(int dim, int d) {
  std::vector<MultiIndex> out;
  for (int total = 0; total <= d; ++total) {
    if (dim == 1) {
      out.push_back({total, 0});
    } else {
      for (int a = total; a >= 0; --a) out.push_back({a, total - a});
    }
  }
  return out;
}

// Unweighted discrete L^p norm (p = +inf gives the max).
inline double lp_norm(const GridFunction& f, double p) {
  require(p > 0, "exponent must be positive");
  if (std::isinf(p)) {
    double m = 0;
    for (double v : f.values()) m = std::max(m, std::abs(v));
    return m;
  }
  double s = 0;
  for (double v : f.values()) s += std::pow(std::abs(v), p);
  return std::pow(s * f.grid().cell_volume(), 1.0 / p);
}

// ---- hardylab-grid v1 text format ----

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string grid_header(const Grid& g) {
  return "#hardylab-grid v1 n=" + std::to_string(g.dim()) + " N=" + std::to_string(g.cells_per_axis()) +
         " R=" + format_real(g.half_extent());
}

inline std::string to_grid_text(const GridFunction& f) {
  const Grid& g = f.grid();
  std::string out = grid_header(g) + "\n";
  std::size_t row = g.dim() == 1 ? g.size() : g.cells_per_axis();
  for (std::size_t i = 0; i < f.size(); ++i) {
    out += format_real(f[i]);
    out += ((i + 1) % row == 0) ? "\n" : ",";
  }
  return out;
}

inline Grid parse_grid_header(const std::string& line) {
  std::istringstream in(line);
  std::string tag, version;
  in >> tag >> version;
  require(tag == "#hardylab-grid" && version == "v1", "not a hardylab-grid v1 header");
  int n = 0;
  long long N = 0;
  double R = 0;
  bool has_n = false, has_N = false, has_R = false;
  std::string field;
  while (in >> field) {
    auto eq = field.find('=');
    require(eq != std::string::npos, "malformed grid header field '" + field + "'");
    std::string key = field.substr(0, eq), val = field.substr(eq + 1);
    char* end = nullptr;
    if (key == "n") {
      n = static_cast<int>(std::strtol(val.c_str(), &end, 10));
      has_n = true;
    } else if (key == "N") {
      N = std::strtoll(val.c_str(), &end, 10);
      has_N = true;
    } else if (key == "R") {
      R = std::strtod(val.c_str(), &end);
      has_R = true;
    } else {
      throw InvalidArgument("unknown grid header field '" + key + "'");
    }
    require(end != nullptr && *end == '\0' && !val.empty(), "malformed value in grid header field '" + key + "'");
  }
  require(has_n && has_N && has_R, "grid header needs n, N and R");
  require(N > 0, "grid header N must be positive");
  return Grid(n, R, static_cast<std::size_t>(N));
}

// Parses comma/newline separated reals.
inline std::vector<double> parse_real_list(const std::string& body) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t next = body.find_first_of(",\n\r", pos);
    if (next == std::string::npos) next = body.size();
    std::string tok = body.substr(pos, next - pos);
    std::size_t a = tok.find_first_not_of(" \t");
    if (a != std::string::npos) {
      std::size_t b = tok.find_last_not_of(" \t");
      tok = tok.substr(a, b - a + 1);
      char* end = nullptr;
      double v = std::strtod(tok.c_str(), &end);
      require(end != nullptr && *end == '\0', "malformed number '" + tok + "'");
      out.push_back(v);
    }
    pos = next + 1;
  }
  return out;
}

inline GridFunction parse_grid_text(const std::string& text) {
  std::size_t eol = text.find('\n');
  std::string header = text.substr(0, eol);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  Grid g = parse_grid_header(header);
  std::vector<double> values = eol == std::string::npos ? std::vector<double>{} : parse_real_list(text.substr(eol + 1));
  require(values.size() == g.size(), "grid file has " + std::to_string(values.size()) + " values, expected " +
                                         std::to_string(g.size()));
  return GridFunction(g, std::move(values));
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline GridFunction read_grid_file(const std::string& path) { return parse_grid_text(read_text_file(path)); }

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write '" + path + "'");
  out << text;
}

inline void write_grid_file(const std::string& path, const GridFunction& f) { write_text_file(path, to_grid_text(f)); }

}  // namespace hardylab
