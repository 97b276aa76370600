#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hardylab/atoms.hpp"
#include "hardylab/error.hpp"
#include "hardylab/fft.hpp"
#include "hardylab/grid.hpp"
#include "hardylab/maximal.hpp"
#include "hardylab/parallel.hpp"

namespace hardylab {

enum class OperatorKind { identity, hilbert, riesz, riesz_potential, truncated_kernel };
// periodic_multiplier treats the box itself as one period (no padding).
enum class OperatorMethod { multiplier, quadrature, periodic_multiplier };

struct OperatorSpec {
  OperatorKind kind = OperatorKind::hilbert;
  OperatorMethod method = OperatorMethod::multiplier;
  int axis = 0;
  double alpha = 0.5;
  // Ω sampled on S^{n-1}: {Ω(-1), Ω(1)} in 1-D, equispaced angles from 0 in 2-D.
  std::vector<double> omega;
  // Quadrature truncation radius; 0 selects 2h.
  double epsilon = 0.0;
  // Adds the first-order p.v. contribution of |y| < epsilon (Hilbert, Riesz).
  bool near_correction = true;

  static OperatorSpec identity() {
    OperatorSpec s;
    s.kind = OperatorKind::identity;
    return s;
  }
  static OperatorSpec hilbert(OperatorMethod m = OperatorMethod::multiplier) {
    OperatorSpec s;
    s.method = m;
    return s;
  }
  static OperatorSpec riesz(int axis, OperatorMethod m = OperatorMethod::multiplier) {
    OperatorSpec s;
    s.kind = OperatorKind::riesz;
    s.axis = axis;
    s.method = m;
    return s;
  }
  static OperatorSpec riesz_potential(double alpha) {
    OperatorSpec s;
    s.kind = OperatorKind::riesz_potential;
    s.alpha = alpha;
    s.method = OperatorMethod::quadrature;
    return s;
  }
  static OperatorSpec truncated_kernel(std::vector<double> omega, double epsilon) {
    OperatorSpec s;
    s.kind = OperatorKind::truncated_kernel;
    s.omega = std::move(omega);
    s.epsilon = epsilon;
    s.method = OperatorMethod::quadrature;
    return s;
  }

  // Smoothing order: alpha for the Riesz potential, 0 otherwise.
  double order() const { return kind == OperatorKind::riesz_potential ? alpha : 0.0; }

  std::string describe() const {
    switch (kind) {
      case OperatorKind::identity: return "identity";
      case OperatorKind::hilbert: return "hilbert";
      case OperatorKind::riesz: return "riesz:" + std::to_string(axis);
      case OperatorKind::riesz_potential: return "ialpha:" + format_real(alpha);
      case OperatorKind::truncated_kernel: return "kernel";
    }
    return "unknown";
  }
};

struct OperatorResult {
  GridFunction values;
  double epsilon = 0;
  bool epsilon_clipped = false;
};

namespace detail {

inline std::vector<double> pad_1d(const GridFunction& f) {
  std::vector<double> v(2 * f.size(), 0.0);
  std::copy(f.values().begin(), f.values().end(), v.begin());
  return v;
}

inline std::vector<double> pad_2d(const GridFunction& f) {
  std::size_t N = f.grid().cells_per_axis(), P = 2 * N;
  std::vector<double> v(P * P, 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) v[(i / N) * P + (i % N)] = f[i];
  return v;
}

inline GridFunction crop(const Grid& g, const std::vector<double>& padded) {
  std::size_t N = g.cells_per_axis(), P = 2 * N;
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g.dim() == 1 ? padded[i] : padded[(i / N) * P + (i % N)];
  return GridFunction(g, std::move(out));
}

// Convolution of f with a kernel tabulated at lattice offsets m h (index m
// mod P per axis) on the zero-padded doubled box.
inline GridFunction lattice_convolution(const GridFunction& f, const std::vector<double>& kernel) {
  const Grid& g = f.grid();
  std::size_t P = 2 * g.cells_per_axis();
  std::size_t n1 = g.dim() == 1 ? 0 : P;
  auto F = fft::forward(g.dim() == 1 ? pad_1d(f) : pad_2d(f), P, n1);
  auto K = fft::forward(kernel, P, n1);
  for (std::size_t k = 0; k < F.size(); ++k) F[k] *= K[k];
  return crop(g, fft::inverse(F, P, n1));
}

inline long wrap_offset(std::size_t idx, std::size_t P) { return fft::signed_frequency(idx, P); }

// -i sgn(k) on a real transform of length n; the Nyquist bin is zeroed.
inline void apply_sign_multiplier(std::vector<fft::Complex>& F, std::size_t n) {
  for (std::size_t k = 0; k < F.size(); ++k) {
    long s = fft::signed_frequency(k, n);
    if (k == 0 || (n % 2 == 0 && k == n / 2)) {
      F[k] = 0.0;
    } else {
      F[k] *= fft::Complex(0.0, s > 0 ? -1.0 : 1.0);
    }
  }
}

// Line Hilbert transform from the periodic multiplier on the doubled box
// plus the smooth kernel 1/(pi t) - cot(pi t / L)/L that undoes the
// periodization (L = 4R).
inline GridFunction hilbert_multiplier(const GridFunction& f) {
  const Grid& g = f.grid();
  std::size_t P = 2 * g.size();
  auto F = fft::forward(pad_1d(f), P);
  apply_sign_multiplier(F, P);
  GridFunction periodic = crop(g, fft::inverse(F, P));
  double L = 4.0 * g.half_extent(), h = g.spacing();
  std::vector<double> kern(P, 0.0);
  for (std::size_t k = 0; k < P; ++k) {
    long m = wrap_offset(k, P);
    if (m == 0) continue;
    double t = static_cast<double>(m) * h;
    kern[k] = h * (1.0 / (std::numbers::pi * t) - 1.0 / (L * std::tan(std::numbers::pi * t / L)));
  }
  GridFunction corr = lattice_convolution(f, kern);
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = periodic[i] + corr[i];
  return GridFunction(g, std::move(out));
}

inline GridFunction hilbert_periodic(const GridFunction& f) {
  const Grid& g = f.grid();
  auto F = fft::forward(f.values(), g.size());
  apply_sign_multiplier(F, g.size());
  return GridFunction(g, fft::inverse(F, g.size()));
}

inline double central_derivative(const GridFunction& f, std::size_t i) {
  double h = f.grid().spacing();
  std::size_t n = f.size();
  double left = i > 0 ? f[i - 1] : 0.0, right = i + 1 < n ? f[i + 1] : 0.0;
  return (right - left) / (2.0 * h);
}

// (1/pi) Σ_{|i-j| > m} f_j / (i - j), m = floor(eps / h), plus -(2a/pi) f'
// for the excluded p.v. part |t| < a = (m + 1/2) h.
inline GridFunction hilbert_quadrature(const GridFunction& f, double eps, bool near_correction) {
  const Grid& g = f.grid();
  long m = static_cast<long>(std::floor(eps / g.spacing() + 1e-12));
  std::vector<double> out(g.size(), 0.0);
  std::vector<std::size_t> support;
  for (std::size_t j = 0; j < f.size(); ++j)
    if (f[j] != 0.0) support.push_back(j);
  parallel_for(g.size(), [&](std::size_t i) {
    double acc = 0;
    for (std::size_t j : support) {
      long d = static_cast<long>(i) - static_cast<long>(j);
      if (d > m || d < -m) acc += f[j] / static_cast<double>(d);
    }
    acc /= std::numbers::pi;
    if (near_correction) acc -= 2.0 * (static_cast<double>(m) + 0.5) * g.spacing() * central_derivative(f, i) / std::numbers::pi;
    out[i] = acc;
  });
  return GridFunction(g, std::move(out));
}

inline GridFunction riesz_multiplier(const GridFunction& f, int axis) {
  const Grid& g = f.grid();
  std::size_t P = 2 * g.cells_per_axis(), H = P / 2 + 1;
  auto F = fft::forward(pad_2d(f), P, P);
  for (std::size_t k0 = 0; k0 < P; ++k0)
    for (std::size_t k1 = 0; k1 < H; ++k1) {
      auto& c = F[k0 * H + k1];
      long x0 = fft::signed_frequency(k0, P), x1 = static_cast<long>(k1);
      if ((x0 == 0 && x1 == 0) || k0 == P / 2 || k1 == P / 2) {
        c = 0.0;
        continue;
      }
      double xi = axis == 0 ? static_cast<double>(x0) : static_cast<double>(x1);
      c *= fft::Complex(0.0, -xi / std::hypot(static_cast<double>(x0), static_cast<double>(x1)));
    }
  return crop(g, fft::inverse(F, P, P));
}

// Trigonometric interpolant of equispaced samples on the circle.
class CircleInterpolant {
 public:
  explicit CircleInterpolant(const std::vector<double>& samples) : M_(samples.size()) {
    auto c = fft::forward(samples, M_);
    coeff_.assign(c.begin(), c.end());
  }
  double operator()(double theta) const {
    double acc = coeff_[0].real();
    for (std::size_t k = 1; k < coeff_.size(); ++k) {
      double w = (M_ % 2 == 0 && k == M_ / 2) ? 1.0 : 2.0;
      acc += w * (coeff_[k] * std::polar(1.0, static_cast<double>(k) * theta)).real();
    }
    return acc / static_cast<double>(M_);
  }

 private:
  std::size_t M_;
  std::vector<fft::Complex> coeff_;
};

inline void check_cancellation(const std::vector<double>& omega, int dim) {
  require(dim == 1 ? omega.size() == 2 : omega.size() >= 4, "kernel needs 2 samples in 1-D and at least 4 in 2-D");
  double mean = 0, peak = 0;
  for (double v : omega) {
    require(std::isfinite(v), "kernel samples must be finite");
    mean += v;
    peak = std::max(peak, std::abs(v));
  }
  mean /= static_cast<double>(omega.size());
  require(std::abs(mean) <= 1e-12 * std::max(peak, 1e-300), "kernel angular part must have zero mean");
}

// Σ_{|t| > eps} K(t) f(x - t) h^2 with K(t) = kernel(t0, t1).
template <class Kernel>
GridFunction truncated_sum_2d(const GridFunction& f, double eps, Kernel&& kernel) {
  const Grid& g = f.grid();
  std::size_t P = 2 * g.cells_per_axis();
  double h = g.spacing();
  std::vector<double> kern(P * P, 0.0);
  for (std::size_t a = 0; a < P; ++a)
    for (std::size_t b = 0; b < P; ++b) {
      double t0 = static_cast<double>(wrap_offset(a, P)) * h, t1 = static_cast<double>(wrap_offset(b, P)) * h;
      if (std::hypot(t0, t1) <= eps) continue;
      kern[a * P + b] = kernel(t0, t1) * h * h;
    }
  return lattice_convolution(f, kern);
}

// ∫_{cell} |y|^{alpha - 2} dy over the square centered at the origin.
inline double self_cell_integral_2d(double alpha, double h) {
  auto sec_pow = [alpha](double th) { return std::pow(1.0 / std::cos(th), alpha); };
  double angular = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(sec_pow, 0.0, std::numbers::pi / 4);
  return 8.0 / alpha * std::pow(0.5 * h, alpha) * angular;
}

// Tensor Gauss-Legendre integral of fn over the cell of side h centered at (c0, c1).
template <class Fn>
double cell_integral_2d(Fn&& fn, double c0, double c1, double h) {
  using Rule = boost::math::quadrature::gauss<double, 10>;
  return Rule::integrate(
      [&](double u) { return Rule::integrate([&](double v) { return fn(u, v); }, c1 - 0.5 * h, c1 + 0.5 * h); },
      c0 - 0.5 * h, c0 + 0.5 * h);
}

// Cells this close to the origin (in cells, max norm) get a full cell integral.
inline constexpr long kNearCells = 8;

// ∫_E t_j^2 / |t|^3 dt over the excluded cells E = {|m h| <= eps}.
inline double excluded_gradient_weight(double eps, double h, int axis) {
  long M = static_cast<long>(std::ceil(eps / h)) + 1;
  double acc = 2.0 * h * std::log(1.0 + std::sqrt(2.0));
  for (long a = -M; a <= M; ++a)
    for (long b = -M; b <= M; ++b) {
      double t0 = static_cast<double>(a) * h, t1 = static_cast<double>(b) * h;
      if ((a == 0 && b == 0) || std::hypot(t0, t1) > eps) continue;
      acc += cell_integral_2d(
          [axis](double u, double v) {
            double r = std::hypot(u, v), t = axis == 0 ? u : v;
            return t * t / (r * r * r);
          },
          t0, t1, h);
    }
  return acc;
}

inline double partial_derivative_2d(const GridFunction& f, std::size_t i, int axis) {
  std::size_t N = f.grid().cells_per_axis();
  std::size_t i0 = i / N, i1 = i % N;
  std::size_t pos = axis == 0 ? i0 : i1, stride = axis == 0 ? N : 1;
  double left = pos > 0 ? f[i - stride] : 0.0, right = pos + 1 < N ? f[i + stride] : 0.0;
  return (right - left) / (2.0 * f.grid().spacing());
}

inline double signed_power_antiderivative(double t, double alpha) {
  return (t < 0 ? -1.0 : 1.0) * std::pow(std::abs(t), alpha) / alpha;
}

}  // namespace detail

// I_alpha f = ∫ f(y) |x - y|^{alpha - n} dy. 1-D integrates the kernel
// exactly on each cell (f piecewise constant); 2-D uses the midpoint rule
// with cell integrals near the singularity.
inline GridFunction riesz_potential(const GridFunction& f, double alpha) {
  const Grid& g = f.grid();
  int n = g.dim();
  require(alpha > 0 && alpha < n, "alpha must lie in (0, n)");
  std::size_t P = 2 * g.cells_per_axis();
  double h = g.spacing();
  if (n == 1) {
    std::vector<double> kern(P, 0.0);
    for (std::size_t k = 0; k < P; ++k) {
      double m = static_cast<double>(detail::wrap_offset(k, P));
      kern[k] = detail::signed_power_antiderivative((m + 0.5) * h, alpha) -
                detail::signed_power_antiderivative((m - 0.5) * h, alpha);
    }
    return detail::lattice_convolution(f, kern);
  }
  std::vector<double> kern(P * P, 0.0);
  for (std::size_t a = 0; a < P; ++a)
    for (std::size_t b = 0; b < P; ++b) {
      double t0 = static_cast<double>(detail::wrap_offset(a, P)) * h;
      double t1 = static_cast<double>(detail::wrap_offset(b, P)) * h;
      long m0 = detail::wrap_offset(a, P), m1 = detail::wrap_offset(b, P);
      if (m0 == 0 && m1 == 0) {
        kern[a * P + b] = detail::self_cell_integral_2d(alpha, h);
      } else if (std::max(std::abs(m0), std::abs(m1)) <= detail::kNearCells) {
        kern[a * P + b] = detail::cell_integral_2d(
            [alpha](double u, double v) { return std::pow(std::hypot(u, v), alpha - 2.0); }, t0, t1, h);
      } else {
        kern[a * P + b] = std::pow(std::hypot(t0, t1), alpha - 2.0) * h * h;
      }
    }
  return detail::lattice_convolution(f, kern);
}

// I_alpha f at an arbitrary point (1-D exact cellwise rule, O(N)).
inline double riesz_potential_at(const GridFunction& f, double alpha, double x) {
  const Grid& g = f.grid();
  require(g.dim() == 1, "pointwise Riesz potential is implemented for n = 1");
  require(alpha > 0 && alpha < 1, "alpha must lie in (0, n)");
  double h = g.spacing(), acc = 0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    if (f[j] == 0.0) continue;
    double a = g.coordinate(j) - 0.5 * h, b = a + h;
    acc += f[j] * (detail::signed_power_antiderivative(x - a, alpha) - detail::signed_power_antiderivative(x - b, alpha));
  }
  return acc;
}

inline OperatorResult apply_operator(const GridFunction& f, const OperatorSpec& spec) {
  const Grid& g = f.grid();
  int n = g.dim();
  OperatorResult res{GridFunction(g), 0.0, false};
  double h = g.spacing();
  res.epsilon = spec.epsilon > 0 ? spec.epsilon : 2.0 * h;
  require(std::isfinite(res.epsilon), "epsilon must be finite");
  if (res.epsilon < h) {
    res.epsilon = h;
    res.epsilon_clipped = true;
  }
  switch (spec.kind) {
    case OperatorKind::identity:
      res.values = f;
      return res;
    case OperatorKind::riesz_potential:
      res.values = riesz_potential(f, spec.alpha);
      return res;
    case OperatorKind::hilbert:
      require(n == 1, "the Hilbert transform needs n = 1");
      if (spec.method == OperatorMethod::multiplier) res.values = detail::hilbert_multiplier(f);
      else if (spec.method == OperatorMethod::periodic_multiplier) res.values = detail::hilbert_periodic(f);
      else res.values = detail::hilbert_quadrature(f, res.epsilon, spec.near_correction);
      return res;
    case OperatorKind::riesz: {
      require(n == 2, "Riesz transforms need n = 2; use hilbert in 1-D");
      require(spec.axis == 0 || spec.axis == 1, "Riesz axis must be 0 or 1");
      if (spec.method != OperatorMethod::quadrature) {
        res.values = detail::riesz_multiplier(f, spec.axis);
        return res;
      }
      int ax = spec.axis;
      const double c = 1.0 / (2.0 * std::numbers::pi);
      res.values = detail::truncated_sum_2d(f, res.epsilon, [&](double t0, double t1) {
        double r = std::hypot(t0, t1);
        return c * (ax == 0 ? t0 : t1) / (r * r * r);
      });
      if (spec.near_correction) {
        double weight = c * detail::excluded_gradient_weight(res.epsilon, h, ax);
        std::vector<double> v = res.values.values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= weight * detail::partial_derivative_2d(f, i, ax);
        res.values = GridFunction(g, std::move(v));
      }
      return res;
    }
    case OperatorKind::truncated_kernel: {
      detail::check_cancellation(spec.omega, n);
      if (n == 1) {
        OperatorSpec hs = spec;
        hs.kind = OperatorKind::hilbert;
        GridFunction hf = apply_operator(f, hs).values;
        res.values = hf.scaled(std::numbers::pi * spec.omega[1]);
        return res;
      }
      require(spec.method == OperatorMethod::quadrature, "2-D kernels support the quadrature method only");
      detail::CircleInterpolant omega(spec.omega);
      res.values = detail::truncated_sum_2d(f, res.epsilon, [&](double t0, double t1) {
        double r2 = t0 * t0 + t1 * t1;
        return omega(std::atan2(t1, t0)) / r2;
      });
      return res;
    }
  }
  return res;
}

inline GridFunction singular_integral(const GridFunction& f, const OperatorSpec& spec) {
  require(spec.kind == OperatorKind::hilbert || spec.kind == OperatorKind::riesz ||
              spec.kind == OperatorKind::truncated_kernel,
          "singular_integral takes hilbert, riesz or truncated_kernel");
  return apply_operator(f, spec).values;
}

// "hilbert", "riesz:<j>", "ialpha:<alpha>", "identity". Kernel files are
// resolved by the caller.
inline OperatorSpec parse_operator_spec(const std::string& text, const std::string& method = "multiplier") {
  auto number = [&](const std::string& tok) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    require(!tok.empty() && end != nullptr && *end == '\0' && std::isfinite(v), "malformed operator '" + text + "'");
    return v;
  };
  OperatorSpec s;
  if (text == "identity") {
    s = OperatorSpec::identity();
  } else if (text == "hilbert") {
    s = OperatorSpec::hilbert();
  } else if (text.rfind("riesz:", 0) == 0) {
    double axis = number(text.substr(6));
    require(axis == 0.0 || axis == 1.0, "Riesz axis must be 0 or 1");
    s = OperatorSpec::riesz(static_cast<int>(axis));
  } else if (text.rfind("ialpha:", 0) == 0) {
    s = OperatorSpec::riesz_potential(number(text.substr(7)));
  } else {
    throw InvalidArgument("unknown operator: " + text);
  }
  if (method == "multiplier") {
    if (s.kind != OperatorKind::riesz_potential) s.method = OperatorMethod::multiplier;
  } else if (method == "quadrature") {
    s.method = OperatorMethod::quadrature;
  } else if (method == "periodic") {
    s.method = OperatorMethod::periodic_multiplier;
  } else {
    throw InvalidArgument("unknown method: " + method);
  }
  return s;
}

// max over |y| in [4h, R] of |∂^a k(y)| |y|^{n+|a|} for |a| = 0, 1, 2, by
// central differences of step h.
inline std::array<double, 3> kernel_derivative_constants(const OperatorSpec& spec, const Grid& g) {
  int n = g.dim();
  double h = g.spacing(), R = g.half_extent();
  std::function<double(double, double)> k;
  if (spec.kind == OperatorKind::hilbert) {
    require(n == 1, "the Hilbert kernel needs n = 1");
    k = [](double y, double) { return 1.0 / (std::numbers::pi * y); };
  } else if (spec.kind == OperatorKind::riesz) {
    require(n == 2, "Riesz kernels need n = 2");
    int ax = spec.axis;
    k = [ax](double y0, double y1) {
      double r = std::hypot(y0, y1);
      return (ax == 0 ? y0 : y1) / (2.0 * std::numbers::pi * r * r * r);
    };
  } else if (spec.kind == OperatorKind::truncated_kernel && n == 2) {
    detail::check_cancellation(spec.omega, n);
    auto omega = std::make_shared<detail::CircleInterpolant>(spec.omega);
    k = [omega](double y0, double y1) { return (*omega)(std::atan2(y1, y0)) / (y0 * y0 + y1 * y1); };
  } else {
    throw InvalidArgument("kernel constants need a singular integral kernel");
  }
  std::array<double, 3> C{0, 0, 0};
  auto update = [&](int order, double value, double r) {
    C[order] = std::max(C[order], std::abs(value) * std::pow(r, n + order));
  };
  std::size_t steps = static_cast<std::size_t>(std::floor(R / h));
  if (n == 1) {
    for (std::size_t s = 4; s <= steps; ++s)
      for (double sign : {-1.0, 1.0}) {
        double y = sign * static_cast<double>(s) * h;
        update(0, k(y, 0), std::abs(y));
        update(1, (k(y + h, 0) - k(y - h, 0)) / (2 * h), std::abs(y));
        update(2, (k(y + h, 0) - 2 * k(y, 0) + k(y - h, 0)) / (h * h), std::abs(y));
      }
    return C;
  }
  long S = static_cast<long>(steps);
  for (long a = -S; a <= S; ++a)
    for (long b = -S; b <= S; ++b) {
      double y0 = static_cast<double>(a) * h, y1 = static_cast<double>(b) * h, r = std::hypot(y0, y1);
      if (r < 4 * h || r > R) continue;
      update(0, k(y0, y1), r);
      update(1, (k(y0 + h, y1) - k(y0 - h, y1)) / (2 * h), r);
      update(1, (k(y0, y1 + h) - k(y0, y1 - h)) / (2 * h), r);
      update(2, (k(y0 + h, y1) - 2 * k(y0, y1) + k(y0 - h, y1)) / (h * h), r);
      update(2, (k(y0, y1 + h) - 2 * k(y0, y1) + k(y0, y1 - h)) / (h * h), r);
      update(2, (k(y0 + h, y1 + h) - k(y0 + h, y1 - h) - k(y0 - h, y1 + h) + k(y0 - h, y1 - h)) / (4 * h * h), r);
    }
  return C;
}

struct ImageReport {
  ValidationReport validation;
  // Ta / normalization is the certified molecule.
  double normalization = 0;
  bool measured = true;
  // Far-field slope of log sup_{|x - x0| >= rho} |Ta| against log rho, and the value the
  // kernel estimate predicts, -(n - order + d + 1).
  double decay_fit = 0;
  double decay_expected = 0;
  // A in |Ta(x)| <= A |x - x0|^{-(n - order + d + 1)} near the box edge,
  // and the per-degree tail allowance added to the moment thresholds.
  double tail_amplitude = 0;
  std::vector<double> tail_allowance;
};

namespace detail {

inline double envelope_decay_fit(const GridFunction& v, const Ball& ball) {
  const Grid& g = v.grid();
  constexpr int kBins = 24;
  double rmax = 0;
  for (std::size_t i = 0; i < v.size(); ++i) rmax = std::max(rmax, distance(g.cell_center(i), ball.center, g.dim()));
  // Far field only: the last factor 4 in distance, and never inside 3B.
  double rmin = std::max(3.0 * ball.radius, 0.25 * rmax);
  if (!(rmax > 1.5 * rmin)) return 0.0;
  std::vector<double> peak(kBins, 0.0);
  double span = std::log(rmax / rmin);
  for (std::size_t i = 0; i < v.size(); ++i) {
    double r = distance(g.cell_center(i), ball.center, g.dim());
    if (r < rmin) continue;
    int b = std::min(kBins - 1, static_cast<int>(std::log(r / rmin) / span * kBins));
    peak[b] = std::max(peak[b], std::abs(v[i]));
  }
  // Monotone envelope max_{|x - x0| >= rho} |v|, so zero crossings do not dip.
  for (int b = kBins - 2; b >= 0; --b) peak[b] = std::max(peak[b], peak[b + 1]);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, cnt = 0;
  for (int b = 0; b < kBins; ++b) {
    if (!(peak[b] > 0)) continue;
    double x = std::log(rmin) + (b + 0.5) * span / kBins, y = std::log(peak[b]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    cnt += 1;
  }
  if (cnt < 3) return 0.0;
  return (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
}

}  // namespace detail

// Applies T to an atom and validates T a / C as a molecule for out_params.
// C is measured (smallest value meeting (m1) and (m2)) unless given. The
// moment thresholds gain an allowance for the part of ∫ x^k Ta outside the
// box, from the kernel estimate |Ta| <= A |x - x0|^{-e}.
inline ImageReport molecule_image_report(const GridFunction& a, const AtomParams& in_params, const OperatorSpec& spec,
                                         const AtomParams& out_params, std::optional<double> normalization = {},
                                         const ValidationTolerances& tol = {}) {
  const Grid& g = a.grid();
  require(validate_atom(a, in_params, tol).pass, "input is not an atom for the given parameters");
  AtomParams outp = out_params;
  outp.ball = in_params.ball;
  GridFunction Ta = apply_operator(a, spec).values;
  ImageReport rep;
  int n = g.dim();
  double e = n - spec.order() + in_params.d + 1;
  rep.decay_expected = -e;
  if (spec.kind == OperatorKind::identity) rep.decay_expected = 0;

  if (normalization) {
    require(*normalization > 0, "normalization must be positive");
    rep.normalization = *normalization;
    rep.measured = false;
  } else {
    ValidationReport raw = validate_molecule(Ta, outp, tol);
    double need_size = raw.norm / raw.bound;
    double need_decay = raw.decay_max_violation + 1.0;
    rep.normalization = std::max({need_size, need_decay, 1e-300});
  }
  GridFunction m = Ta.scaled(1.0 / rep.normalization);
  rep.validation = validate_molecule(m, outp, tol);
  rep.decay_fit = detail::envelope_decay_fit(Ta, outp.ball);

  if (spec.kind != OperatorKind::identity) {
    const Ball& B = outp.ball;
    double rho = kInf;
    for (int k = 0; k < n; ++k)
      rho = std::min({rho, g.half_extent() - B.center[k], B.center[k] + g.half_extent()});
    for (std::size_t i = 0; i < m.size(); ++i) {
      double r = distance(g.cell_center(i), B.center, n);
      if (r >= std::max(2 * B.radius, 0.5 * rho)) rep.tail_amplitude = std::max(rep.tail_amplitude, std::abs(m[i]) * std::pow(r, e));
    }
    rep.tail_allowance.assign(outp.d + 1, 0.0);
    rep.validation.moments_ok = true;
    for (int k = 0; k <= outp.d; ++k) {
      // 2 A ∫_rho^∞ t^{k - e} |S^{n-1}| t^{n-1} dt, doubled as a safety margin.
      double p = e - k - n;
      double sphere = n == 1 ? 2.0 : 2.0 * std::numbers::pi;
      rep.tail_allowance[k] = p > 0 ? 2.0 * rep.tail_amplitude * sphere * std::pow(rho, -p) / p : kInf;
      rep.validation.moment_thresholds[k] += rep.tail_allowance[k];
      if (rep.validation.moment_residuals[k] > rep.validation.moment_thresholds[k]) rep.validation.moments_ok = false;
    }
    rep.validation.pass = rep.validation.size_ok && rep.validation.decay_ok && rep.validation.moments_ok;
  }
  return rep;
}

}  // namespace hardylab
