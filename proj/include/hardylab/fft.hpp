#pragma once

#include <complex>
#include <cstddef>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include <fftw3.h>

namespace hardylab::fft {

using Complex = std::complex<double>;

namespace detail {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <class T>
using Buffer = std::unique_ptr<T[], FftwFree>;

template <class T>
Buffer<T> allocate(std::size_t n) {
  return Buffer<T>(static_cast<T*>(fftw_malloc(sizeof(T) * (n == 0 ? 1 : n))));
}

// FFTW planning is not thread-safe; plans are created once per shape under a
// lock and executed through the new-array interface, which is. All buffers
// come from fftw_malloc, so alignment always matches the planning buffers.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int rank, std::size_t n0, std::size_t n1, bool forward) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_tuple(rank, n0, n1, forward);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::size_t real_size = rank == 1 ? n0 : n0 * n1;
    std::size_t complex_size = rank == 1 ? n0 / 2 + 1 : n0 * (n1 / 2 + 1);
    auto r = allocate<double>(real_size);
    auto c = allocate<fftw_complex>(complex_size);
    fftw_plan plan;
    unsigned flags = FFTW_ESTIMATE;
    if (rank == 1) {
      plan = forward ? fftw_plan_dft_r2c_1d(static_cast<int>(n0), r.get(), c.get(), flags)
                     : fftw_plan_dft_c2r_1d(static_cast<int>(n0), c.get(), r.get(), flags);
    } else {
      plan = forward ? fftw_plan_dft_r2c_2d(static_cast<int>(n0), static_cast<int>(n1), r.get(), c.get(), flags)
                     : fftw_plan_dft_c2r_2d(static_cast<int>(n0), static_cast<int>(n1), c.get(), r.get(), flags);
    }
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& kv : plans_) fftw_destroy_plan(kv.second);
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, std::size_t, std::size_t, bool>, fftw_plan> plans_;
};

}  // namespace detail

// Real-to-half-complex transforms. Shapes: 1-D length n0 gives n0/2+1
// coefficients; 2-D (n0, n1) row-major gives n0 x (n1/2+1).
inline std::vector<Complex> forward(const std::vector<double>& x, std::size_t n0, std::size_t n1 = 0) {
  int rank = n1 == 0 ? 1 : 2;
  std::size_t real_size = rank == 1 ? n0 : n0 * n1;
  std::size_t complex_size = rank == 1 ? n0 / 2 + 1 : n0 * (n1 / 2 + 1);
  auto in = detail::allocate<double>(real_size);
  auto out = detail::allocate<fftw_complex>(complex_size);
  std::memcpy(in.get(), x.data(), sizeof(double) * real_size);
  fftw_plan plan = detail::PlanCache::instance().get(rank, n0, n1, true);
  fftw_execute_dft_r2c(plan, in.get(), out.get());
  std::vector<Complex> result(complex_size);
  for (std::size_t i = 0; i < complex_size; ++i) result[i] = Complex(out[i][0], out[i][1]);
  return result;
}

// Inverse of `forward`, including the 1/size normalization.
inline std::vector<double> inverse(const std::vector<Complex>& X, std::size_t n0, std::size_t n1 = 0) {
  int rank = n1 == 0 ? 1 : 2;
  std::size_t real_size = rank == 1 ? n0 : n0 * n1;
  std::size_t complex_size = rank == 1 ? n0 / 2 + 1 : n0 * (n1 / 2 + 1);
  auto in = detail::allocate<fftw_complex>(complex_size);
  auto out = detail::allocate<double>(real_size);
  for (std::size_t i = 0; i < complex_size; ++i) {
    in[i][0] = X[i].real();
    in[i][1] = X[i].imag();
  }
  fftw_plan plan = detail::PlanCache::instance().get(rank, n0, n1, false);
  fftw_execute_dft_c2r(plan, in.get(), out.get());
  std::vector<double> result(real_size);
  double scale = 1.0 / static_cast<double>(real_size);
  for (std::size_t i = 0; i < real_size; ++i) result[i] = out[i] * scale;
  return result;
}

// Signed frequency index of bin k for a transform of length n.
inline long signed_frequency(std::size_t k, std::size_t n) {
  return k <= n / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

}  // namespace hardylab::fft
