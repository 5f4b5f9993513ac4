#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "torus.hpp"

namespace gblab {

using cplx = std::complex<double>;

namespace detail {

class PlanCache {
 public:
  static PlanCache& get() {
    static PlanCache c;
    return c;
  }
  fftw_plan plan(int d, int n, int sign) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_tuple(d, n, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<cplx> tmp(static_cast<size_t>(d == 1 ? n : n * n));
    auto* p = reinterpret_cast<fftw_complex*>(tmp.data());
    fftw_plan pl = d == 1 ? fftw_plan_dft_1d(n, p, p, sign, FFTW_ESTIMATE | FFTW_UNALIGNED)
                          : fftw_plan_dft_2d(n, n, p, p, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_[key] = pl;
    return pl;
  }
  ~PlanCache() {
    for (auto& kv : plans_) fftw_destroy_plan(kv.second);
  }

 private:
  std::mutex mu_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

}  // namespace detail

/// In-place unnormalised DFT on an n (d = 1) or n x n (d = 2, row-major, x1 slowest) array.
/// sign = -1 is the forward transform sum_j f_j e^{-2 pi i k j / n}.
inline void dft_inplace(std::vector<cplx>& a, int d, int n, int sign) {
  check_dim(d);
  size_t expect = d == 1 ? size_t(n) : size_t(n) * n;
  if (a.size() != expect) throw Error("dft: size mismatch");
  fftw_plan pl = detail::PlanCache::get().plan(d, n, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD);
  auto* p = reinterpret_cast<fftw_complex*>(a.data());
  fftw_execute_dft(pl, p, p);
}

/// Normalised Fourier coefficients ghat_k = n^{-d} sum_j g_j e^{-2 pi i k x_j} of a real grid field.
inline std::vector<cplx> fourier_coefficients(const std::vector<double>& g, int d, int n) {
  std::vector<cplx> a(g.begin(), g.end());
  dft_inplace(a, d, n, -1);
  double s = 1.0 / static_cast<double>(a.size());
  for (auto& v : a) v *= s;
  return a;
}

/// Signed frequency of FFT index i on an n-point axis.
inline int freq_of(int i, int n) { return i <= n / 2 ? i : i - n; }

}  // namespace gblab
