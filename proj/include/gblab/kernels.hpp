#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "fft.hpp"
#include "torus.hpp"

namespace gblab {

inline constexpr double kPi = std::numbers::pi;

enum class KernelFamily { ScrewGreen, EdgeWall, Custom };

inline std::string family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::ScrewGreen: return "screw-green";
    case KernelFamily::EdgeWall: return "edge-wall";
    default: return "custom";
  }
}

/// Integer frequency, second slot unused in d = 1.
using Freq = std::array<int, 2>;

/// Truncated even Fourier series V(s) = sum_{|k|_inf <= K, k != 0} Vhat_k cos(2 pi k.s).
class SpectralKernel {
 public:
  struct Eval {
    double value = 0;
    Vec grad{0, 0};
    Sym2 hess;
  };

  static SpectralKernel screw(double alpha, double delta, int K, int d) {
    check_dim(d);
    if (K < 1) throw Error("screw kernel: cutoff K must be >= 1");
    if (!(alpha > 0)) throw Error("screw kernel: alpha must be positive");
    if (!(delta >= 0)) throw Error("screw kernel: delta must be >= 0");
    SpectralKernel k(d, K, KernelFamily::ScrewGreen, alpha, delta);
    k.fill([&](int k1, int k2) {
      double r2 = double(k1) * k1 + double(k2) * k2;
      return alpha / r2 * std::exp(-delta * std::sqrt(r2));
    });
    return k;
  }

  static SpectralKernel edge(double delta, int K, int d = 2) {
    if (d != 2) throw Error("edge kernel is defined only for d = 2");
    if (K < 1) throw Error("edge kernel: cutoff K must be >= 1");
    if (!(delta >= 0)) throw Error("edge kernel: delta must be >= 0");
    SpectralKernel k(2, K, KernelFamily::EdgeWall, 1.0, delta);
    k.fill([&](int k1, int k2) {
      double r2 = double(k1) * k1 + double(k2) * k2;
      return double(k2) * k2 / (kPi * r2 * r2) * std::exp(-delta * std::sqrt(r2));
    });
    return k;
  }

  /// Custom table from (k, Vhat_k) pairs. Missing mirrors -k are filled in; a mismatched mirror is an error.
  static SpectralKernel custom(int d, const std::vector<std::pair<Freq, double>>& entries) {
    check_dim(d);
    int K = 1;
    for (auto& e : entries) {
      if (d == 1 && e.first[1] != 0) throw Error("custom kernel: d = 1 entries must have k2 = 0");
      K = std::max({K, std::abs(e.first[0]), std::abs(e.first[1])});
    }
    SpectralKernel k(d, K, KernelFamily::Custom, 0.0, 0.0);
    std::vector<char> set(k.coef_.size(), 0);
    for (auto& e : entries) {
      auto [k1, k2] = e.first;
      if (k1 == 0 && k2 == 0) {
        if (e.second != 0) throw Error("custom kernel: zero mode must be 0");
        continue;
      }
      size_t i = k.index(k1, k2), j = k.index(-k1, -k2);
      if (set[i] && k.coef_[i] != e.second) throw Error("custom kernel: conflicting coefficient");
      if (set[j] && k.coef_[j] != e.second) throw Error("custom kernel: table is not even");
      k.coef_[i] = k.coef_[j] = e.second;
      set[i] = set[j] = 1;
    }
    return k;
  }

  /// Coefficients of a periodic function sampled on M points, kept up to |k| <= K (d = 1).
  template <class F>
  static SpectralKernel from_samples_1d(F&& f, int K, int M) {
    if (M < 2 * K + 2) throw Error("from_samples_1d: need M >= 2K+2");
    std::vector<double> g(M);
    for (int j = 0; j < M; ++j) g[j] = f(double(j) / M);
    auto c = fourier_coefficients(g, 1, M);
    std::vector<std::pair<Freq, double>> e;
    for (int k = 1; k <= K; ++k) e.push_back({{k, 0}, 0.5 * (c[k].real() + c[M - k].real())});
    return custom(1, e);
  }

  int dim() const { return d_; }
  int cutoff() const { return K_; }
  KernelFamily family() const { return fam_; }
  double alpha() const { return alpha_; }
  double delta() const { return delta_; }

  double coef(int k1, int k2 = 0) const {
    if (std::abs(k1) > K_ || std::abs(k2) > K_ || (d_ == 1 && k2 != 0)) return 0.0;
    return coef_[index(k1, k2)];
  }

  /// All retained nonzero modes with their coefficients.
  template <class F>
  void for_each_mode(F&& f) const {
    int w = 2 * K_ + 1;
    for (size_t i = 0; i < coef_.size(); ++i) {
      int k1 = d_ == 1 ? int(i) - K_ : int(i / w) - K_;
      int k2 = d_ == 1 ? 0 : int(i % w) - K_;
      if (k1 == 0 && k2 == 0) continue;
      f(k1, k2, coef_[i]);
    }
  }

  /// Direct per-point summation of value, gradient and Hessian (reference path).
  Eval eval(const Vec& s) const {
    Eval out;
    const double tp = 2 * kPi;
    if (d_ == 1) {
      double c = 0, g = 0, h = 0;
      double th = tp * s[0];
      cplx step = std::polar(1.0, th), e = 1.0;
      for (int k = 1; k <= K_; ++k) {
        if ((k & 31) == 0) e = std::polar(1.0, th * k); else e *= step;
        double v = 2 * coef_[index(k, 0)];
        c += v * e.real();
        g += v * k * e.imag();
        h += v * double(k) * k * e.real();
      }
      out.value = c;
      out.grad = {-tp * g, 0};
      out.hess.xx = -tp * tp * h;
      return out;
    }
    int w = 2 * K_ + 1;
    std::vector<cplx> e1(w), e2(w);
    for (int k = -K_; k <= K_; ++k) {
      e1[k + K_] = std::polar(1.0, tp * k * s[0]);
      e2[k + K_] = std::polar(1.0, tp * k * s[1]);
    }
    cplx S00 = 0, S10 = 0, S01 = 0, S20 = 0, S11 = 0, S02 = 0;
    for (int k1 = -K_; k1 <= K_; ++k1) {
      cplx A0 = 0, A1 = 0, A2 = 0;
      const double* row = &coef_[size_t(k1 + K_) * w];
      for (int k2 = -K_; k2 <= K_; ++k2) {
        cplx t = row[k2 + K_] * e2[k2 + K_];
        A0 += t;
        A1 += double(k2) * t;
        A2 += double(k2) * k2 * t;
      }
      cplx E = e1[k1 + K_];
      S00 += E * A0;
      S10 += double(k1) * E * A0;
      S01 += E * A1;
      S20 += double(k1) * k1 * E * A0;
      S11 += double(k1) * E * A1;
      S02 += E * A2;
    }
    out.value = S00.real();
    out.grad = {-tp * S10.imag(), -tp * S01.imag()};
    out.hess = {-tp * tp * S20.real(), -tp * tp * S11.real(), -tp * tp * S02.real()};
    return out;
  }

  double value(const Vec& s) const { return eval(s).value; }
  Vec grad(const Vec& s) const { return eval(s).grad; }
  Sym2 hess(const Vec& s) const { return eval(s).hess; }
  Vec grad_local(const Vec& s) const { return grad(s); }

  /// V(0) is finite for every truncated table, but the untruncated family may diverge there.
  bool finite_at_zero() const {
    if (delta_ > 0 || fam_ == KernelFamily::Custom) return true;
    return fam_ == KernelFamily::ScrewGreen && d_ == 1;
  }

  /// sup |D^2 V|. For nonnegative tables the supremum is attained at s = 0 and equals the
  /// spectral norm of sum 4 pi^2 k (x) k Vhat_k; otherwise the absolute coefficient bound is used.
  double lambda() const {
    if (!(delta_ > 0) && fam_ != KernelFamily::Custom)
      throw Error("lambda_delta: sum 4 pi^2 |k|^2 Vhat_k diverges for delta = 0");
    bool nonneg = min_coef() >= 0;
    Sym2 m;
    double bound = 0;
    for_each_mode([&](int k1, int k2, double c) {
      double f = 4 * kPi * kPi * c;
      m.xx += f * k1 * k1;
      m.xy += f * k1 * k2;
      m.yy += f * k2 * k2;
      bound += std::abs(f) * (double(k1) * k1 + double(k2) * k2);
    });
    return nonneg ? m.norm() : bound;
  }

  double min_coef() const {
    double m = std::numeric_limits<double>::infinity();
    for_each_mode([&](int, int, double c) { m = std::min(m, c); });
    return m;
  }

  bool is_even() const {
    bool ok = true;
    for_each_mode([&](int k1, int k2, double c) { ok = ok && coef(-k1, -k2) == c; });
    return ok;
  }

  struct Sup {
    double value = 0;
    Freq at{0, 0};
  };
  /// sup_k (1+|k|^2)^{d/2} Vhat_k over retained modes.
  Sup v2_sup() const {
    Sup s;
    s.value = -std::numeric_limits<double>::infinity();
    for_each_mode([&](int k1, int k2, double c) {
      double w = std::pow(1.0 + double(k1) * k1 + double(k2) * k2, 0.5 * d_) * c;
      if (w > s.value) s = {w, {k1, k2}};
    });
    return s;
  }

  /// Upper bound on sum_{|k|_inf > K} Vhat_k for the untruncated family (0 for custom tables).
  double tail_bound() const {
    if (fam_ == KernelFamily::Custom) return 0.0;
    double a = fam_ == KernelFamily::ScrewGreen ? alpha_ : 1.0 / kPi;
    if (!(delta_ > 0) && d_ == 2) return std::numeric_limits<double>::infinity();
    double sum = 0;
    long rmax = delta_ > 0 ? long(K_ + 60.0 / delta_) + 1 : 10000000L;
    for (long r = K_ + 1; r <= rmax; ++r) {
      double e = std::exp(-delta_ * double(r)) / (double(r) * r);
      sum += (d_ == 1 ? 2.0 : 8.0 * r) * a * e;
    }
    if (!(delta_ > 0)) sum += 2.0 * a / double(rmax);
    return sum;
  }

 private:
  SpectralKernel(int d, int K, KernelFamily f, double alpha, double delta)
      : d_(d), K_(K), fam_(f), alpha_(alpha), delta_(delta) {
    size_t w = 2 * size_t(K) + 1;
    coef_.assign(d == 1 ? w : w * w, 0.0);
  }

  size_t index(int k1, int k2) const {
    size_t w = 2 * size_t(K_) + 1;
    return d_ == 1 ? size_t(k1 + K_) : size_t(k1 + K_) * w + size_t(k2 + K_);
  }

  template <class F>
  void fill(F&& f) {
    for_each_index([&](int k1, int k2) { coef_[index(k1, k2)] = f(k1, k2); });
  }
  template <class F>
  void for_each_index(F&& f) {
    int k2max = d_ == 1 ? 0 : K_;
    for (int k1 = -K_; k1 <= K_; ++k1)
      for (int k2 = -k2max; k2 <= k2max; ++k2)
        if (k1 != 0 || k2 != 0) f(k1, k2);
  }

  int d_;
  int K_;
  KernelFamily fam_;
  double alpha_;
  double delta_;
  std::vector<double> coef_;
};

inline SpectralKernel make_screw_kernel(double alpha, double delta, int K, int d) {
  return SpectralKernel::screw(alpha, delta, K, d);
}
inline SpectralKernel make_edge_kernel(double delta, int K) { return SpectralKernel::edge(delta, K); }

namespace detail {

// Quintic Hermite weights on [0,1]: value, h*slope, h^2*curvature at the left and right node.
inline void quintic_weights(double t, double h, double wl[3], double wr[3]) {
  double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
  wl[0] = 1 - 10 * t3 + 15 * t4 - 6 * t5;
  wl[1] = h * (t - 6 * t3 + 8 * t4 - 3 * t5);
  wl[2] = h * h * (0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5);
  wr[0] = 10 * t3 - 15 * t4 + 6 * t5;
  wr[1] = h * (-4 * t3 + 7 * t4 - 3 * t5);
  wr[2] = h * h * (0.5 * t3 - t4 + 0.5 * t5);
}

}  // namespace detail

/// Fast path for a SpectralKernel: periodic derivative tables on an M^d grid (exact at the
/// nodes, built by FFT) and quintic Hermite interpolation between nodes.
class TabulatedKernel {
 public:
  TabulatedKernel(const SpectralKernel& k, int M = 0) : base_(k) {
    d_ = k.dim();
    M_ = M > 0 ? M : (d_ == 1 ? 16384 : 512);
    if (M_ < 2 * k.cutoff() + 2) throw Error("TabulatedKernel: table size M must be >= 2K+2");
    h_ = 1.0 / M_;
    for (int a = 0; a <= 4; ++a)
      for (int b = 0; b <= (d_ == 1 ? 0 : 4); ++b)
        if (d_ == 1 || needed(a, b)) build(a, b);
  }

  int dim() const { return d_; }
  int table_size() const { return M_; }
  const SpectralKernel& base() const { return base_; }

  double value(const Vec& s) const { return interp(0, 0, s); }
  Vec grad(const Vec& s) const {
    if (d_ == 1) return {interp(1, 0, s), 0};
    return {interp(1, 0, s), interp(0, 1, s)};
  }
  Vec grad_local(const Vec& s) const { return grad(s); }
  Sym2 hess(const Vec& s) const {
    if (d_ == 1) return {interp(2, 0, s), 0, 0};
    return {interp(2, 0, s), interp(1, 1, s), interp(0, 2, s)};
  }
  bool finite_at_zero() const { return base_.finite_at_zero(); }
  double lambda() const { return base_.lambda(); }

 private:
  static bool needed(int a, int b) {
    static const int Q[6][2] = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
    for (auto& q : Q)
      if (a - q[0] >= 0 && a - q[0] <= 2 && b - q[1] >= 0 && b - q[1] <= 2) return true;
    return false;
  }
  static int slot(int a, int b) { return a * 5 + b; }

  void build(int a, int b) {
    size_t sz = d_ == 1 ? size_t(M_) : size_t(M_) * M_;
    std::vector<cplx> c(sz, 0.0);
    const double tp = 2 * kPi;
    base_.for_each_mode([&](int k1, int k2, double v) {
      cplx f = v;
      for (int i = 0; i < a; ++i) f *= cplx(0, tp * k1);
      for (int i = 0; i < b; ++i) f *= cplx(0, tp * k2);
      size_t i1 = size_t((k1 % M_ + M_) % M_), i2 = size_t((k2 % M_ + M_) % M_);
      c[d_ == 1 ? i1 : i1 * M_ + i2] += f;
    });
    dft_inplace(c, d_, M_, +1);
    auto& t = tab_[slot(a, b)];
    t.resize(sz);
    for (size_t i = 0; i < sz; ++i) t[i] = c[i].real();
  }

  double interp(int a, int b, const Vec& s) const {
    double u1 = wrap(s[0]) * M_;
    int i0 = std::min(int(u1), M_ - 1);
    double wl1[3], wr1[3];
    detail::quintic_weights(u1 - i0, h_, wl1, wr1);
    int i1 = i0 + 1 == M_ ? 0 : i0 + 1;
    if (d_ == 1) {
      double r = 0;
      for (int al = 0; al <= 2; ++al) {
        const auto& t = tab_[slot(a + al, 0)];
        r += wl1[al] * t[i0] + wr1[al] * t[i1];
      }
      return r;
    }
    double u2 = wrap(s[1]) * M_;
    int j0 = std::min(int(u2), M_ - 1);
    double wl2[3], wr2[3];
    detail::quintic_weights(u2 - j0, h_, wl2, wr2);
    int j1 = j0 + 1 == M_ ? 0 : j0 + 1;
    size_t r0 = size_t(i0) * M_, r1 = size_t(i1) * M_;
    double r = 0;
    for (int al = 0; al <= 2; ++al)
      for (int be = 0; be <= 2; ++be) {
        const auto& t = tab_[slot(a + al, b + be)];
        r += wl1[al] * (wl2[be] * t[r0 + j0] + wr2[be] * t[r0 + j1]) +
             wr1[al] * (wl2[be] * t[r1 + j0] + wr2[be] * t[r1 + j1]);
      }
    return r;
  }

  SpectralKernel base_;
  int d_ = 1;
  int M_ = 0;
  double h_ = 0;
  std::array<std::vector<double>, 25> tab_;
};

/// V(s) = -1/2 log(s^2 + delta^2) on the nearest image, d = 1.
class ClosedFormKernel1D {
 public:
  explicit ClosedFormKernel1D(double delta, double gamma = 0.5, double barrier_c = 0.5)
      : delta_(delta), gamma_(gamma), c_(barrier_c) {
    if (!(delta > 0)) throw Error("closed-form kernel: delta must be positive");
  }
  int dim() const { return 1; }
  double delta() const { return delta_; }
  double gamma() const { return gamma_; }
  double barrier_c() const { return c_; }

  double v(double r) const { return -0.5 * std::log(r * r + delta_ * delta_); }
  double dv(double r) const { return -r / (r * r + delta_ * delta_); }
  double d2v(double r) const {
    double q = r * r + delta_ * delta_;
    return (r * r - delta_ * delta_) / (q * q);
  }

  double value(const Vec& s) const { return v(nearest_image(s[0])); }
  Vec grad(const Vec& s) const { return {dv(nearest_image(s[0])), 0}; }
  /// Formula applied to s as given; callers guarantee s is within a hair of the fundamental cell.
  Vec grad_local(const Vec& s) const { return {dv(s[0]), 0}; }
  Sym2 hess(const Vec& s) const { return {d2v(nearest_image(s[0])), 0, 0}; }
  bool finite_at_zero() const { return true; }
  double lambda() const { return 1.0 / (delta_ * delta_); }

 private:
  double delta_, gamma_, c_;
};

/// Radial analogue on T^2: V(s) = -1/2 log(|s|^2 + delta^2) on the nearest image.
class ClosedFormKernel2D {
 public:
  explicit ClosedFormKernel2D(double delta, double gamma = 0.5, double barrier_c = 0.5)
      : r_(delta, gamma, barrier_c) {}
  int dim() const { return 2; }
  double delta() const { return r_.delta(); }
  const ClosedFormKernel1D& radial() const { return r_; }

  double value(const Vec& s) const { return raw_value(nearest_image(s, 2)); }
  Vec grad(const Vec& s) const { return grad_local(nearest_image(s, 2)); }
  Vec grad_local(const Vec& s) const {
    double q = s[0] * s[0] + s[1] * s[1] + delta() * delta();
    return {-s[0] / q, -s[1] / q};
  }
  Sym2 hess(const Vec& s0) const {
    Vec s = nearest_image(s0, 2);
    double q = s[0] * s[0] + s[1] * s[1] + delta() * delta();
    return {(2 * s[0] * s[0] - q) / (q * q), 2 * s[0] * s[1] / (q * q), (2 * s[1] * s[1] - q) / (q * q)};
  }
  bool finite_at_zero() const { return true; }
  double lambda() const { return r_.lambda(); }

 private:
  double raw_value(const Vec& s) const { return -0.5 * std::log(s[0] * s[0] + s[1] * s[1] + delta() * delta()); }
  ClosedFormKernel1D r_;
};

/// Assumption checks for a kernel. Flags are true when the check passes.
struct KernelReport {
  bool closed_form = false;
  double min_coef = 0;  ///< smallest retained coefficient (spectral tables)
  bool positive = true;
  double v2_sup = 0;  ///< sup_k (1+|k|^2)^{d/2} Vhat_k
  Freq v2_at{0, 0};
  bool even = true;
  double tail = 0;
  double lambda = 0;  ///< 0 when undefined (delta = 0)
  double barrier = 0;  ///< delta V'(2 gamma delta), closed form only
  bool barrier_ok = true;
  double force_product = 0;  ///< delta sup|V'|
  bool force_ok = true;
  double curvature_ratio = 0;  ///< sup_{|s| > c/n} |V''(s)| / n^2 on a sample grid
  double curvature_C = 0;      ///< analytic constant 1/c^2
  bool curvature_ok = true;

  bool ok() const { return positive && even && barrier_ok && force_ok && curvature_ok; }
};

inline KernelReport check_assumptions(const SpectralKernel& k) {
  KernelReport r;
  r.min_coef = k.min_coef();
  r.positive = r.min_coef >= 0;
  auto sup = k.v2_sup();
  r.v2_sup = sup.value;
  r.v2_at = sup.at;
  r.even = k.is_even();
  r.tail = k.tail_bound();
  try {
    r.lambda = k.lambda();
  } catch (const Error&) {
    r.lambda = 0;
  }
  return r;
}

/// Closed-form checks: barrier delta V'(2 gamma delta) <= -c, delta sup|V'| <= 1, and
/// |V''(s)| <= n^2 / c_sp^2 for |s| > c_sp / n (needs delta <= c_sp / (2n)).
inline KernelReport check_assumptions(const ClosedFormKernel1D& k, int n = 0, double c_sp = 0.5) {
  KernelReport r;
  r.closed_form = true;
  const double dl = k.delta();
  r.lambda = k.lambda();
  r.barrier = dl * k.dv(2 * k.gamma() * dl);
  r.barrier_ok = r.barrier <= -k.barrier_c() * (1 - 1e-12);
  double fmax = 0;
  const int S = 20000;
  for (int i = 0; i <= S; ++i) {  // |V'| peaks at s = delta; sample densely around it
    double s = 4 * dl * i / S;
    fmax = std::max(fmax, std::abs(k.dv(s)));
  }
  fmax = std::max(fmax, std::abs(k.dv(dl)));
  r.force_product = dl * fmax;
  r.force_ok = r.force_product <= 1.0;
  for (int i = 1; i < 1000; ++i) r.even = r.even && k.value({0.5 * i / 1000, 0}) == k.value({-0.5 * i / 1000, 0});
  if (n > 0) {
    r.curvature_C = 1 / (c_sp * c_sp);
    double lo = c_sp / n, worst = 0;
    for (int i = 0; i <= S; ++i) {
      double s = lo * std::pow(0.5 / lo, double(i) / S);
      worst = std::max(worst, std::abs(k.d2v(s)));
    }
    r.curvature_ratio = worst / (double(n) * n);
    r.curvature_ok = dl <= c_sp / (2.0 * n) && r.curvature_ratio <= r.curvature_C;
  }
  return r;
}

/// Same checks for the radial 2D kernel; spacing scale c_sp / sqrt(n), so |V''| <= n / c_sp^2.
inline KernelReport check_assumptions(const ClosedFormKernel2D& k, int n = 0, double c_sp = 0.5) {
  KernelReport r = check_assumptions(k.radial());
  if (n > 0) {
    const double dl = k.delta(), lo = c_sp / std::sqrt(double(n));
    r.curvature_C = 1 / (c_sp * c_sp);
    double worst = 0;
    const int S = 20000;
    for (int i = 0; i <= S; ++i) {  // radial and tangential eigenvalues of the Hessian
      double s = lo * std::pow(0.5 / lo, double(i) / S);
      worst = std::max({worst, std::abs(k.radial().d2v(s)), 1 / (s * s + dl * dl)});
    }
    r.curvature_ratio = worst / n;
    r.curvature_ok = dl <= lo / 2 && r.curvature_ratio <= r.curvature_C;
  }
  return r;
}

/// Singular edge-type kernel for slip-confined runs: spectral edge kernel with regularization
/// eta plus chi(|s|) [h(s;0) - h(s;eta)], h(s;eta) = -1/2 log(|s|^2+eta^2) + s1^2/(|s|^2+eta^2),
/// chi a quintic radial cutoff equal to 1 on |s| <= r_in and 0 beyond r_out.
class EdgeSingularKernel {
 public:
  EdgeSingularKernel(double eta, int K, int M = 0, double r_in = 0.15, double r_out = 0.45)
      : smooth_(SpectralKernel::edge(eta, K), M), eta_(eta), a_(r_in), b_(r_out) {
    if (!(eta > 0)) throw Error("singular edge kernel: eta must be positive");
    if (!(0 < r_in && r_in < r_out && r_out < 0.5)) throw Error("singular edge kernel: need 0 < r_in < r_out < 1/2");
  }
  int dim() const { return 2; }
  double eta() const { return eta_; }
  const TabulatedKernel& smooth_part() const { return smooth_; }

  double value(const Vec& s0) const {
    Vec s = nearest_image(s0, 2);
    double r = std::sqrt(norm2(s));
    if (r == 0) return std::numeric_limits<double>::infinity();
    double out = smooth_.value(s);
    if (r < b_) out += chi(r) * (h(s, 0) - h(s, eta_));
    return out;
  }

  Vec grad(const Vec& s0) const {
    Vec s = nearest_image(s0, 2);
    double r = std::sqrt(norm2(s));
    if (r == 0) return {0, 0};
    Vec g = smooth_.grad(s);
    if (r < b_) {
      double c = chi(r), dc = dchi(r);
      Vec dg = sub(dh(s, 0), dh(s, eta_));
      double gv = h(s, 0) - h(s, eta_);
      for (int i = 0; i < 2; ++i) g[i] += c * dg[i] + gv * dc * s[i] / r;
    }
    return g;
  }
  Vec grad_local(const Vec& s) const { return grad(s); }

  Sym2 hess(const Vec& s0) const {
    Vec s = nearest_image(s0, 2);
    double r = std::sqrt(norm2(s));
    if (r == 0) throw Error("singular edge kernel: Hessian undefined at 0");
    Sym2 H = smooth_.hess(s);
    if (r < b_) {
      double c = chi(r), dc = dchi(r), ddc = d2chi(r);
      Vec dg = sub(dh(s, 0), dh(s, eta_));
      double gv = h(s, 0) - h(s, eta_);
      Sym2 h0 = d2h(s, 0), h1 = d2h(s, eta_);
      Vec n{s[0] / r, s[1] / r};
      auto chi2 = [&](int i, int j) { return ddc * n[i] * n[j] + dc * ((i == j ? 1.0 : 0.0) - n[i] * n[j]) / r; };
      auto gch = [&](int i) { return dc * n[i]; };
      H.xx += c * (h0.xx - h1.xx) + 2 * dg[0] * gch(0) + gv * chi2(0, 0);
      H.xy += c * (h0.xy - h1.xy) + dg[0] * gch(1) + dg[1] * gch(0) + gv * chi2(0, 1);
      H.yy += c * (h0.yy - h1.yy) + 2 * dg[1] * gch(1) + gv * chi2(1, 1);
    }
    return H;
  }
  bool finite_at_zero() const { return false; }
  double lambda() const { throw Error("lambda_delta: singular kernel has unbounded Hessian"); }

  static double h(const Vec& s, double eta) {
    double q = norm2(s) + eta * eta;
    return -0.5 * std::log(q) + s[0] * s[0] / q;
  }
  static Vec dh(const Vec& s, double eta) {
    double q = norm2(s) + eta * eta;
    double s1 = s[0];
    Vec g;
    for (int a = 0; a < 2; ++a) g[a] = -s[a] / q + (a == 0 ? 2 * s1 / q : 0.0) - 2 * s1 * s1 * s[a] / (q * q);
    return g;
  }
  static Sym2 d2h(const Vec& s, double eta) {
    double q = norm2(s) + eta * eta, s1 = s[0];
    auto e = [&](int a, int b) {
      double dab = a == b ? 1.0 : 0.0, da1 = a == 0 ? 1.0 : 0.0, db1 = b == 0 ? 1.0 : 0.0;
      return -dab / q + 2 * s[a] * s[b] / (q * q) + 2 * da1 * db1 / q - 4 * s1 * da1 * s[b] / (q * q) -
             4 * s1 * db1 * s[a] / (q * q) - 2 * s1 * s1 * dab / (q * q) + 8 * s1 * s1 * s[a] * s[b] / (q * q * q);
    };
    return {e(0, 0), e(0, 1), e(1, 1)};
  }

 private:
  double chi(double r) const {
    if (r <= a_) return 1;
    if (r >= b_) return 0;
    double t = (r - a_) / (b_ - a_);
    return 1 - t * t * t * (10 - 15 * t + 6 * t * t);
  }
  double dchi(double r) const {
    if (r <= a_ || r >= b_) return 0;
    double t = (r - a_) / (b_ - a_);
    return -30 * t * t * (1 - t) * (1 - t) / (b_ - a_);
  }
  double d2chi(double r) const {
    if (r <= a_ || r >= b_) return 0;
    double t = (r - a_) / (b_ - a_), L = b_ - a_;
    return -60 * t * (1 - t) * (1 - 2 * t) / (L * L);
  }

  TabulatedKernel smooth_;
  double eta_, a_, b_;
};

}  // namespace gblab
