#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "fft.hpp"
#include "kernels.hpp"
#include "potential.hpp"

namespace gblab {

/// Cell averages of rho+ and rho- on a uniform periodic N^d grid, row-major with x1 slowest.
struct DensityPair {
  int d = 1;
  int N = 0;
  std::vector<double> plus, minus;
  double t = 0;

  size_t cells() const { return d == 1 ? size_t(N) : size_t(N) * N; }
  double h() const { return 1.0 / N; }
  double cell_volume() const { return d == 1 ? h() : h() * h(); }
  Vec center(size_t c) const {
    if (d == 1) return {(double(c) + 0.5) / N, 0};
    return {(double(c / N) + 0.5) / N, (double(c % N) + 0.5) / N};
  }
  double mass_plus() const { return sum(plus) * cell_volume(); }
  double mass_minus() const { return sum(minus) * cell_volume(); }

  static DensityPair zeros(int d, int N) {
    check_dim(d);
    if (N < 1) throw Error("density grid: N must be >= 1");
    DensityPair s;
    s.d = d;
    s.N = N;
    s.plus.assign(s.cells(), 0.0);
    s.minus.assign(s.cells(), 0.0);
    return s;
  }

  /// Samples f+ and f- at cell centers.
  template <class F, class G>
  static DensityPair from_functions(int d, int N, F&& fp, G&& fm) {
    auto s = zeros(d, N);
    for (size_t c = 0; c < s.cells(); ++c) {
      s.plus[c] = fp(s.center(c));
      s.minus[c] = fm(s.center(c));
    }
    return s;
  }

  void validate(double tol = 1e-12) const {
    check_dim(d);
    if (plus.size() != cells() || minus.size() != cells()) throw Error("density pair: array size mismatch");
    for (size_t c = 0; c < cells(); ++c)
      if (!(plus[c] >= 0) || !(minus[c] >= 0)) throw Error("density pair: negative or NaN density");
    if (std::abs(mass_plus() + mass_minus() - 1.0) > tol) throw Error("density pair: total mass is not 1");
  }

 private:
  static double sum(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s;
  }
};

enum class Derivative { None, Grad, Component1 };

/// V * field (or its gradient / first component) computed in Fourier space.
inline std::vector<std::vector<double>> convolve_field(const SpectralKernel& V, const std::vector<double>& field,
                                                       int N, Derivative der = Derivative::None) {
  const int d = V.dim();
  if (N < 2 * V.cutoff() + 2) throw Error("convolve_field: grid N must be >= 2K+2");
  auto fh = fourier_coefficients(field, d, N);
  int outs = der == Derivative::Grad ? d : 1;
  std::vector<std::vector<double>> res(outs);
  for (int o = 0; o < outs; ++o) {
    std::vector<cplx> a(fh.size());
    for (size_t i = 0; i < fh.size(); ++i) {
      int k1 = freq_of(d == 1 ? int(i) : int(i / N), N);
      int k2 = d == 1 ? 0 : freq_of(int(i % N), N);
      cplx m = V.coef(k1, k2);
      if (der != Derivative::None) m *= cplx(0, 2 * kPi * (o == 0 ? k1 : k2));
      a[i] = m * fh[i];
    }
    dft_inplace(a, d, N, +1);
    res[o].resize(a.size());
    for (size_t i = 0; i < a.size(); ++i) res[o][i] = a[i].real();
  }
  return res;
}

/// Drift w = grad V * kappa + grad U at cell centers; rho+ moves with -w, rho- with +w.
struct DriftField {
  std::vector<double> w1, w2;
};

inline DriftField drift_field(const DensityPair& s, const SpectralKernel& V, const ExternalPotential& U, Mode mode) {
  std::vector<double> kappa(s.cells());
  for (size_t c = 0; c < s.cells(); ++c) kappa[c] = s.plus[c] - s.minus[c];
  auto g = convolve_field(V, kappa, s.N, Derivative::Grad);
  DriftField w;
  w.w1 = g[0];
  w.w2.assign(s.cells(), 0.0);
  if (s.d == 2 && mode == Mode::Isotropic) w.w2 = g[1];
  for (size_t c = 0; c < s.cells(); ++c) {
    Vec gu = U.grad(s.center(c));
    w.w1[c] += gu[0];
    if (s.d == 2 && mode == Mode::Isotropic) w.w2[c] += gu[1];
  }
  return w;
}

namespace detail {

inline size_t neighbor(size_t c, int axis, int dir, int d, int N) {
  if (d == 1) return size_t((int(c) + dir + N) % N);
  int i = int(c / N), j = int(c % N);
  if (axis == 0) i = (i + dir + N) % N; else j = (j + dir + N) % N;
  return size_t(i) * N + size_t(j);
}

// Largest per-cell outflow rate: sum over faces of outgoing face speed / h, plus 2 d eps / h^2.
inline double max_outflow_rate(const DensityPair& s, const DriftField& w, double eps) {
  const int d = s.d, N = s.N;
  const double h = s.h();
  double best = 0;
  for (size_t c = 0; c < s.cells(); ++c) {
    for (int sign = -1; sign <= 1; sign += 2) {
      double out = 0;
      for (int a = 0; a < d; ++a) {
        const auto& f = a == 0 ? w.w1 : w.w2;
        size_t r = neighbor(c, a, +1, d, N), l = neighbor(c, a, -1, d, N);
        double vr = -sign * 0.5 * (f[c] + f[r]), vl = -sign * 0.5 * (f[c] + f[l]);
        out += std::max(vr, 0.0) + std::max(-vl, 0.0);
      }
      best = std::max(best, out / h);
    }
  }
  return best + 2.0 * d * eps / (h * h);
}

inline void upwind_update(const std::vector<double>& rho, std::vector<double>& out, const DriftField& w, int sign,
                          double eps, double dt, int d, int N) {
  const double h = 1.0 / N;
  out = rho;
  for (int a = 0; a < d; ++a) {
    const auto& f = a == 0 ? w.w1 : w.w2;
    for (size_t c = 0; c < rho.size(); ++c) {
      size_t r = neighbor(c, a, +1, d, N);
      double v = -sign * 0.5 * (f[c] + f[r]);
      double flux = v * (v >= 0 ? rho[c] : rho[r]) - eps * (rho[r] - rho[c]) / h;
      out[c] -= dt / h * flux;
      out[r] += dt / h * flux;
    }
  }
}

}  // namespace detail

struct CflError : Error {
  double limit;
  CflError(double dt, double lim)
      : Error("CFL violation: dt = " + std::to_string(dt) + " exceeds " + std::to_string(lim)), limit(lim) {}
};

/// One forward-Euler step of the conservative first-order upwind scheme with optional viscosity.
inline DensityPair step_densities(const DensityPair& s, const SpectralKernel& V, const ExternalPotential& U, Mode mode,
                                  double eps, double dt) {
  if (eps < 0) throw Error("step_densities: eps must be >= 0");
  auto w = drift_field(s, V, U, mode);
  double rate = detail::max_outflow_rate(s, w, eps);
  if (dt * rate > 0.9 * (1 + 1e-12)) throw CflError(dt, 0.9 / rate);
  DensityPair o = s;
  detail::upwind_update(s.plus, o.plus, w, +1, eps, dt, s.d, s.N);
  detail::upwind_update(s.minus, o.minus, w, -1, eps, dt, s.d, s.N);
  o.t = s.t + dt;
  return o;
}

struct PdeOptions {
  Mode mode = Mode::Isotropic;
  double eps = 0;
  double cfl = 0.45;  ///< target fraction of the per-step outflow limit
  std::vector<double> sample_times;
  std::function<void(const DensityPair&)> on_sample;
};

/// Adaptive forward Euler up to t + T; steps are shortened to land exactly on sample times.
inline DensityPair solve_pde(DensityPair s, const SpectralKernel& V, const ExternalPotential& U, double T,
                             const PdeOptions& opt, long* steps_taken = nullptr) {
  if (!(opt.cfl > 0 && opt.cfl <= 0.9)) throw Error("solve_pde: cfl target must lie in (0, 0.9]");
  std::vector<double> samples = opt.sample_times;
  std::sort(samples.begin(), samples.end());
  const double t_end = s.t + T;
  size_t next = 0;
  while (next < samples.size() && samples[next] < s.t) ++next;
  auto emit = [&]() {
    while (next < samples.size() && samples[next] <= s.t + 1e-12) {
      if (opt.on_sample) opt.on_sample(s);
      ++next;
    }
  };
  emit();
  long steps = 0;
  while (s.t < t_end - 1e-14) {
    auto w = drift_field(s, V, U, opt.mode);
    double rate = detail::max_outflow_rate(s, w, opt.eps);
    double stop = next < samples.size() ? std::min(samples[next], t_end) : t_end;
    double dt = stop - s.t;
    if (rate > 0) dt = std::min(dt, opt.cfl / rate);
    DensityPair o = s;
    detail::upwind_update(s.plus, o.plus, w, +1, opt.eps, dt, s.d, s.N);
    detail::upwind_update(s.minus, o.minus, w, -1, opt.eps, dt, s.d, s.N);
    o.t = (stop - s.t <= dt) ? stop : s.t + dt;
    s = std::move(o);
    ++steps;
    emit();
  }
  if (steps_taken) *steps_taken = steps;
  return s;
}

/// (Ent(rho+), Ent(rho-)) with Ent(rho) = h^d sum rho log rho, 0 log 0 = 0.
inline std::pair<double, double> entropy(const DensityPair& s) {
  auto ent = [&](const std::vector<double>& r) {
    double e = 0;
    for (double v : r)
      if (v > 0) e += v * std::log(v);
    return e * s.cell_volume();
  };
  return {ent(s.plus), ent(s.minus)};
}

/// Squared Sobolev norm sum_k (1+|k|^2)^s |ghat_k|^2 from the DFT of a gridded field.
inline double hs_norm(const std::vector<double>& g, int d, int N, double s) {
  auto c = fourier_coefficients(g, d, N);
  double r = 0;
  for (size_t i = 0; i < c.size(); ++i) {
    double k1 = freq_of(d == 1 ? int(i) : int(i / N), N);
    double k2 = d == 1 ? 0 : freq_of(int(i % N), N);
    r += std::pow(1 + k1 * k1 + k2 * k2, s) * std::norm(c[i]);
  }
  return r;
}

struct CoercivityResult {
  double lhs = 0, rhs = 0, ratio = 0, c = 0;
  bool holds() const { return lhs >= c * rhs * (1 - 1e-12) - 1e-300; }
};

/// lhs = -int (Delta V * f) f, rhs = |grad V * f|^2_{H^{d/2}}; anisotropic replaces grad by d/dx1.
inline CoercivityResult coercivity_check(const SpectralKernel& V, const std::vector<double>& f, int N,
                                         bool anisotropic = false) {
  const int d = V.dim();
  auto c = fourier_coefficients(f, d, N);
  CoercivityResult r;
  for (size_t i = 0; i < c.size(); ++i) {
    int k1 = freq_of(d == 1 ? int(i) : int(i / N), N);
    int k2 = d == 1 ? 0 : freq_of(int(i % N), N);
    double v = V.coef(k1, k2);
    double kk = anisotropic ? double(k1) * k1 : double(k1) * k1 + double(k2) * k2;
    double a = std::norm(c[i]);
    r.lhs += 4 * kPi * kPi * kk * v * a;
    r.rhs += std::pow(1.0 + double(k1) * k1 + double(k2) * k2, 0.5 * d) * 4 * kPi * kPi * kk * v * v * a;
  }
  r.c = 1.0 / V.v2_sup().value;
  r.ratio = r.rhs > 0 ? r.lhs / r.rhs : std::numeric_limits<double>::infinity();
  return r;
}

struct BudgetRow {
  double t = 0, entropy = 0, dissipation = 0, lhs = 0, rhs = 0, margin = 0;
};

/// Ent(rho(t)) + c int_0^t |grad V * kappa|^2_{H^{d/2}} <= T |Delta U|_inf + Ent(rho_0) along a
/// trajectory at sample times (trapezoidal time integral). Slip-confined runs use d/dx1 in place of grad.
inline std::vector<BudgetRow> entropy_budget(const std::vector<DensityPair>& traj, const SpectralKernel& V,
                                             const ExternalPotential& U, Mode mode = Mode::Isotropic) {
  std::vector<BudgetRow> rows;
  if (traj.empty()) return rows;
  const double c = 1.0 / V.v2_sup().value;
  const double T = traj.back().t - traj.front().t;
  auto e0 = entropy(traj.front());
  const double rhs = T * U.laplacian_sup() + e0.first + e0.second;
  auto diss = [&](const DensityPair& s) {
    std::vector<double> kappa(s.cells());
    for (size_t i = 0; i < s.cells(); ++i) kappa[i] = s.plus[i] - s.minus[i];
    auto g = convolve_field(V, kappa, s.N, mode == Mode::Isotropic ? Derivative::Grad : Derivative::Component1);
    double r = 0;
    for (auto& gi : g) r += hs_norm(gi, s.d, s.N, 0.5 * s.d);
    return r;
  };
  double integral = 0, prev_d = 0, prev_t = traj.front().t;
  for (size_t i = 0; i < traj.size(); ++i) {
    double dn = diss(traj[i]);
    if (i > 0) integral += 0.5 * (dn + prev_d) * (traj[i].t - prev_t);
    prev_d = dn;
    prev_t = traj[i].t;
    auto e = entropy(traj[i]);
    BudgetRow row;
    row.t = traj[i].t;
    row.entropy = e.first + e.second;
    row.dissipation = integral;
    row.lhs = row.entropy + c * integral;
    row.rhs = rhs;
    row.margin = rhs - row.lhs;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace gblab
