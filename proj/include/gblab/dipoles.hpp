#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dynamics.hpp"

namespace gblab {

enum class DipoleMode { Isotropic1D, Isotropic2D, SlipConfined2D };

inline std::string dipole_mode_name(DipoleMode m) {
  switch (m) {
    case DipoleMode::Isotropic1D: return "isotropic-1d";
    case DipoleMode::Isotropic2D: return "isotropic-2d";
    default: return "slip-confined-2d";
  }
}
inline int dipole_dim(DipoleMode m) { return m == DipoleMode::Isotropic1D ? 1 : 2; }

/// m dipoles with midpoints z_k and half-widths d_k: x+_k = z_k + d_k, x-_k = z_k - d_k.
struct DipoleSystem {
  DipoleMode mode = DipoleMode::Isotropic1D;
  std::vector<Vec> z;
  std::vector<Vec> dv;
  double t = 0;

  int d() const { return dipole_dim(mode); }
  int m() const { return int(z.size()); }
  int n() const { return 2 * m(); }
};

/// Pairs the k-th positive particle with the k-th negative one (index order).
inline DipoleSystem to_dipoles(const ParticleSystem& sys, DipoleMode mode) {
  if (sys.d != dipole_dim(mode)) throw Error("to_dipoles: dimension does not match mode");
  std::vector<Vec> pos, neg;
  for (int i = 0; i < sys.n(); ++i) (sys.b[i] > 0 ? pos : neg).push_back(sys.x[i]);
  if (pos.size() != neg.size()) throw Error("to_dipoles: unequal sign counts");
  DipoleSystem dip;
  dip.mode = mode;
  dip.t = sys.t;
  for (size_t k = 0; k < pos.size(); ++k) {
    Vec dk = scale(0.5, displacement(pos[k], neg[k], sys.d));
    dip.dv.push_back(dk);
    dip.z.push_back(wrap(add(neg[k], dk), sys.d));
  }
  return dip;
}

/// Particles ordered (+, -) per dipole.
inline ParticleSystem from_dipoles(const DipoleSystem& dip) {
  ParticleSystem sys;
  sys.d = dip.d();
  sys.t = dip.t;
  for (int k = 0; k < dip.m(); ++k) {
    sys.x.push_back(wrap(add(dip.z[k], dip.dv[k]), sys.d));
    sys.b.push_back(1);
    sys.x.push_back(wrap(sub(dip.z[k], dip.dv[k]), sys.d));
    sys.b.push_back(-1);
  }
  return sys;
}

struct DipoleRates {
  std::vector<Vec> dz, dd;
};

namespace detail {

// Keeps only the components that move in the given mode.
inline void project(Vec& v, DipoleMode mode) {
  if (mode != DipoleMode::Isotropic2D) v[1] = 0;
}

}  // namespace detail

/// Right-hand side in (z, d) coordinates:
///   dz_i = -(1/2n) sum_l sum_{p,q} pq grad V(z_i - z_l + p d_i - q d_l) - 1/2 sum_p p grad U(z_i + p d_i)
///   dd_i = -(1/2n) sum_l sum_{p,q}  q grad V(z_i - z_l + p d_i - q d_l) - 1/2 sum_p   grad U(z_i + p d_i)
/// The nearest image of z_i - z_l is taken once; the widths are added without re-wrapping.
template <class Kernel>
DipoleRates dipole_rhs(const DipoleSystem& dip, const Kernel& V, const ExternalPotential& U) {
  const int m = dip.m(), d = dip.d();
  const double c = 1.0 / (2.0 * dip.n());
  DipoleRates r{std::vector<Vec>(m, Vec{0, 0}), std::vector<Vec>(m, Vec{0, 0})};
  for (int i = 0; i < m; ++i) {
    for (int l = 0; l < m; ++l) {
      Vec base = l == i ? Vec{0, 0} : displacement(dip.z[i], dip.z[l], d);
      for (int p = -1; p <= 1; p += 2)
        for (int q = -1; q <= 1; q += 2) {
          if (l == i && p == q) continue;
          Vec s = add(base, sub(scale(p, dip.dv[i]), scale(q, dip.dv[l])));
          Vec g = V.grad_local(s);
          for (int a = 0; a < 2; ++a) {
            r.dz[i][a] -= c * p * q * g[a];
            r.dd[i][a] -= c * q * g[a];
          }
        }
    }
    for (int p = -1; p <= 1; p += 2) {
      Vec gu = U.grad(add(dip.z[i], scale(p, dip.dv[i])));
      for (int a = 0; a < 2; ++a) {
        r.dz[i][a] -= 0.5 * p * gu[a];
        r.dd[i][a] -= 0.5 * gu[a];
      }
    }
    detail::project(r.dz[i], dip.mode);
    detail::project(r.dd[i], dip.mode);
  }
  return r;
}

/// sup_i |(n/2) d/dz_i E_n| = sup_i |dz_i/dt|.
template <class Kernel>
double slow_force_sup(const DipoleSystem& dip, const Kernel& V, const ExternalPotential& U) {
  auto r = dipole_rhs(dip, V, U);
  double m = 0;
  for (auto& v : r.dz) m = std::max(m, std::sqrt(norm2(v)));
  return m;
}

struct ManifoldCheck {
  bool inside = false;
  bool spacing_ok = false, width_ok = false, e2_ok = true;
  double min_spacing = 0, spacing_threshold = 0;
  double max_width = 0, width_threshold = 0;
  double min_e2 = 0;
  double spacing_margin() const { return min_spacing - spacing_threshold; }
  double width_margin() const { return width_threshold - max_width; }
};

/// Slow manifold: min spacing >= M/n (d = 1) or M/sqrt(n) (d = 2), widths <= gamma*delta
/// (slip-confined: |d| < delta and min |d.e2| > 0).
inline ManifoldCheck slow_manifold_contains(const DipoleSystem& dip, double M, double gamma, double delta) {
  ManifoldCheck c;
  const int m = dip.m(), d = dip.d();
  const double n = dip.n();
  double sp = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) sp = std::min(sp, torus_dist(dip.z[i], dip.z[j], d));
  c.min_spacing = sp;
  c.spacing_threshold = d == 1 ? M / n : M / std::sqrt(n);
  // relative slack so that floating-point equal spacing meets the threshold with equality
  c.spacing_ok = sp >= c.spacing_threshold * (1 - 1e-12);
  double w = 0, e2 = std::numeric_limits<double>::infinity();
  for (auto& v : dip.dv) {
    w = std::max(w, std::sqrt(norm2(v)));
    e2 = std::min(e2, std::abs(v[1]));
  }
  c.max_width = w;
  if (dip.mode == DipoleMode::SlipConfined2D) {
    c.width_threshold = delta;
    c.width_ok = w < delta;
    c.min_e2 = e2;
    c.e2_ok = e2 > 0;
  } else {
    c.width_threshold = gamma * delta;
    c.width_ok = w <= c.width_threshold * (1 + 1e-12);
    c.min_e2 = d == 2 ? e2 : 0;
  }
  c.inside = c.spacing_ok && c.width_ok && c.e2_ok;
  return c;
}

struct DipoleIntegrateOptions {
  long steps = 500;
  double width_scale = 0;  ///< characteristic width used to seed the implicit bracket search
  std::vector<double> sample_times;
  std::function<void(const DipoleSystem&)> on_sample;
  std::function<void(const DipoleSystem&)> on_step;
};

struct DipoleIntegrateStats {
  long broken_widths = 0;  ///< implicit width solves that found no root and fell back to explicit Euler
};

namespace detail {

// Backward Euler for one scalar width: x - x0 - h*(self(x) + R) = 0, bracketed between x0 and the
// first sign change in the direction of the current velocity.
template <class F>
bool implicit_width(double x0, double h, F&& phi, double scale, double& out) {
  double p0 = phi(x0);
  if (p0 == 0) {
    out = x0;
    return true;
  }
  double sg = p0 > 0 ? 1.0 : -1.0;
  auto G = [&](double x) { return x - x0 - h * phi(x); };
  double lo = x0, hi = x0;
  double tau = scale * 1e-6;
  bool found = false;
  while (tau <= 0.25) {
    double x = x0 + sg * tau;
    if (sg * G(x) >= 0) {
      hi = x;
      found = true;
      break;
    }
    lo = x;
    tau *= 2;
  }
  if (!found) return false;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (sg * G(mid) >= 0) hi = mid; else lo = mid;
  }
  out = 0.5 * (lo + hi);
  return true;
}

}  // namespace detail

/// IMEX stepping in (z, d): midpoints by explicit midpoint rule with frozen widths, then each
/// width by backward Euler with the cross-dipole and external forcing frozen. Widths relax on
/// the time scale n*delta^2, far below any step that resolves the midpoint motion.
template <class Kernel>
DipoleSystem integrate_dipoles(DipoleSystem dip, const Kernel& V, const ExternalPotential& U, double T,
                               const DipoleIntegrateOptions& opt, DipoleIntegrateStats* stats = nullptr) {
  if (opt.steps < 1) throw Error("integrate_dipoles: steps must be >= 1");
  const int m = dip.m(), d = dip.d();
  const double n = dip.n();
  double wscale = opt.width_scale;
  if (!(wscale > 0)) {
    for (auto& v : dip.dv) wscale = std::max(wscale, std::sqrt(norm2(v)));
    if (!(wscale > 0)) wscale = 1e-6;
  }
  std::vector<double> samples = opt.sample_times;
  std::sort(samples.begin(), samples.end());
  auto is_sample = [&](double t) {
    for (double s : samples)
      if (std::abs(s - t) <= 1e-12 * std::max(1.0, std::abs(t))) return true;
    return false;
  };
  const double t0 = dip.t, h = T / double(opt.steps);
  if (opt.on_sample && is_sample(dip.t)) opt.on_sample(dip);
  auto self = [&](const Vec& x) {
    Vec a = V.grad_local(scale(2.0, x)), b = V.grad_local(scale(-2.0, x));
    return Vec{(a[0] - b[0]) / (2 * n), (a[1] - b[1]) / (2 * n)};
  };
  for (long step = 0; step < opt.steps; ++step) {
    auto r0 = dipole_rhs(dip, V, U);
    DipoleSystem mid = dip;
    for (int i = 0; i < m; ++i) mid.z[i] = wrap(add(dip.z[i], scale(0.5 * h, r0.dz[i])), d);
    auto r1 = dipole_rhs(mid, V, U);
    for (int i = 0; i < m; ++i) dip.z[i] = wrap(add(dip.z[i], scale(h, r1.dz[i])), d);
    auto r2 = dipole_rhs(dip, V, U);
    for (int i = 0; i < m; ++i) {
      Vec x0 = dip.dv[i];
      Vec s0 = self(x0);
      Vec R{r2.dd[i][0] - s0[0], r2.dd[i][1] - s0[1]};
      if (dip.mode != DipoleMode::Isotropic2D) {
        auto phi = [&](double x) {
          Vec v = x0;
          v[0] = x;
          return self(v)[0] + R[0];
        };
        double out;
        if (detail::implicit_width(x0[0], h, phi, wscale, out)) {
          dip.dv[i][0] = out;
        } else {
          dip.dv[i][0] = x0[0] + h * phi(x0[0]);
          if (stats) ++stats->broken_widths;
        }
      } else {
        // damped Newton on x - x0 - h (self(x) + R) = 0
        Vec x = x0;
        bool ok = false;
        for (int it = 0; it < 100; ++it) {
          Vec f = self(x);
          Vec G{x[0] - x0[0] - h * (f[0] + R[0]), x[1] - x0[1] - h * (f[1] + R[1])};
          double gn = std::sqrt(norm2(G));
          if (gn <= 1e-15 * std::max(wscale, std::sqrt(norm2(x)))) {
            ok = true;
            break;
          }
          Sym2 H = V.hess(scale(2.0, x));
          double c = 2.0 * h / n;  // d self / dx = (2/n) D^2V(2x)
          double a11 = 1 - c * H.xx, a12 = -c * H.xy, a22 = 1 - c * H.yy;
          double det = a11 * a22 - a12 * a12;
          if (det == 0) break;
          Vec dx{-(a22 * G[0] - a12 * G[1]) / det, -(-a12 * G[0] + a11 * G[1]) / det};
          double lam = 1;
          for (int ls = 0; ls < 40; ++ls, lam *= 0.5) {
            Vec xn = add(x, scale(lam, dx));
            Vec fn = self(xn);
            Vec Gn{xn[0] - x0[0] - h * (fn[0] + R[0]), xn[1] - x0[1] - h * (fn[1] + R[1])};
            if (std::sqrt(norm2(Gn)) < gn) {
              x = xn;
              break;
            }
          }
        }
        if (ok) {
          dip.dv[i] = x;
        } else {
          Vec f = self(x0);
          dip.dv[i] = {x0[0] + h * (f[0] + R[0]), x0[1] + h * (f[1] + R[1])};
          if (stats) ++stats->broken_widths;
        }
      }
    }
    dip.t = step + 1 == opt.steps ? t0 + T : t0 + (step + 1) * h;
    if (opt.on_step) opt.on_step(dip);
    if (opt.on_sample && is_sample(dip.t)) opt.on_sample(dip);
  }
  return dip;
}

}  // namespace gblab
