#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "potential.hpp"
#include "torus.hpp"

namespace gblab {

enum class Mode { Isotropic, SlipConfined };

inline std::string mode_name(Mode m) { return m == Mode::Isotropic ? "isotropic" : "slip-confined"; }

struct ParticleSystem {
  int d = 1;
  std::vector<Vec> x;
  std::vector<int> b;
  double t = 0;

  int n() const { return int(x.size()); }

  void validate() const {
    check_dim(d);
    if (x.empty()) throw Error("particle system: n must be >= 1");
    if (x.size() != b.size()) throw Error("particle system: positions and signs differ in length");
    for (size_t i = 0; i < x.size(); ++i) {
      if (b[i] != 1 && b[i] != -1) throw Error("particle system: signs must be +1 or -1");
      for (int a = 0; a < d; ++a)
        if (!(x[i][a] >= 0 && x[i][a] < 1)) throw Error("particle system: position not in [0,1)^d");
      if (d == 1 && x[i][1] != 0) throw Error("particle system: d = 1 positions must have zero second slot");
    }
  }

  int count(int sign) const { return int(std::count(b.begin(), b.end(), sign)); }
};

/// E_n = (1/2n^2) sum_{i,j} b_i b_j V(x_i - x_j) + (1/n) sum_i b_i U(x_i), diagonal included.
template <class Kernel>
double energy(const ParticleSystem& sys, const Kernel& V, const ExternalPotential& U) {
  if (!V.finite_at_zero()) throw Error("energy: kernel has divergent V(0)");
  const int n = sys.n();
  double v0 = V.value(Vec{0, 0});
  double pair = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pair += sys.b[i] * sys.b[j] * V.value(displacement(sys.x[i], sys.x[j], sys.d));
  double ext = 0;
  for (int i = 0; i < n; ++i) ext += sys.b[i] * U.value(sys.x[i]);
  return (n * v0 + 2 * pair) / (2.0 * n * n) + ext / n;
}

/// dx_i/dt = -(1/n) sum_j b_i b_j grad V(x_i - x_j) - b_i grad U(x_i); e2 dropped when slip-confined.
template <class Kernel>
std::vector<Vec> velocity(const ParticleSystem& sys, const Kernel& V, const ExternalPotential& U,
                          Mode mode = Mode::Isotropic) {
  const int n = sys.n(), d = sys.d;
  std::vector<Vec> v(n, Vec{0, 0});
  const double inv = 1.0 / n;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      Vec g = V.grad(displacement(sys.x[i], sys.x[j], d));
      double c = inv * sys.b[i] * sys.b[j];
      v[i][0] -= c * g[0];
      v[i][1] -= c * g[1];
      v[j][0] += c * g[0];
      v[j][1] += c * g[1];
    }
  for (int i = 0; i < n; ++i) {
    Vec gu = U.grad(sys.x[i]);
    v[i][0] -= sys.b[i] * gu[0];
    v[i][1] -= sys.b[i] * gu[1];
    if (d == 1 || mode == Mode::SlipConfined) v[i][1] = 0;
  }
  return v;
}

/// Rejected step size; carries the cap that was exceeded.
struct DtCapError : Error {
  double cap;
  DtCapError(double dt, double c)
      : Error("dt = " + std::to_string(dt) + " exceeds the stability cap " + std::to_string(c)), cap(c) {}
};

/// dt <= 0.1 / (lambda_delta + |D^2 U|_inf)
template <class Kernel>
double dt_cap(const Kernel& V, const ExternalPotential& U) {
  return 0.1 / (V.lambda() + U.hess_sup());
}

struct IntegrateOptions {
  Mode mode = Mode::Isotropic;
  double dt = 0;  ///< 0 means "use the cap"
  std::vector<double> sample_times;
  std::function<void(const ParticleSystem&)> on_sample;
  std::function<void(const ParticleSystem&)> on_step;
};

/// Classic RK4 on the torus, re-wrapping after every stage. Each interval between consecutive
/// sample times is split into equal steps no longer than dt, so samples are hit exactly.
template <class Kernel>
ParticleSystem integrate(ParticleSystem sys, const Kernel& V, const ExternalPotential& U, double T,
                         const IntegrateOptions& opt) {
  sys.validate();
  if (!(T >= 0)) throw Error("integrate: T must be >= 0");
  double cap = dt_cap(V, U);
  double dt = opt.dt > 0 ? opt.dt : cap;
  if (dt > cap * (1 + 1e-12)) throw DtCapError(dt, cap);

  std::vector<double> samples = opt.sample_times, stops;
  std::sort(samples.begin(), samples.end());
  for (double s : samples)
    if (s >= sys.t && s <= sys.t + T) stops.push_back(s);
  stops.push_back(sys.t + T);
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());

  const int n = sys.n(), d = sys.d;
  auto shifted = [&](const std::vector<Vec>& base, const std::vector<Vec>& k, double h) {
    ParticleSystem s = sys;
    for (int i = 0; i < n; ++i) s.x[i] = wrap(add(base[i], scale(h, k[i])), d);
    return s;
  };
  if (opt.on_sample && std::binary_search(samples.begin(), samples.end(), sys.t)) opt.on_sample(sys);
  for (double stop : stops) {
    double span = stop - sys.t;
    if (span <= 0) continue;
    long steps = std::max(1L, long(std::ceil(span / dt - 1e-9)));
    double h = span / double(steps);
    double t0 = sys.t;
    for (long s = 0; s < steps; ++s) {
      auto k1 = velocity(sys, V, U, opt.mode);
      auto k2 = velocity(shifted(sys.x, k1, 0.5 * h), V, U, opt.mode);
      auto k3 = velocity(shifted(sys.x, k2, 0.5 * h), V, U, opt.mode);
      auto k4 = velocity(shifted(sys.x, k3, h), V, U, opt.mode);
      for (int i = 0; i < n; ++i) {
        Vec inc;
        for (int a = 0; a < 2; ++a) inc[a] = (k1[i][a] + 2 * k2[i][a] + 2 * k3[i][a] + k4[i][a]) / 6.0;
        sys.x[i] = wrap(add(sys.x[i], scale(h, inc)), d);
      }
      sys.t = s + 1 == steps ? stop : t0 + (s + 1) * h;
      if (opt.on_step) opt.on_step(sys);
    }
    if (opt.on_sample && std::binary_search(samples.begin(), samples.end(), stop))
      opt.on_sample(sys);
  }
  return sys;
}

}  // namespace gblab
