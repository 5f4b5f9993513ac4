#pragma once

#include <cmath>
#include <vector>

#include "dipoles.hpp"
#include "ot.hpp"
#include "pde.hpp"

namespace gblab {

/// Signed empirical measure: atoms of each sign, every atom of mass w (1/n for n particles).
struct EmpiricalPair {
  int d = 1;
  std::vector<Vec> plus, minus;
  double w = 0;

  Empirical pos() const { return {d, plus, w}; }
  Empirical neg() const { return {d, minus, w}; }

  static EmpiricalPair from_particles(const ParticleSystem& s) {
    EmpiricalPair e;
    e.d = s.d;
    e.w = 1.0 / s.n();
    for (int i = 0; i < s.n(); ++i) (s.b[i] > 0 ? e.plus : e.minus).push_back(s.x[i]);
    return e;
  }
  ParticleSystem to_particles() const {
    ParticleSystem s;
    s.d = d;
    for (auto& p : plus) {
      s.x.push_back(p);
      s.b.push_back(1);
    }
    for (auto& p : minus) {
      s.x.push_back(p);
      s.b.push_back(-1);
    }
    return s;
  }
};

struct QuantizedMasses {
  DensityPair rho;
  double moved = 0;           ///< mass transferred from + to -
  double entropy_change = 0;  ///< Ent(rho_n) - Ent(rho), both signs summed
};

/// Rescale each sign so that n * mass is an integer, moving at most 1/n from + to -.
inline QuantizedMasses quantize_masses(const DensityPair& rho, int n) {
  if (n < 1) throw Error("quantize_masses: n must be >= 1");
  double mp = rho.mass_plus(), mm = rho.mass_minus();
  if (std::abs(mp + mm - 1) > 1e-9) throw Error("quantize_masses: total mass must be 1");
  double tp = std::floor(n * mp + 1e-9) / n;
  double tm = 1 - tp;
  QuantizedMasses q;
  q.rho = rho;
  q.moved = mp - tp;
  if (std::abs(tp - mp) > 1e-15) {
    for (auto& v : q.rho.plus) v *= tp / mp;
    if (mm > 0) {
      for (auto& v : q.rho.minus) v *= tm / mm;
    } else {
      for (auto& v : q.rho.minus) v = tm;
    }
  }
  auto e0 = entropy(rho), e1 = entropy(q.rho);
  q.entropy_change = (e1.first - e0.first) + (e1.second - e0.second);
  return q;
}

namespace detail {

inline int cells_per_axis(int n, int d) {
  if (d == 1) return n;
  int g = int(std::floor(std::sqrt(double(n))));
  while (g * g < n) ++g;
  while (g > 1 && (g - 1) * (g - 1) >= n) --g;
  return g;
}

// Overlap lengths of the G coarse cells with the N fine cells of [0,1).
inline std::vector<std::vector<std::pair<int, double>>> overlaps(int G, int N) {
  std::vector<std::vector<std::pair<int, double>>> o(G);
  for (int g = 0; g < G; ++g) {
    double a = double(g) / G, b = double(g + 1) / G;
    int i0 = int(std::floor(a * N)), i1 = std::min(N - 1, int(std::ceil(b * N)) - 1);
    for (int i = std::max(0, i0); i <= i1; ++i) {
      double len = std::min(b, double(i + 1) / N) - std::max(a, double(i) / N);
      if (len > 0) o[g].push_back({i, len});
    }
  }
  return o;
}

inline std::vector<double> coarse_masses(const std::vector<double>& rho, int d, int N, int G) {
  auto o = overlaps(G, N);
  if (d == 1) {
    std::vector<double> m(G, 0);
    for (int g = 0; g < G; ++g)
      for (auto [i, len] : o[g]) m[g] += rho[i] * len;
    return m;
  }
  std::vector<double> half(size_t(N) * G, 0);  // (fine x1, coarse x2)
  for (int i = 0; i < N; ++i)
    for (int g = 0; g < G; ++g)
      for (auto [j, len] : o[g]) half[size_t(i) * G + g] += rho[size_t(i) * N + j] * len;
  std::vector<double> m(size_t(G) * G, 0);
  for (int g1 = 0; g1 < G; ++g1)
    for (auto [i, len] : o[g1])
      for (int g2 = 0; g2 < G; ++g2) m[size_t(g1) * G + g2] += half[size_t(i) * G + g2] * len;
  return m;
}

inline std::vector<Vec> sweep_atoms(const std::vector<double>& cm, int d, int G, int n, long expected) {
  std::vector<Vec> atoms;
  double acc = 0;
  size_t last = 0;
  for (size_t c = 0; c < cm.size(); ++c) {
    acc += cm[c];
    if (cm[c] > 0) last = c;
    long k = long(std::floor(n * acc + 1e-9));
    if (long(atoms.size()) + k > expected) k = expected - long(atoms.size());
    Vec ctr = d == 1 ? Vec{(c + 0.5) / G, 0} : Vec{(double(c / G) + 0.5) / G, (double(c % G) + 0.5) / G};
    for (long j = 0; j < k; ++j) atoms.push_back(ctr);
    acc -= double(k) / n;
  }
  Vec ctr = d == 1 ? Vec{(last + 0.5) / G, 0} : Vec{(double(last / G) + 0.5) / G, (double(last % G) + 0.5) / G};
  while (long(atoms.size()) < expected) atoms.push_back(ctr);
  return atoms;
}

}  // namespace detail

/// Cells of side 1/ceil(n^{1/d}), swept row-major; residual mass is carried forward so each cell
/// holds a multiple of 1/n, and that many atoms sit at the cell center.
inline EmpiricalPair grid_empirical(const DensityPair& rho, int n) {
  if (n < 1) throw Error("grid_empirical: n must be >= 1");
  const int d = rho.d;
  double np = n * rho.mass_plus(), nm = n * rho.mass_minus();
  if (std::abs(np - std::round(np)) > 1e-6 || std::abs(nm - std::round(nm)) > 1e-6)
    throw Error("grid_empirical: n times each sign's mass must be an integer");
  const int G = detail::cells_per_axis(n, d);
  EmpiricalPair e;
  e.d = d;
  e.w = 1.0 / n;
  e.plus = detail::sweep_atoms(detail::coarse_masses(rho.plus, d, rho.N, G), d, G, n, std::lround(np));
  e.minus = detail::sweep_atoms(detail::coarse_masses(rho.minus, d, rho.N, G), d, G, n, std::lround(nm));
  return e;
}

/// Per-sign bound C n^{-1/d} reported with grid_empirical: two cell diameters.
inline double grid_empirical_bound(int n, int d) { return 2.0 * std::sqrt(double(d)) / detail::cells_per_axis(n, d); }

namespace detail {

// Smallest x in [0,1) with F(x) = q for the piecewise-constant density rho on N cells.
inline double quantile(const std::vector<double>& rho, double q) {
  const int N = int(rho.size());
  double F = 0;
  for (int i = 0; i < N; ++i) {
    double cm = rho[i] / N;
    if (cm > 0 && F + cm > q) return std::max(0.0, (i + (q - F) / cm) / N);
    F += cm;
  }
  return 1.0 - 1e-16;
}

}  // namespace detail

/// Dipole initial data. d = 1: midpoints at the quantiles 2k/n of rho0 starting from 0.
/// d = 2: rows at marginal (x2) quantiles, conditional x1 quantiles inside each row.
/// All half-widths equal `offset`.
inline DipoleSystem dipole_data(const std::vector<double>& rho0, int d, int N, int n, DipoleMode mode,
                                Vec offset = {0, 0}) {
  if (n % 2 != 0 || n < 2) throw Error("dipole_data: n must be even and positive");
  if (dipole_dim(mode) != d) throw Error("dipole_data: dimension does not match mode");
  if (mode == DipoleMode::SlipConfined2D && offset[1] == 0)
    throw Error("dipole_data: slip-confined data needs offset with nonzero e2 component");
  double mass = 0;
  for (double v : rho0) {
    if (!(v >= 0)) throw Error("dipole_data: density must be nonnegative");
    mass += v;
  }
  mass /= d == 1 ? N : double(N) * N;
  if (std::abs(mass - 1) > 1e-9) throw Error("dipole_data: density must have mass 1");
  const int m = n / 2;
  DipoleSystem dip;
  dip.mode = mode;
  if (d == 1) {
    offset[1] = 0;
    for (int k = 0; k < m; ++k) {
      dip.z.push_back({detail::quantile(rho0, 2.0 * k / n), 0});
      dip.dv.push_back(offset);
    }
    return dip;
  }
  std::vector<double> marg(N, 0);  // density of x2
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) marg[j] += rho0[size_t(i) * N + j] / N;
  int r = detail::cells_per_axis(m, 2);
  std::vector<int> counts(r, m / r);
  for (int j = 0; j < m % r; ++j) ++counts[j];
  int before = 0;
  for (int row = 0; row < r; ++row) {
    int c = counts[row];
    if (c == 0) continue;
    double qa = double(before) / m, qb = double(before + c) / m;
    double ya = detail::quantile(marg, qa), yb = qb >= 1 ? 1.0 : detail::quantile(marg, qb);
    // conditional x1 profile over the band [ya, yb)
    std::vector<double> prof(N, 0);
    double tot = 0;
    for (int j = 0; j < N; ++j) {
      double lo = std::max(ya, double(j) / N), hi = std::min(yb, double(j + 1) / N);
      if (hi <= lo) continue;
      for (int i = 0; i < N; ++i) prof[i] += rho0[size_t(i) * N + j] * (hi - lo);
    }
    for (double v : prof) tot += v;
    if (tot <= 0) {  // degenerate band: use the cell row containing ya
      int j = std::min(N - 1, int(ya * N));
      for (int i = 0; i < N; ++i) prof[i] = rho0[size_t(i) * N + j];
      tot = 0;
      for (double v : prof) tot += v;
    }
    for (auto& v : prof) v *= N / tot;
    for (int k = 0; k < c; ++k) {
      dip.z.push_back({detail::quantile(prof, double(k) / c), ya});
      dip.dv.push_back(offset);
    }
    before += c;
  }
  return dip;
}

}  // namespace gblab
