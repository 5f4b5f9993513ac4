#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "torus.hpp"

namespace gblab {

/// Uniform-weight point cloud on T^d: every atom carries mass w.
struct Empirical {
  int d = 1;
  std::vector<Vec> pts;
  double w = 0;
  double mass() const { return double(pts.size()) * w; }
};

/// Exact min-cost perfect matching on an n x n cost matrix (row-major). Returns the column
/// assigned to each row.
inline std::vector<int> hungarian(const std::vector<double>& cost, int n, double* total = nullptr) {
  const double INF = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), INF);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = INF;
      const double* row = &cost[size_t(i0 - 1) * n];
      for (int j = 1; j <= n; ++j)
        if (!used[j]) {
          double cur = row[j - 1] - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> col(n);
  for (int j = 1; j <= n; ++j) col[p[j] - 1] = j - 1;
  if (total) {
    double s = 0;
    for (int i = 0; i < n; ++i) s += cost[size_t(i) * n + col[i]];
    *total = s;
  }
  return col;
}

struct SinkhornOptions {
  double eps_final_rel = 2e-6;  ///< final regularization relative to max cost
  double anneal = 0.25;
  double tol = 1e-6;        ///< L1 marginal error at the final level
  double tol_level = 1e-3;  ///< L1 marginal error at intermediate levels
  int max_iter_level = 1000;
  int max_iter_final = 50000;
  double absorb_at = 1e30;  ///< scalings beyond this (or its inverse) are folded into the potentials
};

/// Sinkhorn with annealed regularization on a stabilized kernel exp((f + g - C)/eps): scaling
/// iterations, with large scalings absorbed into the log-domain potentials f, g. Returns <P, C>
/// for the final plan, which approximates the unregularized optimum to well below 1e-3 relative
/// at the default settings.
inline double sinkhorn_cost(const std::vector<double>& C, const std::vector<double>& a, const std::vector<double>& b,
                            const SinkhornOptions& opt = {}) {
  const size_t n = a.size(), m = b.size();
  if (C.size() != n * m) throw Error("sinkhorn: cost matrix size mismatch");
  double cmax = 0;
  for (double c : C) cmax = std::max(cmax, c);
  if (cmax == 0) return 0;
  std::vector<double> f(n, 0), g(m, 0), K(n * m), u(n, 1), v(m, 1), Kv(n), Ktu(m);
  const double eps_final = opt.eps_final_rel * cmax;
  double eps = cmax;

  auto build = [&] {
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < m; ++j) K[i * m + j] = std::exp((f[i] + g[j] - C[i * m + j]) / eps);
  };
  auto absorb = [&] {
    for (size_t i = 0; i < n; ++i) f[i] += eps * std::log(u[i]);
    for (size_t j = 0; j < m; ++j) g[j] += eps * std::log(v[j]);
    std::fill(u.begin(), u.end(), 1.0);
    std::fill(v.begin(), v.end(), 1.0);
    build();
  };
  // exact log-sum-exp half steps, used when the stabilized kernel underflows on a whole row
  auto log_update = [&] {
    for (size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < m; ++j) mx = std::max(mx, (g[j] - C[i * m + j]) / eps);
      double t = 0;
      for (size_t j = 0; j < m; ++j) t += std::exp((g[j] - C[i * m + j]) / eps - mx);
      f[i] = eps * (std::log(a[i]) - mx - std::log(t));
    }
    for (size_t j = 0; j < m; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < n; ++i) mx = std::max(mx, (f[i] - C[i * m + j]) / eps);
      double t = 0;
      for (size_t i = 0; i < n; ++i) t += std::exp((f[i] - C[i * m + j]) / eps - mx);
      g[j] = eps * (std::log(b[j]) - mx - std::log(t));
    }
    std::fill(u.begin(), u.end(), 1.0);
    std::fill(v.begin(), v.end(), 1.0);
    build();
  };
  auto mult_K = [&] {
    for (size_t i = 0; i < n; ++i) {
      double t = 0;
      const double* row = &K[i * m];
      for (size_t j = 0; j < m; ++j) t += row[j] * v[j];
      Kv[i] = t;
    }
  };
  auto mult_Kt = [&] {
    std::fill(Ktu.begin(), Ktu.end(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      const double* row = &K[i * m];
      for (size_t j = 0; j < m; ++j) Ktu[j] += row[j] * u[i];
    }
  };
  auto degenerate = [](const std::vector<double>& x) {
    for (double y : x)
      if (!(y > 1e-300) || !std::isfinite(y)) return true;
    return false;
  };
  auto large = [&] {
    for (double y : u)
      if (y > opt.absorb_at || y < 1 / opt.absorb_at) return true;
    for (double y : v)
      if (y > opt.absorb_at || y < 1 / opt.absorb_at) return true;
    return false;
  };

  build();
  while (true) {
    const bool last = eps <= eps_final;
    const int iters = last ? opt.max_iter_final : opt.max_iter_level;
    const double tol = last ? opt.tol : opt.tol_level;
    for (int it = 0; it < iters; ++it) {
      mult_K();
      if (degenerate(Kv)) {
        log_update();
        continue;
      }
      for (size_t i = 0; i < n; ++i) u[i] = a[i] / Kv[i];
      mult_Kt();
      if (degenerate(Ktu)) {
        log_update();
        continue;
      }
      for (size_t j = 0; j < m; ++j) v[j] = b[j] / Ktu[j];
      if (large()) absorb();
      if (it % 10 == 9) {
        mult_K();
        double err = 0;
        for (size_t i = 0; i < n; ++i) err += std::abs(u[i] * Kv[i] - a[i]);
        if (err < tol) break;
      }
    }
    absorb();
    if (last) break;
    eps = std::max(eps * opt.anneal, eps_final);
    build();
  }
  double cost = 0;
  for (size_t k = 0; k < n * m; ++k) cost += K[k] * C[k];
  return cost;
}

/// Exact squared W2 between equal-count uniform samples on the circle: the optimal matching pairs
/// sorted samples up to a cyclic offset.
inline double w2sq_circle_equal(std::vector<double> a, std::vector<double> b, double w) {
  const size_t n = a.size();
  if (n == 0) return 0;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double best = std::numeric_limits<double>::infinity();
  for (size_t s = 0; s < n; ++s) {
    double c = 0;
    for (size_t i = 0; i < n && c < best; ++i) {
      double r = nearest_image(a[i] - b[(i + s) % n]);
      c += r * r;
    }
    best = std::min(best, c);
  }
  return best * w;
}

inline std::vector<double> cost_matrix(const Empirical& a, const Empirical& b) {
  std::vector<double> C(a.pts.size() * b.pts.size());
  for (size_t i = 0; i < a.pts.size(); ++i)
    for (size_t j = 0; j < b.pts.size(); ++j) C[i * b.pts.size() + j] = torus_dist2(a.pts[i], b.pts[j], a.d);
  return C;
}

inline constexpr size_t kHungarianMax = 2048;

namespace detail {

inline Empirical replicate(const Empirical& e, size_t r) {
  Empirical o{e.d, {}, e.w / double(r)};
  o.pts.reserve(e.pts.size() * r);
  for (auto& p : e.pts)
    for (size_t k = 0; k < r; ++k) o.pts.push_back(p);
  return o;
}

}  // namespace detail

namespace detail {

inline double w2_squared_ordered(const Empirical& a, const Empirical& b) {
  const size_t na = a.pts.size(), nb = b.pts.size();
  if (na != nb) {
    size_t L = std::lcm(na, nb);
    size_t limit = a.d == 1 ? size_t(1) << 15 : kHungarianMax;
    if (L <= limit) return w2_squared_ordered(replicate(a, L / na), replicate(b, L / nb));
    if (a.d == 1) throw Error("w2: 1D unequal counts need a common multiple <= 32768");
    std::vector<double> wa(na, a.w), wb(nb, b.w);
    double s = a.mass();
    for (auto& x : wa) x /= s;
    for (auto& x : wb) x /= s;
    return s * sinkhorn_cost(cost_matrix(a, b), wa, wb);
  }
  if (a.d == 1) {
    std::vector<double> xa(na), xb(nb);
    for (size_t i = 0; i < na; ++i) xa[i] = a.pts[i][0];
    for (size_t i = 0; i < nb; ++i) xb[i] = b.pts[i][0];
    return w2sq_circle_equal(xa, xb, a.w);
  }
  auto C = cost_matrix(a, b);
  if (na <= kHungarianMax) {
    double total;
    hungarian(C, int(na), &total);
    return total * a.w;
  }
  std::vector<double> wa(na, 1.0 / na), wb(nb, 1.0 / nb);
  return a.mass() * sinkhorn_cost(C, wa, wb);
}

}  // namespace detail

/// Squared W2 between uniform empirical measures of equal total mass (+inf otherwise).
/// d = 1: exact cyclic-offset solver. d = 2: Hungarian up to 2048 atoms, annealed Sinkhorn above.
/// Unequal counts are brought to a common count by replication when that stays on an exact path.
inline double w2_squared(const Empirical& a, const Empirical& b) {
  if (a.d != b.d) throw Error("w2: dimension mismatch");
  if (std::abs(a.mass() - b.mass()) > 1e-12 * std::max(1.0, a.mass())) return std::numeric_limits<double>::infinity();
  if (a.pts.empty() || b.pts.empty()) return 0;
  {
    // fixed argument order so that w2(a, b) and w2(b, a) agree bitwise
    auto key = [](const Empirical& e) {
      auto k = e.pts;
      std::sort(k.begin(), k.end());
      return k;
    };
    if (key(b) < key(a) || (key(b) == key(a) && b.w < a.w)) return detail::w2_squared_ordered(b, a);
  }
  return detail::w2_squared_ordered(a, b);
}

inline double w2_empirical(const Empirical& a, const Empirical& b) { return std::sqrt(w2_squared(a, b)); }

}  // namespace gblab
