#pragma once

#include <cmath>
#include <limits>

#include "initial_data.hpp"
#include "ot.hpp"

namespace gblab {

struct SignedDistance {
  double W_plus = 0, W_minus = 0, W = 0;
};

/// W(mu, nu)^2 = W2(mu+, nu+)^2 + W2(mu-, nu-)^2 when per-sign masses agree.
inline SignedDistance w2_signed(const EmpiricalPair& a, const EmpiricalPair& b) {
  if (a.d != b.d) throw Error("w2_signed: dimension mismatch");
  auto pa = a.pos(), pb = b.pos(), ma = a.neg(), mb = b.neg();
  auto same = [](double x, double y) { return std::abs(x - y) <= 1e-12 * std::max(1.0, std::abs(x)); };
  if (!same(pa.mass(), pb.mass()) || !same(ma.mass(), mb.mass()))
    throw Error(
        "w2_signed: per-sign masses differ; the general coupling on the product space (T^d x {+1,-1})^2 "
        "with sign-change cost is not implemented");
  SignedDistance r;
  r.W_plus = std::sqrt(w2_squared(pa, pb));
  r.W_minus = std::sqrt(w2_squared(ma, mb));
  r.W = std::sqrt(r.W_plus * r.W_plus + r.W_minus * r.W_minus);
  return r;
}

inline SignedDistance w2_signed(const ParticleSystem& a, const ParticleSystem& b) {
  return w2_signed(EmpiricalPair::from_particles(a), EmpiricalPair::from_particles(b));
}

struct DensityDistance {
  SignedDistance dist;
  double bound = 0;  ///< additive quantization error sqrt(d) m^{-1/d}
  int m = 0;         ///< quantization count actually used (a multiple of the atom count)
};

/// Quantize rho with m' >= m atoms (m' a multiple of the atom count of emp) and compare.
/// rho is first rescaled per sign to the masses of emp; the masses may differ by at most 1/m.
inline DensityDistance w2_density_vs_empirical(const DensityPair& rho, const EmpiricalPair& emp, int m) {
  if (rho.d != emp.d) throw Error("w2_density_vs_empirical: dimension mismatch");
  const int n = int(emp.plus.size() + emp.minus.size());
  if (n == 0 || m < 1) throw Error("w2_density_vs_empirical: empty measure or m < 1");
  const double ep = emp.plus.size() * emp.w, em = emp.minus.size() * emp.w;
  const double rp = rho.mass_plus(), rm = rho.mass_minus();
  const double slack = 1.0 / m + 1e-12;
  if (std::abs(ep - rp) > slack || std::abs(em - rm) > slack)
    throw Error("w2_density_vs_empirical: infeasible mass matching (per-sign masses differ by more than 1/m)");
  if ((rp == 0 && ep > 0) || (rm == 0 && em > 0))
    throw Error("w2_density_vs_empirical: infeasible mass matching (empty sign in the density)");
  const int r = std::max(1, (m + n - 1) / n);
  const int mq = r * n;
  DensityPair q = rho;
  const double total = ep + em;  // renormalize so the quantized problem has mass 1
  for (auto& v : q.plus) v *= rp > 0 ? ep / rp / total : 0.0;
  for (auto& v : q.minus) v *= rm > 0 ? em / rm / total : 0.0;
  EmpiricalPair qa = grid_empirical(q, mq);
  EmpiricalPair e = emp;
  e.w = 1.0 / n;
  DensityDistance out;
  out.dist = w2_signed(qa, e);
  const double s = std::sqrt(total);
  out.dist.W_plus *= s;
  out.dist.W_minus *= s;
  out.dist.W *= s;
  out.m = mq;
  out.bound = std::sqrt(double(rho.d)) * std::pow(double(mq), -1.0 / rho.d);
  return out;
}

}  // namespace gblab
