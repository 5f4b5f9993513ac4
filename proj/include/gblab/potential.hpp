#pragma once

#include <cmath>
#include <vector>

#include "kernels.hpp"

namespace gblab {

/// U(x) = sum_j a_j cos(2 pi k_j.x + phi_j) with analytic gradient and Hessian.
class ExternalPotential {
 public:
  struct Term {
    double amp = 0;
    Freq k{0, 0};
    double phase = 0;
  };

  ExternalPotential() = default;
  explicit ExternalPotential(std::vector<Term> terms) : terms_(std::move(terms)) {}

  static ExternalPotential zero() { return {}; }
  /// a cos(2 pi x_1)
  static ExternalPotential cosine(double a, int k1 = 1, int k2 = 0) { return ExternalPotential({{a, {k1, k2}, 0.0}}); }

  const std::vector<Term>& terms() const { return terms_; }
  bool is_zero() const {
    for (auto& t : terms_)
      if (t.amp != 0) return false;
    return true;
  }

  double value(const Vec& x) const {
    double u = 0;
    for (auto& t : terms_) u += t.amp * std::cos(arg(t, x));
    return u;
  }
  Vec grad(const Vec& x) const {
    Vec g{0, 0};
    for (auto& t : terms_) {
      double s = -2 * kPi * t.amp * std::sin(arg(t, x));
      g[0] += s * t.k[0];
      g[1] += s * t.k[1];
    }
    return g;
  }
  Sym2 hess(const Vec& x) const {
    Sym2 h;
    for (auto& t : terms_) {
      double c = -4 * kPi * kPi * t.amp * std::cos(arg(t, x));
      h.xx += c * t.k[0] * t.k[0];
      h.xy += c * t.k[0] * t.k[1];
      h.yy += c * t.k[1] * t.k[1];
    }
    return h;
  }
  double laplacian(const Vec& x) const {
    Sym2 h = hess(x);
    return h.xx + h.yy;
  }

  /// Bound on sup |D^2 U| (exact for a single term).
  double hess_sup() const {
    double b = 0;
    for (auto& t : terms_) b += std::abs(t.amp) * 4 * kPi * kPi * (double(t.k[0]) * t.k[0] + double(t.k[1]) * t.k[1]);
    return b;
  }
  /// Bound on sup |Delta U| (exact for a single term).
  double laplacian_sup() const { return hess_sup(); }

 private:
  static double arg(const Term& t, const Vec& x) { return 2 * kPi * (t.k[0] * x[0] + t.k[1] * x[1]) + t.phase; }
  std::vector<Term> terms_;
};

}  // namespace gblab
