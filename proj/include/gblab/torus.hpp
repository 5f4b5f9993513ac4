#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gblab {

/// Two-slot coordinate vector; in d = 1 the second slot stays 0.
using Vec = std::array<double, 2>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a modelling assumption fails a numerical check (CLI exit code 2).
struct AssumptionError : Error {
  using Error::Error;
};

inline void check_dim(int d) {
  if (d != 1 && d != 2) throw Error("dimension must be 1 or 2, got " + std::to_string(d));
}

/// Reduce a coordinate into [0,1). Values already in range are returned bitwise unchanged.
inline double wrap(double v) {
  if (!std::isfinite(v)) throw Error("non-finite coordinate");
  if (v >= 0.0 && v < 1.0) return v;
  double r = v - std::floor(v);
  return r >= 1.0 ? 0.0 : r;
}

inline Vec wrap(const Vec& x, int d) {
  Vec r{wrap(x[0]), 0.0};
  if (d == 2) r[1] = wrap(x[1]);
  return r;
}

/// Nearest-image component in [-1/2, 1/2); the tie at 1/2 goes to the smaller shift, i.e. -1/2.
inline double nearest_image(double s) {
  if (!std::isfinite(s)) throw Error("non-finite displacement");
  double r = s - std::floor(s + 0.5);
  if (r >= 0.5) r -= 1.0;
  if (r < -0.5) r += 1.0;
  return r;
}

inline Vec nearest_image(const Vec& s, int d) {
  Vec r{nearest_image(s[0]), 0.0};
  if (d == 2) r[1] = nearest_image(s[1]);
  return r;
}

inline Vec sub(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec add(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec scale(double c, const Vec& a) { return {c * a[0], c * a[1]}; }
inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm2(const Vec& a) { return dot(a, a); }

inline Vec displacement(const Vec& x, const Vec& y, int d) { return nearest_image(sub(x, y), d); }

inline double torus_dist2(const Vec& x, const Vec& y, int d) { return norm2(displacement(x, y, d)); }
inline double torus_dist(const Vec& x, const Vec& y, int d) { return std::sqrt(torus_dist2(x, y, d)); }

/// Symmetric 2x2 matrix stored as (xx, xy, yy).
struct Sym2 {
  double xx = 0, xy = 0, yy = 0;
  /// Spectral norm.
  double norm() const {
    double m = 0.5 * (xx + yy), r = std::hypot(0.5 * (xx - yy), xy);
    return std::max(std::abs(m + r), std::abs(m - r));
  }
};

}  // namespace gblab
