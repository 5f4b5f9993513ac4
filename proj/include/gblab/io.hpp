#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "pde.hpp"

namespace gblab {

static_assert(std::endian::native == std::endian::little, "binary snapshots assume a little-endian host");

/// Comma-separated rows with round-trip precision.
class CsvWriter {
 public:
  CsvWriter(std::ostream& os, const std::vector<std::string>& header) : os_(os) {
    os_ << std::setprecision(17);
    for (size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
    os_ << '\n';
  }
  template <class... T>
  void row(const T&... v) {
    int i = 0;
    ((os_ << (i++ ? "," : "") << v), ...);
    os_ << '\n';
  }

 private:
  std::ostream& os_;
};

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw Error("cannot open " + path + " for writing");
  return f;
}

inline std::vector<std::string> trajectory_header() { return {"t", "i", "x1", "x2", "sign"}; }

inline void write_trajectory_rows(CsvWriter& w, const ParticleSystem& s) {
  for (int i = 0; i < s.n(); ++i) w.row(s.t, i, s.x[i][0], s.x[i][1], s.b[i]);
}

inline void write_density_csv(std::ostream& os, const DensityPair& s) {
  CsvWriter w(os, s.d == 1 ? std::vector<std::string>{"cell", "x", "rho_plus", "rho_minus"}
                           : std::vector<std::string>{"cell", "x1", "x2", "rho_plus", "rho_minus"});
  for (size_t c = 0; c < s.cells(); ++c) {
    Vec x = s.center(c);
    if (s.d == 1) w.row(c, x[0], s.plus[c], s.minus[c]);
    else w.row(c, x[0], x[1], s.plus[c], s.minus[c]);
  }
}

namespace detail {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("binary snapshot: truncated input");
  return v;
}

}  // namespace detail

/// Header int64 d, int64 n, float64 t, then n*d coordinates. Signs are not part of this format.
inline void write_particles_bin(std::ostream& os, const ParticleSystem& s) {
  detail::put<int64_t>(os, s.d);
  detail::put<int64_t>(os, s.n());
  detail::put<double>(os, s.t);
  for (auto& p : s.x)
    for (int a = 0; a < s.d; ++a) detail::put<double>(os, p[a]);
}

inline ParticleSystem read_particles_bin(std::istream& is) {
  ParticleSystem s;
  s.d = int(detail::get<int64_t>(is));
  check_dim(s.d);
  int64_t n = detail::get<int64_t>(is);
  if (n < 0) throw Error("binary snapshot: negative count");
  s.t = detail::get<double>(is);
  s.x.assign(size_t(n), Vec{0, 0});
  s.b.assign(size_t(n), 1);
  for (auto& p : s.x)
    for (int a = 0; a < s.d; ++a) p[a] = detail::get<double>(is);
  return s;
}

/// Header int64 d, int64 N, float64 t, then rho+ and rho- as flat arrays.
inline void write_density_bin(std::ostream& os, const DensityPair& s) {
  detail::put<int64_t>(os, s.d);
  detail::put<int64_t>(os, s.N);
  detail::put<double>(os, s.t);
  for (double v : s.plus) detail::put<double>(os, v);
  for (double v : s.minus) detail::put<double>(os, v);
}

inline DensityPair read_density_bin(std::istream& is) {
  int d = int(detail::get<int64_t>(is));
  int N = int(detail::get<int64_t>(is));
  auto s = DensityPair::zeros(d, N);
  s.t = detail::get<double>(is);
  for (auto& v : s.plus) v = detail::get<double>(is);
  for (auto& v : s.minus) v = detail::get<double>(is);
  return s;
}

}  // namespace gblab
