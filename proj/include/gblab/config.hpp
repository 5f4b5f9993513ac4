#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "kernels.hpp"
#include "potential.hpp"

namespace gblab {

/// Interaction kernel selection. Families: screw, edge, custom (spectral tables), closed-form
/// (radial -1/2 log(|s|^2 + delta^2)), edge-singular (slip-confined composite).
struct KernelSpec {
  std::string family = "screw";
  double alpha = 1.0;
  int K = 0;  ///< 0: 128 in d = 1, 64 in d = 2
  int M = 0;  ///< table size for the interpolated path, 0: default
  double eta = 0.05;
  double gamma = 0.5, c = 0.5;
  std::vector<std::pair<Freq, double>> modes;

  int cutoff(int d) const { return K > 0 ? K : (d == 1 ? 128 : 64); }
  bool spectral() const { return family == "screw" || family == "edge" || family == "custom"; }

  SpectralKernel make_spectral(double delta, int d) const {
    if (family == "screw") return SpectralKernel::screw(alpha, delta, cutoff(d), d);
    if (family == "edge") return SpectralKernel::edge(delta, cutoff(d), d);
    if (family == "custom") return SpectralKernel::custom(d, modes);
    throw Error("kernel family '" + family + "' has no spectral table");
  }
};

/// delta_n as a function of n: fixed, explicit list, slow-log sqrt(6 T s / log n), fast-power n^-p.
struct DeltaRule {
  std::string kind = "fixed";
  double value = 0.1;
  std::vector<double> values;
  double s = 2.0;
  double p = 4.0;

  double at(int n, double T, size_t rung) const {
    double v;
    if (kind == "fixed") v = value;
    else if (kind == "list") {
      if (rung >= values.size()) throw Error("delta list is shorter than the ladder");
      v = values[rung];
    } else if (kind == "slow-log") {
      if (n < 2) throw Error("slow-log delta needs n >= 2");
      v = std::sqrt(6 * T * s / std::log(double(n)));
    } else if (kind == "fast-power") v = std::pow(double(n), -p);
    else throw Error("unknown delta rule '" + kind + "'");
    if (!(v > 0) || !std::isfinite(v)) throw Error("delta rule gives a non-positive delta");
    return v;
  }
};

/// rho+ = (1 + a f)/2 and rho- = (1 - a f)/2 with f = 0, cos(2 pi x1) or the +-1 step on x1 < 1/2.
/// Single densities (dipole data) use 1 + a f.
struct DensitySpec {
  std::string shape = "uniform";
  double amp = 0.5;

  double profile(const Vec& x) const {
    if (shape == "uniform") return 0.0;
    if (shape == "cosine") return std::cos(2 * kPi * x[0]);
    if (shape == "step") return x[0] < 0.5 ? 1.0 : -1.0;
    throw Error("unknown density shape '" + shape + "'");
  }
};

struct ExperimentConfig {
  std::string regime = "convergence";
  int d = 1;
  std::vector<int> ladder{64, 128, 256, 512};
  double T = 0.05;
  int samples = 11;  ///< evenly spaced sample times including 0 and T
  double dt = 0;     ///< particle step, 0: stability cap
  uint64_t seed = 1;
  int threads = 1;

  DeltaRule delta;
  KernelSpec kernel;
  std::vector<ExternalPotential::Term> potential;
  DensitySpec density;

  int N = 1024;
  int ref_N = 4096;
  double cfl = 0.45;
  double eps = 0;

  int quant_factor = 16;  ///< density comparisons use m = quant_factor * n atoms

  std::string mode = "isotropic";  ///< nonconvergence: isotropic or slip
  long steps = 1000;
  double offset = 0.5;  ///< slip: |d.e2| = offset * delta_n
  double A = 0;         ///< spacing constant, 0: 1 / (2 sup rho0)
  double c_sp = 0.5;
  double delta_ref = 0.01;
  int proxy_N = 2048;
  int proxy_m = 4096;

  int gronwall_n = 32;
  std::vector<double> gronwall_deltas{0.1, 0.2, 0.4};
  std::vector<double> perturbations{1e-3, 1e-2, 5e-2};

  ExternalPotential U() const { return ExternalPotential(potential); }

  std::vector<double> sample_times() const {
    std::vector<double> t;
    if (samples < 2) return {0.0, T};
    for (int i = 0; i < samples; ++i) t.push_back(i + 1 == samples ? T : T * i / (samples - 1));
    return t;
  }

  void validate() const {
    check_dim(d);
    if (!(T > 0)) throw Error("config: T must be positive");
    if (ladder.empty()) throw Error("config: empty ladder");
    for (size_t i = 0; i < ladder.size(); ++i) {
      if (ladder[i] < 1) throw Error("config: ladder entries must be positive");
      if (i && ladder[i] <= ladder[i - 1]) throw Error("config: ladder must be strictly increasing");
    }
    for (size_t i = 0; i < ladder.size(); ++i) delta.at(ladder[i], T, i);
    if (threads < 1) throw Error("config: threads must be >= 1");
    if (regime != "convergence" && regime != "nonconvergence" && regime != "gronwall" && regime != "particles" &&
        regime != "pde")
      throw Error("config: unknown regime '" + regime + "'");
  }
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    auto a = item.find_first_not_of(" \t[]"), b = item.find_last_not_of(" \t[]");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  for (auto& tok : split(s, ',')) {
    std::istringstream is(tok);
    T v;
    if (!(is >> v)) throw Error("config: cannot parse list entry '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

// "a k1 k2 phase; ..." with k2 and phase optional
inline std::vector<ExternalPotential::Term> parse_terms(const std::string& s) {
  std::vector<ExternalPotential::Term> out;
  for (auto& tok : split(s, ';')) {
    std::istringstream is(tok);
    ExternalPotential::Term t;
    t.k = {0, 0};
    t.phase = 0;
    if (!(is >> t.amp >> t.k[0])) throw Error("config: potential term needs 'amp k1 [k2] [phase]'");
    is >> t.k[1] >> t.phase;
    out.push_back(t);
  }
  return out;
}

// "k1 k2 value; ..."
inline std::vector<std::pair<Freq, double>> parse_modes(const std::string& s) {
  std::vector<std::pair<Freq, double>> out;
  for (auto& tok : split(s, ';')) {
    std::istringstream is(tok);
    Freq k{0, 0};
    double v;
    if (!(is >> k[0] >> k[1] >> v)) throw Error("config: kernel mode needs 'k1 k2 value'");
    out.push_back({k, v});
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const boost::property_tree::ptree& pt) {
  ExperimentConfig c;
  auto str = [&](const char* key, const std::string& def) { return pt.get<std::string>(key, def); };
  c.regime = str("run.regime", c.regime);
  c.d = pt.get("run.d", c.d);
  if (auto l = pt.get_optional<std::string>("run.ladder")) c.ladder = detail::parse_list<int>(*l);
  c.T = pt.get("run.T", c.T);
  c.samples = pt.get("run.samples", c.samples);
  c.dt = pt.get("run.dt", c.dt);
  c.seed = pt.get("run.seed", c.seed);
  c.threads = pt.get("run.threads", c.threads);

  c.delta.kind = str("delta.rule", c.delta.kind);
  c.delta.value = pt.get("delta.value", c.delta.value);
  if (auto l = pt.get_optional<std::string>("delta.values")) c.delta.values = detail::parse_list<double>(*l);
  c.delta.s = pt.get("delta.s", c.delta.s);
  c.delta.p = pt.get("delta.p", c.delta.p);

  c.kernel.family = str("kernel.family", c.kernel.family);
  c.kernel.alpha = pt.get("kernel.alpha", c.kernel.alpha);
  c.kernel.K = pt.get("kernel.K", c.kernel.K);
  c.kernel.M = pt.get("kernel.M", c.kernel.M);
  c.kernel.eta = pt.get("kernel.eta", c.kernel.eta);
  c.kernel.gamma = pt.get("kernel.gamma", c.kernel.gamma);
  c.kernel.c = pt.get("kernel.c", c.kernel.c);
  if (auto m = pt.get_optional<std::string>("kernel.modes")) c.kernel.modes = detail::parse_modes(*m);

  if (auto t = pt.get_optional<std::string>("potential.terms")) c.potential = detail::parse_terms(*t);
  c.density.shape = str("density.shape", c.density.shape);
  c.density.amp = pt.get("density.amp", c.density.amp);

  c.N = pt.get("pde.N", c.N);
  c.ref_N = pt.get("pde.ref_N", c.ref_N);
  c.cfl = pt.get("pde.cfl", c.cfl);
  c.eps = pt.get("pde.eps", c.eps);

  c.quant_factor = pt.get("convergence.quant_factor", c.quant_factor);

  c.mode = str("nonconvergence.mode", c.mode);
  c.steps = pt.get("nonconvergence.steps", c.steps);
  c.offset = pt.get("nonconvergence.offset", c.offset);
  c.A = pt.get("nonconvergence.A", c.A);
  c.c_sp = pt.get("nonconvergence.c_sp", c.c_sp);
  c.delta_ref = pt.get("nonconvergence.delta_ref", c.delta_ref);
  c.proxy_N = pt.get("nonconvergence.proxy_N", c.proxy_N);
  c.proxy_m = pt.get("nonconvergence.proxy_m", c.proxy_m);

  c.gronwall_n = pt.get("gronwall.n", c.gronwall_n);
  if (auto l = pt.get_optional<std::string>("gronwall.deltas")) c.gronwall_deltas = detail::parse_list<double>(*l);
  if (auto l = pt.get_optional<std::string>("gronwall.perturbations"))
    c.perturbations = detail::parse_list<double>(*l);
  c.validate();
  return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  boost::property_tree::ptree pt;
  std::istringstream is(text);
  try {
    boost::property_tree::read_ini(is, pt);
    return parse_config(pt);
  } catch (const boost::property_tree::ptree_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(path, pt);
    return parse_config(pt);
  } catch (const boost::property_tree::ptree_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
}

}  // namespace gblab
