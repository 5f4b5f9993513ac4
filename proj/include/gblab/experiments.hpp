#pragma once

#include <atomic>
#include <exception>
#include <filesystem>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "io.hpp"
#include "metrics.hpp"

namespace gblab {

struct DistanceRow {
  double t = 0;
  int n = 0;
  double delta = 0, W_plus = 0, W_minus = 0, W = 0;
};

namespace detail {

// Runs f(0..count-1) on up to `threads` workers; results must go to per-index slots.
template <class F>
void parallel_for(size_t count, int threads, F&& f) {
  if (threads <= 1 || count <= 1) {
    for (size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr err;
  std::mutex m;
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min<int>(threads, int(count)); ++w)
    pool.emplace_back([&] {
      for (size_t i; (i = next++) < count;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> g(m);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

inline double torus_sup_dist(const Vec& a, const Vec& b, int d) {
  Vec r = displacement(a, b, d);
  return std::max(std::abs(r[0]), std::abs(r[1]));
}

// rho with each sign rescaled to the masses carried by emp
inline DensityPair matched_to(const DensityPair& rho, const EmpiricalPair& emp) {
  DensityPair q = rho;
  double ep = emp.plus.size() * emp.w, em = emp.minus.size() * emp.w;
  double rp = rho.mass_plus(), rm = rho.mass_minus();
  for (auto& v : q.plus) v *= rp > 0 ? ep / rp : 0.0;
  for (auto& v : q.minus) v *= rm > 0 ? em / rm : 0.0;
  return q;
}

inline DistanceRow distance_row(double t, int n, double delta, const SignedDistance& s) {
  return {t, n, delta, s.W_plus, s.W_minus, s.W};
}

}  // namespace detail

inline DensityPair make_density_pair(const DensitySpec& s, int d, int N) {
  auto p = DensityPair::from_functions(
      d, N, [&](Vec x) { return 0.5 * (1 + s.amp * s.profile(x)); }, [&](Vec x) { return 0.5 * (1 - s.amp * s.profile(x)); });
  p.validate();
  return p;
}

/// Single density 1 + a f on the grid, used for dipole data.
inline std::vector<double> make_single_density(const DensitySpec& s, int d, int N) {
  auto p = DensityPair::from_functions(d, N, [&](Vec x) { return 1 + s.amp * s.profile(x); }, [](Vec) { return 0.0; });
  for (double v : p.plus)
    if (v < 0) throw Error("density: 1 + amp * profile is negative somewhere");
  return p.plus;
}

// ---------------------------------------------------------------------------------------------
// Convergence regime

struct ConvergenceRow {
  int n = 0;
  double delta = 0, lambda = 0;
  double growth = 0;     ///< exp(3 lambda T)
  double condition = 0;  ///< growth * n^{-1/d}
  double moved = 0;      ///< mass moved by quantization
  double W0 = 0, W_sup = 0, W_ref_sup = 0;
  double quant_bound = 0;  ///< additive error of the density-side quantization
  long pde_steps = 0;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  std::vector<DistanceRow> distances, reference;
  std::vector<ParticleSystem> snapshots;  ///< sample-time states of every rung
  double ref_delta = 0;
  std::vector<std::string> warnings;

  bool sup_strictly_decreasing() const {
    for (size_t i = 1; i < rows.size(); ++i)
      if (!(rows[i].W_sup < rows[i - 1].W_sup)) return false;
    return true;
  }
  /// Relative decrease of the reference distance from the first to the last rung.
  double reference_reduction() const {
    if (rows.size() < 2 || rows.front().W_ref_sup == 0) return 0;
    return 1 - rows.back().W_ref_sup / rows.front().W_ref_sup;
  }
};

/// Particles from the grid empiricalization of the quantized datum against the delta_n PDE from
/// the same datum; sup over sample times of W, and of W to one fine reference solution.
inline ConvergenceResult run_convergence(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.kernel.spectral()) throw Error("convergence: kernel family must have a spectral table (screw, edge, custom)");
  const int d = cfg.d;
  const auto U = cfg.U();
  const auto times = cfg.sample_times();
  const size_t L = cfg.ladder.size();
  ConvergenceResult res;
  res.rows.resize(L);
  std::vector<std::vector<DistanceRow>> dist(L), ref(L);
  std::vector<std::vector<ParticleSystem>> snaps(L);

  const auto rho = make_density_pair(cfg.density, d, cfg.N);
  res.ref_delta = cfg.delta.at(cfg.ladder.back(), cfg.T, L - 1);
  std::vector<DensityPair> ref_traj;
  {
    auto Vref = cfg.kernel.make_spectral(res.ref_delta, d);
    PdeOptions opt;
    opt.eps = cfg.eps;
    opt.cfl = cfg.cfl;
    opt.sample_times = times;
    opt.on_sample = [&](const DensityPair& s) { ref_traj.push_back(s); };
    solve_pde(make_density_pair(cfg.density, d, cfg.ref_N), Vref, U, cfg.T, opt);
  }

  detail::parallel_for(L, cfg.threads, [&](size_t r) {
    const int n = cfg.ladder[r];
    const double delta = cfg.delta.at(n, cfg.T, r);
    auto Vs = cfg.kernel.make_spectral(delta, d);
    TabulatedKernel Vt(Vs, cfg.kernel.M);
    auto q = quantize_masses(rho, n);
    auto emp = grid_empirical(q.rho, n);

    std::vector<ParticleSystem> part;
    IntegrateOptions io;
    io.dt = cfg.dt;
    io.sample_times = times;
    io.on_sample = [&](const ParticleSystem& s) { part.push_back(s); };
    auto sys = emp.to_particles();
    integrate(sys, Vt, U, cfg.T, io);

    std::vector<DensityPair> pde;
    PdeOptions po;
    po.eps = cfg.eps;
    po.cfl = cfg.cfl;
    po.sample_times = times;
    po.on_sample = [&](const DensityPair& s) { pde.push_back(s); };
    long steps = 0;
    solve_pde(q.rho, Vs, U, cfg.T, po, &steps);
    if (part.size() != times.size() || pde.size() != times.size() || ref_traj.size() != times.size())
      throw Error("convergence: sample bookkeeping mismatch");

    auto& row = res.rows[r];
    row.n = n;
    row.delta = delta;
    row.lambda = Vs.lambda();
    row.growth = std::exp(3 * row.lambda * cfg.T);
    row.condition = row.growth * std::pow(double(n), -1.0 / d);
    row.moved = q.moved;
    row.pde_steps = steps;
    const int m = cfg.quant_factor * n;
    for (size_t k = 0; k < times.size(); ++k) {
      auto e = EmpiricalPair::from_particles(part[k]);
      auto a = w2_density_vs_empirical(pde[k], e, m);
      auto b = w2_density_vs_empirical(detail::matched_to(ref_traj[k], e), e, m);
      dist[r].push_back(detail::distance_row(times[k], n, delta, a.dist));
      ref[r].push_back(detail::distance_row(times[k], n, res.ref_delta, b.dist));
      if (k == 0) row.W0 = a.dist.W;
      row.W_sup = std::max(row.W_sup, a.dist.W);
      row.W_ref_sup = std::max(row.W_ref_sup, b.dist.W);
      row.quant_bound = a.bound;
    }
    snaps[r] = std::move(part);
  });

  for (size_t r = 0; r < L; ++r) {
    res.distances.insert(res.distances.end(), dist[r].begin(), dist[r].end());
    res.reference.insert(res.reference.end(), ref[r].begin(), ref[r].end());
    res.snapshots.insert(res.snapshots.end(), snaps[r].begin(), snaps[r].end());
    if (r && !(res.rows[r].condition < res.rows[r - 1].condition))
      res.warnings.push_back("delta rule: exp(3 lambda T) n^{-1/d} does not decrease at n = " +
                             std::to_string(res.rows[r].n));
  }
  return res;
}

// ---------------------------------------------------------------------------------------------
// Non-convergence regime

struct NonconvergenceRow {
  int n = 0;
  double delta = 0;
  bool inside_all = true;
  double spacing_margin = 0;  ///< min over samples of (min spacing - A/n or A/sqrt(n))
  double width_ratio = 0;     ///< max_t max_i |d_i| / delta
  double drift = 0;           ///< max_t max_i |z_i(t) - z_i(0)|_inf
  double drift_scaled = 0;    ///< drift / (n^2 delta)
  double drift_scaled2 = 0;   ///< drift / (n^2 delta^2)
  bool drift_ok = true;       ///< drift <= C n^2 delta, C fitted on the first rung
  double W_T = 0;             ///< W(mu_n(T), mu_n(0))
  double W_max = 0;
  long broken = 0;
  KernelReport report;
};

struct ManifoldRow {
  double t = 0;
  int n = 0;
  ManifoldCheck check;
};

struct NonconvergenceResult {
  std::vector<NonconvergenceRow> rows;
  std::vector<ManifoldRow> manifold;
  std::vector<DistanceRow> distances;  ///< W(mu_n(t), mu_n(0))
  std::vector<ParticleSystem> snapshots;
  double A = 0;
  double C_fit = 0;
  double proxy_delta = 0;
  double proxy_disp = 0, proxy_disp_half = 0;
  std::vector<std::string> warnings;

  bool all_inside() const {
    for (auto& r : rows)
      if (!r.inside_all) return false;
    return true;
  }
  bool drift_ok() const {
    for (auto& r : rows)
      if (!r.drift_ok) return false;
    return true;
  }
  bool displacement_decreasing() const {
    for (size_t i = 1; i < rows.size(); ++i)
      if (!(rows[i].W_T < rows[i - 1].W_T)) return false;
    return true;
  }
  double max_particle_displacement() const {
    double m = 0;
    for (auto& r : rows) m = std::max(m, r.W_T);
    return m;
  }
  double proxy_relative_change() const { return std::abs(proxy_disp_half - proxy_disp) / proxy_disp; }
  bool proxy_robust() const { return proxy_relative_change() < 0.05; }
  bool gap_ok() const { return proxy_disp > 10 * max_particle_displacement(); }
};

namespace detail {

inline DipoleMode dipole_mode_of(const ExperimentConfig& cfg) {
  if (cfg.mode == "slip") {
    if (cfg.d != 2) throw Error("nonconvergence: slip mode needs d = 2");
    return DipoleMode::SlipConfined2D;
  }
  if (cfg.mode != "isotropic") throw Error("nonconvergence: mode must be isotropic or slip");
  return cfg.d == 1 ? DipoleMode::Isotropic1D : DipoleMode::Isotropic2D;
}

// Spectral stand-in for the unregularized interaction with the same near-field singularity.
// Modes kept until e^{-2 pi delta k} < e^{-15}, capped by the grid.
inline int proxy_cutoff(double delta, int N, bool* capped = nullptr) {
  int want = int(std::ceil(15 / (2 * kPi * delta)));
  if (capped) *capped = want > (N - 2) / 2;
  return std::max(1, std::min(want, (N - 2) / 2));
}

inline SpectralKernel proxy_kernel(const ExperimentConfig& cfg, double delta, int N) {
  int K = proxy_cutoff(delta, N);
  if (cfg.d == 1) {
    std::vector<std::pair<Freq, double>> e;  // -1/4 log(1 - 2q cos 2 pi s + q^2), q = e^{-2 pi delta}
    for (int k = 1; k <= K; ++k) e.push_back({{k, 0}, std::exp(-2 * kPi * delta * k) / (4.0 * k)});
    return SpectralKernel::custom(1, e);
  }
  if (cfg.mode == "slip") return SpectralKernel::edge(2 * kPi * delta, K);
  return SpectralKernel::screw(1 / (4 * kPi), 2 * kPi * delta, K, 2);
}

inline double proxy_displacement(const ExperimentConfig& cfg, const std::vector<double>& rho0, double delta) {
  const int d = cfg.d, N = cfg.proxy_N;
  auto coarse = DensityPair::zeros(d, cfg.N);
  coarse.plus = rho0;
  // resample the datum onto the proxy grid by cell lookup
  auto s = DensityPair::from_functions(
      d, N,
      [&](Vec x) {
        size_t i = std::min(cfg.N - 1, int(x[0] * cfg.N));
        size_t c = d == 1 ? i : i * cfg.N + std::min(cfg.N - 1, int(x[1] * cfg.N));
        return 0.5 * rho0[c];
      },
      [](Vec) { return 0.0; });
  s.minus = s.plus;
  auto V = proxy_kernel(cfg, delta, N);
  PdeOptions opt;
  opt.mode = cfg.mode == "slip" ? Mode::SlipConfined : Mode::Isotropic;
  opt.eps = cfg.eps;
  opt.cfl = cfg.cfl;
  auto out = solve_pde(s, V, cfg.U(), cfg.T, opt);
  auto e0 = grid_empirical(quantize_masses(s, cfg.proxy_m).rho, cfg.proxy_m);
  return w2_density_vs_empirical(out, e0, cfg.proxy_m).dist.W;
}

template <class Kernel>
void run_dipole_rung(const ExperimentConfig& cfg, const std::vector<double>& rho0, const Kernel& V, DipoleMode mode,
                     double gamma, int n, double delta, double A, NonconvergenceRow& row, std::vector<ManifoldRow>& man,
                     std::vector<DistanceRow>& dist, std::vector<ParticleSystem>& snaps) {
  Vec offset{0, 0};
  if (mode == DipoleMode::SlipConfined2D) offset = {0, cfg.offset * delta};
  auto dip0 = dipole_data(rho0, cfg.d, cfg.N, n, mode, offset);
  auto mu0 = EmpiricalPair::from_particles(from_dipoles(dip0));
  row.n = n;
  row.delta = delta;
  row.spacing_margin = std::numeric_limits<double>::infinity();
  DipoleIntegrateOptions opt;
  opt.steps = cfg.steps;
  opt.width_scale = delta;
  opt.sample_times = cfg.sample_times();
  opt.on_sample = [&](const DipoleSystem& s) {
    auto c = slow_manifold_contains(s, A, gamma, delta);
    man.push_back({s.t, n, c});
    row.inside_all = row.inside_all && c.inside;
    row.spacing_margin = std::min(row.spacing_margin, c.spacing_margin());
    row.width_ratio = std::max(row.width_ratio, c.max_width / delta);
    for (int i = 0; i < s.m(); ++i) row.drift = std::max(row.drift, torus_sup_dist(s.z[i], dip0.z[i], cfg.d));
    auto ps = from_dipoles(s);
    auto w = w2_signed(EmpiricalPair::from_particles(ps), mu0);
    dist.push_back(distance_row(s.t, n, delta, w));
    row.W_max = std::max(row.W_max, w.W);
    row.W_T = w.W;
    snaps.push_back(ps);
  };
  DipoleIntegrateStats st;
  integrate_dipoles(dip0, V, cfg.U(), cfg.T, opt, &st);
  row.broken = st.broken_widths;
  row.drift_scaled = row.drift / (double(n) * n * delta);
  row.drift_scaled2 = row.drift / (double(n) * n * delta * delta);
}

}  // namespace detail

/// Dipole data with delta_n = n^-p integrated in (z, d); trapping, drift and displacement per
/// rung, plus the displacement of a small-delta_ref PDE proxy from the same datum.
inline NonconvergenceResult run_nonconvergence(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto mode = detail::dipole_mode_of(cfg);
  const int d = cfg.d;
  const size_t L = cfg.ladder.size();
  if ((cfg.samples - 1) > 0 && cfg.steps % (cfg.samples - 1) != 0)
    throw Error("nonconvergence: steps must be a multiple of samples - 1 so samples land on steps");
  NonconvergenceResult res;
  if (cfg.delta.kind == "fast-power" && cfg.delta.p <= (d == 1 ? 3.0 : 2.0))
    res.warnings.push_back("delta rule: exponent p is below the trapping threshold");
  bool x1_forcing = false;
  for (auto& t : cfg.potential) x1_forcing = x1_forcing || (t.amp != 0 && t.k[0] != 0);
  if (!x1_forcing) res.warnings.push_back("potential: no x1 dependence, so no violation of the limit equation is expected");

  const auto rho0 = make_single_density(cfg.density, d, cfg.N);
  const double sup = *std::max_element(rho0.begin(), rho0.end());
  res.A = cfg.A > 0 ? cfg.A : 1 / (2 * sup);

  // all assumption checks run before any integration
  std::vector<double> deltas(L);
  for (size_t r = 0; r < L; ++r) deltas[r] = cfg.delta.at(cfg.ladder[r], cfg.T, r);
  res.rows.resize(L);
  for (size_t r = 0; r < L; ++r) {
    KernelReport rep;
    if (mode == DipoleMode::SlipConfined2D) {
      if (cfg.kernel.family != "edge-singular") throw Error("nonconvergence: slip mode needs kernel family edge-singular");
      rep = check_assumptions(SpectralKernel::edge(cfg.kernel.eta, cfg.kernel.cutoff(2)));
    } else {
      if (cfg.kernel.family != "closed-form") throw Error("nonconvergence: isotropic mode needs kernel family closed-form");
      rep = d == 1 ? check_assumptions(ClosedFormKernel1D(deltas[r], cfg.kernel.gamma, cfg.kernel.c), cfg.ladder[r], cfg.c_sp)
                   : check_assumptions(ClosedFormKernel2D(deltas[r], cfg.kernel.gamma, cfg.kernel.c), cfg.ladder[r], cfg.c_sp);
    }
    res.rows[r].report = rep;
    if (!rep.ok())
      throw AssumptionError("kernel assumption check failed at n = " + std::to_string(cfg.ladder[r]) +
                            " (positive " + std::to_string(rep.positive) + ", even " + std::to_string(rep.even) +
                            ", barrier " + std::to_string(rep.barrier) + ", force product " +
                            std::to_string(rep.force_product) + ", curvature ratio " + std::to_string(rep.curvature_ratio) + ")");
  }

  bool capped = false;
  detail::proxy_cutoff(cfg.delta_ref / 2, cfg.proxy_N, &capped);
  if (capped) res.warnings.push_back("proxy: proxy_N too small for delta_ref / 2, modes are truncated by the grid");

  std::vector<std::vector<ManifoldRow>> man(L);
  std::vector<std::vector<DistanceRow>> dist(L);
  std::vector<std::vector<ParticleSystem>> snaps(L);
  const double gamma = cfg.kernel.gamma;
  std::unique_ptr<EdgeSingularKernel> edge;
  if (mode == DipoleMode::SlipConfined2D)
    edge = std::make_unique<EdgeSingularKernel>(cfg.kernel.eta, cfg.kernel.cutoff(2), cfg.kernel.M);

  detail::parallel_for(L + 2, cfg.threads, [&](size_t r) {
    if (r == L) {
      res.proxy_delta = cfg.delta_ref;
      res.proxy_disp = detail::proxy_displacement(cfg, rho0, cfg.delta_ref);
      return;
    }
    if (r == L + 1) {
      res.proxy_disp_half = detail::proxy_displacement(cfg, rho0, cfg.delta_ref / 2);
      return;
    }
    const int n = cfg.ladder[r];
    auto rep = res.rows[r].report;
    if (mode == DipoleMode::SlipConfined2D)
      detail::run_dipole_rung(cfg, rho0, *edge, mode, gamma, n, deltas[r], res.A, res.rows[r], man[r], dist[r], snaps[r]);
    else if (d == 1)
      detail::run_dipole_rung(cfg, rho0, ClosedFormKernel1D(deltas[r], gamma, cfg.kernel.c), mode, gamma, n, deltas[r],
                              res.A, res.rows[r], man[r], dist[r], snaps[r]);
    else
      detail::run_dipole_rung(cfg, rho0, ClosedFormKernel2D(deltas[r], gamma, cfg.kernel.c), mode, gamma, n, deltas[r],
                              res.A, res.rows[r], man[r], dist[r], snaps[r]);
    res.rows[r].report = rep;
  });

  res.C_fit = res.rows[0].drift_scaled;
  for (auto& row : res.rows) row.drift_ok = row.drift_scaled <= res.C_fit * (1 + 1e-12);
  for (size_t r = 0; r < L; ++r) {
    res.manifold.insert(res.manifold.end(), man[r].begin(), man[r].end());
    res.distances.insert(res.distances.end(), dist[r].begin(), dist[r].end());
    res.snapshots.insert(res.snapshots.end(), snaps[r].begin(), snaps[r].end());
  }
  return res;
}

// ---------------------------------------------------------------------------------------------
// Gronwall diagnostic

struct GronwallRow {
  double delta = 0, perturbation = 0, t = 0;
  double W = 0, W0 = 0, ratio = 0, bound = 0;
  bool ok() const { return W0 == 0 ? W == 0 : ratio <= bound; }
};

struct GronwallResult {
  std::vector<GronwallRow> rows;
  std::vector<DistanceRow> distances;
  long violations() const {
    long v = 0;
    for (auto& r : rows) v += !r.ok();
    return v;
  }
  double worst_fraction() const {  ///< max ratio / bound
    double m = 0;
    for (auto& r : rows)
      if (r.W0 > 0) m = std::max(m, r.ratio / r.bound);
    return m;
  }
};

/// Both systems integrated with the same steps; W(t)/W(0) against exp((3 lambda + |D^2 U|) t).
template <class Kernel>
std::vector<GronwallRow> gronwall_pair(const ParticleSystem& mu, const ParticleSystem& nu, const Kernel& V,
                                       const ExternalPotential& U, double T, const std::vector<double>& times,
                                       double dt = 0, std::vector<DistanceRow>* dist = nullptr, int tag_n = 0,
                                       double tag_delta = 0) {
  if (mu.count(1) != nu.count(1) || mu.count(-1) != nu.count(-1) || mu.n() != nu.n())
    throw Error("gronwall: per-sign counts differ");
  std::vector<ParticleSystem> a, b;
  IntegrateOptions opt;
  opt.dt = dt;
  opt.sample_times = times;
  opt.on_sample = [&](const ParticleSystem& s) { a.push_back(s); };
  integrate(mu, V, U, T, opt);
  opt.on_sample = [&](const ParticleSystem& s) { b.push_back(s); };
  integrate(nu, V, U, T, opt);
  const double L = 3 * V.lambda() + U.hess_sup();
  std::vector<GronwallRow> rows;
  double W0 = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    auto w = w2_signed(a[k], b[k]);
    if (k == 0) W0 = w.W;
    GronwallRow r;
    r.t = a[k].t - mu.t;
    r.W = w.W;
    r.W0 = W0;
    r.ratio = W0 > 0 ? w.W / W0 : 0;
    r.bound = std::exp(L * r.t);
    rows.push_back(r);
    if (dist) dist->push_back(detail::distance_row(a[k].t, tag_n, tag_delta, w));
  }
  return rows;
}

inline ParticleSystem random_particles(int d, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  ParticleSystem s;
  s.d = d;
  for (int i = 0; i < n; ++i) {
    s.x.push_back({u(rng), d == 2 ? u(rng) : 0});
    s.b.push_back(i % 2 == 0 ? 1 : -1);
  }
  return s;
}

inline ParticleSystem perturb(const ParticleSystem& s, double eps, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 2 * kPi);
  ParticleSystem p = s;
  for (auto& x : p.x) {
    double a = u(rng);
    Vec dx = s.d == 1 ? Vec{a < kPi ? eps : -eps, 0} : Vec{eps * std::cos(a), eps * std::sin(a)};
    x = wrap(add(x, dx), s.d);
  }
  return p;
}

/// Matrix over (delta, perturbation size): one random datum per seed, perturbed copies.
inline GronwallResult run_gronwall(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.kernel.spectral()) throw Error("gronwall: kernel family must have a spectral table");
  const auto times = cfg.sample_times();
  const size_t nd = cfg.gronwall_deltas.size(), np = cfg.perturbations.size();
  std::vector<std::vector<GronwallRow>> rows(nd * np);
  std::vector<std::vector<DistanceRow>> dist(nd * np);
  std::mt19937_64 rng(cfg.seed);
  auto mu = random_particles(cfg.d, cfg.gronwall_n, rng);
  std::vector<ParticleSystem> nus;
  for (size_t j = 0; j < np; ++j) nus.push_back(perturb(mu, cfg.perturbations[j], rng));
  detail::parallel_for(nd * np, cfg.threads, [&](size_t c) {
    size_t i = c / np, j = c % np;
    double delta = cfg.gronwall_deltas[i];
    auto Vs = cfg.kernel.make_spectral(delta, cfg.d);
    TabulatedKernel V(Vs, cfg.kernel.M);
    rows[c] = gronwall_pair(mu, nus[j], V, cfg.U(), cfg.T, times, cfg.dt, &dist[c], cfg.gronwall_n, delta);
    for (auto& r : rows[c]) {
      r.delta = delta;
      r.perturbation = cfg.perturbations[j];
    }
  });
  GronwallResult res;
  for (size_t c = 0; c < nd * np; ++c) {
    res.rows.insert(res.rows.end(), rows[c].begin(), rows[c].end());
    res.distances.insert(res.distances.end(), dist[c].begin(), dist[c].end());
  }
  return res;
}

// ---------------------------------------------------------------------------------------------
// Output

namespace detail {

inline void write_distances(const std::filesystem::path& p, const std::vector<DistanceRow>& rows) {
  auto f = open_out(p.string());
  CsvWriter w(f, {"t", "n", "delta", "W_plus", "W_minus", "W_signed"});
  for (auto& r : rows) w.row(r.t, r.n, r.delta, r.W_plus, r.W_minus, r.W);
}

inline void write_trajectories(const std::filesystem::path& p, const std::vector<ParticleSystem>& snaps) {
  auto f = open_out(p.string());
  CsvWriter w(f, {"n", "t", "i", "x1", "x2", "sign"});
  for (auto& s : snaps)
    for (int i = 0; i < s.n(); ++i) w.row(s.n(), s.t, i, s.x[i][0], s.x[i][1], s.b[i]);
}

}  // namespace detail

inline void write_results(const std::string& dir, const ConvergenceResult& r) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  auto f = open_out((p / "summary.csv").string());
  CsvWriter w(f, {"n", "delta", "lambda", "growth", "condition", "moved", "W0", "W_sup", "W_ref_sup", "quant_bound",
                  "pde_steps"});
  for (auto& x : r.rows)
    w.row(x.n, x.delta, x.lambda, x.growth, x.condition, x.moved, x.W0, x.W_sup, x.W_ref_sup, x.quant_bound, x.pde_steps);
  detail::write_distances(p / "distances.csv", r.distances);
  detail::write_distances(p / "reference.csv", r.reference);
  detail::write_trajectories(p / "trajectory.csv", r.snapshots);
}

inline void write_results(const std::string& dir, const NonconvergenceResult& r) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  auto f = open_out((p / "summary.csv").string());
  CsvWriter w(f, {"n", "delta", "inside_all", "spacing_margin", "width_ratio", "drift", "drift_n2delta",
                  "drift_n2delta2", "drift_ok", "W_T", "W_max", "broken_widths", "proxy_disp", "proxy_disp_half"});
  for (auto& x : r.rows)
    w.row(x.n, x.delta, int(x.inside_all), x.spacing_margin, x.width_ratio, x.drift, x.drift_scaled, x.drift_scaled2,
          int(x.drift_ok), x.W_T, x.W_max, x.broken, r.proxy_disp, r.proxy_disp_half);
  auto g = open_out((p / "manifold.csv").string());
  CsvWriter m(g, {"t", "n", "min_spacing", "spacing_threshold", "max_width", "width_threshold", "min_e2", "inside"});
  for (auto& x : r.manifold)
    m.row(x.t, x.n, x.check.min_spacing, x.check.spacing_threshold, x.check.max_width, x.check.width_threshold,
          x.check.min_e2, int(x.check.inside));
  detail::write_distances(p / "distances.csv", r.distances);
  detail::write_trajectories(p / "trajectory.csv", r.snapshots);
}

inline void write_results(const std::string& dir, const GronwallResult& r) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  auto f = open_out((p / "summary.csv").string());
  CsvWriter w(f, {"delta", "perturbation", "t", "W", "W0", "ratio", "bound", "ok"});
  for (auto& x : r.rows) w.row(x.delta, x.perturbation, x.t, x.W, x.W0, x.ratio, x.bound, int(x.ok()));
  detail::write_distances(p / "distances.csv", r.distances);
}

}  // namespace gblab
