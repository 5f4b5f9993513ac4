// Command-line front end: simulations, experiments and kernel checks driven by an INI config.
#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "gblab/experiments.hpp"

using namespace gblab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  uint64_t seed = 0;
  int threads = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ExperimentConfig load(const Common& c, const CLI::App& app) {
  auto cfg = c.config.empty() ? parse_config_string("") : load_config(c.config);
  if (app.count("--seed")) cfg.seed = c.seed;
  if (app.count("--threads")) cfg.threads = c.threads;
  cfg.validate();
  return cfg;
}

json kernel_json(const KernelReport& r) {
  return {{"closed_form", r.closed_form}, {"min_coef", r.min_coef},     {"positive", r.positive},
          {"v2_sup", r.v2_sup},           {"v2_at", r.v2_at},           {"even", r.even},
          {"tail", r.tail},               {"lambda", r.lambda},         {"barrier", r.barrier},
          {"barrier_ok", r.barrier_ok},   {"force_product", r.force_product}, {"force_ok", r.force_ok},
          {"curvature_ratio", r.curvature_ratio}, {"curvature_C", r.curvature_C}, {"curvature_ok", r.curvature_ok},
          {"ok", r.ok()}};
}

void write_run_json(const fs::path& dir, const std::string& command, const Common& c, const ExperimentConfig& cfg,
                    json extra) {
  json j;
  j["command"] = command;
  j["config_path"] = c.config;
  j["config_text"] = c.config.empty() ? "" : slurp(c.config);
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["d"] = cfg.d;
  j["ladder"] = cfg.ladder;
  j["T"] = cfg.T;
  j["delta_rule"] = {{"kind", cfg.delta.kind}, {"value", cfg.delta.value}, {"s", cfg.delta.s}, {"p", cfg.delta.p},
                     {"values", cfg.delta.values}};
  j["kernel"] = {{"family", cfg.kernel.family}, {"alpha", cfg.kernel.alpha}, {"K", cfg.kernel.cutoff(cfg.d)},
                 {"eta", cfg.kernel.eta}, {"gamma", cfg.kernel.gamma}, {"c", cfg.kernel.c}};
  json terms = json::array();
  for (auto& t : cfg.potential) terms.push_back({{"amp", t.amp}, {"k", t.k}, {"phase", t.phase}});
  j["potential"] = terms;
  j["density"] = {{"shape", cfg.density.shape}, {"amp", cfg.density.amp}};
  j["lambda_note"] = "lambda_delta is the kernels' sup |D^2 V| estimate (exact at s = 0 for nonnegative tables)";
  j["results"] = std::move(extra);
  fs::create_directories(dir);
  std::ofstream f(dir / "run.json");
  f << j.dump(2) << '\n';
}

void warn(const std::vector<std::string>& w) {
  for (auto& s : w) std::cerr << "warning: " << s << '\n';
}

ParticleSystem initial_particles(const ExperimentConfig& cfg) {
  const int n = cfg.ladder.front();
  auto rho = quantize_masses(make_density_pair(cfg.density, cfg.d, cfg.N), n).rho;
  return grid_empirical(rho, n).to_particles();
}

template <class Kernel>
void simulate_particles_with(const Kernel& V, const ExperimentConfig& cfg, const fs::path& dir, json& info) {
  auto sys = initial_particles(cfg);
  auto U = cfg.U();
  fs::create_directories(dir);
  auto tf = open_out((dir / "trajectory.csv").string());
  CsvWriter traj(tf, trajectory_header());
  auto sf = open_out((dir / "summary.csv").string());
  CsvWriter sum(sf, {"t", "energy", "n_plus", "n_minus"});
  IntegrateOptions opt;
  opt.mode = cfg.mode == "slip" ? Mode::SlipConfined : Mode::Isotropic;
  opt.dt = cfg.dt;
  opt.sample_times = cfg.sample_times();
  opt.on_sample = [&](const ParticleSystem& s) {
    write_trajectory_rows(traj, s);
    sum.row(s.t, energy(s, V, U), s.count(1), s.count(-1));
  };
  auto out = integrate(sys, V, U, cfg.T, opt);
  auto bf = open_out((dir / "particles.bin").string(), true);
  write_particles_bin(bf, out);
  info["n"] = out.n();
  info["lambda"] = V.lambda();
  info["dt_cap"] = dt_cap(V, U);
}

int simulate_particles(const Common& c, const CLI::App& app) {
  auto cfg = load(c, app);
  const double delta = cfg.delta.at(cfg.ladder.front(), cfg.T, 0);
  json info{{"delta", delta}};
  if (cfg.kernel.family == "closed-form") {
    if (cfg.d == 1) simulate_particles_with(ClosedFormKernel1D(delta, cfg.kernel.gamma, cfg.kernel.c), cfg, c.out, info);
    else simulate_particles_with(ClosedFormKernel2D(delta, cfg.kernel.gamma, cfg.kernel.c), cfg, c.out, info);
  } else {
    simulate_particles_with(TabulatedKernel(cfg.kernel.make_spectral(delta, cfg.d), cfg.kernel.M), cfg, c.out, info);
  }
  write_run_json(c.out, "simulate-particles", c, cfg, info);
  return 0;
}

int simulate_pde(const Common& c, const CLI::App& app) {
  auto cfg = load(c, app);
  const double delta = cfg.delta.at(cfg.ladder.front(), cfg.T, 0);
  auto V = cfg.kernel.make_spectral(delta, cfg.d);
  auto U = cfg.U();
  fs::path dir(c.out);
  fs::create_directories(dir);
  std::vector<DensityPair> traj;
  PdeOptions opt;
  opt.mode = cfg.mode == "slip" ? Mode::SlipConfined : Mode::Isotropic;
  opt.eps = cfg.eps;
  opt.cfl = cfg.cfl;
  opt.sample_times = cfg.sample_times();
  opt.on_sample = [&](const DensityPair& s) { traj.push_back(s); };
  long steps = 0;
  auto out = solve_pde(make_density_pair(cfg.density, cfg.d, cfg.N), V, U, cfg.T, opt, &steps);
  auto rows = entropy_budget(traj, V, U, opt.mode);
  auto sf = open_out((dir / "summary.csv").string());
  CsvWriter sum(sf, {"t", "mass_plus", "mass_minus", "entropy", "dissipation", "lhs", "rhs", "margin"});
  for (size_t k = 0; k < traj.size(); ++k)
    sum.row(traj[k].t, traj[k].mass_plus(), traj[k].mass_minus(), rows[k].entropy, rows[k].dissipation, rows[k].lhs,
            rows[k].rhs, rows[k].margin);
  auto df = open_out((dir / "density.csv").string());
  write_density_csv(df, out);
  auto bf = open_out((dir / "density.bin").string(), true);
  write_density_bin(bf, out);
  write_run_json(dir, "simulate-pde", c, cfg, {{"delta", delta}, {"lambda", V.lambda()}, {"steps", steps}});
  return 0;
}

int experiment(const std::string& regime, const Common& c, const CLI::App& app) {
  auto cfg = load(c, app);
  cfg.regime = regime;
  json info;
  if (regime == "convergence") {
    auto r = run_convergence(cfg);
    warn(r.warnings);
    write_results(c.out, r);
    info = {{"sup_strictly_decreasing", r.sup_strictly_decreasing()},
            {"reference_reduction", r.reference_reduction()},
            {"reference_delta", r.ref_delta},
            {"warnings", r.warnings}};
  } else if (regime == "nonconvergence") {
    auto r = run_nonconvergence(cfg);
    warn(r.warnings);
    write_results(c.out, r);
    info = {{"A", r.A},
            {"all_inside", r.all_inside()},
            {"C_fit", r.C_fit},
            {"drift_ok", r.drift_ok()},
            {"displacement_decreasing", r.displacement_decreasing()},
            {"proxy_delta", r.proxy_delta},
            {"proxy_displacement", r.proxy_disp},
            {"proxy_displacement_half_delta", r.proxy_disp_half},
            {"proxy_relative_change", r.proxy_relative_change()},
            {"gap_ok", r.gap_ok()},
            {"warnings", r.warnings}};
  } else {
    auto r = run_gronwall(cfg);
    write_results(c.out, r);
    info = {{"violations", r.violations()}, {"worst_ratio_over_bound", r.worst_fraction()}};
  }
  write_run_json(c.out, "experiment " + regime, c, cfg, info);
  return 0;
}

int check_kernel(const Common& c, const CLI::App& app) {
  auto cfg = load(c, app);
  const int n = cfg.ladder.front();
  const double delta = cfg.delta.at(n, cfg.T, 0);
  KernelReport rep;
  if (cfg.kernel.family == "closed-form")
    rep = cfg.d == 1 ? check_assumptions(ClosedFormKernel1D(delta, cfg.kernel.gamma, cfg.kernel.c), n, cfg.c_sp)
                     : check_assumptions(ClosedFormKernel2D(delta, cfg.kernel.gamma, cfg.kernel.c), n, cfg.c_sp);
  else if (cfg.kernel.family == "edge-singular")
    rep = check_assumptions(SpectralKernel::edge(cfg.kernel.eta, cfg.kernel.cutoff(2)));
  else
    rep = check_assumptions(cfg.kernel.make_spectral(delta, cfg.d));
  json j = kernel_json(rep);
  std::cout << j.dump(2) << '\n';
  write_run_json(c.out, "check-kernel", c, cfg, {{"n", n}, {"delta", delta}, {"report", j}});
  return rep.ok() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gblab: signed particle systems, their mean-field PDE and Wasserstein diagnostics"};
  app.require_subcommand(1);
  Common c;
  auto common = [&](CLI::App* s) {
    s->add_option("--config", c.config, "INI configuration file")->check(CLI::ExistingFile);
    s->add_option("--out", c.out, "output directory");
    s->add_option("--seed", c.seed, "random seed (overrides the config)");
    s->add_option("--threads", c.threads, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  };
  auto* sp = app.add_subcommand("simulate-particles", "integrate the particle system from the configured datum");
  auto* sd = app.add_subcommand("simulate-pde", "solve the regularized two-species PDE");
  auto* ex = app.add_subcommand("experiment", "run an experiment regime");
  auto* ck = app.add_subcommand("check-kernel", "report kernel assumption checks");
  std::string regime;
  ex->add_option("regime", regime, "convergence | nonconvergence | gronwall")
      ->required()
      ->check(CLI::IsMember({"convergence", "nonconvergence", "gronwall"}));
  for (auto* s : {sp, sd, ex, ck}) common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    if (*sp) return simulate_particles(c, *sp);
    if (*sd) return simulate_pde(c, *sd);
    if (*ex) return experiment(regime, c, *ex);
    return check_kernel(c, *ck);
  } catch (const AssumptionError& e) {
    std::cerr << "assumption check failed: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
