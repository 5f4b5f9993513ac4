#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "gblab/experiments.hpp"

using namespace gblab;
namespace fs = std::filesystem;

namespace {

const char* kSmallConvergence = R"(
[run]
d = 1
ladder = 16, 32
T = 0.02
samples = 3
[delta]
rule = fixed
value = 0.2
[kernel]
family = screw
K = 16
[potential]
terms = 0.1 1
[density]
shape = cosine
amp = 0.5
[pde]
N = 256
ref_N = 512
[convergence]
quant_factor = 4
)";

const char* kSmallNonconvergence = R"(
[run]
regime = nonconvergence
d = 1
ladder = 20, 40
T = 0.2
samples = 11
[delta]
rule = fast-power
p = 4
[kernel]
family = closed-form
[potential]
terms = 0.2 1
[pde]
N = 64
[nonconvergence]
steps = 100
delta_ref = 0.05
proxy_N = 256
proxy_m = 512
)";

const char* kSmallGronwall = R"(
[run]
regime = gronwall
d = 1
T = 0.1
samples = 5
[kernel]
K = 32
[potential]
terms = 0.2 1
[gronwall]
n = 8
deltas = 0.2, 0.4
perturbations = 0, 1e-2
)";

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gblab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(GBLAB_CLI) + " " + args + " >/dev/null 2>&1";
  int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

}  // namespace

TEST(Config, DefaultsAndSampleTimes) {
  auto c = parse_config_string("");
  EXPECT_EQ(c.d, 1);
  EXPECT_EQ(c.ladder, (std::vector<int>{64, 128, 256, 512}));
  EXPECT_DOUBLE_EQ(c.delta_ref, 0.01);
  auto t = c.sample_times();
  ASSERT_EQ(t.size(), 11u);
  EXPECT_EQ(t.front(), 0.0);
  EXPECT_EQ(t.back(), c.T);
  EXPECT_NEAR(t[5], c.T / 2, 1e-15);
}

TEST(Config, ParsesSections) {
  auto c = parse_config_string(R"(
[run]
d = 2
ladder = 10, 20, 40
T = 0.3
seed = 99
threads = 3
[delta]
rule = list
values = 0.3, 0.2, 0.1
[kernel]
family = custom
modes = 1 0 0.5; 0 2 0.25
[potential]
terms = 0.2 1 0; 0.1 0 1 0.5
[density]
shape = step
amp = 0.25
[gronwall]
perturbations = 1e-3
)");
  EXPECT_EQ(c.d, 2);
  EXPECT_EQ(c.ladder.size(), 3u);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.threads, 3);
  EXPECT_DOUBLE_EQ(c.delta.at(20, c.T, 1), 0.2);
  ASSERT_EQ(c.kernel.modes.size(), 2u);
  EXPECT_EQ(c.kernel.modes[1].first, (Freq{0, 2}));
  ASSERT_EQ(c.potential.size(), 2u);
  EXPECT_EQ(c.potential[1].k, (Freq{0, 1}));
  EXPECT_DOUBLE_EQ(c.potential[1].phase, 0.5);
  EXPECT_DOUBLE_EQ(c.potential[0].phase, 0.0);
  EXPECT_EQ(c.density.profile({0.2, 0}), 1.0);
  EXPECT_EQ(c.density.profile({0.7, 0}), -1.0);
  EXPECT_EQ(c.perturbations, std::vector<double>{1e-3});
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config_string("[run]\nladder = 10, 5\n"), Error);
  EXPECT_THROW(parse_config_string("[run]\nd = 3\n"), Error);
  EXPECT_THROW(parse_config_string("[run]\nT = 0\n"), Error);
  EXPECT_THROW(parse_config_string("[delta]\nrule = sideways\n"), Error);
  EXPECT_THROW(parse_config_string("[run]\nladder = 1, 2\n[delta]\nrule = list\nvalues = 0.1\n"), Error);
  EXPECT_THROW(parse_config_string("[potential]\nterms = 0.1\n"), Error);
  EXPECT_THROW(parse_config_string("[run]\nladder = 4, x\n"), Error);
  EXPECT_THROW(parse_config_string("[run]\nregime = other\n"), Error);
  EXPECT_THROW(parse_config_string("[run\n"), Error);
  EXPECT_THROW(load_config("/nonexistent/gblab.ini"), Error);
}

TEST(Config, ShippedConfigsParse) {
  int count = 0;
  for (auto& e : fs::directory_iterator(GBLAB_CONFIGS)) {
    if (e.path().extension() != ".ini") continue;
    EXPECT_NO_THROW(load_config(e.path().string())) << e.path();
    ++count;
  }
  EXPECT_GE(count, 4);
}

TEST(DeltaRule, Formulas) {
  DeltaRule r;
  r.kind = "slow-log";
  r.s = 1;
  EXPECT_DOUBLE_EQ(r.at(100, 0.5, 0), std::sqrt(3.0 / std::log(100.0)));
  EXPECT_NEAR(r.at(403, 1.0, 0), 1.0, 2e-4);  // 403 is close to e^6
  EXPECT_THROW(r.at(1, 1.0, 0), Error);
  r.kind = "fast-power";
  r.p = 2;
  EXPECT_DOUBLE_EQ(r.at(10, 1.0, 0), 0.01);
  r.kind = "fixed";
  r.value = -1;
  EXPECT_THROW(r.at(10, 1.0, 0), Error);
}

TEST(Io, ParticleBinaryRoundTrip) {
  std::mt19937_64 rng(3);
  auto s = random_particles(2, 17, rng);
  s.t = 0.125;
  std::stringstream ss;
  write_particles_bin(ss, s);
  EXPECT_EQ(ss.str().size(), 24u + 17 * 2 * 8);
  auto r = read_particles_bin(ss);
  EXPECT_EQ(r.d, 2);
  EXPECT_EQ(r.t, 0.125);
  EXPECT_EQ(r.x, s.x);

  std::stringstream full;
  write_particles_bin(full, s);
  std::stringstream truncated(full.str().substr(0, 30));
  EXPECT_THROW(read_particles_bin(truncated), Error);
}

TEST(Io, DensityBinaryRoundTrip) {
  DensitySpec spec{"cosine", 0.5};
  auto p = make_density_pair(spec, 2, 8);
  p.t = 0.5;
  std::stringstream ss;
  write_density_bin(ss, p);
  EXPECT_EQ(ss.str().size(), 24u + 2 * 64 * 8);
  auto q = read_density_bin(ss);
  EXPECT_EQ(q.d, 2);
  EXPECT_EQ(q.N, 8);
  EXPECT_EQ(q.t, 0.5);
  EXPECT_EQ(q.plus, p.plus);
  EXPECT_EQ(q.minus, p.minus);
}

TEST(Io, CsvKeepsFullPrecision) {
  std::stringstream ss;
  CsvWriter w(ss, {"a", "b"});
  w.row(0.1 + 0.2, 7);
  std::string header, line;
  std::getline(ss, header);
  std::getline(ss, line);
  EXPECT_EQ(header, "a,b");
  EXPECT_EQ(std::stod(line.substr(0, line.find(','))), 0.1 + 0.2);
  EXPECT_EQ(line.substr(line.find(',') + 1), "7");
}

TEST(Io, DensityCsvHasOneRowPerCell) {
  auto p = make_density_pair(DensitySpec{"uniform", 0}, 1, 16);
  std::stringstream ss;
  write_density_csv(ss, p);
  int lines = 0;
  for (std::string l; std::getline(ss, l);) ++lines;
  EXPECT_EQ(lines, 17);
}

TEST(Convergence, SmallRunStructure) {
  auto cfg = parse_config_string(kSmallConvergence);
  auto r = run_convergence(cfg);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.distances.size(), 2u * 3);
  EXPECT_EQ(r.reference.size(), 2u * 3);
  EXPECT_EQ(r.snapshots.size(), 2u * 3);
  for (auto& row : r.rows) {
    EXPECT_GT(row.W0, 0);
    EXPECT_GE(row.W_sup, row.W0);
    EXPECT_GT(row.pde_steps, 0);
    EXPECT_NEAR(row.growth, std::exp(3 * row.lambda * cfg.T), 1e-9 * row.growth);
  }
  // a fixed delta does not shrink the condition's exponent, so only n^{-1/d} moves it
  EXPECT_LT(r.rows[1].condition, r.rows[0].condition);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Convergence, ReproducibleAndThreadIndependent) {
  auto cfg = parse_config_string(kSmallConvergence);
  auto a = run_convergence(cfg);
  auto b = run_convergence(cfg);
  cfg.threads = 2;
  auto c = run_convergence(cfg);
  for (size_t i = 0; i < a.distances.size(); ++i) {
    EXPECT_EQ(a.distances[i].W, b.distances[i].W);
    EXPECT_EQ(a.distances[i].W, c.distances[i].W);
  }
  for (size_t i = 0; i < a.snapshots.size(); ++i) EXPECT_EQ(a.snapshots[i].x, c.snapshots[i].x);
}

TEST(Convergence, RejectsNonSpectralKernel) {
  auto cfg = parse_config_string(kSmallConvergence);
  cfg.kernel.family = "closed-form";
  EXPECT_THROW(run_convergence(cfg), Error);
}

TEST(Nonconvergence, SmallRunTrapsDipoles) {
  auto cfg = parse_config_string(kSmallNonconvergence);
  auto r = run_nonconvergence(cfg);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_TRUE(r.all_inside());
  EXPECT_TRUE(r.drift_ok());
  EXPECT_DOUBLE_EQ(r.A, 0.5);
  EXPECT_EQ(r.manifold.size(), 2u * 11);
  EXPECT_GT(r.proxy_disp, 10 * r.max_particle_displacement());
  EXPECT_TRUE(r.warnings.empty());
  for (auto& row : r.rows) EXPECT_EQ(row.broken, 0);
}

TEST(Nonconvergence, ZeroPotentialKeepsDipolesAtRest) {
  auto cfg = parse_config_string(kSmallNonconvergence);
  cfg.potential.clear();
  auto r = run_nonconvergence(cfg);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings[0].find("no x1 dependence"), std::string::npos);
  for (auto& row : r.rows) EXPECT_LT(row.W_T, 1e-12);
  // uniform equal densities are stationary for the limit equation; the proxy only sees quantization
  EXPECT_LT(r.proxy_disp, 2.0 / cfg.proxy_m);
}

TEST(Nonconvergence, AssumptionFailureAbortsBeforeIntegration) {
  auto cfg = parse_config_string(kSmallNonconvergence);
  cfg.delta.kind = "fixed";
  cfg.delta.value = 0.1;
  try {
    run_nonconvergence(cfg);
    FAIL() << "expected AssumptionError";
  } catch (const AssumptionError& e) {
    EXPECT_NE(std::string(e.what()).find("curvature ratio"), std::string::npos);
  }
}

TEST(Nonconvergence, ConfigurationErrors) {
  auto cfg = parse_config_string(kSmallNonconvergence);
  auto bad = cfg;
  bad.steps = 101;
  EXPECT_THROW(run_nonconvergence(bad), Error);
  bad = cfg;
  bad.mode = "slip";
  EXPECT_THROW(run_nonconvergence(bad), Error);  // slip needs d = 2
  bad.d = 2;
  EXPECT_THROW(run_nonconvergence(bad), Error);  // and the edge-singular family
  bad = cfg;
  bad.kernel.family = "screw";
  EXPECT_THROW(run_nonconvergence(bad), Error);
}

TEST(Nonconvergence, ThreadIndependent) {
  auto cfg = parse_config_string(kSmallNonconvergence);
  auto a = run_nonconvergence(cfg);
  cfg.threads = 2;
  auto b = run_nonconvergence(cfg);
  ASSERT_EQ(a.distances.size(), b.distances.size());
  for (size_t i = 0; i < a.distances.size(); ++i) EXPECT_EQ(a.distances[i].W, b.distances[i].W);
  EXPECT_EQ(a.proxy_disp, b.proxy_disp);
  EXPECT_EQ(a.proxy_disp_half, b.proxy_disp_half);
}

TEST(Gronwall, IdenticalDataStayAtZeroDistance) {
  auto cfg = parse_config_string(kSmallGronwall);
  auto r = run_gronwall(cfg);
  EXPECT_EQ(r.rows.size(), 2u * 2 * 5);
  EXPECT_EQ(r.violations(), 0);
  for (auto& row : r.rows) {
    if (row.perturbation == 0) EXPECT_EQ(row.W, 0.0);
    else EXPECT_GT(row.W0, 0.0);
    EXPECT_GE(row.bound, 1.0);
  }
  EXPECT_LE(r.worst_fraction(), 1.0);
}

TEST(Gronwall, SeedControlsDatum) {
  auto cfg = parse_config_string(kSmallGronwall);
  auto a = run_gronwall(cfg);
  auto b = run_gronwall(cfg);
  cfg.seed = 2;
  auto c = run_gronwall(cfg);
  bool differs = false;
  for (size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].W, b.rows[i].W);
    differs = differs || a.rows[i].W != c.rows[i].W;
  }
  EXPECT_TRUE(differs);
}

TEST(Gronwall, PerturbationMovesEachParticleByEps) {
  std::mt19937_64 rng(11);
  auto s = random_particles(2, 10, rng);
  auto p = perturb(s, 1e-3, rng);
  for (int i = 0; i < s.n(); ++i) EXPECT_NEAR(torus_dist(p.x[i], s.x[i], 2), 1e-3, 1e-12);
  EXPECT_EQ(p.b, s.b);
}

TEST(Results, WritersProduceFiles) {
  auto dir = scratch_dir("writers");
  auto cfg = parse_config_string(kSmallGronwall);
  write_results(dir.string(), run_gronwall(cfg));
  EXPECT_TRUE(fs::exists(dir / "summary.csv"));
  EXPECT_TRUE(fs::exists(dir / "distances.csv"));
  std::ifstream f(dir / "distances.csv");
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "t,n,delta,W_plus,W_minus,W_signed");
}

TEST(Cli, ExitCodes) {
  auto dir = scratch_dir("cli");
  EXPECT_EQ(run_cli("check-kernel --config " GBLAB_CONFIGS "/convergence.ini --out " + (dir / "ok").string()), 0);

  write_file(dir / "wide.ini", "[run]\nladder = 100\n[delta]\nrule = fixed\nvalue = 0.1\n[kernel]\nfamily = closed-form\n");
  EXPECT_EQ(run_cli("check-kernel --config " + (dir / "wide.ini").string() + " --out " + (dir / "wide").string()), 2);

  std::string text = kSmallNonconvergence;
  text.replace(text.find("rule = fast-power\np = 4"), 23, "rule = fixed\nvalue = 0.1");
  write_file(dir / "abort.ini", text);
  EXPECT_EQ(run_cli("experiment nonconvergence --config " + (dir / "abort.ini").string() + " --out " +
                    (dir / "abort").string()),
            2);
  EXPECT_FALSE(fs::exists(dir / "abort" / "trajectory.csv"));

  write_file(dir / "bad.ini", "[delta]\nrule = sideways\n");
  EXPECT_EQ(run_cli("check-kernel --config " + (dir / "bad.ini").string()), 1);
  EXPECT_EQ(run_cli("experiment sideways"), 1);
  EXPECT_EQ(run_cli(""), 1);
}

TEST(Cli, GronwallRunWritesMetadata) {
  auto dir = scratch_dir("cli_gronwall");
  write_file(dir / "g.ini", kSmallGronwall);
  ASSERT_EQ(run_cli("experiment gronwall --config " + (dir / "g.ini").string() + " --out " + (dir / "out").string() +
                    " --seed 5 --threads 2"),
            0);
  std::ifstream f(dir / "out" / "run.json");
  std::stringstream ss;
  ss << f.rdbuf();
  auto j = nlohmann::json::parse(ss.str());
  EXPECT_EQ(j["seed"], 5);
  EXPECT_EQ(j["threads"], 2);
  EXPECT_EQ(j["command"], "experiment gronwall");
  EXPECT_EQ(j["results"]["violations"], 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "summary.csv"));
}
