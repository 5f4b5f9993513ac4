#include <gtest/gtest.h>

#include <algorithm>
#include <functional>

#include "gblab/metrics.hpp"

using namespace gblab;

namespace {

DensityPair step_plus(double mp) {
  return DensityPair::from_functions(1, 100, [=](Vec) { return mp; }, [=](Vec) { return 1 - mp; });
}

std::vector<double> density_1d(int N, const std::function<double(double)>& f) {
  std::vector<double> r(N);
  for (int i = 0; i < N; ++i) r[i] = f((i + 0.5) / N);
  return r;
}

}  // namespace

TEST(QuantizeMasses, Example) {
  auto q = quantize_masses(step_plus(0.53), 10);
  EXPECT_NEAR(q.rho.mass_plus(), 0.5, 1e-14);
  EXPECT_NEAR(q.rho.mass_minus(), 0.5, 1e-14);
  EXPECT_NEAR(q.moved, 0.03, 1e-14);
  EXPECT_LE(q.moved, 0.1 + 1e-15);
  EXPECT_TRUE(std::isfinite(q.entropy_change));
}

TEST(QuantizeMasses, IdentityCases) {
  for (double mp : {0.3, 0.5}) {
    auto rho = step_plus(mp);
    auto q = quantize_masses(rho, 10);
    EXPECT_EQ(q.rho.plus, rho.plus);
    EXPECT_EQ(q.rho.minus, rho.minus);
    EXPECT_EQ(q.entropy_change, 0.0);
  }
  for (int n : {2, 8, 64}) EXPECT_EQ(quantize_masses(step_plus(0.5), n).rho.plus, step_plus(0.5).plus);
}

TEST(QuantizeMasses, MovesAtMostOneOverN) {
  for (double mp : {0.01, 0.37, 0.999})
    for (int n : {3, 7, 50}) {
      auto q = quantize_masses(step_plus(mp), n);
      EXPECT_GE(q.moved, -1e-15);
      EXPECT_LE(q.moved, 1.0 / n + 1e-12);
      double k = q.rho.mass_plus() * n;
      EXPECT_NEAR(k, std::round(k), 1e-9);
      EXPECT_NEAR(q.rho.mass_plus() + q.rho.mass_minus(), 1.0, 1e-12);
    }
}

TEST(GridEmpirical, UniformHalfOnCircle) {
  auto rho = step_plus(0.5);
  auto e = grid_empirical(rho, 10);
  ASSERT_EQ(e.plus.size(), 5u);
  ASSERT_EQ(e.minus.size(), 5u);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(e.plus[k][0], (2 * k + 1 + 0.5) / 10, 1e-15);
  // exact 1D W2 to a fine quantization of the same density
  auto fine = grid_empirical(rho, 10000);
  EXPECT_LE(w2_empirical(e.pos(), fine.pos()), 0.1);
}

TEST(GridEmpirical, ConcentratedDensity) {
  for (int d = 1; d <= 2; ++d) {
    const int N = 64;
    auto rho = DensityPair::from_functions(
        d, N, [](Vec) { return 0.0; }, [](Vec) { return 0.0; });
    size_t c = d == 1 ? 20 : size_t(20) * N + 40;
    rho.plus[c] = d == 1 ? N : double(N) * N;
    auto e = grid_empirical(rho, 16);
    ASSERT_EQ(e.plus.size(), 16u);
    EXPECT_TRUE(e.minus.empty());
    for (auto& p : e.plus) EXPECT_EQ(p, e.plus[0]);
    int G = d == 1 ? 16 : 4;
    Vec x = rho.center(c);
    EXPECT_NEAR(e.plus[0][0], (std::floor(x[0] * G) + 0.5) / G, 1e-15);
    if (d == 2) {
      EXPECT_NEAR(e.plus[0][1], (std::floor(x[1] * G) + 0.5) / G, 1e-15);
    }
  }
}

TEST(GridEmpirical, MassesMatchPerSign) {
  auto rho = DensityPair::from_functions(
      2, 48, [](Vec x) { return 0.3 * (1 + 0.5 * std::cos(2 * kPi * x[0])); },
      [](Vec x) { return 0.7 * (1 + 0.5 * std::sin(2 * kPi * x[1])); });
  for (int n : {10, 37, 100, 250}) {
    auto q = quantize_masses(rho, n).rho;
    auto e = grid_empirical(q, n);
    EXPECT_EQ(double(e.plus.size()), std::round(n * q.mass_plus()));
    EXPECT_EQ(e.plus.size() + e.minus.size(), size_t(n));
  }
  EXPECT_THROW(grid_empirical(rho, 7), Error);
}

TEST(GridEmpirical, RateInOneDimension) {
  auto rho = DensityPair::from_functions(1, 2048, [](Vec x) { return x[0] < 0.5 ? 1.6 : 0.4; }, [](Vec) { return 0.0; });
  std::vector<double> ln, lw;
  for (int n : {64, 128, 256, 512, 1024}) {
    auto e = grid_empirical(rho, n);
    auto r = w2_density_vs_empirical(rho, e, 16 * n);
    EXPECT_LE(r.dist.W_plus, grid_empirical_bound(n, 1) + r.bound);
    ln.push_back(std::log(n));
    lw.push_back(std::log(r.dist.W_plus));
  }
  double slope = (lw.back() - lw.front()) / (ln.back() - ln.front());
  EXPECT_NEAR(slope, -1.0, 0.2);
}

TEST(DipoleData, UniformOnCircle) {
  auto dip = dipole_data(std::vector<double>(100, 1.0), 1, 100, 10, DipoleMode::Isotropic1D);
  ASSERT_EQ(dip.m(), 5);
  for (int k = 0; k < 5; ++k) {
    EXPECT_NEAR(dip.z[k][0], 0.2 * k, 1e-12);
    EXPECT_EQ(dip.dv[k][0], 0.0);
  }
}

TEST(DipoleData, StepDensity) {
  auto rho = density_1d(64, [](double x) { return x < 0.5 ? 2.0 : 0.0; });
  auto dip = dipole_data(rho, 1, 64, 8, DipoleMode::Isotropic1D);
  ASSERT_EQ(dip.m(), 4);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(dip.z[k][0], 0.125 * k, 1e-12);
  auto c = slow_manifold_contains(dip, 0.5, 1, 1e-3);
  EXPECT_TRUE(c.inside);
  EXPECT_GE(c.min_spacing, 1.0 / (8 * 2) - 1e-12);
}

TEST(DipoleData, Errors) {
  std::vector<double> one(32, 1.0);
  EXPECT_THROW(dipole_data(one, 1, 32, 7, DipoleMode::Isotropic1D), Error);
  EXPECT_THROW(dipole_data(std::vector<double>(32 * 32, 1.0), 2, 32, 8, DipoleMode::SlipConfined2D, {0, 0}), Error);
  EXPECT_THROW(dipole_data(std::vector<double>(32, 2.0), 1, 32, 8, DipoleMode::Isotropic1D), Error);
  EXPECT_THROW(dipole_data(one, 1, 32, 8, DipoleMode::Isotropic2D), Error);
}

TEST(DipoleData, OnSlowManifoldInOneDimension) {
  const int N = 256;
  std::vector<std::vector<double>> dens{
      density_1d(N, [](double) { return 1.0; }),
      density_1d(N, [](double x) { return x < 0.5 ? 1.5 : 0.5; }),
      density_1d(N, [](double x) { return 1 + 0.8 * std::cos(2 * kPi * x); }),
  };
  for (auto& rho : dens) {
    double sup = *std::max_element(rho.begin(), rho.end());
    for (int n : {10, 50, 200}) {
      auto dip = dipole_data(rho, 1, N, n, DipoleMode::Isotropic1D);
      auto c = slow_manifold_contains(dip, 1 / sup, 1, 1e-3);
      EXPECT_TRUE(c.spacing_ok) << n << " " << c.min_spacing << " " << c.spacing_threshold;
    }
  }
}

TEST(DipoleData, TwoDimensionalSpacing) {
  const int N = 64;
  std::vector<double> rho(N * N, 1.0);
  for (int n : {32, 128, 200}) {
    auto dip = dipole_data(rho, 2, N, n, DipoleMode::SlipConfined2D, {0, 1e-4});
    EXPECT_EQ(dip.m(), n / 2);
    auto c = slow_manifold_contains(dip, 0.5, 1, 1e-3);
    EXPECT_TRUE(c.spacing_ok) << n << " " << c.min_spacing << " " << c.spacing_threshold;
    EXPECT_TRUE(c.inside);
  }
}

TEST(DipoleData, EmpiricalMeasuresApproachDensity) {
  const int N = 512;
  auto rho0 = density_1d(N, [](double x) { return 1 + 0.5 * std::cos(2 * kPi * x); });
  auto rho = DensityPair::from_functions(1, N, [&](Vec) { return 0.0; }, [&](Vec) { return 0.0; });
  for (int i = 0; i < N; ++i) rho.plus[i] = rho.minus[i] = rho0[i] / 2;
  double prev = INFINITY;
  for (int n : {10, 40, 160}) {
    auto e = EmpiricalPair::from_particles(from_dipoles(dipole_data(rho0, 1, N, n, DipoleMode::Isotropic1D)));
    double w = w2_density_vs_empirical(rho, e, 64 * n).dist.W;
    EXPECT_LT(w, prev);
    prev = w;
  }
}
