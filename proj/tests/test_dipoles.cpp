#include <gtest/gtest.h>

#include <random>

#include "gblab/dipoles.hpp"

using namespace gblab;

namespace {

DipoleSystem random_dipoles(DipoleMode mode, int m, double width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1), w(-width, width);
  DipoleSystem dip;
  dip.mode = mode;
  int d = dipole_dim(mode);
  for (int k = 0; k < m; ++k) {
    dip.z.push_back({u(rng), d == 2 ? u(rng) : 0});
    dip.dv.push_back({w(rng), d == 2 ? w(rng) : 0});
  }
  return dip;
}

// True when some (+,-) or like-sign pair from different dipoles sits across the antipode, where the
// closed-form kernel's periodic extension has a derivative jump.
bool straddles_seam(const DipoleSystem& dip) {
  for (int i = 0; i < dip.m(); ++i)
    for (int l = 0; l < dip.m(); ++l)
      if (i != l && std::abs(nearest_image(dip.z[i][0] - dip.z[l][0])) + std::abs(dip.dv[i][0]) +
                            std::abs(dip.dv[l][0]) >= 0.5 - 1e-9)
        return true;
  return false;
}

// Chain-rule image of the particle velocity: dz = (v+ + v-)/2, dd = (v+ - v-)/2.
template <class K>
DipoleRates via_particles(const DipoleSystem& dip, const K& V, const ExternalPotential& U) {
  auto sys = from_dipoles(dip);
  Mode mode = dip.mode == DipoleMode::SlipConfined2D ? Mode::SlipConfined : Mode::Isotropic;
  auto v = velocity(sys, V, U, mode);
  DipoleRates r;
  for (int k = 0; k < dip.m(); ++k) {
    Vec a = v[2 * k], b = v[2 * k + 1];
    r.dz.push_back({0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])});
    r.dd.push_back({0.5 * (a[0] - b[0]), 0.5 * (a[1] - b[1])});
  }
  return r;
}

}  // namespace

TEST(DipoleCoords, Example) {
  ParticleSystem s{1, {{0.5, 0}, {0.4, 0}}, {1, -1}, 0};
  auto dip = to_dipoles(s, DipoleMode::Isotropic1D);
  EXPECT_NEAR(dip.z[0][0], 0.45, 1e-15);
  EXPECT_NEAR(dip.dv[0][0], 0.05, 1e-15);
}

TEST(DipoleCoords, CollapsedDipole) {
  DipoleSystem dip{DipoleMode::Isotropic2D, {{0.3, 0.6}}, {{0, 0}}, 0};
  auto s = from_dipoles(dip);
  EXPECT_EQ(s.x[0], dip.z[0]);
  EXPECT_EQ(s.x[1], dip.z[0]);
}

TEST(DipoleCoords, RoundTrip) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    auto mode = t % 2 ? DipoleMode::Isotropic2D : DipoleMode::Isotropic1D;
    auto dip = random_dipoles(mode, 5, 0.2, rng);
    auto back = to_dipoles(from_dipoles(dip), mode);
    for (int k = 0; k < dip.m(); ++k)
      for (int a = 0; a < 2; ++a) {
        EXPECT_NEAR(back.dv[k][a], dip.dv[k][a], 1e-15);
        EXPECT_NEAR(nearest_image(back.z[k][a] - dip.z[k][a]), 0, 1e-15);
      }
  }
}

TEST(DipoleCoords, UnequalCountsRejected) {
  ParticleSystem s{1, {{0.5, 0}, {0.4, 0}, {0.1, 0}}, {1, -1, 1}, 0};
  EXPECT_THROW(to_dipoles(s, DipoleMode::Isotropic1D), Error);
}

TEST(DipoleRhs, CollapsedSingleDipoleAtRest) {
  ClosedFormKernel1D V(0.01);
  DipoleSystem dip{DipoleMode::Isotropic1D, {{0.3, 0}}, {{0, 0}}, 0};
  auto r = dipole_rhs(dip, V, ExternalPotential::zero());
  EXPECT_EQ(r.dz[0][0], 0.0);
  EXPECT_EQ(r.dd[0][0], 0.0);
}

TEST(DipoleRhs, CollapsedDipoleFeelsPotentialOnWidth) {
  // d = 0: both particles feel -b U'(z), so dz = 0 and dd = -U'(z)
  ClosedFormKernel1D V(0.01);
  auto U = ExternalPotential::cosine(0.2);
  DipoleSystem dip{DipoleMode::Isotropic1D, {{0.3, 0}}, {{0, 0}}, 0};
  auto r = dipole_rhs(dip, V, U);
  EXPECT_EQ(r.dz[0][0], 0.0);
  EXPECT_NEAR(r.dd[0][0], -U.grad({0.3, 0})[0], 1e-15);
  auto p = via_particles(dip, V, U);
  EXPECT_NEAR(r.dd[0][0], p.dd[0][0], 1e-15);
}

TEST(DipoleRhs, EqualsChainRuleOfParticleVelocity) {
  std::mt19937_64 rng(2);
  auto U = ExternalPotential({{0.2, {1, 0}, 0.1}, {0.1, {1, 1}, 0.4}});
  for (int t = 0; t < 10; ++t) {
    {
      ClosedFormKernel1D V(0.01);
      auto dip = random_dipoles(DipoleMode::Isotropic1D, 8, 0.02, rng);
      while (straddles_seam(dip)) dip = random_dipoles(DipoleMode::Isotropic1D, 8, 0.02, rng);
      auto a = dipole_rhs(dip, V, U);
      auto b = via_particles(dip, V, U);
      for (int k = 0; k < dip.m(); ++k) {
        EXPECT_NEAR(a.dz[k][0], b.dz[k][0], 1e-10 * std::max(1.0, std::abs(b.dz[k][0])));
        EXPECT_NEAR(a.dd[k][0], b.dd[k][0], 1e-10 * std::max(1.0, std::abs(b.dd[k][0])));
      }
    }
    for (auto mode : {DipoleMode::Isotropic2D, DipoleMode::SlipConfined2D}) {
      auto V = make_edge_kernel(0.05, 16);
      auto dip = random_dipoles(mode, 6, 0.05, rng);
      auto a = dipole_rhs(dip, V, U);
      auto b = via_particles(dip, V, U);
      for (int k = 0; k < dip.m(); ++k)
        for (int c = 0; c < 2; ++c) {
          EXPECT_NEAR(a.dz[k][c], b.dz[k][c], 1e-10 * std::max(1.0, std::abs(b.dz[k][c])));
          EXPECT_NEAR(a.dd[k][c], b.dd[k][c], 1e-10 * std::max(1.0, std::abs(b.dd[k][c])));
        }
    }
  }
}

TEST(DipoleRhs, SeamStencilIsContinuousInWidths) {
  // Two dipoles exactly half a period apart: the particle field jumps with the sign of d1 - d2,
  // the dipole stencil does not (it is the smooth continuation across the antipode).
  ClosedFormKernel1D V(1e-3);
  auto rate = [&](double eps) {
    DipoleSystem dip{DipoleMode::Isotropic1D, {{0.0, 0}, {0.5, 0}}, {{1e-4 + eps, 0}, {1e-4, 0}}, 0};
    return dipole_rhs(dip, V, ExternalPotential::zero()).dz[0][0];
  };
  EXPECT_NEAR(rate(1e-12), rate(-1e-12), 1e-6);
  EXPECT_NEAR(rate(0), 0.0, 1e-6);
}

TEST(SlowManifold, Examples) {
  DipoleSystem dip;
  dip.mode = DipoleMode::Isotropic1D;
  for (int k = 0; k < 5; ++k) {
    dip.z.push_back({0.2 * k, 0});
    dip.dv.push_back({0, 0});
  }
  auto c = slow_manifold_contains(dip, 2.0, 1.0, 0.01);
  EXPECT_TRUE(c.inside);
  EXPECT_NEAR(c.min_spacing, 0.2, 1e-15);
  dip.dv[2][0] = 0.02;
  EXPECT_FALSE(slow_manifold_contains(dip, 2.0, 1.0, 0.01).inside);
  EXPECT_FALSE(slow_manifold_contains(dip, 2.0, 1.0, 0.01).width_ok);
}

TEST(SlowManifold, SlipConfinedNeedsClimbOffset) {
  DipoleSystem dip{DipoleMode::SlipConfined2D, {{0.1, 0.1}, {0.6, 0.6}}, {{0, 1e-4}, {0, 0}}, 0};
  auto c = slow_manifold_contains(dip, 0.1, 1.0, 1e-3);
  EXPECT_FALSE(c.e2_ok);
  EXPECT_FALSE(c.inside);
  dip.dv[1][1] = -2e-4;
  EXPECT_TRUE(slow_manifold_contains(dip, 0.1, 1.0, 1e-3).inside);
}

TEST(SlowForce, VanishesForCollapsedDipoles) {
  std::mt19937_64 rng(3);
  ClosedFormKernel1D V(1e-3);
  auto dip = random_dipoles(DipoleMode::Isotropic1D, 10, 0, rng);
  EXPECT_EQ(slow_force_sup(dip, V, ExternalPotential::zero()), 0.0);
  EXPECT_EQ(slow_force_sup(dip, V, ExternalPotential::cosine(0.7)), 0.0);
}

TEST(SlowForce, SmallOnManifoldAndMatchesParticles) {
  const int n = 50, m = n / 2;
  const double delta = 1e-7;
  ClosedFormKernel1D V(delta);
  auto U = ExternalPotential::cosine(0.2);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> jit(-0.25, 0.25), w(-0.5, 0.5);
  DipoleSystem dip;
  dip.mode = DipoleMode::Isotropic1D;
  for (int k = 0; k < m; ++k) {
    dip.z.push_back({wrap((k + jit(rng) * 0.5) / m), 0});
    dip.dv.push_back({w(rng) * delta, 0});
  }
  double f = slow_force_sup(dip, V, U);
  auto p = via_particles(dip, V, U);
  double pf = 0;
  for (auto& v : p.dz) pf = std::max(pf, std::abs(v[0]));
  EXPECT_NEAR(f, pf, 1e-10 * std::max(1.0, pf));
  double C = f / (double(n) * n * delta);
  EXPECT_LT(C, 100.0);
}

TEST(IntegrateDipoles, AgreesWithParticleIntegrator) {
  const int m = 5;
  const double delta = 0.05;
  ClosedFormKernel1D V(delta);
  auto U = ExternalPotential::cosine(0.05);
  DipoleSystem dip;
  dip.mode = DipoleMode::Isotropic1D;
  for (int k = 0; k < m; ++k) {
    dip.z.push_back({0.22 * k, 0});  // pair separations stay clear of the antipode
    dip.dv.push_back({0.01, 0});
  }
  const double T = 0.2;
  DipoleIntegrateOptions opt;
  opt.steps = 20000;
  auto a = integrate_dipoles(dip, V, U, T, opt);
  auto b = integrate(from_dipoles(dip), V, U, T, {});
  auto pa = from_dipoles(a);
  for (int i = 0; i < pa.n(); ++i) EXPECT_NEAR(torus_dist(pa.x[i], b.x[i], 1), 0, 2e-4);
}

TEST(IntegrateDipoles, WidthsStayTrappedForTinyDelta) {
  const int n = 40, m = n / 2;
  const double delta = std::pow(n, -4.0);
  ClosedFormKernel1D V(delta);
  auto U = ExternalPotential::cosine(0.2);
  DipoleSystem dip;
  dip.mode = DipoleMode::Isotropic1D;
  for (int k = 0; k < m; ++k) {
    dip.z.push_back({double(k) / m, 0});
    dip.dv.push_back({0, 0});
  }
  DipoleIntegrateOptions opt;
  opt.steps = 200;
  DipoleIntegrateStats st;
  double maxw = 0;
  opt.on_step = [&](const DipoleSystem& q) {
    for (auto& v : q.dv) maxw = std::max(maxw, std::abs(v[0]));
  };
  integrate_dipoles(dip, V, U, 0.5, opt, &st);
  EXPECT_EQ(st.broken_widths, 0);
  EXPECT_LE(maxw, delta);
  EXPECT_GT(maxw, 0.0);
}
