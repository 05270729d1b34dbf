#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "morseflow/functionals.hpp"
#include "morseflow/initial_data.hpp"
#include "morseflow/oracles.hpp"

using namespace morseflow;

namespace {

double rel_err(const Field& a, const Field& b) {
  double num = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) num = std::max(num, std::abs(a[k] - b[k]));
  return num / std::max(a.max_abs(), 1e-300);
}

Field random_planar(const PlanarGrid& g, std::uint64_t seed, double lo, double hi, const Field& boundary) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(lo, hi);
  Field v = g.sample([&](double, double) { return U(rng); });
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (g.is_boundary(k)) v[k] = boundary[k];
  }
  return v;
}

// Straight-loop quadrature of the PME step functional, written independently of the library.
double pme_brute_force(const PlanarGrid& g, double h, double beta, const Field& prev, const Field& v) {
  const double c = (2 * beta - 1) / beta;
  double kin = 0.0;
  for (int i = 1; i < g.n_x() - 1; ++i) {
    for (int j = 1; j < g.n_y() - 1; ++j) {
      const double a = std::pow(std::abs(v[g.index(i, j)]), beta) * (v[g.index(i, j)] < 0 ? -1 : 1);
      const double b = std::pow(std::abs(prev[g.index(i, j)]), beta) * (prev[g.index(i, j)] < 0 ? -1 : 1);
      kin += (a - b) * (a - b) * g.dx() * g.dy();
    }
  }
  double grad2 = 0.0;
  for (int i = 0; i < g.n_x() - 1; ++i) {
    for (int j = 1; j < g.n_y() - 1; ++j) {
      const double d = (v[g.index(i + 1, j)] - v[g.index(i, j)]) / g.dx();
      grad2 += d * d * g.dx() * g.dy();
    }
  }
  for (int i = 1; i < g.n_x() - 1; ++i) {
    for (int j = 0; j < g.n_y() - 1; ++j) {
      const double d = (v[g.index(i, j + 1)] - v[g.index(i, j)]) / g.dy();
      grad2 += d * d * g.dx() * g.dy();
    }
  }
  return c / (2 * h) * kin + 0.5 * grad2;
}

}  // namespace

TEST(CBeta, Values) {
  EXPECT_DOUBLE_EQ(cbeta_from_beta(1.0), 1.0);
  EXPECT_DOUBLE_EQ(cbeta_from_beta(2.0), 1.5);
  EXPECT_DOUBLE_EQ(cbeta_from_beta(1.5), 4.0 / 3.0);
  for (double beta : {1.1, 1.7, 2.0, 3.3, 10.0}) {
    EXPECT_NEAR(beta / (2 * beta - 1) * cbeta_from_beta(beta), 1.0, 1e-15);
  }
  EXPECT_THROW(cbeta_from_beta(0.5), DomainError);
  EXPECT_THROW(cbeta_from_beta(0.2), DomainError);
}

TEST(SignedPower, DifferenceIsAccurate) {
  for (double beta : {1.0, 1.5, 2.0, 3.0}) {
    for (double a : {-1.3, -0.2, 0.0, 0.4, 2.0}) {
      for (double d : {1e-12, 1e-6, 0.1, -0.7}) {
        const double b = a + d;
        EXPECT_NEAR(signed_power_difference(a, b, beta), signed_power(b, beta) - signed_power(a, beta),
                    1e-14 * (1 + std::abs(signed_power(b, beta))));
      }
    }
  }
}

TEST(PmeFunctional, ValueAtPrevIsHalfDirichletEnergy) {
  const auto g = build_planar_grid(1, 1, 9, 9);
  const Field prev = g.sample([](double x, double y) { return 1 + x * y + std::sin(3 * x); });
  const PmeStepFunctional f(g, 0.1, 2.0, prev, prev);
  EXPECT_DOUBLE_EQ(f.kinetic(prev), 0.0);
  EXPECT_DOUBLE_EQ(f.eval(prev), 0.5 * dirichlet_energy(g, prev));
}

TEST(PmeFunctional, ZeroDataGivesZero) {
  const auto g = build_planar_grid(1, 1, 5, 5);
  const PmeStepFunctional f(g, 0.1, 2.0, g.constant(0), g.constant(0));
  EXPECT_EQ(f.eval(g.constant(0)), 0.0);
}

TEST(PmeFunctional, MatchesBruteForceQuadrature) {
  const auto g = build_planar_grid(1, 1.5, 5, 5);
  const Field boundary = g.sample([](double x, double y) { return 0.5 + x - y * y; });
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Field prev = random_planar(g, seed, -1, 1, boundary);
    const Field v = random_planar(g, seed + 100, -1, 1, boundary);
    for (double beta : {1.0, 2.0, 2.5}) {
      const PmeStepFunctional f(g, 0.03, beta, prev, boundary);
      const double expected = pme_brute_force(g, 0.03, beta, prev, v);
      EXPECT_NEAR(f.eval(v), expected, 1e-12 * std::abs(expected));
    }
  }
}

TEST(PmeFunctional, RejectsBoundaryMismatch) {
  const auto g = build_planar_grid(1, 1, 5, 5);
  const PmeStepFunctional f(g, 0.1, 2.0, g.constant(1), g.constant(1));
  EXPECT_THROW(f.eval(g.constant(2)), AdmissibilityError);
  EXPECT_THROW(PmeStepFunctional(g, 0.1, 2.0, g.constant(2), g.constant(1)), AdmissibilityError);
  EXPECT_THROW(PmeStepFunctional(g, -0.1, 2.0, g.constant(1), g.constant(1)), DomainError);
  EXPECT_THROW(PmeStepFunctional(g, 0.1, 0.8, g.constant(1), g.constant(1)), DomainError);
}

TEST(PmeFunctional, HarmonicPrevIsStationary) {
  const auto g = build_planar_grid(2, 1, 9, 7);
  const Field prev = g.sample([](double x, double y) { return 1 + 0.3 * x - 0.2 * y; });
  const PmeStepFunctional f(g, 0.01, 2.0, prev, prev);
  EXPECT_LT(f.grad(prev).max_abs(), 1e-12);
}

TEST(PmeFunctional, GradientMatchesFiniteDifferences) {
  const auto g = build_planar_grid(1, 1, 8, 8);
  const Field boundary = g.sample([](double x, double y) { return 0.6 + 0.2 * x * y; });
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Field prev = random_planar(g, seed, 0.2, 1.2, boundary);
    const Field v = random_planar(g, seed + 50, 0.2, 1.2, boundary);
    for (double beta : {2.0, 1.5}) {
      const PmeStepFunctional f(g, 0.05, beta, prev, boundary);
      EXPECT_LT(rel_err(f.grad(v), oracles::fd_gradient(f, v, 1e-5)), 1e-6) << "seed " << seed;
    }
  }
}

TEST(PmeFunctional, GradientMatchesFiniteDifferencesOnSignedFields) {
  const auto g = build_planar_grid(1, 1, 8, 8);
  const Field boundary = g.constant(0.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Field prev = random_planar(g, seed, -1, 1, boundary);
    const Field v = random_planar(g, seed + 9, -1, 1, boundary);
    const PmeStepFunctional f(g, 0.05, 2.0, prev, boundary);
    EXPECT_LT(rel_err(f.grad(v), oracles::fd_gradient(f, v, 1e-5)), 1e-6);
  }
}

TEST(PmeFunctional, HeatCaseGradientIsImplicitEulerResidual) {
  const auto g = build_planar_grid(1, 1, 7, 7);
  const Field boundary = g.constant(0.0);
  const Field prev = random_planar(g, 1, -1, 1, boundary);
  const Field v = random_planar(g, 2, -1, 1, boundary);
  const double h = 0.02;
  const PmeStepFunctional f(g, h, 1.0, prev, boundary);
  const Field grad = f.grad(v);
  const Field lap = apply_laplacian(g, v);
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double expected = g.is_boundary(k) ? 0.0 : (v[k] - prev[k]) / h - lap[k];
    EXPECT_NEAR(grad[k], expected, 1e-12 * (1 + std::abs(expected)));
  }
}

TEST(PmeFunctional, EvenUnderSignFlip) {
  const auto g = build_planar_grid(1, 1, 6, 6);
  const Field zero = g.constant(0.0);
  const Field v = random_planar(g, 3, -1, 1, zero);
  Field minus_v = v;
  for (double& x : minus_v.values()) x = -x;
  const PmeStepFunctional f0(g, 0.1, 2.0, zero, zero);
  EXPECT_DOUBLE_EQ(f0.eval(v), f0.eval(minus_v));

  // With nonzero previous data the symmetry holds jointly in (v, v_prev).
  const Field p = random_planar(g, 4, -1, 1, zero);
  Field minus_p = p;
  for (double& x : minus_p.values()) x = -x;
  const PmeStepFunctional fp(g, 0.1, 2.0, p, zero);
  const PmeStepFunctional fm(g, 0.1, 2.0, minus_p, zero);
  EXPECT_NEAR(fp.eval(v), fm.eval(minus_v), 1e-13 * fp.eval(v));
}

TEST(PmeFunctional, ConvexAlongSegmentsAbovePrevOverRootThree) {
  // Per node the kinetic term (s(v) - s(p))^2 with beta = 2 has second derivative
  // 12 v^2 - 4 p^2 for v, p > 0, so it is convex on {v >= p / sqrt(3)}.
  const auto g = build_planar_grid(1, 1, 6, 6);
  const Field boundary = g.constant(1.0);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Field prev = random_planar(g, 1000 + trial, 0.5, 1.5, boundary);
    Field a = prev;
    Field b = prev;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (g.is_boundary(k)) continue;
      const double lo = prev[k] / std::sqrt(3.0);
      a[k] = lo + 2.0 * U(rng);
      b[k] = lo + 2.0 * U(rng);
    }
    const PmeStepFunctional f(g, 0.05, 2.0, prev, boundary);
    for (double t : {0.25, 0.5, 0.75}) {
      Field m = a;
      for (std::size_t k = 0; k < m.size(); ++k) m[k] = (1 - t) * a[k] + t * b[k];
      EXPECT_LE(f.eval(m), (1 - t) * f.eval(a) + t * f.eval(b) + 1e-12);
    }
  }
}

TEST(PmeFunctional, NotGloballyConvex) {
  // Near v = 0 with a large positive previous value the kinetic term is concave.
  const auto g = build_planar_grid(1, 1, 3, 3);
  const Field boundary = g.constant(0.0);
  Field prev = boundary;
  prev[g.index(1, 1)] = 1.0;
  const PmeStepFunctional f(g, 1e-3, 2.0, prev, boundary);
  auto at = [&](double x) {
    Field v = boundary;
    v[g.index(1, 1)] = x;
    return f.eval(v);
  };
  EXPECT_GT(at(0.1), 0.5 * (at(0.0) + at(0.2)));
}

TEST(PmeFunctional, DifferenceMatchesEvaluation) {
  const auto g = build_planar_grid(1, 1, 8, 8);
  const Field boundary = g.constant(0.5);
  const Field prev = random_planar(g, 5, 0.1, 1, boundary);
  const Field a = random_planar(g, 6, 0.1, 1, boundary);
  const Field b = random_planar(g, 7, 0.1, 1, boundary);
  const PmeStepFunctional f(g, 0.05, 2.0, prev, boundary);
  EXPECT_NEAR(f.difference(a, b), f.eval(b) - f.eval(a), 1e-12 * f.eval(a));
}

TEST(PmeFunctional, ElResidualAgreesWithGradient) {
  const auto g = build_planar_grid(1, 1, 8, 8);
  const Field boundary = g.constant(0.5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Field prev = random_planar(g, seed, -1, 1, boundary);
    const Field v = random_planar(g, seed + 20, -1, 1, boundary);
    const PmeStepFunctional f(g, 0.05, 2.0, prev, boundary);
    const Field grad = f.grad(v);
    const Field res = f.el_residual_field(v);
    for (std::size_t k = 0; k < v.size(); ++k) EXPECT_EQ(grad[k], res[k]);
  }
}

class RicciFunctionalTest : public ::testing::Test {
 protected:
  FootballGrid grid = build_football_grid(0.5, 16, 8);

  Field sym(std::uint64_t seed, double amp = 0.5) {
    return random_smooth_field(grid, seed, amp, 4, true);
  }
  Field any(std::uint64_t seed, double amp = 0.5) { return random_smooth_field(grid, seed, amp, 4, false); }
};

TEST_F(RicciFunctionalTest, SymZeroIsStationary) {
  const RicciSymStepFunctional f(grid, 0.1, grid.constant(0));
  EXPECT_EQ(f.eval(grid.constant(0)), 0.0);
  EXPECT_LT(f.grad(grid.constant(0)).max_abs(), 1e-14);
  EXPECT_NEAR(f.lambda(grid.constant(0)), 1.0, 1e-15);
}

TEST_F(RicciFunctionalTest, SymRejectsInadmissibleFields) {
  const RicciSymStepFunctional f(grid, 0.1, grid.constant(0));
  EXPECT_THROW(f.eval(grid.constant(0.1)), AdmissibilityError);
  const Field odd = grid.sample([](double r, double) { return std::cos(r); });
  EXPECT_THROW(f.eval(odd), AdmissibilityError);
  EXPECT_THROW(RicciSymStepFunctional(grid, 0.1, grid.constant(1.0)), AdmissibilityError);
}

TEST_F(RicciFunctionalTest, SymValueAtPrevIsTheEnergy) {
  const Field prev = sym(3);
  const RicciSymStepFunctional f(grid, 0.1, prev);
  const double expected =
      0.5 * dirichlet_energy(grid, prev) / grid.total_area() - 0.5 * std::log(average(grid, [&] {
        Field e = prev;
        for (double& v : e.values()) v = std::exp(2 * v);
        return e;
      }()));
  EXPECT_NEAR(f.eval(prev), expected, 1e-14);
}

TEST_F(RicciFunctionalTest, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RicciSymStepFunctional fs(grid, 0.05, sym(seed));
    const Field us = sym(seed + 100);
    EXPECT_LT(rel_err(fs.grad(us), oracles::fd_gradient(fs, us, 1e-5)), 1e-6);

    const RicciRegStepFunctional fr(grid, 0.05, 0.3, any(seed));
    const Field ur = any(seed + 100);
    EXPECT_LT(rel_err(fr.grad(ur), oracles::fd_gradient(fr, ur, 1e-5)), 1e-6);

    const RicciUnnormStepFunctional fu(grid, 0.05, any(seed));
    EXPECT_LT(rel_err(fu.grad(ur), oracles::fd_gradient(fu, ur, 1e-5)), 1e-6);
  }
}

TEST_F(RicciFunctionalTest, SymGradientIsElResidualWithLambda) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RicciSymStepFunctional f(grid, 0.05, sym(seed));
    const Field u = sym(seed + 7);
    const Field grad = f.grad(u);
    const Field res = f.el_residual_field(u);
    EXPECT_LT(rel_err(grad, res), 1e-12);
    // Averaging the Euler-Lagrange equation removes the laplacian; the residual is mean-zero.
    EXPECT_LT(std::abs(average(grid, res)), 1e-12);
  }
}

TEST_F(RicciFunctionalTest, RegAndUnnormGradientsAreElResiduals) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RicciRegStepFunctional fr(grid, 0.05, 0.4, any(seed));
    const RicciUnnormStepFunctional fu(grid, 0.05, any(seed));
    const Field u = any(seed + 3);
    EXPECT_LT(rel_err(fr.grad(u), fr.el_residual_field(u)), 1e-13);
    EXPECT_LT(rel_err(fu.grad(u), fu.el_residual_field(u)), 1e-13);
  }
}

TEST_F(RicciFunctionalTest, TranslationIdentity) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Field u = any(seed);
    for (double c : {-0.7, 0.2, 1.5}) {
      Field shifted = u;
      for (double& v : shifted.values()) v += c;
      EXPECT_NEAR(ricci_energy(grid, shifted), ricci_energy(grid, u) - c, 1e-14);
    }
  }
}

TEST_F(RicciFunctionalTest, RegConstantFieldsAreNeverStationary) {
  for (double c : {-0.5, 0.0, 0.8}) {
    for (double lambda : {0.25, 0.5, 0.75, 1.0 - 1e-9}) {
      const RicciRegStepFunctional f(grid, 0.1, lambda, grid.constant(c));
      const Field g = f.grad(grid.constant(c));
      for (double v : g.values()) EXPECT_NEAR(v, lambda - 1.0, 1e-14);
    }
  }
  EXPECT_THROW(RicciRegStepFunctional(grid, 0.1, 1.0, grid.constant(0)), DomainError);
  EXPECT_THROW(RicciRegStepFunctional(grid, 0.1, 0.0, grid.constant(0)), DomainError);
}

TEST_F(RicciFunctionalTest, DifferencesMatchEvaluation) {
  const RicciSymStepFunctional fs(grid, 0.05, sym(1));
  EXPECT_NEAR(fs.difference(sym(2), sym(3)), fs.eval(sym(3)) - fs.eval(sym(2)), 1e-13);
  const RicciRegStepFunctional fr(grid, 0.05, 0.5, any(1));
  EXPECT_NEAR(fr.difference(any(2), any(3)), fr.eval(any(3)) - fr.eval(any(2)), 1e-13);
  const RicciUnnormStepFunctional fu(grid, 0.05, any(1));
  EXPECT_NEAR(fu.difference(any(2), any(3)), fu.eval(any(3)) - fu.eval(any(2)), 1e-13);
}

TEST_F(RicciFunctionalTest, DifferenceResolvesTinySteps) {
  // For a step -t g the decrease is t |g|^2 to first order, far below the rounding of eval.
  const RicciRegStepFunctional f(grid, 0.05, 0.5, any(4));
  const Field u = any(5);
  const Field g = f.grad(u);
  const double g2 = weighted_dot(f.inner_weights(), g.values(), g.values());
  for (double t : {1e-8, 1e-10, 1e-12}) {
    Field w = u;
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= t * g[k];
    EXPECT_NEAR(f.difference(u, w) / (-t * g2), 1.0, 1e-3) << "t = " << t;
  }
}

TEST(Moser, ConstantsGiveZero) {
  const auto g = build_football_grid(0.5, 16, 8);
  for (double c : {-2.0, 0.0, 0.5, 3.0}) {
    EXPECT_NEAR(moser_log_ratio(g, g.constant(c), 1.0), 0.0, 1e-14);
    EXPECT_NEAR(moser_log_ratio(g, g.constant(c), 0.5), 0.0, 1e-14);
  }
}

TEST(Moser, DecreasingInC) {
  const auto g = build_football_grid(0.5, 16, 8);
  const Field u = random_smooth_field(g, 9, 1.0, 4, true);
  double prev = std::numeric_limits<double>::infinity();
  for (double c : {0.0, 0.25, 0.5, 1.0, 2.0}) {
    const double m = moser_log_ratio(g, u, c);
    EXPECT_LT(m, prev);
    prev = m;
  }
}

TEST(Moser, SymmetricSamplesStayBelowAFiniteCap) {
  const auto g = build_football_grid(0.5, 64, 32);
  double cap = -std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const double amp = 0.1 + 2.9 * static_cast<double>(seed % 10) / 9.0;
    const double m = moser_log_ratio(g, random_smooth_field(g, seed, amp, 4, true), 0.5);
    ASSERT_TRUE(std::isfinite(m));
    cap = std::max(cap, m);
  }
  RecordProperty("moser_half_cap", std::to_string(cap));
  std::printf("max M_1/2 over 1000 symmetric samples: %.6g\n", cap);
  EXPECT_TRUE(std::isfinite(cap));
}
