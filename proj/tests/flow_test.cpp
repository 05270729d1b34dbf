#include <cmath>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "morseflow/flow.hpp"
#include "morseflow/oracles.hpp"

using namespace morseflow;

namespace {

FlowConfig football_config(Variant v, double T, int N, int n_r = 16, int n_theta = 8) {
  FlowConfig c;
  c.variant = v;
  c.T = T;
  c.N = N;
  c.football = {0.5, n_r, n_theta};
  return c;
}

double max_deviation(const Field& f, double target) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v - target));
  return m;
}

}  // namespace

TEST(FlowConfig, Validation) {
  FlowConfig c;
  EXPECT_NO_THROW(c.validate());
  c.T = 0;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.N = 0;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.variant = Variant::pme;
  c.beta = 0.4;
  EXPECT_THROW(c.validate(), DomainError);
  c.beta = 1.0;
  EXPECT_THROW(c.validate(), DomainError);
  c.allow_heat = true;
  EXPECT_NO_THROW(c.validate());
  c = {};
  c.variant = Variant::ricci_reg;
  c.lambda = 1.0;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(FlowConfig, VariantNames) {
  for (Variant v : {Variant::pme, Variant::ricci_sym, Variant::ricci_reg, Variant::ricci_unnorm}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
  EXPECT_FALSE(parse_variant("ricci").has_value());
}

TEST(RunFlow, RicciSymZeroStaysZero) {
  const Trajectory traj = run_flow(football_config(Variant::ricci_sym, 1.0, 10));
  ASSERT_TRUE(traj.completed) << traj.diagnostic;
  ASSERT_EQ(traj.records.size(), 11u);
  EXPECT_TRUE(traj.ledger_ok);
  for (std::size_t n = 1; n < traj.records.size(); ++n) {
    const StepRecord& r = traj.records[n];
    EXPECT_EQ(r.n, static_cast<int>(n));
    EXPECT_DOUBLE_EQ(r.t, 0.1 * static_cast<double>(n));
    EXPECT_EQ(r.field.max_abs(), 0.0);
    EXPECT_EQ(r.lambda_n, 1.0);
    EXPECT_EQ(r.kinetic, 0.0);
    EXPECT_LE(r.el_residual, 1e-9);
  }
}

TEST(RunFlow, RicciSymProjectsInitialData) {
  FlowConfig c = football_config(Variant::ricci_sym, 0.1, 2);
  const auto grid = build_football_grid(0.5, 16, 8);
  const Field u0 = grid.sample([](double r, double t) { return 0.3 + 0.2 * std::cos(r) + 0.1 * std::sin(t); });
  const Trajectory traj = run_flow(c, u0);
  const Field& start = traj.records.front().field;
  EXPECT_LT(std::abs(average(grid, start)), 1e-15);
  EXPECT_LT(asymmetry(grid, start, SymmetryMode::mirror), 1e-15);
}

TEST(RunFlow, UnnormConstantTracksExactFactorAtFirstOrder) {
  double errors[2];
  int idx = 0;
  for (int N : {100, 200}) {
    const Trajectory traj = run_flow(football_config(Variant::ricci_unnorm, 0.4, N));
    ASSERT_TRUE(traj.completed) << traj.diagnostic;
    double err = 0.0;
    for (const StepRecord& r : traj.records) {
      for (double u : r.field.values()) err = std::max(err, std::abs(std::exp(2 * u) - oracles::exact_unnorm_factor(r.t)));
    }
    errors[idx++] = err;
  }
  EXPECT_LT(errors[0], 5e-2);
  EXPECT_NEAR(errors[0] / errors[1], 2.0, 0.2);
}

TEST(RunFlow, UnnormConstantMatchesDiscreteRecurrence) {
  // a(a - a_prev)/h = -1 with a = e^u, solved in closed form per step.
  const Trajectory traj = run_flow(football_config(Variant::ricci_unnorm, 0.2, 20));
  ASSERT_TRUE(traj.completed);
  const double h = traj.h();
  double a = 1.0;
  for (std::size_t n = 1; n < traj.records.size(); ++n) {
    a = 0.5 * (a + std::sqrt(a * a - 4 * h));
    EXPECT_LT(max_deviation(traj.records[n].field, std::log(a)), 1e-9);
  }
}

TEST(RunFlow, UnnormRejectsHorizonPastExtinction) {
  EXPECT_THROW(run_flow(football_config(Variant::ricci_unnorm, 0.6, 10)), DomainError);
  EXPECT_THROW(run_flow(football_config(Variant::ricci_unnorm, 0.5, 10)), DomainError);
  FlowConfig c = football_config(Variant::ricci_unnorm, 0.6, 10);
  c.initial.kind = InitialKind::constant;
  c.initial.value = 0.5;  // extinction at e / 2
  EXPECT_NO_THROW(run_flow(c));
}

TEST(RunFlow, RegConstantTracksOde) {
  FlowConfig c = football_config(Variant::ricci_reg, 1.0, 100);
  c.lambda = 0.5;
  const Trajectory traj = run_flow(c);
  ASSERT_TRUE(traj.completed) << traj.diagnostic;
  const auto& grid = traj.football();
  const double area = std::exp(log_mean_exp2(grid, traj.records.back().field));
  EXPECT_NEAR(area, oracles::exact_reg_constant_factor(0, 0.5, 1.0), 2e-2);
  for (const StepRecord& r : traj.records) EXPECT_LT(max_deviation(r.field, r.field[0]), 1e-9);
}

TEST(RunFlow, RicciSymRandomLedgerAndLambda) {
  FlowConfig c = football_config(Variant::ricci_sym, 0.2, 10);
  c.initial.kind = InitialKind::random_symmetric;
  c.initial.amplitude = 0.5;
  c.initial.seed = 3;
  const Trajectory traj = run_flow(c);
  ASSERT_TRUE(traj.completed) << traj.diagnostic;
  EXPECT_TRUE(traj.ledger_ok);
  const auto& grid = traj.football();
  for (int n = 1; n <= c.N; ++n) {
    const StepRecord& r = traj.records[n];
    const StepRecord& p = traj.records[n - 1];
    EXPECT_GE(r.kinetic, 0.0);
    EXPECT_LE(r.potential + r.kinetic, p.potential + traj.slack);
    EXPECT_DOUBLE_EQ(lambda_n(traj, n), r.lambda_n);

    // Averaging the Euler-Lagrange equation with the stored lambda gives zero.
    const Field lap = apply_laplacian(grid, r.field);
    const auto ratio = normalized_exp2(grid, r.field);
    Field res = r.field;
    for (std::size_t k = 0; k < res.size(); ++k) {
      const double eu = std::exp(r.field[k]);
      res[k] = lap[k] - r.lambda_n + ratio[k] - eu * (eu - std::exp(p.field[k])) / traj.h();
    }
    EXPECT_LE(std::abs(average(grid, res)), 1e-10);
    const RicciSymStepFunctional f(grid, traj.h(), p.field);
    EXPECT_LE(res.max_abs(), certified_el_bound(f, c.minimize.grad_tol));
  }
}

TEST(RunFlow, PmeHarmonicIsStationary) {
  FlowConfig c;
  c.variant = Variant::pme;
  c.T = 0.1;
  c.N = 5;
  c.initial.kind = InitialKind::harmonic;
  c.initial.value = 1.0;
  const Trajectory traj = run_flow(c);
  ASSERT_TRUE(traj.completed);
  const Field& v0 = traj.records.front().field;
  for (const StepRecord& r : traj.records) {
    for (std::size_t k = 0; k < v0.size(); ++k) EXPECT_NEAR(r.field[k], v0[k], 1e-9);
  }
  for (int n = 1; n <= c.N; ++n) EXPECT_LT(discrete_time_derivative(traj, n).max_abs(), 1e-7);
}

TEST(RunFlow, PmeBumpDecaysAndKeepsBoundary) {
  FlowConfig c;
  c.variant = Variant::pme;
  c.T = 0.05;
  c.N = 10;
  c.initial.kind = InitialKind::bump;
  c.initial.value = 0.2;
  c.initial.amplitude = 1.0;
  const Trajectory traj = run_flow(c);
  ASSERT_TRUE(traj.completed) << traj.diagnostic;
  EXPECT_TRUE(traj.ledger_ok);
  const auto& grid = traj.planar();
  for (std::size_t n = 1; n < traj.records.size(); ++n) {
    EXPECT_LE(traj.records[n].potential, traj.records[n - 1].potential + traj.slack);
    for (std::size_t k = 0; k < grid.node_count(); ++k) {
      if (grid.is_boundary(k)) {
        EXPECT_EQ(traj.records[n].field[k], traj.records[0].field[k]);
      }
    }
  }
}

TEST(RunFlow, NonConvergenceAbortsWithPartialTrajectory) {
  FlowConfig c = football_config(Variant::ricci_sym, 0.2, 5);
  c.initial.kind = InitialKind::random_symmetric;
  c.minimize.max_iters = 1;
  const Trajectory traj = run_flow(c);
  EXPECT_FALSE(traj.completed);
  EXPECT_EQ(traj.records.size(), 1u);
  EXPECT_NE(traj.diagnostic.find("step 1"), std::string::npos);
}

TEST(Interpolant, RightEndpointConvention) {
  FlowConfig c = football_config(Variant::ricci_unnorm, 0.2, 4);
  const Trajectory traj = run_flow(c);
  ASSERT_TRUE(traj.completed);
  const double h = traj.h();
  EXPECT_EQ(interpolant_index(traj, -h), 0);
  EXPECT_EQ(interpolant_index(traj, -0.5 * h), 0);
  EXPECT_EQ(interpolant_index(traj, 0.0), 0);
  EXPECT_EQ(interpolant_index(traj, 0.5 * h), 1);
  EXPECT_EQ(interpolant_index(traj, h), 1);
  EXPECT_EQ(interpolant_index(traj, 1.0000001 * h), 2);
  EXPECT_EQ(interpolant_index(traj, 3 * h), 3);
  EXPECT_EQ(interpolant_index(traj, 0.2), 4);
  EXPECT_THROW(interpolant_index(traj, -1.5 * h), DomainError);
  EXPECT_THROW(interpolant_index(traj, 0.3), DomainError);
  EXPECT_EQ(&interpolant_value(traj, 2 * h), &traj.records[2].field);
}

TEST(Interpolant, DerivativeMatchesDefinition) {
  FlowConfig c = football_config(Variant::ricci_unnorm, 0.2, 4);
  const Trajectory traj = run_flow(c);
  for (int n = 1; n <= 4; ++n) {
    const Field d = discrete_time_derivative(traj, n);
    for (std::size_t k = 0; k < d.size(); ++k) {
      const double expected =
          (std::exp(traj.records[n].field[k]) - std::exp(traj.records[n - 1].field[k])) / traj.h();
      EXPECT_NEAR(d[k], expected, 1e-12);
    }
  }
  EXPECT_THROW(discrete_time_derivative(traj, 0), DomainError);
  EXPECT_THROW(discrete_time_derivative(traj, 5), DomainError);
  EXPECT_THROW(lambda_n(traj, 1), DomainError);
}

TEST(WeakSolution, StationaryRunIsTight) {
  const Trajectory traj = run_flow(football_config(Variant::ricci_sym, 1.0, 5));
  const WeakSolutionReport r = check_weak_solution_bounds(traj);
  EXPECT_TRUE(r.energy_pass);
  EXPECT_TRUE(r.time_integral_pass);
  EXPECT_EQ(r.max_energy, r.initial_energy);
  EXPECT_EQ(r.time_integral, 0.0);
  EXPECT_EQ(r.certified_rhs, 0.0);
}

TEST(WeakSolution, RandomRunPassesAndTimeIntegralIsTwiceKineticSum) {
  FlowConfig c = football_config(Variant::ricci_sym, 0.2, 10);
  c.initial.kind = InitialKind::random_symmetric;
  c.initial.amplitude = 0.5;
  const Trajectory traj = run_flow(c);
  ASSERT_TRUE(traj.completed);
  const WeakSolutionReport r = check_weak_solution_bounds(traj);
  EXPECT_TRUE(r.energy_pass);
  EXPECT_TRUE(r.time_integral_pass);
  EXPECT_GT(r.time_integral, 0.0);
  EXPECT_NEAR(r.time_integral, 2.0 * r.kinetic_sum, 1e-12 * r.time_integral);
  EXPECT_LT(r.max_energy, r.initial_energy + r.slack);
}

TEST(WeakSolution, RejectsOtherVariants) {
  const Trajectory traj = run_flow(football_config(Variant::ricci_unnorm, 0.1, 2));
  EXPECT_THROW(check_weak_solution_bounds(traj), DomainError);
}

TEST(TraceCsv, HeaderAndRows) {
  const Trajectory traj = run_flow(football_config(Variant::ricci_sym, 0.1, 3));
  std::ostringstream os;
  write_trace_csv(os, traj);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "n,t_n,functional_value,kinetic,potential,el_residual,lambda_n,moser_half,moser_one");
  int rows = 0;
  while (std::getline(is, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
    ++rows;
  }
  EXPECT_EQ(rows, 4);
}

TEST(TraceCsv, Deterministic) {
  FlowConfig c = football_config(Variant::ricci_sym, 0.1, 3);
  c.initial.kind = InitialKind::random_symmetric;
  std::ostringstream a;
  std::ostringstream b;
  write_trace_csv(a, run_flow(c));
  write_trace_csv(b, run_flow(c));
  EXPECT_EQ(a.str(), b.str());
}
