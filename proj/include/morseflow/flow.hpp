#pragma once

// Rothe time stepping: each step minimizes the step functional built from the previous
// minimizer, warm-started there, and certifies the per-step energy ledger
//   potential(u_n) + kinetic_n <= potential(u_{n-1}) + slack.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "morseflow/error.hpp"
#include "morseflow/functionals.hpp"
#include "morseflow/geometry.hpp"
#include "morseflow/initial_data.hpp"
#include "morseflow/io.hpp"
#include "morseflow/minimizer.hpp"

namespace morseflow {

enum class Variant { pme, ricci_sym, ricci_reg, ricci_unnorm };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::pme: return "pme";
    case Variant::ricci_sym: return "ricci-sym";
    case Variant::ricci_reg: return "ricci-reg";
    case Variant::ricci_unnorm: return "ricci-unnorm";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(const std::string& s) {
  if (s == "pme") return Variant::pme;
  if (s == "ricci-sym") return Variant::ricci_sym;
  if (s == "ricci-reg") return Variant::ricci_reg;
  if (s == "ricci-unnorm") return Variant::ricci_unnorm;
  return std::nullopt;
}

struct FootballParams {
  double alpha = 0.5;
  int n_r = 32;
  int n_theta = 16;
};

struct PlanarParams {
  double lx = 1.0;
  double ly = 1.0;
  int n_x = 17;
  int n_y = 17;
};

struct FlowConfig {
  Variant variant = Variant::ricci_sym;
  double T = 1.0;
  int N = 10;
  FootballParams football;
  PlanarParams planar;
  double beta = 2.0;        // pme
  bool allow_heat = false;  // pme: admit beta = 1
  double lambda = 0.5;      // ricci-reg
  SymmetryMode symmetry = SymmetryMode::mirror;
  InitialSpec initial;
  MinimizeOptions minimize;

  double h() const { return T / N; }
  bool on_football() const { return variant != Variant::pme; }

  void validate() const {
    if (!(T > 0.0) || !std::isfinite(T)) throw DomainError("flow.T must be positive");
    if (N < 1) throw DomainError("flow.N must be a positive integer");
    if (variant == Variant::pme) {
      if (beta == 1.0 && !allow_heat) {
        throw DomainError("pme.beta = 1 is the heat equation; pass --allow-heat to run it");
      }
      if (!(beta >= 1.0)) throw DomainError("pme.beta must exceed 1 (got " + format_double(beta) + ")");
    }
    if (variant == Variant::ricci_reg && !(lambda > 0.0 && lambda < 1.0)) {
      throw DomainError("ricci_reg.lambda must lie in (0,1)");
    }
    minimize.validate();
  }
};

inline AnyGrid build_grid(const FlowConfig& c) {
  if (c.on_football()) return build_football_grid(c.football.alpha, c.football.n_r, c.football.n_theta);
  return build_planar_grid(c.planar.lx, c.planar.ly, c.planar.n_x, c.planar.n_y);
}

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct StepRecord {
  int n = 0;
  double t = 0.0;
  Field field;
  double functional_value = 0.0;
  double el_residual = 0.0;
  double lambda_n = kNaN;  // ricci-sym only
  double kinetic = 0.0;
  double potential = 0.0;
  double moser_half = kNaN;  // football variants only
  double moser_one = kNaN;
  int iterations = 0;
  double grad_norm = 0.0;
};

struct Trajectory {
  FlowConfig config;
  AnyGrid grid;
  std::vector<StepRecord> records;  // records[0] is the initial data
  double slack = 0.0;
  bool ledger_ok = true;
  bool completed = false;
  std::string diagnostic;

  double h() const { return config.h(); }
  const FootballGrid& football() const { return std::get<FootballGrid>(grid); }
  const PlanarGrid& planar() const { return std::get<PlanarGrid>(grid); }
};

/// Ledger slack 1e-8 (1 + |potential(u_0)|).
inline double ledger_slack(double initial_potential) { return 1e-8 * (1.0 + std::abs(initial_potential)); }

namespace detail {

inline void fill_moser(const FootballGrid& grid, StepRecord& rec) {
  rec.moser_half = moser_log_ratio(grid, rec.field, 0.5);
  rec.moser_one = moser_log_ratio(grid, rec.field, 1.0);
}

template <class G, class MakeFunctional, class PotentialOf>
void run_steps(Trajectory& traj, const G& grid, Field u0, MakeFunctional&& make, PotentialOf&& potential_of) {
  const FlowConfig& c = traj.config;
  const double h = c.h();

  StepRecord first;
  first.n = 0;
  first.t = 0.0;
  first.field = std::move(u0);
  first.potential = potential_of(first.field);
  first.functional_value = first.potential;
  if constexpr (std::is_same_v<G, FootballGrid>) fill_moser(grid, first);
  traj.slack = ledger_slack(first.potential);
  traj.records.push_back(std::move(first));

  for (int n = 1; n <= c.N; ++n) {
    const StepRecord& prev = traj.records.back();
    const auto f = make(prev.field);
    StepResult res = minimize(f, prev.field, c.minimize);
    if (!res.converged) {
      traj.diagnostic = "step " + std::to_string(n) + " did not converge: " + res.diagnostic;
      traj.completed = false;
      return;
    }
    StepRecord rec;
    rec.n = n;
    rec.t = n * h;
    rec.kinetic = f.kinetic(res.minimizer);
    rec.potential = f.potential(res.minimizer);
    rec.functional_value = res.value;
    rec.el_residual = res.el_residual;
    rec.iterations = res.iterations;
    rec.grad_norm = res.grad_norm;
    if constexpr (requires { f.lambda(res.minimizer); }) {
      if (c.variant == Variant::ricci_sym) rec.lambda_n = f.lambda(res.minimizer);
    }
    rec.field = std::move(res.minimizer);
    if constexpr (std::is_same_v<G, FootballGrid>) fill_moser(grid, rec);
    if (!(rec.potential + rec.kinetic <= prev.potential + traj.slack)) {
      traj.ledger_ok = false;
      if (traj.diagnostic.empty()) traj.diagnostic = "ledger inequality violated at step " + std::to_string(n);
    }
    traj.records.push_back(std::move(rec));
  }
  traj.completed = true;
}

}  // namespace detail

/// Runs the configured flow from an explicit initial field on the config's grid.
inline Trajectory run_flow(const FlowConfig& config, Field u0) {
  config.validate();
  Trajectory traj{config, build_grid(config), {}, 0.0, true, false, {}};
  const double h = config.h();

  switch (config.variant) {
    case Variant::pme: {
      const PlanarGrid& grid = traj.planar();
      check_field(grid, u0);
      const Field boundary = u0;
      const double beta = config.beta;
      detail::run_steps(
          traj, grid, std::move(u0),
          [&](const Field& prev) { return PmeStepFunctional(grid, h, beta, prev, boundary); },
          [&](const Field& v) { return 0.5 * dirichlet_energy(grid, v); });
      return traj;
    }
    case Variant::ricci_sym: {
      const FootballGrid& grid = traj.football();
      check_field(grid, u0);
      Field start = mean_zero_project(grid, symmetrize(grid, u0, config.symmetry));
      const SymmetryMode mode = config.symmetry;
      detail::run_steps(
          traj, grid, std::move(start),
          [&](const Field& prev) { return RicciSymStepFunctional(grid, h, prev, mode); },
          [&](const Field& u) { return ricci_energy(grid, u); });
      return traj;
    }
    case Variant::ricci_reg: {
      const FootballGrid& grid = traj.football();
      check_field(grid, u0);
      const double lambda = config.lambda;
      detail::run_steps(
          traj, grid, std::move(u0),
          [&](const Field& prev) { return RicciRegStepFunctional(grid, h, lambda, prev); },
          [&](const Field& u) { return ricci_energy(grid, u) + lambda * average(grid, u); });
      return traj;
    }
    case Variant::ricci_unnorm: {
      const FootballGrid& grid = traj.football();
      check_field(grid, u0);
      // Total area avg(e^{2u}) decreases at rate 2; the flow is extinct once it reaches zero.
      const double extinction = 0.5 * std::exp(log_mean_exp2(grid, u0));
      if (!(config.T < extinction)) {
        throw DomainError("ricci-unnorm: horizon T = " + format_double(config.T) +
                          " reaches the extinction time " + format_double(extinction));
      }
      detail::run_steps(
          traj, grid, std::move(u0),
          [&](const Field& prev) { return RicciUnnormStepFunctional(grid, h, prev); },
          [&](const Field& u) { return 0.5 * dirichlet_energy(grid, u) / grid.total_area() + average(grid, u); });
      return traj;
    }
  }
  throw DomainError("unknown flow variant");
}

inline Field initial_field_for(const FlowConfig& config, const AnyGrid& grid) {
  if (const auto* g = std::get_if<FootballGrid>(&grid)) return make_initial_field(*g, config.initial, config.symmetry);
  return make_initial_field(std::get<PlanarGrid>(grid), config.initial);
}

inline Trajectory run_flow(const FlowConfig& config) {
  config.validate();
  const AnyGrid grid = build_grid(config);
  return run_flow(config, initial_field_for(config, grid));
}

/// 1 - avg(e^{u_n} (e^{u_n} - e^{u_{n-1}}) / h) for a ricci-sym trajectory, 1 <= n <= N.
inline double lambda_n(const Trajectory& traj, int n) {
  if (traj.config.variant != Variant::ricci_sym) throw DomainError("lambda_n: only defined for ricci-sym runs");
  if (n < 1 || n >= static_cast<int>(traj.records.size())) throw DomainError("lambda_n: step index out of range");
  const FootballGrid& grid = traj.football();
  const Field& u = traj.records[n].field;
  const Field& p = traj.records[n - 1].field;
  Field integrand = u;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double eu = std::exp(u[k]);
    integrand[k] = eu * (eu - std::exp(p[k])) / traj.h();
  }
  return 1.0 - average(grid, integrand);
}

/// Index of the record active at time t: u_0 on [-h, 0], u_n on (t_{n-1}, t_n].
/// A time within 1e-12 h of a grid time t_n is treated as t_n itself.
inline int interpolant_index(const Trajectory& traj, double t) {
  const double h = traj.h();
  const double T = traj.config.T;
  const double snap = 1e-12 * h;
  if (t < -h - snap || t > T + snap) throw DomainError("interpolant: t outside [-h, T]");
  if (t <= snap) return 0;
  int n = static_cast<int>(std::ceil(t / h));
  if (n >= 1 && std::abs(t - (n - 1) * h) <= snap) --n;
  n = std::clamp(n, 1, traj.config.N);
  if (n >= static_cast<int>(traj.records.size())) throw DomainError("interpolant: trajectory incomplete at t");
  return n;
}

inline const Field& interpolant_value(const Trajectory& traj, double t) {
  return traj.records[static_cast<std::size_t>(interpolant_index(traj, t))].field;
}

/// (e^{u_n} - e^{u_{n-1}}) / h, or (s(v_n) - s(v_{n-1})) / h with the signed power for pme.
inline Field discrete_time_derivative(const Trajectory& traj, int n) {
  if (n < 1 || n >= static_cast<int>(traj.records.size())) {
    throw DomainError("discrete_time_derivative: step index out of range");
  }
  const Field& u = traj.records[n].field;
  const Field& p = traj.records[n - 1].field;
  Field d = u;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (traj.config.variant == Variant::pme) {
      d[k] = signed_power_difference(p[k], u[k], traj.config.beta) / traj.h();
    } else {
      d[k] = std::exp(p[k]) * std::expm1(u[k] - p[k]) / traj.h();
    }
  }
  return d;
}

/// Discrete analogs of the two a priori bounds defining a weak solution of the symmetric flow.
struct WeakSolutionReport {
  double initial_energy = 0.0;  // avg(|grad u0|^2 + 2 u0) - log avg e^{2 u0}
  double max_energy = 0.0;      // same quantity, maximized over n
  bool energy_pass = false;
  double time_integral = 0.0;  // h sum_n avg |d_t e^{u_N}|^2
  double kinetic_sum = 0.0;    // sum_n kinetic_n; time_integral = 2 kinetic_sum
  double certified_rhs = 0.0;  // 2 (E(u_0) - E(u_N)), the telescoped ledger
  bool time_integral_pass = false;
  double raw_rhs = 0.0;  // (1/2) avg|grad u0|^2 + avg u0 - (1/2) log avg e^{2u0}
  bool within_raw_rhs = false;  // informational: the raw bound carries an unspecified constant
  double slack = 0.0;
};

inline WeakSolutionReport check_weak_solution_bounds(const Trajectory& traj) {
  if (traj.config.variant != Variant::ricci_sym) throw DomainError("weak solution bounds: ricci-sym runs only");
  if (!traj.completed || static_cast<int>(traj.records.size()) != traj.config.N + 1) {
    throw DomainError("weak solution bounds: trajectory is incomplete");
  }
  const FootballGrid& grid = traj.football();
  auto energy = [&](const Field& u) {
    return dirichlet_energy(grid, u) / grid.total_area() + 2.0 * average(grid, u) - log_mean_exp2(grid, u);
  };
  WeakSolutionReport r;
  const Field& u0 = traj.records.front().field;
  r.initial_energy = energy(u0);
  r.slack = 1e-8 * (1.0 + std::abs(r.initial_energy));
  r.max_energy = r.initial_energy;
  for (const StepRecord& rec : traj.records) r.max_energy = std::max(r.max_energy, energy(rec.field));
  r.energy_pass = r.max_energy <= r.initial_energy + r.slack;

  for (int n = 1; n <= traj.config.N; ++n) {
    const Field d = discrete_time_derivative(traj, n);
    double s = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) s += grid.quad_weights()[k] * d[k] * d[k];
    r.time_integral += traj.h() * s / grid.total_area();
    r.kinetic_sum += traj.records[n].kinetic;
  }
  r.certified_rhs = 2.0 * (traj.records.front().potential - traj.records.back().potential);
  r.time_integral_pass = r.time_integral <= r.certified_rhs + r.slack;
  r.raw_rhs = 0.5 * dirichlet_energy(grid, u0) / grid.total_area() + average(grid, u0) -
              0.5 * log_mean_exp2(grid, u0);
  r.within_raw_rhs = r.time_integral <= r.raw_rhs + r.slack;
  return r;
}

inline void write_trace_csv(std::ostream& os, const Trajectory& traj) {
  os << "n,t_n,functional_value,kinetic,potential,el_residual,lambda_n,moser_half,moser_one\n";
  for (const StepRecord& r : traj.records) {
    os << r.n << ',' << format_double(r.t) << ',' << format_double(r.functional_value) << ','
       << format_double(r.kinetic) << ',' << format_double(r.potential) << ',' << format_double(r.el_residual)
       << ',' << format_double(r.lambda_n) << ',' << format_double(r.moser_half) << ','
       << format_double(r.moser_one) << '\n';
  }
}

}  // namespace morseflow
