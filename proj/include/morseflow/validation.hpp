#pragma once

// The acceptance suite: each criterion runs its experiment, compares the measured numbers with
// fixed thresholds, and reports pass/fail together with the measurements and its wall time.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "morseflow/flow.hpp"
#include "morseflow/functionals.hpp"
#include "morseflow/geometry.hpp"
#include "morseflow/initial_data.hpp"
#include "morseflow/oracles.hpp"

namespace morseflow::validation {

struct Measurement {
  std::string name;
  double value;
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::vector<Measurement> measured;
  double seconds = 0.0;
  double budget_seconds = 0.0;
  std::string note;

  bool within_budget() const { return seconds <= budget_seconds; }
  void add(std::string key, double value) { measured.push_back({std::move(key), value}); }
};

struct SuiteOptions {
  std::uint64_t seed = 20240601;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline double max_abs_diff(const Field& a, const Field& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

inline double relative_error(const Field& exact, const Field& approx) {
  return max_abs_diff(exact, approx) / std::max(exact.max_abs(), std::numeric_limits<double>::min());
}

template <class Body>
CriterionResult timed(int id, std::string name, double budget, Body&& body) {
  CriterionResult r;
  r.id = id;
  r.name = std::move(name);
  r.budget_seconds = budget;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.pass = false;
    r.note = std::string("exception: ") + e.what();
  }
  r.seconds = seconds_since(start);
  return r;
}

inline Field random_planar_field(const PlanarGrid& g, std::mt19937_64& rng, double lo, double hi,
                                 const Field& boundary) {
  std::uniform_real_distribution<double> U(lo, hi);
  Field v = g.sample([&](double, double) { return U(rng); });
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (g.is_boundary(k)) v[k] = boundary[k];
  }
  return v;
}

inline FlowConfig football_run(Variant v, double T, int N, int n_r, int n_theta) {
  FlowConfig c;
  c.variant = v;
  c.T = T;
  c.N = N;
  c.football = {0.5, n_r, n_theta};
  return c;
}

inline FlowConfig pme_bump_run(double T, int N, int n) {
  FlowConfig c;
  c.variant = Variant::pme;
  c.T = T;
  c.N = N;
  c.beta = 2.0;
  c.planar = {1.0, 1.0, n, n};
  c.initial.kind = InitialKind::bump;
  c.initial.value = 0.2;
  c.initial.amplitude = 1.0;
  return c;
}

}  // namespace detail

/// Quadrature and background curvature converge at second order on the football.
inline CriterionResult geometry_consistency() {
  return detail::timed(1, "geometry consistency", 1.0, [](CriterionResult& r) {
    const double alpha = 0.5;
    const double exact_area = 4.0 * std::numbers::pi * alpha;
    double area_err[2];
    double curv_err[2];
    int idx = 0;
    for (int n_r : {64, 128}) {
      const FootballGrid g = build_football_grid(alpha, n_r, n_r / 2);
      // |integrate(1) - 4 pi alpha| / (4 pi alpha), the relative area error.
      area_err[idx] = std::abs(integrate(g, g.constant(1.0)) - exact_area) / exact_area;
      const Field R = scalar_curvature(g, g.constant(0.0));
      double m = 0.0;
      for (double v : R.values()) m = std::max(m, std::abs(v - 2.0));
      curv_err[idx] = m;
      ++idx;
    }
    const double area_ratio = area_err[0] / area_err[1];
    const double curv_ratio = curv_err[0] / curv_err[1];
    r.add("area_rel_err_128", area_err[1]);
    r.add("area_ratio_64_128", area_ratio);
    r.add("curvature_err_128", curv_err[1]);
    r.add("curvature_ratio_64_128", curv_ratio);
    r.pass = area_err[1] <= 1e-3 && area_ratio >= 3.5 && area_ratio <= 4.5 && curv_err[1] <= 1e-2 &&
             curv_ratio >= 3.5 && curv_ratio <= 4.5;
  });
}

/// Analytic gradients of all four step functionals agree with central differences.
inline CriterionResult gradient_fidelity(const SuiteOptions& opts = {}) {
  return detail::timed(2, "gradient fidelity", 5.0, [&](CriterionResult& r) {
    constexpr double eps = 1e-5;
    constexpr double tol = 1e-6;
    std::mt19937_64 rng(opts.seed);
    const PlanarGrid pg = build_planar_grid(1.0, 1.0, 8, 8);
    const FootballGrid fg = build_football_grid(0.5, 16, 8);
    const Field boundary = pg.sample([](double x, double y) { return 0.6 + 0.2 * x * y; });
    double worst[4] = {0, 0, 0, 0};
    for (int trial = 0; trial < 10; ++trial) {
      const Field prev = detail::random_planar_field(pg, rng, 0.2, 1.2, boundary);
      const Field v = detail::random_planar_field(pg, rng, 0.2, 1.2, boundary);
      const PmeStepFunctional pme(pg, 0.05, 2.0, prev, boundary);
      worst[0] = std::max(worst[0], detail::relative_error(pme.grad(v), oracles::fd_gradient(pme, v, eps)));

      const std::uint64_t s = rng();
      const Field sym_prev = random_smooth_field(fg, s, 0.5, 4, true);
      const Field sym_u = random_smooth_field(fg, s + 1, 0.5, 4, true);
      const RicciSymStepFunctional sym(fg, 0.05, sym_prev);
      worst[1] = std::max(worst[1], detail::relative_error(sym.grad(sym_u), oracles::fd_gradient(sym, sym_u, eps)));

      const Field prev2 = random_smooth_field(fg, s + 2, 0.5, 4, false);
      const Field u2 = random_smooth_field(fg, s + 3, 0.5, 4, false);
      const RicciRegStepFunctional reg(fg, 0.05, 0.5, prev2);
      worst[2] = std::max(worst[2], detail::relative_error(reg.grad(u2), oracles::fd_gradient(reg, u2, eps)));
      const RicciUnnormStepFunctional un(fg, 0.05, prev2);
      worst[3] = std::max(worst[3], detail::relative_error(un.grad(u2), oracles::fd_gradient(un, u2, eps)));
    }
    r.add("pme_max_rel_err", worst[0]);
    r.add("ricci_sym_max_rel_err", worst[1]);
    r.add("ricci_reg_max_rel_err", worst[2]);
    r.add("ricci_unnorm_max_rel_err", worst[3]);
    r.pass = std::all_of(std::begin(worst), std::end(worst), [](double w) { return w <= tol; });
  });
}

/// Ledger battery runs, shared by the ledger and Moser criteria.
struct BatteryRun {
  std::string label;
  Trajectory trajectory;
  bool symmetric_data = false;
};

inline std::vector<BatteryRun> run_battery(const SuiteOptions& opts = {}) {
  constexpr double T = 0.5;
  constexpr int N = 50;
  std::vector<BatteryRun> runs;

  FlowConfig pme;
  pme.variant = Variant::pme;
  pme.T = T;
  pme.N = N;
  pme.beta = 2.0;
  pme.planar = {2.0, 1.0, 32, 16};
  pme.initial.kind = InitialKind::bump;
  pme.initial.value = 0.2;
  pme.initial.amplitude = 1.0;
  runs.push_back({"pme beta=2 bump", run_flow(pme), false});

  FlowConfig sym = detail::football_run(Variant::ricci_sym, T, N, 32, 16);
  sym.initial.kind = InitialKind::random_symmetric;
  sym.initial.amplitude = 0.5;
  sym.initial.seed = opts.seed;
  runs.push_back({"ricci-sym random symmetric", run_flow(sym), true});

  for (double lambda : {0.25, 0.5, 0.75}) {
    FlowConfig reg = detail::football_run(Variant::ricci_reg, T, N, 32, 16);
    reg.lambda = lambda;
    reg.initial.kind = InitialKind::random_symmetric;
    reg.initial.amplitude = 0.5;
    reg.initial.seed = opts.seed + 1;
    runs.push_back({"ricci-reg lambda=" + format_double(lambda), run_flow(reg), true});
  }
  return runs;
}

/// Every battery run completes with the per-step energy ledger certified.
inline CriterionResult ledger_battery(const std::vector<BatteryRun>& runs, double battery_seconds) {
  CriterionResult r;
  r.id = 3;
  r.name = "discrete energy ledger";
  r.budget_seconds = 120.0;
  r.seconds = battery_seconds;
  r.pass = !runs.empty();
  double worst_margin = -std::numeric_limits<double>::infinity();
  for (const BatteryRun& run : runs) {
    const Trajectory& t = run.trajectory;
    if (!t.completed || !t.ledger_ok) {
      r.pass = false;
      r.note += run.label + ": " + (t.diagnostic.empty() ? "ledger violated" : t.diagnostic) + "; ";
    }
    for (std::size_t n = 1; n < t.records.size(); ++n) {
      const double margin =
          (t.records[n].potential + t.records[n].kinetic - t.records[n - 1].potential) / t.slack;
      worst_margin = std::max(worst_margin, margin);
    }
  }
  r.add("runs", static_cast<double>(runs.size()));
  // Largest (E_n + kinetic_n - E_{n-1}) / slack over all steps; the ledger needs <= 1.
  r.add("worst_ledger_ratio", worst_margin);
  r.pass = r.pass && worst_margin <= 1.0;
  return r;
}

/// Running maximum of the Moser ratio with c = 1/2 along the symmetric battery runs.
inline CriterionResult moser_diagnostics(const std::vector<BatteryRun>& runs) {
  return detail::timed(9, "moser diagnostics", 1.0, [&](CriterionResult& r) {
    double running_max = -std::numeric_limits<double>::infinity();
    bool finite = true;
    int checked = 0;
    for (const BatteryRun& run : runs) {
      if (!run.symmetric_data) continue;
      const FootballGrid& g = run.trajectory.football();
      for (const StepRecord& rec : run.trajectory.records) {
        const double m = moser_log_ratio(g, rec.field, 0.5);
        finite = finite && std::isfinite(m) && std::isfinite(rec.moser_half);
        running_max = std::max(running_max, m);
        ++checked;
      }
    }
    r.add("fields_checked", checked);
    r.add("moser_half_running_max", running_max);
    r.pass = finite && checked > 0;
  });
}

/// Un-normalized flow from u0 = 0 against the exact factor 1 - 2t.
inline CriterionResult unnormalized_exactness() {
  return detail::timed(4, "un-normalized football exactness", 60.0, [](CriterionResult& r) {
    double err[2];
    int idx = 0;
    for (int N : {400, 800}) {
      const Trajectory t = run_flow(detail::football_run(Variant::ricci_unnorm, 0.4, N, 32, 8));
      if (!t.completed) throw DomainError(t.diagnostic);
      double e = 0.0;
      for (const StepRecord& rec : t.records) {
        for (double u : rec.field.values()) e = std::max(e, std::abs(std::exp(2.0 * u) - oracles::exact_unnorm_factor(rec.t)));
      }
      err[idx++] = e;
    }
    r.add("max_err_N400", err[0]);
    r.add("max_err_N800", err[1]);
    r.add("ratio_800_over_400", err[1] / err[0]);
    r.pass = err[0] <= 2e-2 && err[1] <= 0.6 * err[0];
  });
}

/// Regularized flow from u0 = 0 against the constant-field ODE solution.
inline CriterionResult regularized_constant() {
  return detail::timed(5, "regularized constant ODE", 60.0, [](CriterionResult& r) {
    double err[2];
    int idx = 0;
    for (int N : {200, 400}) {
      FlowConfig c = detail::football_run(Variant::ricci_reg, 1.0, N, 32, 8);
      c.lambda = 0.5;
      const Trajectory t = run_flow(c);
      if (!t.completed) throw DomainError(t.diagnostic);
      const double area = std::exp(log_mean_exp2(t.football(), t.records.back().field));
      err[idx++] = std::abs(area - oracles::exact_reg_constant_factor(0.0, 0.5, 1.0));
    }
    r.add("err_N200", err[0]);
    r.add("err_N400", err[1]);
    r.add("ratio_400_over_200", err[1] / err[0]);
    r.pass = err[0] <= 1e-2 && err[1] <= 0.6 * err[0];
  });
}

/// Constants for ricci-sym and harmonic data for pme are fixed points of the scheme.
inline CriterionResult stationary_points() {
  return detail::timed(6, "stationary fixed points", 30.0, [](CriterionResult& r) {
    const Trajectory sym = run_flow(detail::football_run(Variant::ricci_sym, 1.0, 100, 32, 16));
    if (!sym.completed) throw DomainError(sym.diagnostic);
    double drift = 0.0;
    double lambda_dev = 0.0;
    for (std::size_t n = 1; n < sym.records.size(); ++n) {
      drift = std::max(drift, detail::max_abs_diff(sym.records[n].field, sym.records[0].field));
      lambda_dev = std::max(lambda_dev, std::abs(sym.records[n].lambda_n - 1.0));
    }

    FlowConfig pme;
    pme.variant = Variant::pme;
    pme.T = 0.1;
    pme.N = 20;
    pme.planar = {1.0, 1.0, 17, 17};
    pme.initial.kind = InitialKind::harmonic;
    pme.initial.value = 1.0;
    const Trajectory p = run_flow(pme);
    if (!p.completed) throw DomainError(p.diagnostic);
    double pme_drift = 0.0;
    for (const StepRecord& rec : p.records) {
      pme_drift = std::max(pme_drift, detail::max_abs_diff(rec.field, p.records[0].field));
    }
    r.add("ricci_sym_drift", drift);
    r.add("ricci_sym_max_lambda_dev", lambda_dev);
    r.add("pme_harmonic_drift", pme_drift);
    r.pass = drift <= 1e-7 && lambda_dev <= 1e-9 && pme_drift <= 1e-9;
  });
}

/// beta = 1 reduces the scheme to implicit Euler for the heat equation.
inline CriterionResult heat_cross_check() {
  return detail::timed(7, "heat equation cross-check", 10.0, [](CriterionResult& r) {
    FlowConfig c = detail::pme_bump_run(0.1, 20, 17);
    c.beta = 1.0;
    c.allow_heat = true;
    const Trajectory t = run_flow(c);
    if (!t.completed) throw DomainError(t.diagnostic);
    const PlanarGrid& g = t.planar();
    const auto ref = oracles::heat_implicit_reference(g, t.records[0].field, c.h(), c.N);
    double err = 0.0;
    for (int n = 0; n <= c.N; ++n) err = std::max(err, detail::max_abs_diff(t.records[n].field, ref[n]));
    r.add("max_err", err);
    r.pass = err <= 1e-8;
  });
}

/// beta = 2 bump run against the 4x refined Newton reference, at two resolutions.
inline CriterionResult pme_oracle_agreement() {
  return detail::timed(8, "pme oracle agreement", 180.0, [](CriterionResult& r) {
    const FlowConfig fine_cfg = detail::pme_bump_run(0.1, 40, 33);
    const FlowConfig coarse_cfg = detail::pme_bump_run(0.1, 20, 17);
    const Trajectory ref = oracles::pme_reference(fine_cfg, 4);
    const Trajectory fine = run_flow(fine_cfg);
    const Trajectory coarse = run_flow(coarse_cfg);
    if (!fine.completed) throw DomainError(fine.diagnostic);
    if (!coarse.completed) throw DomainError(coarse.diagnostic);

    const PlanarGrid& fg = fine.planar();
    const PlanarGrid& cg = coarse.planar();
    const double v0_norm = oracles::l2_norm(fg, fine.records[0].field);
    double fine_err = 0.0;
    for (int n = 0; n <= fine_cfg.N; ++n) {
      fine_err = std::max(fine_err, oracles::l2_distance(fg, fine.records[n].field, ref.records[n].field));
    }
    // Coarse nodes and times are a subset of the fine ones.
    double coarse_err = 0.0;
    for (int n = 0; n <= coarse_cfg.N; ++n) {
      const Field& refn = ref.records[2 * n].field;
      const Field restricted = cg.sample([&](double x, double y) {
        return refn[fg.index(static_cast<int>(std::lround(x / fg.dx())), static_cast<int>(std::lround(y / fg.dy())))];
      });
      coarse_err = std::max(coarse_err, oracles::l2_distance(cg, coarse.records[n].field, restricted));
    }
    r.add("v0_l2_norm", v0_norm);
    r.add("rel_l2_err_33", fine_err / v0_norm);
    r.add("rel_l2_err_17", coarse_err / v0_norm);
    r.pass = fine_err <= 5e-2 * v0_norm && fine_err < coarse_err;
  });
}

/// Runs all nine criteria in order.
inline std::vector<CriterionResult> run_acceptance_suite(const SuiteOptions& opts = {}) {
  std::vector<CriterionResult> out;
  out.push_back(geometry_consistency());
  out.push_back(gradient_fidelity(opts));
  const auto start = std::chrono::steady_clock::now();
  std::vector<BatteryRun> battery;
  std::string battery_error;
  try {
    battery = run_battery(opts);
  } catch (const std::exception& e) {
    battery_error = e.what();
  }
  CriterionResult ledger = ledger_battery(battery, detail::seconds_since(start));
  if (!battery_error.empty()) {
    ledger.pass = false;
    ledger.note = "exception: " + battery_error;
  }
  out.push_back(std::move(ledger));
  out.push_back(unnormalized_exactness());
  out.push_back(regularized_constant());
  out.push_back(stationary_points());
  out.push_back(heat_cross_check());
  out.push_back(pme_oracle_agreement());
  out.push_back(moser_diagnostics(battery));
  return out;
}

}  // namespace morseflow::validation
