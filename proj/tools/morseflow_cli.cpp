// Batch driver: runs one flow from a config file, or the acceptance suite.
//
// Exit codes: 0 all certifications pass, 1 a run completed but a certification failed,
// 2 malformed config or out-of-domain parameter, 3 a step did not converge, 4 I/O failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "morseflow/morseflow.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace morseflow;

namespace {

constexpr int kExitCertificationFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNonConvergence = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string config_path;
  std::string out_dir = "morseflow_out";
  std::optional<int> snapshot_every;
  std::optional<std::uint64_t> seed;
  bool allow_heat = false;
};

// JSON has no NaN or infinity; they are written as null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

std::string snapshot_name(int n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "field_%05d.txt", n);
  return buf;
}

json run_summary(const Trajectory& t) {
  json s;
  s["steps_completed"] = static_cast<int>(t.records.size()) - 1;
  s["steps_requested"] = t.config.N;
  s["completed"] = t.completed;
  s["ledger_ok"] = t.ledger_ok;
  s["ledger_slack"] = t.slack;
  double worst_ratio = -std::numeric_limits<double>::infinity();
  double max_el = 0.0;
  double moser_max = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  for (std::size_t n = 1; n < t.records.size(); ++n) {
    const StepRecord& r = t.records[n];
    worst_ratio = std::max(worst_ratio, (r.potential + r.kinetic - t.records[n - 1].potential) / t.slack);
    max_el = std::max(max_el, r.el_residual);
    iterations += r.iterations;
  }
  for (const StepRecord& r : t.records) {
    if (std::isfinite(r.moser_half)) moser_max = std::max(moser_max, r.moser_half);
  }
  s["worst_ledger_ratio"] = number(worst_ratio);
  s["max_el_residual"] = max_el;
  s["total_iterations"] = iterations;
  if (t.config.on_football()) s["moser_half_running_max"] = number(moser_max);
  if (!t.records.empty()) {
    s["initial_potential"] = t.records.front().potential;
    s["final_potential"] = t.records.back().potential;
  }
  if (t.config.variant == Variant::ricci_sym && t.records.size() > 1) {
    s["lambda_final"] = number(t.records.back().lambda_n);
  }
  if (!t.diagnostic.empty()) s["diagnostic"] = t.diagnostic;
  return s;
}

int run_flow_command(Variant variant, const Options& opt) {
  RunSettings settings;
  settings.flow.variant = variant;
  try {
    settings = ConfigParser().parse_file(opt.config_path, settings);
    if (settings.flow.variant != variant) {
      throw ConfigError(opt.config_path, 0, "flow.variant",
                        "config names " + to_string(settings.flow.variant) + " but the subcommand is " +
                            to_string(variant));
    }
    if (opt.snapshot_every) {
      if (*opt.snapshot_every < 0) throw ConfigError("--snapshot-every", 0, "", "must be >= 0");
      settings.snapshot_every = *opt.snapshot_every;
    }
    if (opt.seed) settings.flow.initial.seed = *opt.seed;
    if (opt.allow_heat) settings.flow.allow_heat = true;
    settings.flow.validate();
  } catch (const std::invalid_argument& e) {
    std::cerr << "morseflow: " << e.what() << '\n';
    return kExitConfig;
  }

  std::optional<Trajectory> result;
  try {
    result.emplace(run_flow(settings.flow));
  } catch (const std::invalid_argument& e) {
    std::cerr << "morseflow: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "morseflow: " << e.what() << '\n';
    return kExitConfig;
  }
  const Trajectory& traj = *result;

  json manifest;
  manifest["command"] = to_string(variant);
  manifest["config_path"] = opt.config_path;
  manifest["config"] = config_echo(settings);
  manifest["run"] = run_summary(traj);

  bool certified = traj.completed && traj.ledger_ok;
  if (traj.completed && variant == Variant::ricci_sym) {
    const WeakSolutionReport w = check_weak_solution_bounds(traj);
    manifest["weak_solution"] = {{"initial_energy", w.initial_energy},
                                 {"max_energy", w.max_energy},
                                 {"energy_pass", w.energy_pass},
                                 {"time_integral", w.time_integral},
                                 {"kinetic_sum", w.kinetic_sum},
                                 {"certified_rhs", w.certified_rhs},
                                 {"time_integral_pass", w.time_integral_pass},
                                 {"raw_rhs", w.raw_rhs},
                                 {"within_raw_rhs", w.within_raw_rhs},
                                 {"slack", w.slack}};
    certified = certified && w.energy_pass && w.time_integral_pass;
  }
  manifest["pass"] = certified;

  try {
    const fs::path out(opt.out_dir);
    fs::create_directories(out);
    {
      std::ofstream csv(out / "trace.csv");
      if (!csv) throw FormatError("cannot write " + (out / "trace.csv").string());
      write_trace_csv(csv, traj);
    }
    json snapshots = json::array();
    for (const StepRecord& r : traj.records) {
      const bool last = &r == &traj.records.back();
      const bool periodic = settings.snapshot_every > 0 && r.n % settings.snapshot_every == 0;
      if (r.n == 0 || last || periodic) {
        write_snapshot((out / snapshot_name(r.n)).string(), r.field);
        snapshots.push_back(snapshot_name(r.n));
      }
    }
    manifest["snapshots"] = snapshots;
    write_json(out / "manifest.json", manifest);
  } catch (const std::exception& e) {
    std::cerr << "morseflow: " << e.what() << '\n';
    return kExitIo;
  }

  if (!traj.completed) {
    std::cerr << "morseflow: " << traj.diagnostic << '\n';
    return kExitNonConvergence;
  }
  std::cout << to_string(variant) << ": " << traj.config.N << " steps, ledger " << (traj.ledger_ok ? "ok" : "VIOLATED")
            << ", " << (certified ? "certified" : "NOT certified") << "; outputs in " << opt.out_dir << '\n';
  return certified ? 0 : kExitCertificationFailed;
}

int run_validate_command(const Options& opt) {
  validation::SuiteOptions suite;
  if (opt.seed) suite.seed = *opt.seed;
  const auto results = validation::run_acceptance_suite(suite);

  json manifest;
  manifest["command"] = "validate";
  manifest["seed"] = suite.seed;
  json criteria = json::array();
  bool all = true;
  for (const auto& r : results) {
    json m = json::object();
    for (const auto& x : r.measured) m[x.name] = number(x.value);
    criteria.push_back({{"id", r.id},
                        {"name", r.name},
                        {"pass", r.pass},
                        {"seconds", r.seconds},
                        {"budget_seconds", r.budget_seconds},
                        {"within_budget", r.within_budget()},
                        {"measured", m},
                        {"note", r.note}});
    all = all && r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << "  criterion " << r.id << ": " << r.name << '\n';
  }
  manifest["criteria"] = criteria;
  manifest["pass"] = all;
  try {
    fs::create_directories(opt.out_dir);
    write_json(fs::path(opt.out_dir) / "manifest.json", manifest);
  } catch (const std::exception& e) {
    std::cerr << "morseflow: " << e.what() << '\n';
    return kExitIo;
  }
  return all ? 0 : kExitCertificationFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete Morse flow solver for the porous media equation and Ricci flow on the football"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", opt.seed, "Seed for randomized initial data or property suites");
  };

  struct FlowCommand {
    const char* name;
    Variant variant;
    const char* help;
  };
  const FlowCommand flows[] = {
      {"pme", Variant::pme, "Porous media equation on a rectangle"},
      {"ricci-sym", Variant::ricci_sym, "Normalized Ricci flow, symmetric mean-zero variant"},
      {"ricci-reg", Variant::ricci_reg, "Normalized Ricci flow, regularized variant"},
      {"ricci-unnorm", Variant::ricci_unnorm, "Un-normalized Ricci flow"},
  };
  std::optional<Variant> chosen;
  for (const FlowCommand& f : flows) {
    CLI::App* sub = app.add_subcommand(f.name, f.help);
    sub->add_option("config", opt.config_path, "Config file (section.key = value lines)")->required();
    sub->add_option("--snapshot-every", opt.snapshot_every, "Write a field snapshot every k steps");
    sub->add_flag("--allow-heat", opt.allow_heat, "Admit pme.beta = 1 (the heat equation)");
    add_common(sub);
    sub->callback([&chosen, v = f.variant] { chosen = v; });
  }
  CLI::App* validate = app.add_subcommand("validate", "Run the acceptance suite");
  add_common(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (chosen) return run_flow_command(*chosen, opt);
    return run_validate_command(opt);
  } catch (const std::exception& e) {
    std::cerr << "morseflow: " << e.what() << '\n';
    return kExitCertificationFailed;
  }
}
