#pragma once

// Flat run configuration: one `section.key = value` pair per line, `#` starts a comment.
// Every key is checked against a fixed schema; unknown keys, duplicates, unparsable values and
// out-of-domain values raise ConfigError naming the line and the key.

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "morseflow/error.hpp"
#include "morseflow/flow.hpp"

namespace morseflow {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string source, int line, std::string key, const std::string& message)
      : std::invalid_argument(compose(source, line, key, message)),
        source_(std::move(source)),
        line_(line),
        key_(std::move(key)) {}

  const std::string& source() const { return source_; }
  int line() const { return line_; }  // 0 when the error is not tied to a line
  const std::string& key() const { return key_; }

 private:
  static std::string compose(const std::string& source, int line, const std::string& key, const std::string& msg) {
    std::string s = source;
    if (line > 0) s += ":" + std::to_string(line);
    s += ": ";
    if (!key.empty()) s += key + ": ";
    return s + msg;
  }

  std::string source_;
  int line_;
  std::string key_;
};

struct RunSettings {
  FlowConfig flow;
  int snapshot_every = 0;  // 0 writes only the first and last fields
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_number(std::string_view text, double& out) {
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

inline bool parse_number(std::string_view text, long long& out) {
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace detail

class ConfigParser {
 public:
  ConfigParser() { build_schema(); }

  /// Parses config text into `settings`, leaving keys that do not appear at their current values.
  void parse(std::istream& in, RunSettings& settings, const std::string& source = "config") const {
    std::set<std::string> seen;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string_view line = raw;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(source, line_no, "", "expected `section.key = value`");
      }
      const std::string key(detail::trim(line.substr(0, eq)));
      const std::string value(detail::trim(line.substr(eq + 1)));
      if (key.empty()) throw ConfigError(source, line_no, "", "missing key before `=`");
      const auto it = schema_.find(key);
      if (it == schema_.end()) throw ConfigError(source, line_no, key, "unknown key");
      if (!seen.insert(key).second) throw ConfigError(source, line_no, key, "duplicate key");
      if (value.empty()) throw ConfigError(source, line_no, key, "missing value");
      try {
        it->second(value, settings);
      } catch (const DomainError& e) {
        throw ConfigError(source, line_no, key, e.what());
      }
    }
  }

  RunSettings parse_file(const std::string& path, RunSettings settings = {}) const {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, 0, "", "cannot open config file");
    parse(in, settings, path);
    return settings;
  }

  RunSettings parse_string(const std::string& text, RunSettings settings = {}) const {
    std::istringstream in(text);
    parse(in, settings, "config");
    return settings;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : schema_) out.push_back(k);
    return out;
  }

 private:
  using Setter = std::function<void(const std::string&, RunSettings&)>;

  static double real(const std::string& v) {
    double x = 0.0;
    if (!detail::parse_number(v, x)) throw DomainError("expected a finite real number, got `" + v + "`");
    return x;
  }

  static long long integer(const std::string& v) {
    long long x = 0;
    if (!detail::parse_number(v, x)) throw DomainError("expected an integer, got `" + v + "`");
    return x;
  }

  static bool boolean(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw DomainError("expected true or false, got `" + v + "`");
  }

  template <class Check>
  static double real_in(const std::string& v, Check ok, const char* domain) {
    const double x = real(v);
    if (!ok(x)) throw DomainError(std::string("must be ") + domain + " (got " + v + ")");
    return x;
  }

  static int int_at_least(const std::string& v, long long lo) {
    const long long x = integer(v);
    if (x < lo || x > 1'000'000'000) {
      throw DomainError("must be an integer >= " + std::to_string(lo) + " (got " + v + ")");
    }
    return static_cast<int>(x);
  }

  void build_schema() {
    auto positive = [](double x) { return x > 0.0; };
    schema_["flow.variant"] = [](const std::string& v, RunSettings& s) {
      const auto parsed = parse_variant(v);
      if (!parsed) throw DomainError("must be one of pme, ricci-sym, ricci-reg, ricci-unnorm (got " + v + ")");
      s.flow.variant = *parsed;
    };
    schema_["flow.T"] = [=](const std::string& v, RunSettings& s) { s.flow.T = real_in(v, positive, "> 0"); };
    schema_["flow.N"] = [](const std::string& v, RunSettings& s) { s.flow.N = int_at_least(v, 1); };

    schema_["grid.alpha"] = [](const std::string& v, RunSettings& s) {
      s.flow.football.alpha = real_in(v, [](double x) { return x > 0.0 && x < 1.0; }, "in (0,1)");
    };
    schema_["grid.n_r"] = [](const std::string& v, RunSettings& s) {
      const int n = int_at_least(v, 2);
      if (n % 2 != 0) throw DomainError("must be even (got " + v + ")");
      s.flow.football.n_r = n;
    };
    schema_["grid.n_theta"] = [](const std::string& v, RunSettings& s) { s.flow.football.n_theta = int_at_least(v, 1); };
    schema_["grid.lx"] = [=](const std::string& v, RunSettings& s) { s.flow.planar.lx = real_in(v, positive, "> 0"); };
    schema_["grid.ly"] = [=](const std::string& v, RunSettings& s) { s.flow.planar.ly = real_in(v, positive, "> 0"); };
    schema_["grid.n_x"] = [](const std::string& v, RunSettings& s) { s.flow.planar.n_x = int_at_least(v, 3); };
    schema_["grid.n_y"] = [](const std::string& v, RunSettings& s) { s.flow.planar.n_y = int_at_least(v, 3); };

    schema_["pme.beta"] = [](const std::string& v, RunSettings& s) {
      s.flow.beta = real_in(v, [](double x) { return x >= 1.0; }, ">= 1 (1 only with --allow-heat)");
    };
    schema_["pme.allow_heat"] = [](const std::string& v, RunSettings& s) { s.flow.allow_heat = boolean(v); };
    schema_["ricci_reg.lambda"] = [](const std::string& v, RunSettings& s) {
      s.flow.lambda = real_in(v, [](double x) { return x > 0.0 && x < 1.0; }, "in (0,1)");
    };
    schema_["ricci_sym.symmetry"] = [](const std::string& v, RunSettings& s) {
      if (v == "mirror") {
        s.flow.symmetry = SymmetryMode::mirror;
      } else if (v == "antipodal") {
        s.flow.symmetry = SymmetryMode::antipodal;
      } else {
        throw DomainError("must be mirror or antipodal (got " + v + ")");
      }
    };

    schema_["initial.kind"] = [](const std::string& v, RunSettings& s) {
      static const std::map<std::string, InitialKind> kinds{
          {"zero", InitialKind::zero},           {"constant", InitialKind::constant},
          {"bump", InitialKind::bump},           {"harmonic", InitialKind::harmonic},
          {"random_symmetric", InitialKind::random_symmetric}, {"random", InitialKind::random},
          {"file", InitialKind::file}};
      const auto it = kinds.find(v);
      if (it == kinds.end()) {
        throw DomainError("must be one of zero, constant, bump, harmonic, random_symmetric, random, file (got " + v +
                          ")");
      }
      s.flow.initial.kind = it->second;
    };
    schema_["initial.value"] = [](const std::string& v, RunSettings& s) { s.flow.initial.value = real(v); };
    schema_["initial.amplitude"] = [](const std::string& v, RunSettings& s) {
      s.flow.initial.amplitude = real_in(v, [](double x) { return x >= 0.0; }, ">= 0");
    };
    schema_["initial.slope_x"] = [](const std::string& v, RunSettings& s) { s.flow.initial.slope_x = real(v); };
    schema_["initial.slope_y"] = [](const std::string& v, RunSettings& s) { s.flow.initial.slope_y = real(v); };
    schema_["initial.seed"] = [](const std::string& v, RunSettings& s) {
      s.flow.initial.seed = static_cast<std::uint64_t>(int_at_least(v, 0));
    };
    schema_["initial.modes"] = [](const std::string& v, RunSettings& s) { s.flow.initial.modes = int_at_least(v, 1); };
    schema_["initial.path"] = [](const std::string& v, RunSettings& s) { s.flow.initial.path = v; };

    schema_["minimize.max_iters"] = [](const std::string& v, RunSettings& s) {
      s.flow.minimize.max_iters = int_at_least(v, 1);
    };
    schema_["minimize.grad_tol"] = [=](const std::string& v, RunSettings& s) {
      s.flow.minimize.grad_tol = real_in(v, positive, "> 0");
    };
    schema_["minimize.armijo_c"] = [](const std::string& v, RunSettings& s) {
      s.flow.minimize.armijo_c = real_in(v, [](double x) { return x > 0.0 && x < 1.0; }, "in (0,1)");
    };
    schema_["minimize.backtrack_factor"] = [](const std::string& v, RunSettings& s) {
      s.flow.minimize.backtrack_factor = real_in(v, [](double x) { return x > 0.0 && x < 1.0; }, "in (0,1)");
    };
    schema_["minimize.initial_step"] = [=](const std::string& v, RunSettings& s) {
      s.flow.minimize.initial_step = real_in(v, positive, "> 0");
    };
    schema_["output.snapshot_every"] = [](const std::string& v, RunSettings& s) {
      s.snapshot_every = int_at_least(v, 0);
    };
  }

  std::map<std::string, Setter> schema_;
};

/// Echo of a configuration in the same `section.key = value` format the parser reads.
inline std::string config_echo(const RunSettings& s) {
  const FlowConfig& c = s.flow;
  std::ostringstream os;
  os << "flow.variant = " << to_string(c.variant) << '\n';
  os << "flow.T = " << format_double(c.T) << '\n';
  os << "flow.N = " << c.N << '\n';
  if (c.on_football()) {
    os << "grid.alpha = " << format_double(c.football.alpha) << '\n';
    os << "grid.n_r = " << c.football.n_r << '\n';
    os << "grid.n_theta = " << c.football.n_theta << '\n';
  } else {
    os << "grid.lx = " << format_double(c.planar.lx) << '\n';
    os << "grid.ly = " << format_double(c.planar.ly) << '\n';
    os << "grid.n_x = " << c.planar.n_x << '\n';
    os << "grid.n_y = " << c.planar.n_y << '\n';
    os << "pme.beta = " << format_double(c.beta) << '\n';
    os << "pme.allow_heat = " << (c.allow_heat ? "true" : "false") << '\n';
  }
  if (c.variant == Variant::ricci_reg) os << "ricci_reg.lambda = " << format_double(c.lambda) << '\n';
  if (c.variant == Variant::ricci_sym) {
    os << "ricci_sym.symmetry = " << (c.symmetry == SymmetryMode::mirror ? "mirror" : "antipodal") << '\n';
  }
  static const char* kind_names[] = {"zero", "constant", "bump", "harmonic", "random_symmetric", "random", "file"};
  os << "initial.kind = " << kind_names[static_cast<int>(c.initial.kind)] << '\n';
  os << "initial.value = " << format_double(c.initial.value) << '\n';
  os << "initial.amplitude = " << format_double(c.initial.amplitude) << '\n';
  os << "initial.slope_x = " << format_double(c.initial.slope_x) << '\n';
  os << "initial.slope_y = " << format_double(c.initial.slope_y) << '\n';
  os << "initial.seed = " << c.initial.seed << '\n';
  os << "initial.modes = " << c.initial.modes << '\n';
  if (!c.initial.path.empty()) os << "initial.path = " << c.initial.path << '\n';
  os << "minimize.max_iters = " << c.minimize.max_iters << '\n';
  os << "minimize.grad_tol = " << format_double(c.minimize.grad_tol) << '\n';
  os << "minimize.armijo_c = " << format_double(c.minimize.armijo_c) << '\n';
  os << "minimize.backtrack_factor = " << format_double(c.minimize.backtrack_factor) << '\n';
  os << "minimize.initial_step = " << format_double(c.minimize.initial_step) << '\n';
  os << "output.snapshot_every = " << s.snapshot_every << '\n';
  return os.str();
}

}  // namespace morseflow
