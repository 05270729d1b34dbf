#pragma once

// Field snapshot text format:
//   football <alpha> <n_r> <n_theta>      or      planar <lx> <ly> <n_x> <n_y>
// followed by one value per line in row-major (r-major / x-major) node order.

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>

#include "morseflow/error.hpp"
#include "morseflow/geometry.hpp"

namespace morseflow {

using AnyGrid = std::variant<FootballGrid, PlanarGrid>;

struct Snapshot {
  AnyGrid grid;
  Field field;
};

/// Seventeen significant digits, enough to read back the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string snapshot_header(const GridKey& key) {
  if (key.kind == GridKind::football) {
    return "football " + format_double(key.p0) + " " + std::to_string(key.n0) + " " +
           std::to_string(key.n1);
  }
  return "planar " + format_double(key.p0) + " " + format_double(key.p1) + " " +
         std::to_string(key.n0) + " " + std::to_string(key.n1);
}

inline void write_snapshot(std::ostream& os, const Field& f) {
  os << snapshot_header(f.key()) << '\n';
  for (double v : f.values()) os << format_double(v) << '\n';
}

inline void write_snapshot(const std::string& path, const Field& f) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open snapshot for writing: " + path);
  write_snapshot(os, f);
}

inline Snapshot read_snapshot(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("snapshot: missing header line");
  std::istringstream hs(line);
  std::string kind;
  hs >> kind;
  auto grid = [&]() -> AnyGrid {
    try {
      if (kind == "football") {
        double alpha = 0;
        int nr = 0, nt = 0;
        if (!(hs >> alpha >> nr >> nt)) throw FormatError("snapshot: bad football header: " + line);
        return build_football_grid(alpha, nr, nt);
      }
      if (kind == "planar") {
        double lx = 0, ly = 0;
        int nx = 0, ny = 0;
        if (!(hs >> lx >> ly >> nx >> ny)) throw FormatError("snapshot: bad planar header: " + line);
        return build_planar_grid(lx, ly, nx, ny);
      }
    } catch (const DomainError& e) {
      throw FormatError(std::string("snapshot: ") + e.what());
    }
    throw FormatError("snapshot: unknown grid kind '" + kind + "'");
  }();

  const GridKey key = std::visit([](const auto& g) { return g.key(); }, grid);
  const std::size_t n = std::visit([](const auto& g) { return g.node_count(); }, grid);
  std::vector<double> values;
  values.reserve(n);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double v = 0;
    if (!(ls >> v)) throw FormatError("snapshot: line " + std::to_string(lineno) + ": not a number");
    values.push_back(v);
  }
  if (values.size() != n) {
    throw FormatError("snapshot: expected " + std::to_string(n) + " values, found " +
                      std::to_string(values.size()));
  }
  try {
    return {std::move(grid), Field(key, std::move(values))};
  } catch (const DomainError& e) {
    throw FormatError(std::string("snapshot: ") + e.what());
  }
}

inline Snapshot read_snapshot(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open snapshot: " + path);
  return read_snapshot(is);
}

}  // namespace morseflow
