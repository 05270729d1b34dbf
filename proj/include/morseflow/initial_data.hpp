#pragma once

// Initial fields for flow runs: analytic profiles evaluated on any grid, smooth random
// fields, and snapshot files.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <variant>

#include "morseflow/error.hpp"
#include "morseflow/geometry.hpp"
#include "morseflow/io.hpp"

namespace morseflow {

enum class InitialKind { zero, constant, bump, harmonic, random_symmetric, random, file };

struct InitialSpec {
  InitialKind kind = InitialKind::zero;
  double value = 0.0;      // constant offset
  double amplitude = 0.5;  // bump height, or max-norm of random fields
  double slope_x = 1.0;    // harmonic: value + slope_x x + slope_y y
  double slope_y = 2.0;
  std::uint64_t seed = 1;
  int modes = 4;
  std::string path;

  /// Analytic kinds can be sampled on any grid (needed for refined reference runs).
  bool analytic() const { return kind != InitialKind::file; }
};

/// Smooth random field: low radial cosine modes plus angular modes damped by sin^2 r so the
/// gradient stays square-integrable at the cone points. When symmetric, the field is
/// symmetrized under `mode` and projected to mean zero; it is then scaled to max-norm `amplitude`.
inline Field random_smooth_field(const FootballGrid& grid, std::uint64_t seed, double amplitude,
                                 int modes, bool symmetric, SymmetryMode mode = SymmetryMode::mirror) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  struct Mode {
    int k;
    int m;
    double a;
    double b;
  };
  std::vector<Mode> terms;
  for (int k = 0; k <= modes; ++k) {
    for (int m = 0; m <= modes; ++m) {
      if (k == 0 && m == 0) continue;
      const double scale = 1.0 / ((1.0 + k + m) * (1.0 + k + m));
      terms.push_back({k, m, scale * normal(rng), scale * normal(rng)});
    }
  }
  Field f = grid.sample([&](double r, double theta) {
    double v = 0.0;
    const double s2 = std::sin(r) * std::sin(r);
    for (const Mode& t : terms) {
      if (t.m == 0) {
        v += t.a * std::cos(t.k * r);
      } else {
        v += s2 * std::cos(t.k * r) * (t.a * std::cos(t.m * theta) + t.b * std::sin(t.m * theta));
      }
    }
    return v;
  });
  if (symmetric) f = mean_zero_project(grid, symmetrize(grid, f, mode));
  const double peak = f.max_abs();
  if (peak > 0.0) {
    for (double& v : f.values()) v *= amplitude / peak;
  }
  return f;
}

inline Field make_initial_field(const FootballGrid& grid, const InitialSpec& spec,
                                SymmetryMode mode = SymmetryMode::mirror) {
  switch (spec.kind) {
    case InitialKind::zero:
      return grid.constant(0.0);
    case InitialKind::constant:
      return grid.constant(spec.value);
    case InitialKind::bump:
      return grid.sample([&](double r, double) { return spec.value + spec.amplitude * std::cos(2.0 * r); });
    case InitialKind::harmonic:
      return grid.constant(spec.value);
    case InitialKind::random_symmetric:
      return random_smooth_field(grid, spec.seed, spec.amplitude, spec.modes, true, mode);
    case InitialKind::random:
      return random_smooth_field(grid, spec.seed, spec.amplitude, spec.modes, false);
    case InitialKind::file: {
      Snapshot s = read_snapshot(spec.path);
      check_field(grid, s.field);
      return s.field;
    }
  }
  throw DomainError("unknown initial data kind");
}

inline Field make_initial_field(const PlanarGrid& grid, const InitialSpec& spec) {
  const double lx = grid.lx();
  const double ly = grid.ly();
  switch (spec.kind) {
    case InitialKind::zero:
      return grid.constant(0.0);
    case InitialKind::constant:
      return grid.constant(spec.value);
    case InitialKind::bump:
      return grid.sample([&](double x, double y) {
        return spec.value + spec.amplitude * std::sin(std::numbers::pi * x / lx) *
                                std::sin(std::numbers::pi * y / ly);
      });
    case InitialKind::harmonic:
      return grid.sample([&](double x, double y) { return spec.value + spec.slope_x * x + spec.slope_y * y; });
    case InitialKind::random_symmetric:
    case InitialKind::random:
      throw DomainError("random initial data is only defined on the football grid");
    case InitialKind::file: {
      Snapshot s = read_snapshot(spec.path);
      check_field(grid, s.field);
      return s.field;
    }
  }
  throw DomainError("unknown initial data kind");
}

}  // namespace morseflow
