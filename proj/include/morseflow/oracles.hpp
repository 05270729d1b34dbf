#pragma once

// Reference computations that share nothing with the solver except the geometry module:
// closed-form flows at spatially constant data, central finite-difference gradients, and
// implicit-Euler PME / heat solves by sparse direct linear algebra.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "morseflow/error.hpp"
#include "morseflow/flow.hpp"
#include "morseflow/functionals.hpp"
#include "morseflow/geometry.hpp"
#include "morseflow/initial_data.hpp"

namespace morseflow::oracles {

/// e^{2u(t)} for the un-normalized flow from u_0 = 0: the metric (1 - 2t) g0.
inline double exact_unnorm_factor(double t) {
  if (!(t < 0.5)) throw DomainError("exact_unnorm_factor: the flow is extinct at t = 1/2");
  return 1.0 - 2.0 * t;
}

/// avg e^{2u(t)} for the regularized flow from a constant u_0: (1/2) d/dt e^{2u} = 1 - lambda.
inline double exact_reg_constant_factor(double u0, double lambda, double t) {
  return std::exp(2.0 * u0) + 2.0 * (1.0 - lambda) * t;
}

/// Central differences of f.eval along the admissible direction of each node, converted to the
/// functional's inner product: g_k = (f(u + eps d_k) - f(u - eps d_k)) / (2 eps m_k) with
/// d_k = project_direction(e_k). Nodes without an admissible direction get 0.
template <StepFunctional F>
Field fd_gradient(const F& f, const Field& u, double eps) {
  if (!(eps > 0.0)) throw DomainError("fd_gradient: eps must be positive");
  const auto m = f.inner_weights();
  Field g = u;
  Field unit = u;
  for (std::size_t k = 0; k < u.size(); ++k) {
    for (double& v : unit.values()) v = 0.0;
    unit[k] = 1.0;
    const Field d = f.project_direction(unit);
    if (d.max_abs() == 0.0 || m[k] == 0.0) {
      g[k] = 0.0;
      continue;
    }
    Field plus = u;
    Field minus = u;
    for (std::size_t i = 0; i < u.size(); ++i) {
      plus[i] += eps * d[i];
      minus[i] -= eps * d[i];
    }
    g[k] = (f.eval(plus) - f.eval(minus)) / (2.0 * eps * m[k]);
  }
  return g;
}

namespace detail {

/// Interior-node numbering of a planar grid.
struct InteriorMap {
  std::vector<int> id;  // -1 on boundary
  int count = 0;

  explicit InteriorMap(const PlanarGrid& g) : id(g.node_count(), -1) {
    for (std::size_t k = 0; k < g.node_count(); ++k) {
      if (!g.is_boundary(k)) id[k] = count++;
    }
  }
};

/// Triplets of -laplacian on interior unknowns, with the boundary couplings returned separately.
inline void negative_laplacian(const PlanarGrid& g, const InteriorMap& map,
                               std::vector<Eigen::Triplet<double>>& trips) {
  const double ax = 1.0 / (g.dx() * g.dx());
  const double ay = 1.0 / (g.dy() * g.dy());
  for (int i = 1; i + 1 < g.n_x(); ++i) {
    for (int j = 1; j + 1 < g.n_y(); ++j) {
      const int row = map.id[g.index(i, j)];
      trips.emplace_back(row, row, 2.0 * ax + 2.0 * ay);
      const std::pair<std::size_t, double> nb[4] = {{g.index(i - 1, j), ax},
                                                    {g.index(i + 1, j), ax},
                                                    {g.index(i, j - 1), ay},
                                                    {g.index(i, j + 1), ay}};
      for (const auto& [k, a] : nb) {
        if (map.id[k] >= 0) trips.emplace_back(row, map.id[k], -a);
      }
    }
  }
}

inline double boundary_coupling(const PlanarGrid& g, const Field& v, int i, int j) {
  const double ax = 1.0 / (g.dx() * g.dx());
  const double ay = 1.0 / (g.dy() * g.dy());
  double s = 0.0;
  if (i - 1 == 0) s += ax * v[g.index(i - 1, j)];
  if (i + 1 == g.n_x() - 1) s += ax * v[g.index(i + 1, j)];
  if (j - 1 == 0) s += ay * v[g.index(i, j - 1)];
  if (j + 1 == g.n_y() - 1) s += ay * v[g.index(i, j + 1)];
  return s;
}

}  // namespace detail

/// Implicit Euler for the heat equation, (I/h - laplacian) v_n = v_{n-1} / h with the boundary
/// trace of v0 held fixed. Returns v_0 .. v_N.
inline std::vector<Field> heat_implicit_reference(const PlanarGrid& grid, const Field& v0, double h, int N) {
  check_field(grid, v0);
  if (!(h > 0.0) || N < 1) throw DomainError("heat reference: need h > 0 and N >= 1");
  const detail::InteriorMap map(grid);
  std::vector<Eigen::Triplet<double>> trips;
  detail::negative_laplacian(grid, map, trips);
  for (int r = 0; r < map.count; ++r) trips.emplace_back(r, r, 1.0 / h);
  Eigen::SparseMatrix<double> A(map.count, map.count);
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
  if (solver.info() != Eigen::Success) throw DomainError("heat reference: factorization failed");

  std::vector<Field> out{v0};
  Eigen::VectorXd rhs(map.count);
  for (int n = 1; n <= N; ++n) {
    const Field& p = out.back();
    for (int i = 1; i + 1 < grid.n_x(); ++i) {
      for (int j = 1; j + 1 < grid.n_y(); ++j) {
        rhs[map.id[grid.index(i, j)]] = p[grid.index(i, j)] / h + detail::boundary_coupling(grid, v0, i, j);
      }
    }
    const Eigen::VectorXd x = solver.solve(rhs);
    Field next = v0;
    for (std::size_t k = 0; k < next.size(); ++k) {
      if (map.id[k] >= 0) next[k] = x[map.id[k]];
    }
    out.push_back(std::move(next));
  }
  return out;
}

struct NewtonOptions {
  int max_iters = 50;
  double tol = 1e-9;  // max-norm of the implicit-Euler residual
};

/// One implicit-Euler step of d_t v^(2 beta - 1) = laplacian(v), written as
///   (beta C_beta / h)(|v|^(beta-1) v - |p|^(beta-1) p) |v|^(beta-1) = laplacian(v),
/// solved by damped Newton on the interior unknowns. Throws if Newton stalls.
inline Field pme_newton_step(const PlanarGrid& grid, const Field& prev, double h, double beta,
                             const NewtonOptions& opts = {}) {
  const detail::InteriorMap map(grid);
  const double a = beta * ((2.0 * beta - 1.0) / beta) / h;
  const double ax = 1.0 / (grid.dx() * grid.dx());
  const double ay = 1.0 / (grid.dy() * grid.dy());
  auto spow = [beta](double v) { return std::copysign(std::pow(std::abs(v), beta), v); };

  auto residual = [&](const Field& v, Eigen::VectorXd& F) {
    double mx = 0.0;
    for (int i = 1; i + 1 < grid.n_x(); ++i) {
      for (int j = 1; j + 1 < grid.n_y(); ++j) {
        const std::size_t k = grid.index(i, j);
        const double c = v[k];
        const double lap = ax * (v[grid.index(i + 1, j)] - 2.0 * c + v[grid.index(i - 1, j)]) +
                           ay * (v[grid.index(i, j + 1)] - 2.0 * c + v[grid.index(i, j - 1)]);
        const double r = a * (spow(c) - spow(prev[k])) * std::pow(std::abs(c), beta - 1.0) - lap;
        F[map.id[k]] = r;
        mx = std::max(mx, std::abs(r));
      }
    }
    return mx;
  };

  std::vector<Eigen::Triplet<double>> lap_trips;
  detail::negative_laplacian(grid, map, lap_trips);

  Field v = prev;
  Eigen::VectorXd F(map.count);
  double fmax = residual(v, F);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool analyzed = false;
  for (int it = 0; it < opts.max_iters; ++it) {
    if (fmax <= opts.tol) return v;
    std::vector<Eigen::Triplet<double>> trips = lap_trips;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (map.id[k] < 0) continue;
      const double c = v[k];
      const double ac = std::abs(c);
      double d = beta * std::pow(ac, 2.0 * beta - 2.0);
      if (beta != 1.0 && ac > 0.0) {
        d += (spow(c) - spow(prev[k])) * (beta - 1.0) * std::pow(ac, beta - 2.0) * (c > 0 ? 1.0 : -1.0);
      }
      trips.emplace_back(map.id[k], map.id[k], a * d);
    }
    Eigen::SparseMatrix<double> J(map.count, map.count);
    J.setFromTriplets(trips.begin(), trips.end());
    if (!analyzed) {
      lu.analyzePattern(J);
      analyzed = true;
    }
    lu.factorize(J);
    if (lu.info() != Eigen::Success) throw DomainError("pme reference: singular Newton matrix");
    const Eigen::VectorXd step = lu.solve(-F);

    const double fnorm = F.norm();
    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd Ft(map.count);
    for (int halvings = 0; halvings < 40; ++halvings, t *= 0.5) {
      Field trial = v;
      for (std::size_t k = 0; k < v.size(); ++k) {
        if (map.id[k] >= 0) trial[k] += t * step[map.id[k]];
      }
      const double tmax = residual(trial, Ft);
      if (Ft.norm() < (1.0 - 1e-4 * t) * fnorm || tmax <= opts.tol) {
        v = std::move(trial);
        F = Ft;
        fmax = tmax;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw DomainError("pme reference: Newton line search failed");
  }
  if (fmax <= opts.tol) return v;
  throw DomainError("pme reference: Newton did not converge (residual " + format_double(fmax) + ")");
}

/// Implicit-Euler PME reference on the grid and time step both refined by `refine`, restricted
/// back to the coarse nodes. Records carry only n, t and the field.
inline Trajectory pme_reference(const FlowConfig& config, int refine = 4, const NewtonOptions& opts = {}) {
  if (config.variant != Variant::pme) throw DomainError("pme_reference: pme configurations only");
  if (!config.initial.analytic()) throw DomainError("pme_reference: initial data must be analytic");
  if (refine < 1) throw DomainError("pme_reference: refine must be >= 1");
  const PlanarParams& p = config.planar;
  const PlanarGrid coarse = build_planar_grid(p.lx, p.ly, p.n_x, p.n_y);
  const PlanarGrid fine = build_planar_grid(p.lx, p.ly, refine * (p.n_x - 1) + 1, refine * (p.n_y - 1) + 1);
  const int fine_steps = refine * config.N;
  const double h = config.T / fine_steps;

  auto restrict_field = [&](const Field& f) {
    return coarse.sample([&](double x, double y) {
      const int i = static_cast<int>(std::lround(x / fine.dx()));
      const int j = static_cast<int>(std::lround(y / fine.dy()));
      return f[fine.index(i, j)];
    });
  };

  Trajectory traj{config, coarse, {}, 0.0, true, false, {}};
  Field v = make_initial_field(fine, config.initial);
  StepRecord first;
  first.field = restrict_field(v);
  first.functional_value = first.kinetic = first.potential = first.el_residual = kNaN;
  traj.records.push_back(std::move(first));
  for (int s = 1; s <= fine_steps; ++s) {
    v = pme_newton_step(fine, v, h, config.beta, opts);
    if (s % refine == 0) {
      StepRecord rec;
      rec.n = s / refine;
      rec.t = rec.n * config.h();
      rec.field = restrict_field(v);
      rec.functional_value = rec.kinetic = rec.potential = rec.el_residual = kNaN;
      traj.records.push_back(std::move(rec));
    }
  }
  traj.completed = true;
  return traj;
}

/// sqrt(sum_k w_k (a_k - b_k)^2) over the grid's quadrature.
template <Grid G>
double l2_distance(const G& grid, const Field& a, const Field& b) {
  check_field(grid, a);
  check_field(grid, b);
  double s = 0.0;
  const auto& w = grid.quad_weights();
  for (std::size_t k = 0; k < a.size(); ++k) s += w[k] * (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

template <Grid G>
double l2_norm(const G& grid, const Field& a) {
  return l2_distance(grid, a, grid.constant(0.0));
}

}  // namespace morseflow::oracles
