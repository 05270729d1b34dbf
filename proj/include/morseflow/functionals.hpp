#pragma once

// Per-step variational functionals of the discrete Morse flow.
//
// Every functional exposes the same surface, consumed by the minimizer and the
// finite-difference oracle:
//   eval(u)               functional value
//   difference(u, w)      eval(w) - eval(u), evaluated without cancellation
//   grad(u)               gradient in the functional's inner product, projected
//                         onto the tangent space of the constraint set
//   el_residual_field(u)  left minus right side of the Euler-Lagrange equation
//   project(u)            nearest admissible field
//   project_direction(d)  tangent-space projection of a direction
//   inner_weights()       nodal weights of the inner product the gradient lives in
//
// The PME functional uses plain integrals; the three Ricci variants use area
// averages, so their inner product weights are w_k / |S|.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "morseflow/error.hpp"
#include "morseflow/geometry.hpp"

namespace morseflow {

inline constexpr double kAdmissibleTol = 1e-10;

/// C_beta with beta / (2 beta - 1) * C_beta = 1.
inline double cbeta_from_beta(double beta) {
  if (!(beta > 0.5)) throw DomainError("cbeta_from_beta: beta must exceed 1/2");
  return (2.0 * beta - 1.0) / beta;
}

/// Odd signed power |v|^(beta-1) v.
inline double signed_power(double v, double beta) {
  if (beta == 1.0) return v;
  return std::copysign(std::pow(std::abs(v), beta), v);
}

/// signed_power(b) - signed_power(a), accurate when a and b are close.
inline double signed_power_difference(double a, double b, double beta) {
  if (beta == 1.0) return b - a;
  if ((a > 0.0 && b > 0.0) || (a < 0.0 && b < 0.0)) {
    const double x = std::abs(a);
    const double y = std::abs(b);
    const double d = std::pow(x, beta) * std::expm1(beta * std::log1p((y - x) / x));
    return a > 0.0 ? d : -d;
  }
  return signed_power(b, beta) - signed_power(a, beta);
}

/// log of the area average of e^{2u}, shifted to avoid overflow.
inline double log_mean_exp2(const FootballGrid& grid, const Field& u) {
  check_field(grid, u);
  double m = -std::numeric_limits<double>::infinity();
  for (double v : u.values()) m = std::max(m, 2.0 * v);
  const auto& w = grid.quad_weights();
  CompensatedSum s;
  for (std::size_t k = 0; k < u.size(); ++k) s.add(w[k] * std::exp(2.0 * u[k] - m));
  return std::log(s.value() / grid.total_area()) + m;
}

/// e^{2u} / avg(e^{2u}) nodewise.
inline std::vector<double> normalized_exp2(const FootballGrid& grid, const Field& u) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : u.values()) m = std::max(m, 2.0 * v);
  const auto& w = grid.quad_weights();
  std::vector<double> e(u.size());
  CompensatedSum s;
  for (std::size_t k = 0; k < u.size(); ++k) {
    e[k] = std::exp(2.0 * u[k] - m);
    s.add(w[k] * e[k]);
  }
  const double mean = s.value() / grid.total_area();
  for (double& v : e) v /= mean;
  return e;
}

/// log avg(e^{2w}) - log avg(e^{2u}) without cancellation.
inline double log_mean_exp2_difference(const FootballGrid& grid, const Field& u, const Field& w) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : u.values()) m = std::max(m, 2.0 * v);
  const auto& q = grid.quad_weights();
  double base = 0.0;
  double delta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double e = q[k] * std::exp(2.0 * u[k] - m);
    base += e;
    delta += e * std::expm1(2.0 * (w[k] - u[k]));
  }
  return std::log1p(delta / base);
}

/// (1/2) avg|grad u|^2 - (1/2) log avg(e^{2u}).
inline double ricci_energy(const FootballGrid& grid, const Field& u) {
  return 0.5 * dirichlet_energy(grid, u) / grid.total_area() - 0.5 * log_mean_exp2(grid, u);
}

/// log avg(e^{2u}) - c avg|grad u|^2 - 2 avg(u). Moser-type inequalities bound this from above.
inline double moser_log_ratio(const FootballGrid& grid, const Field& u, double c) {
  return log_mean_exp2(grid, u) - c * dirichlet_energy(grid, u) / grid.total_area() -
         2.0 * average(grid, u);
}

namespace detail {

inline Field difference_field(const Field& from, const Field& to) {
  check_same_grid(from, to);
  Field d = to;
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = to[k] - from[k];
  return d;
}

inline Field sum_field(const Field& a, const Field& b) {
  check_same_grid(a, b);
  Field s = a;
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = a[k] + b[k];
  return s;
}

inline double max_abs(const Field& f) { return f.max_abs(); }

/// (1/(2h)) avg|e^u - e^prev|^2.
inline double exp_kinetic(const FootballGrid& grid, double h, const Field& prev, const Field& u) {
  const auto& w = grid.quad_weights();
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double d = std::exp(u[k]) - std::exp(prev[k]);
    s += w[k] * d * d;
  }
  return s / (2.0 * h * grid.total_area());
}

inline double exp_kinetic_difference(const FootballGrid& grid, double h, const Field& prev,
                                     const Field& u, const Field& w) {
  const auto& q = grid.quad_weights();
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double eu = std::exp(u[k]);
    const double step = eu * std::expm1(w[k] - u[k]);
    s += q[k] * step * (step + 2.0 * (eu - std::exp(prev[k])));
  }
  return s / (2.0 * h * grid.total_area());
}

/// e^u (e^u - e^prev) / h nodewise.
inline std::vector<double> exp_kinetic_gradient(double h, const Field& prev, const Field& u) {
  std::vector<double> g(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double eu = std::exp(u[k]);
    g[k] = eu * (eu - std::exp(prev[k])) / h;
  }
  return g;
}

inline std::vector<double> averaged_weights(const FootballGrid& grid) {
  std::vector<double> m = grid.quad_weights();
  for (double& v : m) v /= grid.total_area();
  return m;
}

}  // namespace detail

/// (C_beta / (2h)) int |s(v) - s(v_prev)|^2 + (1/2) int |grad v|^2 over the class of fields
/// equal to the boundary data on the rectangle boundary, s the odd signed power.
class PmeStepFunctional {
 public:
  PmeStepFunctional(const PlanarGrid& grid, double h, double beta, Field prev, Field boundary_data)
      : grid_(grid),
        h_(h),
        beta_(beta),
        c_beta_(cbeta_from_beta(beta)),
        prev_(std::move(prev)),
        boundary_(std::move(boundary_data)) {
    if (!(h > 0.0)) throw DomainError("pme functional: h must be positive");
    if (!(beta >= 1.0)) throw DomainError("pme functional: beta must be >= 1");
    check_field(grid_, prev_);
    check_field(grid_, boundary_);
    check_admissible(prev_);
  }

  const PlanarGrid& grid() const { return grid_; }
  double h() const { return h_; }
  double beta() const { return beta_; }
  double c_beta() const { return c_beta_; }
  const Field& prev() const { return prev_; }
  const Field& boundary_data() const { return boundary_; }
  std::span<const double> inner_weights() const { return grid_.quad_weights(); }

  void check_admissible(const Field& v) const {
    check_field(grid_, v);
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (grid_.is_boundary(k) &&
          std::abs(v[k] - boundary_[k]) > kAdmissibleTol * (1.0 + std::abs(boundary_[k]))) {
        throw AdmissibilityError("pme functional: field does not match the boundary data");
      }
    }
  }

  double kinetic(const Field& v) const {
    check_admissible(v);
    const auto& w = grid_.quad_weights();
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double d = signed_power_difference(prev_[k], v[k], beta_);
      s += w[k] * d * d;
    }
    return c_beta_ / (2.0 * h_) * s;
  }

  double potential(const Field& v) const {
    check_admissible(v);
    return 0.5 * dirichlet_energy(grid_, v);
  }

  double eval(const Field& v) const { return kinetic(v) + potential(v); }

  double difference(const Field& from, const Field& to) const {
    check_admissible(from);
    check_admissible(to);
    const auto& w = grid_.quad_weights();
    double kin = 0.0;
    for (std::size_t k = 0; k < from.size(); ++k) {
      if (w[k] == 0.0) continue;
      const double step = signed_power_difference(from[k], to[k], beta_);
      const double old = signed_power_difference(prev_[k], from[k], beta_);
      kin += w[k] * step * (step + 2.0 * old);
    }
    const Field delta = detail::difference_field(from, to);
    const Field sum = detail::sum_field(from, to);
    return c_beta_ / (2.0 * h_) * kin + 0.5 * dirichlet_form(grid_, delta, sum);
  }

  Field grad(const Field& v) const {
    check_admissible(v);
    const Field lap = apply_laplacian(grid_, v);
    Field g = grid_.constant(0.0);
    const double coef = beta_ * c_beta_ / h_;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (grid_.is_boundary(k)) continue;
      const double change = signed_power_difference(prev_[k], v[k], beta_);
      g[k] = coef * change * std::pow(std::abs(v[k]), beta_ - 1.0) - lap[k];
    }
    return g;
  }

  /// (beta C_beta / h)(v^beta - v_prev^beta) v^(beta-1) - laplacian(v) on interior nodes.
  Field el_residual_field(const Field& v) const {
    check_admissible(v);
    const Field lap = apply_laplacian(grid_, v);
    Field r = grid_.constant(0.0);
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (grid_.is_boundary(k)) continue;
      const double lhs = beta_ * c_beta_ / h_ * signed_power_difference(prev_[k], v[k], beta_) *
                         std::pow(std::abs(v[k]), beta_ - 1.0);
      r[k] = lhs - lap[k];
    }
    return r;
  }

  double el_residual(const Field& v) const { return el_residual_field(v).max_abs(); }

  Field project(const Field& v) const {
    check_field(grid_, v);
    Field out = v;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (grid_.is_boundary(k)) out[k] = boundary_[k];
    }
    return out;
  }

  Field project_direction(const Field& d) const {
    check_field(grid_, d);
    Field out = d;
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (grid_.is_boundary(k)) out[k] = 0.0;
    }
    return out;
  }

 private:
  const PlanarGrid& grid_;
  double h_;
  double beta_;
  double c_beta_;
  Field prev_;
  Field boundary_;
};

/// (1/(2h)) avg|e^u - e^{u_prev}|^2 + (1/2) avg|grad u|^2 - (1/2) log avg e^{2u}
/// over mean-zero fields symmetric under the chosen reflection.
class RicciSymStepFunctional {
 public:
  RicciSymStepFunctional(const FootballGrid& grid, double h, Field prev,
                         SymmetryMode mode = SymmetryMode::mirror)
      : grid_(grid), h_(h), prev_(std::move(prev)), mode_(mode), weights_(detail::averaged_weights(grid)) {
    if (!(h > 0.0)) throw DomainError("ricci-sym functional: h must be positive");
    check_admissible(prev_);
  }

  const FootballGrid& grid() const { return grid_; }
  double h() const { return h_; }
  const Field& prev() const { return prev_; }
  SymmetryMode symmetry() const { return mode_; }
  std::span<const double> inner_weights() const { return weights_; }

  void check_admissible(const Field& u) const {
    check_field(grid_, u);
    const double scale = 1.0 + u.max_abs();
    if (std::abs(average(grid_, u)) > kAdmissibleTol * scale) {
      throw AdmissibilityError("ricci-sym functional: field is not mean-zero");
    }
    if (asymmetry(grid_, u, mode_) > kAdmissibleTol * scale) {
      throw AdmissibilityError("ricci-sym functional: field is not symmetric");
    }
  }

  double kinetic(const Field& u) const {
    check_admissible(u);
    return detail::exp_kinetic(grid_, h_, prev_, u);
  }

  double potential(const Field& u) const {
    check_admissible(u);
    return ricci_energy(grid_, u);
  }

  double eval(const Field& u) const { return kinetic(u) + potential(u); }

  double difference(const Field& from, const Field& to) const {
    check_admissible(from);
    check_admissible(to);
    const Field delta = detail::difference_field(from, to);
    const Field sum = detail::sum_field(from, to);
    return detail::exp_kinetic_difference(grid_, h_, prev_, from, to) +
           0.5 * dirichlet_form(grid_, delta, sum) / grid_.total_area() -
           0.5 * log_mean_exp2_difference(grid_, from, to);
  }

  /// e^u (e^u - e^{u_prev}) / h - laplacian(u) - e^{2u} / avg(e^{2u}), before projection.
  Field unconstrained_grad(const Field& u) const {
    check_admissible(u);
    const Field lap = apply_laplacian(grid_, u);
    const auto kin = detail::exp_kinetic_gradient(h_, prev_, u);
    const auto ratio = normalized_exp2(grid_, u);
    Field g = u;
    for (std::size_t k = 0; k < u.size(); ++k) g[k] = kin[k] - lap[k] - ratio[k];
    return g;
  }

  Field grad(const Field& u) const { return project_direction(unconstrained_grad(u)); }

  /// 1 - avg(e^u (e^u - e^{u_prev}) / h).
  double lambda(const Field& u) const {
    check_admissible(u);
    const auto kin = detail::exp_kinetic_gradient(h_, prev_, u);
    return 1.0 - average(grid_, Field(u.key(), kin));
  }

  /// e^u (e^u - e^{u_prev}) / h - (laplacian(u) - lambda + e^{2u} / avg e^{2u}).
  Field el_residual_field(const Field& u) const {
    const double lam = lambda(u);
    const Field lap = apply_laplacian(grid_, u);
    const auto ratio = normalized_exp2(grid_, u);
    Field r = u;
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double eu = std::exp(u[k]);
      const double lhs = eu * (eu - std::exp(prev_[k])) / h_;
      r[k] = lhs - (lap[k] - lam + ratio[k]);
    }
    return r;
  }

  double el_residual(const Field& u) const { return el_residual_field(u).max_abs(); }

  Field project(const Field& u) const {
    return mean_zero_project(grid_, symmetrize(grid_, u, mode_));
  }

  Field project_direction(const Field& d) const { return project(d); }

 private:
  const FootballGrid& grid_;
  double h_;
  Field prev_;
  SymmetryMode mode_;
  std::vector<double> weights_;
};

/// (1/(2h)) avg|e^u - e^{u_prev}|^2 + (1/2) avg(|grad u|^2 + 2 lambda u) - (1/2) log avg e^{2u},
/// unconstrained.
class RicciRegStepFunctional {
 public:
  RicciRegStepFunctional(const FootballGrid& grid, double h, double lambda, Field prev)
      : grid_(grid), h_(h), lambda_(lambda), prev_(std::move(prev)), weights_(detail::averaged_weights(grid)) {
    if (!(h > 0.0)) throw DomainError("ricci-reg functional: h must be positive");
    if (!(lambda > 0.0 && lambda < 1.0)) throw DomainError("ricci-reg functional: lambda must lie in (0,1)");
    check_field(grid_, prev_);
  }

  const FootballGrid& grid() const { return grid_; }
  double h() const { return h_; }
  double lambda() const { return lambda_; }
  const Field& prev() const { return prev_; }
  std::span<const double> inner_weights() const { return weights_; }

  void check_admissible(const Field& u) const { check_field(grid_, u); }

  double kinetic(const Field& u) const {
    check_field(grid_, u);
    return detail::exp_kinetic(grid_, h_, prev_, u);
  }

  double potential(const Field& u) const {
    check_field(grid_, u);
    return ricci_energy(grid_, u) + lambda_ * average(grid_, u);
  }

  double eval(const Field& u) const { return kinetic(u) + potential(u); }

  double difference(const Field& from, const Field& to) const {
    check_field(grid_, from);
    check_field(grid_, to);
    const Field delta = detail::difference_field(from, to);
    const Field sum = detail::sum_field(from, to);
    return detail::exp_kinetic_difference(grid_, h_, prev_, from, to) +
           0.5 * dirichlet_form(grid_, delta, sum) / grid_.total_area() +
           lambda_ * average(grid_, delta) - 0.5 * log_mean_exp2_difference(grid_, from, to);
  }

  Field grad(const Field& u) const {
    check_field(grid_, u);
    const Field lap = apply_laplacian(grid_, u);
    const auto kin = detail::exp_kinetic_gradient(h_, prev_, u);
    const auto ratio = normalized_exp2(grid_, u);
    Field g = u;
    for (std::size_t k = 0; k < u.size(); ++k) g[k] = kin[k] - lap[k] + lambda_ - ratio[k];
    return g;
  }

  /// e^u (e^u - e^{u_prev}) / h - (laplacian(u) - lambda + e^{2u} / avg e^{2u}).
  Field el_residual_field(const Field& u) const {
    check_field(grid_, u);
    const Field lap = apply_laplacian(grid_, u);
    const auto ratio = normalized_exp2(grid_, u);
    Field r = u;
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double eu = std::exp(u[k]);
      const double lhs = eu * (eu - std::exp(prev_[k])) / h_;
      r[k] = lhs - (lap[k] - lambda_ + ratio[k]);
    }
    return r;
  }

  double el_residual(const Field& u) const { return el_residual_field(u).max_abs(); }

  Field project(const Field& u) const {
    check_field(grid_, u);
    return u;
  }
  Field project_direction(const Field& d) const { return project(d); }

 private:
  const FootballGrid& grid_;
  double h_;
  double lambda_;
  Field prev_;
  std::vector<double> weights_;
};

/// (1/(2h)) avg|e^u - e^{u_prev}|^2 + (1/2) avg|grad u|^2 + avg(u); its Euler-Lagrange
/// equation e^u (e^u - e^{u_prev}) / h = laplacian(u) - 1 is an implicit step of the
/// un-normalized flow, which shrinks g0 to (1 - 2t) g0.
class RicciUnnormStepFunctional {
 public:
  RicciUnnormStepFunctional(const FootballGrid& grid, double h, Field prev)
      : grid_(grid), h_(h), prev_(std::move(prev)), weights_(detail::averaged_weights(grid)) {
    if (!(h > 0.0)) throw DomainError("ricci-unnorm functional: h must be positive");
    check_field(grid_, prev_);
  }

  const FootballGrid& grid() const { return grid_; }
  double h() const { return h_; }
  const Field& prev() const { return prev_; }
  std::span<const double> inner_weights() const { return weights_; }

  void check_admissible(const Field& u) const { check_field(grid_, u); }

  double kinetic(const Field& u) const {
    check_field(grid_, u);
    return detail::exp_kinetic(grid_, h_, prev_, u);
  }

  double potential(const Field& u) const {
    check_field(grid_, u);
    return 0.5 * dirichlet_energy(grid_, u) / grid_.total_area() + average(grid_, u);
  }

  double eval(const Field& u) const { return kinetic(u) + potential(u); }

  double difference(const Field& from, const Field& to) const {
    check_field(grid_, from);
    check_field(grid_, to);
    const Field delta = detail::difference_field(from, to);
    const Field sum = detail::sum_field(from, to);
    return detail::exp_kinetic_difference(grid_, h_, prev_, from, to) +
           0.5 * dirichlet_form(grid_, delta, sum) / grid_.total_area() + average(grid_, delta);
  }

  Field grad(const Field& u) const {
    check_field(grid_, u);
    const Field lap = apply_laplacian(grid_, u);
    const auto kin = detail::exp_kinetic_gradient(h_, prev_, u);
    Field g = u;
    for (std::size_t k = 0; k < u.size(); ++k) g[k] = kin[k] - lap[k] + 1.0;
    return g;
  }

  Field el_residual_field(const Field& u) const {
    check_field(grid_, u);
    const Field lap = apply_laplacian(grid_, u);
    Field r = u;
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double eu = std::exp(u[k]);
      const double lhs = eu * (eu - std::exp(prev_[k])) / h_;
      r[k] = lhs - (lap[k] - 1.0);
    }
    return r;
  }

  double el_residual(const Field& u) const { return el_residual_field(u).max_abs(); }

  Field project(const Field& u) const {
    check_field(grid_, u);
    return u;
  }
  Field project_direction(const Field& d) const { return project(d); }

 private:
  const FootballGrid& grid_;
  double h_;
  Field prev_;
  std::vector<double> weights_;
};

template <class F>
concept StepFunctional = requires(const F& f, const Field& u) {
  { f.eval(u) } -> std::convertible_to<double>;
  { f.difference(u, u) } -> std::convertible_to<double>;
  { f.grad(u) } -> std::same_as<Field>;
  { f.el_residual(u) } -> std::convertible_to<double>;
  { f.project(u) } -> std::same_as<Field>;
  { f.project_direction(u) } -> std::same_as<Field>;
  { f.inner_weights() } -> std::convertible_to<std::span<const double>>;
  f.check_admissible(u);
};

/// Norm induced by the functional's inner product.
template <StepFunctional F>
double functional_norm(const F& f, const Field& g) {
  return std::sqrt(weighted_dot(f.inner_weights(), g.values(), g.values()));
}

}  // namespace morseflow
