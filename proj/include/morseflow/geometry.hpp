#pragma once

// Discrete football surface (sphere with two conical points, metric
// dr^2 + (alpha sin r)^2 dtheta^2) and the planar rectangle, together with
// quadrature, the conservative Laplacian, curvature and the two constraint
// projections used by the normalized flow.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "morseflow/error.hpp"

namespace morseflow {

enum class GridKind { football, planar };

/// Identity of a grid; two grids with equal keys have identical nodes.
struct GridKey {
  GridKind kind = GridKind::football;
  double p0 = 0.0;  // alpha, or lx
  double p1 = 0.0;  // unused (football) or ly
  int n0 = 0;       // n_r or n_x
  int n1 = 0;       // n_theta or n_y

  bool operator==(const GridKey&) const = default;
};

inline std::string describe(const GridKey& key) {
  if (key.kind == GridKind::football) {
    return "football(alpha=" + std::to_string(key.p0) + ", " + std::to_string(key.n0) + "x" +
           std::to_string(key.n1) + ")";
  }
  return "planar(" + std::to_string(key.p0) + "x" + std::to_string(key.p1) + ", " +
         std::to_string(key.n0) + "x" + std::to_string(key.n1) + ")";
}

/// Nodal values on a grid. Values are always finite.
class Field {
 public:
  Field() = default;
  Field(GridKey key, std::vector<double> values) : key_(key), values_(std::move(values)) {
    for (double v : values_) {
      if (!std::isfinite(v)) throw DomainError("Field: non-finite nodal value");
    }
  }

  const GridKey& key() const { return key_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool all_finite() const {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  GridKey key_;
  std::vector<double> values_;
};

/// Exact r-mirror (r -> pi - r) or the antipodal map (r, theta) -> (pi - r, theta + pi).
enum class SymmetryMode { mirror, antipodal };

class FootballGrid {
 public:
  double alpha() const { return alpha_; }
  int n_r() const { return n_r_; }
  int n_theta() const { return n_theta_; }
  double dr() const { return dr_; }
  double dtheta() const { return dtheta_; }
  const std::vector<double>& r_nodes() const { return r_nodes_; }
  const std::vector<double>& theta_nodes() const { return theta_nodes_; }
  const std::vector<double>& quad_weights() const { return weights_; }
  double total_area() const { return total_area_; }
  std::size_t node_count() const { return weights_.size(); }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(n_theta_) +
           static_cast<std::size_t>(j);
  }
  int mirror_ring(int i) const { return n_r_ - 1 - i; }
  double sin_r(int i) const { return sin_r_[static_cast<std::size_t>(i)]; }

  /// sin of the radial face between ring i-1 and ring i, i = 0..n_r; zero at both poles.
  double face_sin(int i) const { return face_sin_[static_cast<std::size_t>(i)]; }

  GridKey key() const { return {GridKind::football, alpha_, 0.0, n_r_, n_theta_}; }

  Field constant(double c) const { return Field(key(), std::vector<double>(node_count(), c)); }

  /// Samples f(r, theta) at the cell centers.
  template <class F>
  Field sample(F&& f) const {
    std::vector<double> v(node_count());
    for (int i = 0; i < n_r_; ++i) {
      for (int j = 0; j < n_theta_; ++j) v[index(i, j)] = f(r_nodes_[i], theta_nodes_[j]);
    }
    return Field(key(), std::move(v));
  }

  friend FootballGrid build_football_grid(double alpha, int n_r, int n_theta);

 private:
  FootballGrid() = default;

  double alpha_ = 0.0;
  int n_r_ = 0;
  int n_theta_ = 0;
  double dr_ = 0.0;
  double dtheta_ = 0.0;
  std::vector<double> r_nodes_;
  std::vector<double> theta_nodes_;
  std::vector<double> sin_r_;
  std::vector<double> face_sin_;
  std::vector<double> weights_;
  double total_area_ = 0.0;
};

inline double compensated_total(const std::vector<double>& xs) {
  double sum = 0.0;
  double comp = 0.0;
  for (double x : xs) {
    const double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + comp;
}

/// Cell-centered grid r_i = (i + 1/2) pi / n_r, theta_j = 2 pi j / n_theta.
inline FootballGrid build_football_grid(double alpha, int n_r, int n_theta) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("football grid: alpha must lie in (0,1)");
  if (n_r < 4 || n_theta < 4) throw DomainError("football grid: n_r and n_theta must be >= 4");
  if (n_r % 2 != 0) throw DomainError("football grid: n_r must be even for the r-mirror pairing");

  FootballGrid g;
  g.alpha_ = alpha;
  g.n_r_ = n_r;
  g.n_theta_ = n_theta;
  g.dr_ = std::numbers::pi / n_r;
  g.dtheta_ = 2.0 * std::numbers::pi / n_theta;

  g.r_nodes_.resize(static_cast<std::size_t>(n_r));
  g.sin_r_.resize(static_cast<std::size_t>(n_r));
  for (int i = 0; i < n_r; ++i) {
    g.r_nodes_[i] = (i + 0.5) * g.dr_;
    g.sin_r_[i] = std::sin(g.r_nodes_[i]);
  }
  // Mirror rings share one sine value so that weights and stencils are exactly r-mirror symmetric.
  for (int i = 0; i < n_r / 2; ++i) g.sin_r_[n_r - 1 - i] = g.sin_r_[i];

  g.face_sin_.assign(static_cast<std::size_t>(n_r) + 1, 0.0);
  for (int i = 1; i < n_r; ++i) g.face_sin_[i] = std::sin(i * g.dr_);
  for (int i = 1; i < n_r / 2; ++i) g.face_sin_[n_r - i] = g.face_sin_[i];

  g.theta_nodes_.resize(static_cast<std::size_t>(n_theta));
  for (int j = 0; j < n_theta; ++j) g.theta_nodes_[j] = j * g.dtheta_;

  g.weights_.resize(static_cast<std::size_t>(n_r) * static_cast<std::size_t>(n_theta));
  for (int i = 0; i < n_r; ++i) {
    const double w = alpha * g.sin_r_[i] * g.dr_ * g.dtheta_;
    for (int j = 0; j < n_theta; ++j) g.weights_[g.index(i, j)] = w;
  }
  g.total_area_ = compensated_total(g.weights_);
  return g;
}

class PlanarGrid {
 public:
  double lx() const { return lx_; }
  double ly() const { return ly_; }
  int n_x() const { return n_x_; }
  int n_y() const { return n_y_; }
  double dx() const { return dx_; }
  double dy() const { return dy_; }
  double x(int i) const { return i * dx_; }
  double y(int j) const { return j * dy_; }
  const std::vector<double>& quad_weights() const { return weights_; }
  const std::vector<bool>& boundary_mask() const { return boundary_; }
  bool is_boundary(std::size_t k) const { return boundary_[k]; }
  double total_area() const { return total_area_; }
  std::size_t node_count() const { return weights_.size(); }
  std::size_t interior_count() const {
    return static_cast<std::size_t>(n_x_ - 2) * static_cast<std::size_t>(n_y_ - 2);
  }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(n_y_) + static_cast<std::size_t>(j);
  }

  GridKey key() const { return {GridKind::planar, lx_, ly_, n_x_, n_y_}; }

  Field constant(double c) const { return Field(key(), std::vector<double>(node_count(), c)); }

  template <class F>
  Field sample(F&& f) const {
    std::vector<double> v(node_count());
    for (int i = 0; i < n_x_; ++i) {
      for (int j = 0; j < n_y_; ++j) v[index(i, j)] = f(x(i), y(j));
    }
    return Field(key(), std::move(v));
  }

  friend PlanarGrid build_planar_grid(double lx, double ly, int n_x, int n_y);

 private:
  PlanarGrid() = default;

  double lx_ = 0.0;
  double ly_ = 0.0;
  int n_x_ = 0;
  int n_y_ = 0;
  double dx_ = 0.0;
  double dy_ = 0.0;
  std::vector<double> weights_;
  std::vector<bool> boundary_;
  double total_area_ = 0.0;
};

/// Node-based rectangle [0,lx] x [0,ly]; quadrature weight dx*dy on interior nodes, 0 on the boundary.
inline PlanarGrid build_planar_grid(double lx, double ly, int n_x, int n_y) {
  if (!(lx > 0.0 && ly > 0.0)) throw DomainError("planar grid: side lengths must be positive");
  if (n_x < 3 || n_y < 3) throw DomainError("planar grid: n_x and n_y must be >= 3");

  PlanarGrid g;
  g.lx_ = lx;
  g.ly_ = ly;
  g.n_x_ = n_x;
  g.n_y_ = n_y;
  g.dx_ = lx / (n_x - 1);
  g.dy_ = ly / (n_y - 1);
  const std::size_t n = static_cast<std::size_t>(n_x) * static_cast<std::size_t>(n_y);
  g.weights_.assign(n, 0.0);
  g.boundary_.assign(n, false);
  for (int i = 0; i < n_x; ++i) {
    for (int j = 0; j < n_y; ++j) {
      const bool b = i == 0 || j == 0 || i == n_x - 1 || j == n_y - 1;
      g.boundary_[g.index(i, j)] = b;
      if (!b) g.weights_[g.index(i, j)] = g.dx_ * g.dy_;
    }
  }
  g.total_area_ = static_cast<double>(g.interior_count()) * g.dx_ * g.dy_;
  return g;
}

template <class G>
concept Grid = requires(const G& g) {
  { g.key() } -> std::same_as<GridKey>;
  { g.quad_weights() } -> std::convertible_to<const std::vector<double>&>;
  { g.total_area() } -> std::convertible_to<double>;
};

template <Grid G>
void check_field(const G& grid, const Field& f) {
  if (!(f.key() == grid.key()) || f.size() != grid.node_count()) {
    throw MismatchError("field on " + describe(f.key()) + " used with grid " + describe(grid.key()));
  }
}

inline void check_same_grid(const Field& a, const Field& b) {
  if (!(a.key() == b.key()) || a.size() != b.size()) {
    throw MismatchError("fields live on different grids: " + describe(a.key()) + " vs " +
                        describe(b.key()));
  }
}

/// Sum_k weights_k * a_k * b_k.
inline double weighted_dot(std::span<const double> weights, std::span<const double> a,
                           std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) s += weights[k] * a[k] * b[k];
  return s;
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

template <Grid G>
double integrate(const G& grid, const Field& f) {
  check_field(grid, f);
  const auto& w = grid.quad_weights();
  CompensatedSum s;
  for (std::size_t k = 0; k < w.size(); ++k) s.add(w[k] * f[k]);
  return s.value();
}

/// Area average (integral divided by the total quadrature area).
template <Grid G>
double average(const G& grid, const Field& f) {
  return integrate(grid, f) / grid.total_area();
}

/// Conservative form (1/sin r) d_r(sin r d_r u) + (1/(alpha sin r)^2) d_theta^2 u with
/// zero radial flux through both pole faces.
inline Field apply_laplacian(const FootballGrid& grid, const Field& u) {
  check_field(grid, u);
  const int nr = grid.n_r();
  const int nt = grid.n_theta();
  const double dr2 = grid.dr() * grid.dr();
  const double a2dt2 = grid.alpha() * grid.alpha() * grid.dtheta() * grid.dtheta();
  std::vector<double> out(u.size());
  for (int i = 0; i < nr; ++i) {
    const double sr = grid.sin_r(i);
    const double radial_scale = 1.0 / (dr2 * sr);
    const double angular_scale = 1.0 / (a2dt2 * sr * sr);
    const double sm = grid.face_sin(i);
    const double sp = grid.face_sin(i + 1);
    for (int j = 0; j < nt; ++j) {
      const double c = u[grid.index(i, j)];
      double flux = 0.0;
      if (i + 1 < nr) flux += sp * (u[grid.index(i + 1, j)] - c);
      if (i > 0) flux -= sm * (c - u[grid.index(i - 1, j)]);
      const double left = u[grid.index(i, (j + nt - 1) % nt)];
      const double right = u[grid.index(i, (j + 1) % nt)];
      out[grid.index(i, j)] = radial_scale * flux + angular_scale * ((right - c) - (c - left));
    }
  }
  return Field(u.key(), std::move(out));
}

/// 5-point Laplacian on interior nodes; boundary entries are zero.
inline Field apply_laplacian(const PlanarGrid& grid, const Field& v) {
  check_field(grid, v);
  const double idx2 = 1.0 / (grid.dx() * grid.dx());
  const double idy2 = 1.0 / (grid.dy() * grid.dy());
  std::vector<double> out(v.size(), 0.0);
  for (int i = 1; i + 1 < grid.n_x(); ++i) {
    for (int j = 1; j + 1 < grid.n_y(); ++j) {
      const double c = v[grid.index(i, j)];
      out[grid.index(i, j)] =
          idx2 * ((v[grid.index(i + 1, j)] - c) - (c - v[grid.index(i - 1, j)])) +
          idy2 * ((v[grid.index(i, j + 1)] - c) - (c - v[grid.index(i, j - 1)]));
    }
  }
  return Field(v.key(), std::move(out));
}

/// Integral of |grad u|^2 as a face-flux sum. Equals -integrate(u * laplacian(u)).
inline double dirichlet_energy(const FootballGrid& grid, const Field& u) {
  check_field(grid, u);
  const int nr = grid.n_r();
  const int nt = grid.n_theta();
  const double radial_coef = grid.alpha() * grid.dtheta() / grid.dr();
  double e = 0.0;
  for (int i = 0; i + 1 < nr; ++i) {
    const double c = radial_coef * grid.face_sin(i + 1);
    for (int j = 0; j < nt; ++j) {
      const double d = u[grid.index(i + 1, j)] - u[grid.index(i, j)];
      e += c * d * d;
    }
  }
  for (int i = 0; i < nr; ++i) {
    const double c = grid.dr() / (grid.alpha() * grid.sin_r(i) * grid.dtheta());
    for (int j = 0; j < nt; ++j) {
      const double d = u[grid.index(i, (j + 1) % nt)] - u[grid.index(i, j)];
      e += c * d * d;
    }
  }
  return e;
}

/// Edge sum over every stencil edge touching an interior node. For fields vanishing on the
/// boundary it equals -integrate(v * laplacian(v)).
inline double dirichlet_energy(const PlanarGrid& grid, const Field& v) {
  check_field(grid, v);
  const double cx = grid.dy() / grid.dx();
  const double cy = grid.dx() / grid.dy();
  double e = 0.0;
  for (int i = 0; i + 1 < grid.n_x(); ++i) {
    for (int j = 1; j + 1 < grid.n_y(); ++j) {
      const double d = v[grid.index(i + 1, j)] - v[grid.index(i, j)];
      e += cx * d * d;
    }
  }
  for (int i = 1; i + 1 < grid.n_x(); ++i) {
    for (int j = 0; j + 1 < grid.n_y(); ++j) {
      const double d = v[grid.index(i, j + 1)] - v[grid.index(i, j)];
      e += cy * d * d;
    }
  }
  return e;
}

/// Symmetric bilinear form behind dirichlet_energy: D(a) = form(a, a), and
/// D(b) - D(a) = form(b - a, b + a) without cancellation.
inline double dirichlet_form(const FootballGrid& grid, const Field& a, const Field& b) {
  check_field(grid, a);
  check_field(grid, b);
  const int nr = grid.n_r();
  const int nt = grid.n_theta();
  const double radial_coef = grid.alpha() * grid.dtheta() / grid.dr();
  double e = 0.0;
  for (int i = 0; i + 1 < nr; ++i) {
    const double c = radial_coef * grid.face_sin(i + 1);
    for (int j = 0; j < nt; ++j) {
      e += c * (a[grid.index(i + 1, j)] - a[grid.index(i, j)]) *
           (b[grid.index(i + 1, j)] - b[grid.index(i, j)]);
    }
  }
  for (int i = 0; i < nr; ++i) {
    const double c = grid.dr() / (grid.alpha() * grid.sin_r(i) * grid.dtheta());
    for (int j = 0; j < nt; ++j) {
      const std::size_t k = grid.index(i, j);
      const std::size_t kn = grid.index(i, (j + 1) % nt);
      e += c * (a[kn] - a[k]) * (b[kn] - b[k]);
    }
  }
  return e;
}

inline double dirichlet_form(const PlanarGrid& grid, const Field& a, const Field& b) {
  check_field(grid, a);
  check_field(grid, b);
  const double cx = grid.dy() / grid.dx();
  const double cy = grid.dx() / grid.dy();
  double e = 0.0;
  for (int i = 0; i + 1 < grid.n_x(); ++i) {
    for (int j = 1; j + 1 < grid.n_y(); ++j) {
      const std::size_t k = grid.index(i, j);
      const std::size_t kn = grid.index(i + 1, j);
      e += cx * (a[kn] - a[k]) * (b[kn] - b[k]);
    }
  }
  for (int i = 1; i + 1 < grid.n_x(); ++i) {
    for (int j = 0; j + 1 < grid.n_y(); ++j) {
      const std::size_t k = grid.index(i, j);
      const std::size_t kn = grid.index(i, j + 1);
      e += cy * (a[kn] - a[k]) * (b[kn] - b[k]);
    }
  }
  return e;
}

/// Scalar curvature of the background metric, -2 f''/f for the warping function
/// f(r) = alpha sin r, with f'' taken by the same second difference as the radial stencil.
/// Converges to 2 at second order in dr.
inline Field background_curvature(const FootballGrid& grid) {
  const double dr = grid.dr();
  return grid.sample([&](double r, double) {
    const double f = grid.alpha() * std::sin(r);
    const double fp = grid.alpha() * std::sin(r + dr);
    const double fm = grid.alpha() * std::sin(r - dr);
    return -2.0 * ((fp - f) - (f - fm)) / (dr * dr * f);
  });
}

/// R(e^{2u} g0) = e^{-2u} (R(g0) - 2 laplacian(u)).
inline Field scalar_curvature(const FootballGrid& grid, const Field& u) {
  check_field(grid, u);
  const Field lap = apply_laplacian(grid, u);
  const Field r0 = background_curvature(grid);
  std::vector<double> out(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    out[k] = std::exp(-2.0 * u[k]) * (r0[k] - 2.0 * lap[k]);
  }
  return Field(u.key(), std::move(out));
}

template <Grid G>
Field mean_zero_project(const G& grid, const Field& f) {
  const double mean = average(grid, f);
  Field out = f;
  for (double& v : out.values()) v -= mean;
  return out;
}

inline std::size_t symmetric_partner(const FootballGrid& grid, int i, int j, SymmetryMode mode) {
  const int ip = grid.mirror_ring(i);
  const int jp = mode == SymmetryMode::mirror ? j : (j + grid.n_theta() / 2) % grid.n_theta();
  return grid.index(ip, jp);
}

/// Average of a field and its reflection; fixed points are exactly the symmetric fields.
inline Field symmetrize(const FootballGrid& grid, const Field& f,
                        SymmetryMode mode = SymmetryMode::mirror) {
  check_field(grid, f);
  if (grid.n_r() % 2 != 0) throw DomainError("symmetrize: n_r must be even");
  if (mode == SymmetryMode::antipodal && grid.n_theta() % 2 != 0) {
    throw DomainError("symmetrize: antipodal symmetry needs even n_theta");
  }
  Field out = f;
  for (int i = 0; i < grid.n_r() / 2; ++i) {
    for (int j = 0; j < grid.n_theta(); ++j) {
      const std::size_t a = grid.index(i, j);
      const std::size_t b = symmetric_partner(grid, i, j, mode);
      const double m = 0.5 * (f[a] + f[b]);
      out[a] = m;
      out[b] = m;
    }
  }
  return out;
}

/// max |f - symmetrize(f)|.
inline double asymmetry(const FootballGrid& grid, const Field& f,
                        SymmetryMode mode = SymmetryMode::mirror) {
  const Field s = symmetrize(grid, f, mode);
  double m = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) m = std::max(m, std::abs(f[k] - s[k]));
  return m;
}

}  // namespace morseflow
