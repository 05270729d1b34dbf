#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <functional>
#include <string>

#include "morseflow/functionals.hpp"
#include "morseflow/geometry.hpp"

namespace morseflow {

struct MinimizeOptions {
  int max_iters = 5000;
  double grad_tol = 1e-9;  // in the functional's inner-product norm
  double armijo_c = 1e-4;
  double backtrack_factor = 0.5;
  double initial_step = 1.0;

  void validate() const {
    if (max_iters <= 0) throw DomainError("minimize: max_iters must be positive");
    if (!(grad_tol > 0.0)) throw DomainError("minimize: grad_tol must be positive");
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw DomainError("minimize: armijo_c must lie in (0,1)");
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) {
      throw DomainError("minimize: backtrack_factor must lie in (0,1)");
    }
    if (!(initial_step > 0.0)) throw DomainError("minimize: initial_step must be positive");
  }
};

struct StepResult {
  Field minimizer;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  double el_residual = 0.0;
  bool converged = false;
  std::string diagnostic;  // set when not converged
};

/// Called with (iteration, iterate, functional value) for the warm start and every accepted iterate.
using IterationObserver = std::function<void(int, const Field&, double)>;

inline constexpr double kMinLineSearchStep = 1e-14;

namespace detail {
inline std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}
}  // namespace detail

/// Projected gradient descent with Armijo backtracking. The trial step of each iteration is the
/// Barzilai-Borwein estimate from the previous pair (initial_step on the first iteration); the
/// Armijo test is always taken against the current value, so accepted values strictly decrease.
/// Only the warm start is projected. Later iterates move along the projected gradient.
template <StepFunctional F>
StepResult minimize(const F& f, const Field& warm_start, const MinimizeOptions& options = {},
                    const IterationObserver& observer = {}) {
  options.validate();
  f.check_admissible(warm_start);
  const auto weights = f.inner_weights();

  Field u = f.project(warm_start);
  double value = f.eval(u);
  Field g = f.grad(u);
  double gnorm = functional_norm(f, g);
  if (observer) observer(0, u, value);

  StepResult result;
  double trial = options.initial_step;
  int iter = 0;
  for (; iter < options.max_iters && !(gnorm <= options.grad_tol); ++iter) {
    double step = trial;
    bool accepted = false;
    Field candidate;
    double decrease = 0.0;
    while (step >= kMinLineSearchStep) {
      candidate = u;
      for (std::size_t k = 0; k < u.size(); ++k) candidate[k] = u[k] - step * g[k];
      decrease = f.difference(u, candidate);
      if (std::isfinite(decrease) && decrease <= -options.armijo_c * step * gnorm * gnorm) {
        accepted = true;
        break;
      }
      step *= options.backtrack_factor;
    }
    if (!accepted) {
      result.diagnostic = "line search failed at iteration " + std::to_string(iter) +
                          " (step below 1e-14, grad norm " + detail::sci(gnorm) + ")";
      break;
    }

    Field g_next = f.grad(candidate);
    double ss = 0.0;
    double sy = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double s = candidate[k] - u[k];
      const double y = g_next[k] - g[k];
      ss += weights[k] * s * s;
      sy += weights[k] * s * y;
    }
    trial = (sy > 0.0 && ss > 0.0) ? std::clamp(ss / sy, 1e-12, 1e12) : options.initial_step;

    u = std::move(candidate);
    value += decrease;
    g = std::move(g_next);
    gnorm = functional_norm(f, g);
    if (observer) observer(iter + 1, u, value);
  }

  result.value = f.eval(u);
  result.grad_norm = gnorm;
  result.iterations = iter;
  result.converged = gnorm <= options.grad_tol;
  if (!result.converged && result.diagnostic.empty()) {
    result.diagnostic = "max_iters (" + std::to_string(options.max_iters) +
                        ") reached with grad norm " + detail::sci(gnorm);
  }
  result.el_residual = f.el_residual(u);
  result.minimizer = std::move(u);
  return result;
}

template <StepFunctional F>
double el_residual(const F& f, const Field& u) {
  return f.el_residual(u);
}

/// Max-norm bound on the Euler-Lagrange residual implied by a converged gradient norm:
/// |g|_inf <= |g|_w / sqrt(min w) <= 10 tol / min w whenever min w <= 1.
template <StepFunctional F>
double certified_el_bound(const F& f, double grad_tol) {
  double wmin = std::numeric_limits<double>::infinity();
  for (double w : f.inner_weights()) {
    if (w > 0.0) wmin = std::min(wmin, w);
  }
  return 10.0 * grad_tol / wmin;
}

}  // namespace morseflow
