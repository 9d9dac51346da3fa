#pragma once

// Generator actions, carre du champ operators, the classical-solution residual and the
// statistical martingale-problem tests.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "pseudopde/core.hpp"
#include "pseudopde/error.hpp"
#include "pseudopde/expr.hpp"
#include "pseudopde/parallel.hpp"
#include "pseudopde/problem.hpp"
#include "pseudopde/processes.hpp"

namespace pseudopde {

/// A function of (t, x) with optional closed-form partials. Missing partials fall back
/// to central differences with step fd_scale * (1 + |coordinate|).
struct SmoothTestFunction {
  using Value = std::function<double(double, std::span<const double>)>;
  using Vector = std::function<void(double, std::span<const double>, std::span<double>)>;

  std::string name;
  std::size_t dim = 1;
  Value value;
  Value time_derivative;
  Vector gradient;
  Vector hessian;  ///< d x d, row-major
  double fd_scale = 1e-4;

  double operator()(double t, std::span<const double> x) const { return value(t, x); }

  double step(double v) const { return fd_scale * (1.0 + std::fabs(v)); }

  double dt(double t, std::span<const double> x) const {
    if (time_derivative) return time_derivative(t, x);
    const double h = step(t);
    return (value(t + h, x) - value(t - h, x)) / (2.0 * h);
  }

  void grad(double t, std::span<const double> x, std::span<double> out) const {
    if (gradient) return gradient(t, x, out);
    std::vector<double> p(x.begin(), x.end());
    for (std::size_t k = 0; k < dim; ++k) {
      const double h = step(x[k]);
      p[k] = x[k] + h;
      const double fp = value(t, p);
      p[k] = x[k] - h;
      const double fm = value(t, p);
      p[k] = x[k];
      out[k] = (fp - fm) / (2.0 * h);
    }
  }

  void hess(double t, std::span<const double> x, std::span<double> out) const {
    if (hessian) return hessian(t, x, out);
    std::vector<double> p(x.begin(), x.end());
    const double f0 = value(t, x);
    for (std::size_t i = 0; i < dim; ++i) {
      const double hi = step(x[i]);
      p[i] = x[i] + hi;
      const double fp = value(t, p);
      p[i] = x[i] - hi;
      const double fm = value(t, p);
      p[i] = x[i];
      out[i * dim + i] = (fp - 2.0 * f0 + fm) / (hi * hi);
      for (std::size_t j = 0; j < i; ++j) {
        const double hj = step(x[j]);
        auto at = [&](double si, double sj) {
          p[i] = x[i] + si * hi;
          p[j] = x[j] + sj * hj;
          const double v = value(t, p);
          p[i] = x[i];
          p[j] = x[j];
          return v;
        };
        const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hi * hj);
        out[i * dim + j] = v;
        out[j * dim + i] = v;
      }
    }
  }

  double dx(double t, std::span<const double> x) const {
    double g = 0.0;
    grad(t, x, std::span(&g, 1));
    return g;
  }
  double dxx(double t, std::span<const double> x) const {
    double h = 0.0;
    hess(t, x, std::span(&h, 1));
    return h;
  }

  /// Same value, all partials by finite differences.
  SmoothTestFunction finite_difference() const {
    SmoothTestFunction f = *this;
    f.time_derivative = nullptr;
    f.gradient = nullptr;
    f.hessian = nullptr;
    return f;
  }

  static SmoothTestFunction constant(double c, std::size_t d = 1) {
    SmoothTestFunction f;
    f.name = "const";
    f.dim = d;
    f.value = [c](double, std::span<const double>) { return c; };
    f.time_derivative = [](double, std::span<const double>) { return 0.0; };
    f.gradient = [](double, std::span<const double>, std::span<double> o) { std::fill(o.begin(), o.end(), 0.0); };
    f.hessian = f.gradient;
    return f;
  }

  /// x1^n (1-d).
  static SmoothTestFunction power(int n) {
    SmoothTestFunction f;
    f.name = "x^" + std::to_string(n);
    f.value = [n](double, std::span<const double> x) { return std::pow(x[0], n); };
    f.time_derivative = [](double, std::span<const double>) { return 0.0; };
    f.gradient = [n](double, std::span<const double> x, std::span<double> o) {
      o[0] = n == 0 ? 0.0 : n * std::pow(x[0], n - 1);
    };
    f.hessian = [n](double, std::span<const double> x, std::span<double> o) {
      o[0] = n < 2 ? 0.0 : n * (n - 1) * std::pow(x[0], n - 2);
    };
    return f;
  }

  /// cos(k x1 + phase) (1-d).
  static SmoothTestFunction trig(double k, double phase = 0.0) {
    SmoothTestFunction f;
    f.name = "cos(" + std::to_string(k) + "x+" + std::to_string(phase) + ")";
    f.value = [k, phase](double, std::span<const double> x) { return std::cos(k * x[0] + phase); };
    f.time_derivative = [](double, std::span<const double>) { return 0.0; };
    f.gradient = [k, phase](double, std::span<const double> x, std::span<double> o) {
      o[0] = -k * std::sin(k * x[0] + phase);
    };
    f.hessian = [k, phase](double, std::span<const double> x, std::span<double> o) {
      o[0] = -k * k * std::cos(k * x[0] + phase);
    };
    return f;
  }

  /// exp(-x1^2 / width) (1-d).
  static SmoothTestFunction gaussian_bump(double width = 1.0) {
    SmoothTestFunction f;
    f.name = "bump(" + std::to_string(width) + ")";
    f.value = [width](double, std::span<const double> x) { return std::exp(-x[0] * x[0] / width); };
    f.time_derivative = [](double, std::span<const double>) { return 0.0; };
    f.gradient = [width](double, std::span<const double> x, std::span<double> o) {
      o[0] = -2.0 * x[0] / width * std::exp(-x[0] * x[0] / width);
    };
    f.hessian = [width](double, std::span<const double> x, std::span<double> o) {
      const double e = std::exp(-x[0] * x[0] / width);
      o[0] = (4.0 * x[0] * x[0] / (width * width) - 2.0 / width) * e;
    };
    return f;
  }

  /// Value from an expression in (t, x1..xd); partials by finite differences.
  static SmoothTestFunction from_expression(const Expression& e, std::size_t d) {
    SmoothTestFunction f;
    f.name = e.to_string();
    f.dim = d;
    f.value = [e](double t, std::span<const double> x) { return e(t, x); };
    return f;
  }
};

/// phi * psi, with product-rule partials when both factors have closed forms.
inline SmoothTestFunction product(const SmoothTestFunction& a, const SmoothTestFunction& b) {
  SmoothTestFunction f;
  f.name = a.name + "*" + b.name;
  f.dim = a.dim;
  f.fd_scale = std::max(a.fd_scale, b.fd_scale);
  f.value = [a, b](double t, std::span<const double> x) { return a(t, x) * b(t, x); };
  if (a.time_derivative && b.time_derivative)
    f.time_derivative = [a, b](double t, std::span<const double> x) { return a.dt(t, x) * b(t, x) + a(t, x) * b.dt(t, x); };
  if (a.gradient && b.gradient) {
    f.gradient = [a, b](double t, std::span<const double> x, std::span<double> o) {
      std::vector<double> ga(a.dim), gb(a.dim);
      a.grad(t, x, ga);
      b.grad(t, x, gb);
      const double va = a(t, x), vb = b(t, x);
      for (std::size_t k = 0; k < a.dim; ++k) o[k] = ga[k] * vb + va * gb[k];
    };
  }
  if (a.gradient && b.gradient && a.hessian && b.hessian) {
    f.hessian = [a, b](double t, std::span<const double> x, std::span<double> o) {
      const std::size_t d = a.dim;
      std::vector<double> ga(d), gb(d), ha(d * d), hb(d * d);
      a.grad(t, x, ga);
      b.grad(t, x, gb);
      a.hess(t, x, ha);
      b.hess(t, x, hb);
      const double va = a(t, x), vb = b(t, x);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          o[i * d + j] = ha[i * d + j] * vb + ga[i] * gb[j] + ga[j] * gb[i] + va * hb[i * d + j];
    };
  }
  return f;
}

/// psi(h(x)) for a 1-d psi and the h-transform of a distributional-drift generator.
/// Only the value is exposed: h is a table, so partials in x are not smooth.
inline SmoothTestFunction compose_h(const SmoothTestFunction& psi, const HTransform& tr) {
  SmoothTestFunction f;
  f.name = psi.name + "(h)";
  f.value = [psi, tr](double t, std::span<const double> x) {
    const double y = tr.h(x[0]);
    return psi(t, std::span(&y, 1));
  };
  return f;
}

/// c_alpha = alpha 2^{alpha-1} Gamma((1+alpha)/2) / (sqrt(pi) Gamma(1-alpha/2)), the d = 1
/// constant for which c_alpha int (phi(x+y)-phi(x))/|y|^{1+alpha} dy has symbol -|xi|^alpha.
inline double fractional_constant(double alpha) {
  if (!(alpha > 0.0 && alpha < 2.0)) throw InputError("fractional: alpha must lie in (0, 2)");
  return alpha * std::pow(2.0, alpha - 1.0) * boost::math::tgamma((1.0 + alpha) / 2.0) /
         (std::sqrt(std::numbers::pi) * boost::math::tgamma(1.0 - alpha / 2.0));
}

struct FractionalQuadrature {
  double cutoff = 50.0;        ///< R
  double tolerance = 1e-10;    ///< relative tolerance of each quadrature piece
  std::size_t max_depth = 15;  ///< Gauss-Kronrod bisection depth
};

/// A quadrature value with its reported truncation remainder bound.
struct QuadratureValue {
  double value = 0.0;
  double tail = 0.0;             ///< contribution beyond R from constant extension
  double remainder_bound = 0.0;  ///< bound on |true tail - tail|
};

namespace detail {

// int_0^inf k(y) / y^{1+alpha} dy with k(y) = O(y^2) at 0. Below delta the kernel is
// cancellation noise, so k is replaced by its y^2 term k(delta) (y / delta)^2; the error
// is O(delta^{4-alpha}). Gauss-Kronrod on [delta, 1] and [1, R]; beyond R, k is frozen at k(R).
template <class K>
QuadratureValue singular_integral(K&& k, double alpha, const FractionalQuadrature& q, double k_sup) {
  constexpr double delta = 1e-3;
  auto integrand = [&](double y) {
    const double num = k(y);
    if (num == 0.0) return 0.0;
    return num / std::pow(y, 1.0 + alpha);
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  const double head = k(delta) * std::pow(delta, -alpha) / (2.0 - alpha);
  const double inner = GK::integrate(integrand, delta, 1.0, static_cast<unsigned>(q.max_depth), q.tolerance);
  const double outer = GK::integrate(integrand, 1.0, q.cutoff, static_cast<unsigned>(q.max_depth), q.tolerance);
  QuadratureValue out;
  const double tail_weight = std::pow(q.cutoff, -alpha) / alpha;  // int_R^inf y^{-1-alpha}
  out.tail = k(q.cutoff) * tail_weight;
  out.remainder_bound = 2.0 * k_sup * tail_weight;
  out.value = head + inner + outer + out.tail;
  return out;
}

// E[F(J)] for J with iid coordinates from the law (symmetric).
template <class F>
double jump_expectation(const JumpLaw& law, std::size_t d, F&& fn) {
  std::vector<double> y(d);
  if (law.kind == JumpLaw::Kind::TwoPoint) {
    const std::size_t patterns = std::size_t{1} << d;
    double acc = 0.0;
    for (std::size_t m = 0; m < patterns; ++m) {
      for (std::size_t k = 0; k < d; ++k) y[k] = ((m >> k) & 1U) ? law.param : -law.param;
      acc += fn(std::span<const double>(y));
    }
    return acc / static_cast<double>(patterns);
  }
  if (d != 1) throw UnsupportedError("jump expectation: continuous jump laws need d = 1");
  auto density = [&](double v) {
    if (law.kind == JumpLaw::Kind::Gaussian)
      return std::exp(-0.5 * v * v / (law.param * law.param)) / (law.param * std::sqrt(2.0 * std::numbers::pi));
    return std::exp(-std::fabs(v) / law.param) / (2.0 * law.param);
  };
  auto g = [&](double v) {
    const double p = density(v);
    if (p == 0.0) return 0.0;
    y[0] = v;
    return fn(std::span<const double>(y)) * p;
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double inf = std::numeric_limits<double>::infinity();
  return GK::integrate(g, -inf, 0.0, 15, 1e-12) + GK::integrate(g, 0.0, inf, 15, 1e-12);
}

inline void diffusion_matrix(const Diffusion& g, double t, std::span<const double> x, std::vector<double>& mu,
                             std::vector<double>& a) {
  const std::size_t d = g.dimension();
  mu.assign(d, 0.0);
  a.assign(d * d, 0.0);
  std::vector<double> s(d * d);
  for (std::size_t i = 0; i < d; ++i) mu[i] = g.mu[i](t, x);
  for (std::size_t i = 0; i < d * d; ++i) s[i] = g.sigma[i](t, x);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += s[i * d + k] * s[j * d + k];
      a[i * d + j] = acc;
    }
}

inline double table_slope(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t k = it == xs.begin() ? 0 : static_cast<std::size_t>(it - xs.begin()) - 1;
  k = std::min(k, xs.size() - 2);
  return (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
}

}  // namespace detail

/// -c (-Delta)^{alpha/2} phi (x) in d = 1 by the singular-integral representation.
inline QuadratureValue fractional_action(const SmoothTestFunction& phi, double alpha, double scale, double t,
                                         std::span<const double> x, const FractionalQuadrature& q = {}) {
  const double ca = fractional_constant(alpha);
  const double f0 = phi(t, x);
  double sup = 0.0;
  auto k = [&](double y) {
    const double xp = x[0] + y, xm = x[0] - y;
    const double v = phi(t, std::span(&xp, 1)) + phi(t, std::span(&xm, 1)) - 2.0 * f0;
    sup = std::max(sup, std::fabs(v));
    return v;
  };
  QuadratureValue r = detail::singular_integral(k, alpha, q, 0.0);
  r.remainder_bound = 2.0 * sup * std::pow(q.cutoff, -alpha) / alpha;
  r.value *= ca * scale;
  r.tail *= ca * scale;
  r.remainder_bound *= ca * scale;
  return r;
}

/// a(phi)(t, x): d/dt phi plus the spatial generator of `gen` (per unit of V; with a
/// non-identity clock, time-dependent phi must carry its own dt/dV factor).
inline double generator_action(const GeneratorSpec& gen, const SmoothTestFunction& phi, double t,
                               std::span<const double> x) {
  return std::visit(
      [&](const auto& g) -> double {
        using T = std::decay_t<decltype(g)>;
        const std::size_t d = x.size();
        double out = phi.dt(t, x);
        if constexpr (std::is_same_v<T, Diffusion> || std::is_same_v<T, JumpDiffusion>) {
          const Diffusion* diff;
          if constexpr (std::is_same_v<T, Diffusion>)
            diff = &g;
          else
            diff = &g.diffusion;
          std::vector<double> mu, a, grad(d), hess(d * d);
          detail::diffusion_matrix(*diff, t, x, mu, a);
          phi.grad(t, x, grad);
          phi.hess(t, x, hess);
          for (std::size_t i = 0; i < d; ++i) {
            out += mu[i] * grad[i];
            for (std::size_t j = 0; j < d; ++j) out += 0.5 * a[i * d + j] * hess[i * d + j];
          }
          if constexpr (std::is_same_v<T, JumpDiffusion>) {
            if (g.rate > 0.0) {
              const double f0 = phi(t, x);
              std::vector<double> p(d);
              out += g.rate * detail::jump_expectation(g.law, d, [&](std::span<const double> y) {
                for (std::size_t k = 0; k < d; ++k) p[k] = x[k] + y[k];
                return phi(t, p) - f0;
              });
            }
          }
        } else if constexpr (std::is_same_v<T, Stable>) {
          if (g.alpha == 2.0) {
            out += g.scale * phi.dxx(t, x);
          } else {
            out += fractional_action(phi, g.alpha, g.scale, t, x).value;
          }
        } else {
          // smooth-b case: 1/2 sigma^2 phi'' + b' phi'
          const double s = g.sigma(t, x);
          out += 0.5 * s * s * phi.dxx(t, x) + detail::table_slope(g.table_x, g.table_b, x[0]) * phi.dx(t, x);
        }
        return out;
      },
      gen);
}

/// Gamma(phi, psi) for local generators and finite-activity jump kernels:
/// sum_ij alpha_ij d_i phi d_j psi + rate * E[(phi(x+J)-phi)(psi(x+J)-psi)].
inline double gamma_local(const GeneratorSpec& gen, const SmoothTestFunction& phi, const SmoothTestFunction& psi,
                          double t, std::span<const double> x) {
  return std::visit(
      [&](const auto& g) -> double {
        using T = std::decay_t<decltype(g)>;
        const std::size_t d = x.size();
        if constexpr (std::is_same_v<T, Stable>) {
          if (g.alpha != 2.0)
            throw UnsupportedError("gamma_local: the stable kernel is not finite-activity; use gamma_fractional");
          return 2.0 * g.scale * phi.dx(t, x) * psi.dx(t, x);
        } else if constexpr (std::is_same_v<T, DistributionalDrift>) {
          const double s = g.sigma(t, x);
          return s * s * phi.dx(t, x) * psi.dx(t, x);
        } else {
          const Diffusion* diff;
          if constexpr (std::is_same_v<T, Diffusion>)
            diff = &g;
          else
            diff = &g.diffusion;
          std::vector<double> mu, a, gp(d), gq(d);
          detail::diffusion_matrix(*diff, t, x, mu, a);
          phi.grad(t, x, gp);
          psi.grad(t, x, gq);
          double out = 0.0;
          for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) out += a[i * d + j] * gp[i] * gq[j];
          if constexpr (std::is_same_v<T, JumpDiffusion>) {
            if (g.rate > 0.0) {
              const double p0 = phi(t, x), q0 = psi(t, x);
              std::vector<double> p(d);
              out += g.rate * detail::jump_expectation(g.law, d, [&](std::span<const double> y) {
                for (std::size_t k = 0; k < d; ++k) p[k] = x[k] + y[k];
                return (phi(t, p) - p0) * (psi(t, p) - q0);
              });
            }
          }
          return out;
        }
      },
      gen);
}

/// Gamma^alpha(phi, phi)(x) = scale * c_alpha * int (phi(x+y) - phi(x))^2 / |y|^{1+alpha} dy, d = 1.
inline QuadratureValue gamma_fractional(const SmoothTestFunction& phi, double alpha, double scale, double t,
                                        std::span<const double> x, const FractionalQuadrature& q = {}) {
  const double ca = fractional_constant(alpha);
  const double f0 = phi(t, x);
  double sup = std::fabs(f0);
  auto k = [&](double y) {
    const double xp = x[0] + y, xm = x[0] - y;
    const double a = phi(t, std::span(&xp, 1)), b = phi(t, std::span(&xm, 1));
    sup = std::max({sup, std::fabs(a), std::fabs(b)});
    return (a - f0) * (a - f0) + (b - f0) * (b - f0);
  };
  QuadratureValue r = detail::singular_integral(k, alpha, q, 0.0);
  // each squared difference is at most (2 sup|phi|)^2
  r.remainder_bound = 8.0 * sup * sup * std::pow(q.cutoff, -alpha) / alpha;
  r.value *= ca * scale;
  r.tail *= ca * scale;
  r.remainder_bound *= ca * scale;
  return r;
}

/// Gamma(phi, psi) = a(phi psi) - phi a(psi) - psi a(phi) for any generator action
/// `a(f, t, x)`.
template <class Action>
  requires std::invocable<Action&, const SmoothTestFunction&, double, std::span<const double>>
double gamma_from_generator(Action&& a, const SmoothTestFunction& phi, const SmoothTestFunction& psi, double t,
                            std::span<const double> x) {
  const SmoothTestFunction pq = product(phi, psi);
  return a(pq, t, x) - phi(t, x) * a(psi, t, x) - psi(t, x) * a(phi, t, x);
}

/// Gamma through the generator of `gen`.
inline double gamma_from_generator(const GeneratorSpec& gen, const SmoothTestFunction& phi,
                                   const SmoothTestFunction& psi, double t, std::span<const double> x) {
  return gamma_from_generator(
      [&gen](const SmoothTestFunction& f, double tt, std::span<const double> xx) {
        return generator_action(gen, f, tt, xx);
      },
      phi, psi, t, x);
}

/// Gamma(phi, phi) appropriate to the generator: local formula, or the singular integral
/// for stable alpha < 2.
inline double gamma_auto(const GeneratorSpec& gen, const SmoothTestFunction& phi, double t, std::span<const double> x) {
  if (const auto* s = std::get_if<Stable>(&gen); s && s->alpha < 2.0)
    return gamma_fractional(phi, s->alpha, s->scale, t, x).value;
  return gamma_local(gen, phi, phi, t, x);
}

/// a(u) + f(t, x, u, sqrt(Gamma(u,u))) on every grid cell. `gamma(u, t, x)` returns
/// Gamma(u,u); values below -tolerance raise NumericalError.
template <class GammaImpl>
ScalarField classical_residual(const SmoothTestFunction& u, const ProblemSpec& problem, GammaImpl&& gamma,
                               const GridPtr& grid, double tolerance = 1e-8) {
  const std::size_t nodes = grid->node_count();
  std::vector<double> out(grid->cell_count());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const std::size_t i = c / nodes;
    const double t = grid->time(i);
    const std::vector<double> x = grid->node_point(c % nodes);
    const double g = gamma(u, t, std::span<const double>(x));
    if (g < -tolerance)
      throw NumericalError("classical_residual: Gamma(u,u) = " + std::to_string(g) + " < 0 at cell " +
                           std::to_string(c) + "; the gamma implementation is broken");
    const double uv = u(t, x);
    out[c] = generator_action(problem.generator, u, t, x) + problem.driver(t, x, uv, std::sqrt(std::max(g, 0.0)));
  }
  return ScalarField(grid, std::move(out));
}

/// Per-step regression z-scores of a statistic on {1, x_k, x_k^2}.
struct StepZ {
  std::size_t step = 0;
  double time = 0.0;
  std::vector<double> z;  ///< one per retained basis function
  double mean = 0.0;      ///< sample mean of the statistic
};

struct MartingaleReport {
  std::vector<StepZ> steps;
  double max_abs_z = 0.0;
  std::size_t worst_step = 0;
};

namespace detail {

// OLS of y on {1, z_k, z_k^2} (z standardized by median/IQR and clamped at 4) with
// heteroskedasticity-robust (HC0) standard errors; columns that make the design rank
// deficient are dropped.
inline std::vector<double> robust_z_scores(std::span<const double> pts, std::size_t d, std::span<const double> y) {
  const std::size_t n = y.size();
  std::vector<std::vector<double>> cols;
  cols.emplace_back(n, 1.0);
  std::vector<double> tmp(n);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < n; ++i) tmp[i] = pts[i * d + k];
    std::vector<double> sorted = tmp;
    std::sort(sorted.begin(), sorted.end());
    const double range = sorted.back() - sorted.front();
    if (!(range > 0.0)) continue;
    auto q = [&](double p) {
      const double pos = p * static_cast<double>(n - 1);
      const auto lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, n - 1);
      return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    };
    const double med = q(0.5);
    double sc = (q(0.75) - q(0.25)) / 1.349;
    if (!(sc > 0.0)) sc = range;
    std::vector<double> c1(n), c2(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = std::clamp((tmp[i] - med) / sc, -4.0, 4.0);
      c1[i] = z;
      c2[i] = z * z;
    }
    cols.push_back(std::move(c1));
    cols.push_back(std::move(c2));
  }
  // drop columns until full rank
  Eigen::MatrixXd X;
  while (true) {
    X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t i = 0; i < n; ++i) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[j][i];
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() == X.cols() || cols.size() == 1) break;
    cols.pop_back();
  }
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(n));
  const Eigen::MatrixXd xtx = X.transpose() * X;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  const Eigen::VectorXd beta = ldlt.solve(X.transpose() * yv);
  const Eigen::VectorXd e = yv - X * beta;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) meat.noalias() += (e(i) * e(i)) * X.row(i).transpose() * X.row(i);
  const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
  const Eigen::MatrixXd cov = inv * meat * inv;
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::fabs(y[i]));
  std::vector<double> z(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double se = std::sqrt(std::max(cov(j, j), 0.0));
    const double b = beta(j);
    if (se > 0.0)
      z[static_cast<std::size_t>(j)] = b / se;
    else
      z[static_cast<std::size_t>(j)] = std::fabs(b) <= 1e-12 * (1.0 + scale) ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return z;
}

template <class Stat>
MartingaleReport step_regression_report(const PathEnsemble& ens, Stat&& stat, unsigned threads) {
  MartingaleReport rep;
  const std::size_t nt = ens.time_count(), d = ens.dim, M = ens.paths;
  std::vector<double> pts(M * d), y(M);
  for (std::size_t k = 0; k + 1 < nt; ++k) {
    parallel_for(M, threads, [&](std::size_t j) {
      for (std::size_t c = 0; c < d; ++c) pts[j * d + c] = ens.value(j, k, c);
      y[j] = stat(j, k);
    });
    StepZ sz;
    sz.step = ens.s_index + k;
    sz.time = ens.times[k];
    double acc = 0.0;
    for (double v : y) acc += v;
    sz.mean = acc / static_cast<double>(M);
    sz.z = robust_z_scores(pts, d, y);
    for (double z : sz.z) {
      if (std::fabs(z) > rep.max_abs_z || (std::isnan(z) && !std::isnan(rep.max_abs_z))) {
        rep.max_abs_z = std::isnan(z) ? std::numeric_limits<double>::infinity() : std::fabs(z);
        rep.worst_step = sz.step;
      }
    }
    rep.steps.push_back(std::move(sz));
  }
  return rep;
}

}  // namespace detail

/// Tests that D = phi(t, X_t) - int a(phi)(r, X_r) dV_r has conditionally centered
/// increments along `ens`: per step, the increment (compensator by the trapezoid rule)
/// is regressed on {1, x, x^2} of X_{t_i} and the coefficient z-scores are reported.
template <class APhi>
MartingaleReport martingale_test(const PathEnsemble& ens, std::span<const double> dv, const SmoothTestFunction& phi,
                                 APhi&& a_phi, unsigned threads = 1) {
  const std::size_t nt = ens.time_count();
  const std::size_t M = ens.paths;
  std::vector<double> ph(M * nt), ap(M * nt);
  parallel_for(M, threads, [&](std::size_t j) {
    for (std::size_t k = 0; k < nt; ++k) {
      ph[j * nt + k] = phi(ens.times[k], ens.point(j, k));
      ap[j * nt + k] = a_phi(ens.times[k], ens.point(j, k));
    }
  });
  return detail::step_regression_report(
      ens,
      [&](std::size_t j, std::size_t k) {
        const double comp = 0.5 * (ap[j * nt + k] + ap[j * nt + k + 1]) * dv[ens.s_index + k];
        return ph[j * nt + k + 1] - ph[j * nt + k] - comp;
      },
      threads);
}

/// Simulates from (t_s, x) and runs the martingale test.
template <class APhi>
MartingaleReport martingale_test(const GeneratorSpec& gen, const ClockV& clock, const SpaceTimeGrid& grid,
                                 const SmoothTestFunction& phi, APhi&& a_phi, std::size_t s_index,
                                 std::span<const double> x, std::size_t M, std::uint64_t seed, unsigned threads = 1) {
  const PathEnsemble ens = simulate(gen, clock, grid, s_index, x, M, seed, threads);
  const std::vector<double> dv = v_increments(grid, clock);
  return martingale_test(ens, dv, phi, std::forward<APhi>(a_phi), threads);
}

/// Bracket consistency: (increment of M[phi])^2 / dV minus Gamma(phi,phi) (trapezoid)
/// regressed on {1, x, x^2} per step; steps with dV = 0 are skipped.
template <class APhi, class Gamma>
MartingaleReport bracket_test(const PathEnsemble& ens, std::span<const double> dv, const SmoothTestFunction& phi,
                              APhi&& a_phi, Gamma&& gamma, unsigned threads = 1) {
  const std::size_t nt = ens.time_count();
  const std::size_t M = ens.paths;
  std::vector<double> ph(M * nt), ap(M * nt), gm(M * nt);
  parallel_for(M, threads, [&](std::size_t j) {
    for (std::size_t k = 0; k < nt; ++k) {
      const auto x = ens.point(j, k);
      ph[j * nt + k] = phi(ens.times[k], x);
      ap[j * nt + k] = a_phi(ens.times[k], x);
      gm[j * nt + k] = gamma(ens.times[k], x);
    }
  });
  MartingaleReport rep = detail::step_regression_report(
      ens,
      [&](std::size_t j, std::size_t k) {
        const double h = dv[ens.s_index + k];
        if (h <= 0.0) return 0.0;
        const std::size_t a = j * nt + k, b = a + 1;
        const double dm = ph[b] - ph[a] - 0.5 * (ap[a] + ap[b]) * h;
        return dm * dm / h - 0.5 * (gm[a] + gm[b]);
      },
      threads);
  return rep;
}

/// A test function with its generator action and carre du champ Gamma(phi, phi).
struct TestPair {
  SmoothTestFunction phi;
  std::function<double(double, std::span<const double>)> a_phi;
  std::function<double(double, std::span<const double>)> gamma;
};

/// Five smooth test functions with a(phi) in closed form or through the generic
/// action: trigonometric waves for stable and jump generators (in h-coordinates for
/// distributional drift), and x, x^2, cos, sin, a Gaussian bump for 1-d diffusions.
inline std::vector<TestPair> standard_test_set(const GeneratorSpec& gen) {
  std::vector<TestPair> out;
  const std::vector<std::pair<double, double>> waves = {{0.5, 0.0}, {1.0, 0.0}, {1.0, 0.5 * std::numbers::pi},
                                                        {2.0, 0.0}, {0.75, 0.3}};
  if (const auto* s = std::get_if<Stable>(&gen)) {
    for (auto [k, ph] : waves) {
      const double rate = -s->scale * std::pow(std::fabs(k), s->alpha);
      SmoothTestFunction f = SmoothTestFunction::trig(k, ph);
      // Gamma = a(phi^2) - 2 phi a(phi), with phi^2 = (1 + cos(2 theta)) / 2
      const double rate2 = -s->scale * std::pow(std::fabs(2.0 * k), s->alpha);
      out.push_back({f, [f, rate](double t, std::span<const double> x) { return rate * f(t, x); },
                     [k, ph, rate, rate2](double, std::span<const double> x) {
                       const double c = std::cos(k * x[0] + ph);
                       return 0.5 * rate2 * std::cos(2.0 * (k * x[0] + ph)) - 2.0 * rate * c * c;
                     }});
    }
    return out;
  }
  if (const auto* dd = std::get_if<DistributionalDrift>(&gen)) {
    const HTransform tr = dd->transform;
    for (auto [k, ph] : waves) {
      SmoothTestFunction psi = SmoothTestFunction::trig(k, ph);
      SmoothTestFunction f = compose_h(psi, tr);
      out.push_back({f, [tr, k, ph](double, std::span<const double> x) {
                       const double y = tr.h(x[0]);
                       const double s0 = tr.sigma0(y);
                       return -0.5 * s0 * s0 * k * k * std::cos(k * y + ph);
                     },
                     [tr, k, ph](double, std::span<const double> x) {
                       const double y = tr.h(x[0]);
                       const double s0 = tr.sigma0(y);
                       const double d = k * std::sin(k * y + ph);
                       return s0 * s0 * d * d;
                     }});
    }
    return out;
  }
  if (const auto* jd = std::get_if<JumpDiffusion>(&gen); jd && jd->dimension() == 1) {
    // jump part in closed form: rate * (E cos(kJ) - 1) * phi for a symmetric law
    const GeneratorSpec local = jd->diffusion;
    for (auto [k, ph] : waves) {
      SmoothTestFunction f = SmoothTestFunction::trig(k, ph);
      const double jump = jd->rate * (jd->law.characteristic(k) - 1.0);
      const double rate = jd->rate, c1 = jd->law.characteristic(k), c2 = jd->law.characteristic(2.0 * k);
      out.push_back({f,
                     [local, f, jump](double t, std::span<const double> x) {
                       return generator_action(local, f, t, x) + jump * f(t, x);
                     },
                     [local, f, k, ph, rate, c1, c2](double t, std::span<const double> x) {
                       // E(cos(theta + kJ) - cos(theta))^2 for symmetric J
                       const double th = k * x[0] + ph, c = std::cos(th);
                       const double sq = 0.5 + 0.5 * c2 * std::cos(2.0 * th) - 2.0 * c * c * c1 + c * c;
                       return gamma_local(local, f, f, t, x) + rate * sq;
                     }});
    }
    return out;
  }
  if (dimension_of(gen) == 1) {
    std::vector<SmoothTestFunction> fs = {SmoothTestFunction::power(1), SmoothTestFunction::power(2),
                                          SmoothTestFunction::trig(1.0), SmoothTestFunction::trig(1.0, 0.5 * std::numbers::pi),
                                          SmoothTestFunction::gaussian_bump(2.0)};
    for (auto& f : fs)
      out.push_back({f, [gen, f](double t, std::span<const double> x) { return generator_action(gen, f, t, x); },
                     [gen, f](double t, std::span<const double> x) { return gamma_local(gen, f, f, t, x); }});
    return out;
  }
  // d > 1: cos(k . x + phase) along the first coordinate through the generic action
  for (auto [k, ph] : waves) {
    SmoothTestFunction f;
    const std::size_t d = dimension_of(gen);
    f.name = "cos(" + std::to_string(k) + "x1)";
    f.dim = d;
    f.value = [k, ph](double, std::span<const double> x) { return std::cos(k * x[0] + ph); };
    f.time_derivative = [](double, std::span<const double>) { return 0.0; };
    f.gradient = [k, ph](double, std::span<const double> x, std::span<double> o) {
      std::fill(o.begin(), o.end(), 0.0);
      o[0] = -k * std::sin(k * x[0] + ph);
    };
    f.hessian = [k, ph, d](double, std::span<const double> x, std::span<double> o) {
      std::fill(o.begin(), o.begin() + static_cast<std::ptrdiff_t>(d * d), 0.0);
      o[0] = -k * k * std::cos(k * x[0] + ph);
    };
    out.push_back({f, [gen, f](double t, std::span<const double> x) { return generator_action(gen, f, t, x); },
                   [gen, f](double t, std::span<const double> x) { return gamma_local(gen, f, f, t, x); }});
  }
  return out;
}

}  // namespace pseudopde
