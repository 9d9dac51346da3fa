#pragma once

// Reference values computed independently of the library: Gaussian quadrature,
// closed forms and a plain Euler simulator.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace oracle {

// E[f(m + s W)], W ~ N(0, 1)
inline double gaussian_expectation(const std::function<double(double)>& f, double m, double s) {
  if (s == 0.0) return f(m);
  auto integrand = [&](double w) { return f(m + s * w) * std::exp(-0.5 * w * w) / std::sqrt(2.0 * std::numbers::pi); };
  const double inf = std::numeric_limits<double>::infinity();
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -inf, inf, 15, 1e-13);
}

// heat equation with g = x^2: u = x^2 + (T - t), Gamma(u, u) = 4 x^2
inline double heat_u(double t, double x, double T = 1.0) { return x * x + (T - t); }

// f = c y, g = x^2: u = e^{c (T - t)} E[(x + W_{T-t})^2]
inline double linear_y_u(double c, double t, double x, double T = 1.0) {
  const double tau = T - t;
  return std::exp(c * tau) * gaussian_expectation([](double y) { return y * y; }, x, std::sqrt(tau));
}

// f = k z, g increasing: z = u_x, so the driver is a drift k and u = E[g(x + k tau + W_tau)]
inline double linear_z_u(const std::function<double(double)>& g, double k, double t, double x, double T = 1.0) {
  const double tau = T - t;
  return gaussian_expectation(g, x + k * tau, std::sqrt(tau));
}

inline double linear_z_ux(const std::function<double(double)>& g, double k, double t, double x, double T = 1.0) {
  const double h = 1e-5;
  return (linear_z_u(g, k, t, x + h, T) - linear_z_u(g, k, t, x - h, T)) / (2.0 * h);
}

// h-transform of b(x) = x, sigma = 1: Sigma = 2x, h = (1 - e^{-2x}) / 2, sigma0(y) = 1 - 2y
struct LinearDriftTransform {
  static double Sigma(double x) { return 2.0 * x; }
  static double h(double x) { return 0.5 * (1.0 - std::exp(-2.0 * x)); }
  static double sigma0(double y) { return 1.0 - 2.0 * y; }
};

// E[cos(xi S_alpha)] for the standard symmetric stable law at unit time
inline double stable_cf(double xi, double alpha) { return std::exp(-std::pow(std::fabs(xi), alpha)); }

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

// Euler scheme for dX = drift(X) dt + sigma dW with its own RNG; E[phi(X_T)] and its stderr.
inline MeanSe euler_expectation(const std::function<double(double)>& drift, double sigma, double x0, double T,
                                std::size_t steps, std::size_t M, std::uint64_t seed,
                                const std::function<double(double)>& phi) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  const double dt = T / static_cast<double>(steps), sq = std::sqrt(dt);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    double x = x0;
    for (std::size_t k = 0; k < steps; ++k) x += drift(x) * dt + sigma * sq * n01(rng);
    const double v = phi(x);
    sum += v;
    sum2 += v * v;
  }
  const double m = sum / static_cast<double>(M);
  const double var = (sum2 - static_cast<double>(M) * m * m) / static_cast<double>(M - 1);
  return {m, std::sqrt(var / static_cast<double>(M))};
}

}  // namespace oracle
