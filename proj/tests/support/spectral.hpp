#pragma once

// Fractional generator -(-Delta)^{alpha/2} applied through its Fourier symbol on a
// large periodic box (FFTW), and the carre du champ Gamma = a(phi^2) - 2 phi a(phi).

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

#include <fftw3.h>

namespace oracle {

class SpectralFractional {
 public:
  // periodic box [-L/2, L/2) with n points
  SpectralFractional(double L, std::size_t n) : L_(L), n_(n), x_(n) {
    for (std::size_t k = 0; k < n; ++k) x_[k] = -0.5 * L + L * static_cast<double>(k) / static_cast<double>(n);
  }

  const std::vector<double>& nodes() const { return x_; }
  double spacing() const { return L_ / static_cast<double>(n_); }

  // a(phi) = -scale * F^{-1}[|xi|^alpha F phi] on the nodes
  std::vector<double> apply(const std::vector<double>& phi, double alpha, double scale = 1.0) const {
    std::vector<double> in(phi);
    const std::size_t nc = n_ / 2 + 1;
    fftw_complex* spec = fftw_alloc_complex(nc);
    std::vector<double> out(n_);
    fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n_), in.data(), spec, FFTW_ESTIMATE);
    fftw_plan bwd = fftw_plan_dft_c2r_1d(static_cast<int>(n_), spec, out.data(), FFTW_ESTIMATE);
    fftw_execute(fwd);
    for (std::size_t k = 0; k < nc; ++k) {
      const double xi = 2.0 * std::numbers::pi * static_cast<double>(k) / L_;
      const double m = -scale * std::pow(xi, alpha) / static_cast<double>(n_);
      spec[k][0] *= m;
      spec[k][1] *= m;
    }
    fftw_execute(bwd);
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(spec);
    return out;
  }

  std::vector<double> gamma(const std::function<double(double)>& f, double alpha, double scale = 1.0) const {
    std::vector<double> phi(n_), sq(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      phi[k] = f(x_[k]);
      sq[k] = phi[k] * phi[k];
    }
    const std::vector<double> a1 = apply(phi, alpha, scale), a2 = apply(sq, alpha, scale);
    std::vector<double> g(n_);
    for (std::size_t k = 0; k < n_; ++k) g[k] = a2[k] - 2.0 * phi[k] * a1[k];
    return g;
  }

  // index of the node equal to x (x must lie on the node lattice)
  std::size_t index_of(double x) const {
    return static_cast<std::size_t>(std::lround((x + 0.5 * L_) / spacing()));
  }

 private:
  double L_;
  std::size_t n_;
  std::vector<double> x_;
};

}  // namespace oracle
