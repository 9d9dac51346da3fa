#pragma once

// Least-squares regression of scalar targets on basis functions of a point cloud,
// used for the conditional expectations of the backward recursion.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pseudopde/error.hpp"

namespace pseudopde {

struct RegressionBasis {
  enum class Kind { Polynomial, PiecewiseConstant };
  Kind kind = Kind::Polynomial;
  /// Total degree for Polynomial.
  int degree = 3;
  /// Bins per dimension for PiecewiseConstant.
  int bins = 1;
  double ridge = 0.0;
  /// Standardized coordinates are clamped to [-clamp, clamp] before the monomials are
  /// formed, so heavy-tailed samples do not dominate the fit.
  double clamp = 4.0;
  /// When false, monomials are taken in the raw coordinates (no centering, scaling or clamping).
  bool standardize = true;

  static RegressionBasis polynomial(int p, double ridge = 0.0) { return {Kind::Polynomial, p, 1, ridge, 4.0, true}; }
  static RegressionBasis piecewise_constant(int b, double ridge = 0.0) {
    return {Kind::PiecewiseConstant, 0, b, ridge, 4.0, true};
  }

  void validate() const {
    if (kind == Kind::Polynomial && degree < 0) throw ConfigError("regression: degree must be >= 0");
    if (kind == Kind::PiecewiseConstant && bins < 1) throw ConfigError("regression: bins must be >= 1");
    if (!(ridge >= 0.0)) throw ConfigError("regression: ridge must be >= 0");
    if (!(clamp > 0.0)) throw ConfigError("regression: clamp must be > 0");
  }

  std::string name() const {
    return kind == Kind::Polynomial ? "poly" + std::to_string(degree) : "bins" + std::to_string(bins);
  }
};

namespace detail {

// Exponent vectors of all monomials of total degree <= p in d variables, graded order.
inline std::vector<std::vector<int>> monomials(std::size_t d, int p) {
  std::vector<std::vector<int>> out;
  std::vector<int> e(d, 0);
  for (int total = 0; total <= p; ++total) {
    // enumerate compositions of `total` into d parts
    auto rec = [&](auto&& self, std::size_t k, int left) -> void {
      if (k + 1 == d) {
        e[k] = left;
        out.push_back(e);
        return;
      }
      for (int a = left; a >= 0; --a) {
        e[k] = a;
        self(self, k + 1, left - a);
      }
    };
    if (d == 0) {
      if (total == 0) out.emplace_back();
      continue;
    }
    rec(rec, 0, total);
  }
  return out;
}

inline double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// A fitted regression function.
class RegressionFit {
 public:
  RegressionFit() = default;

  std::size_t dimension() const { return center_.size(); }
  const std::vector<double>& coefficients() const { return coef_; }
  double residual_rms() const { return rms_; }
  const RegressionBasis& basis() const { return basis_; }

  double operator()(std::span<const double> x) const {
    if (basis_.kind == RegressionBasis::Kind::Polynomial) {
      double acc = 0.0;
      for (std::size_t m = 0; m < powers_.size(); ++m) acc += coef_[m] * monomial(x, m);
      return acc;
    }
    return coef_[bin_of(x)];
  }

  /// Value of the basis functions at x (polynomial) or the one-hot bin index.
  double monomial(std::span<const double> x, std::size_t m) const {
    double v = 1.0;
    for (std::size_t k = 0; k < center_.size(); ++k) {
      const int e = powers_[m][k];
      if (e == 0) continue;
      const double z = basis_.standardize ? std::clamp((x[k] - center_[k]) / scale_[k], -basis_.clamp, basis_.clamp)
                                          : x[k];
      v *= std::pow(z, e);
    }
    return v;
  }

  std::size_t bin_of(std::span<const double> x) const {
    std::size_t idx = 0, stride = 1;
    const auto b = static_cast<std::size_t>(basis_.bins);
    for (std::size_t k = 0; k < center_.size(); ++k) {
      std::size_t j = 0;
      if (scale_[k] > 0.0) {
        const double r = (x[k] - center_[k]) / scale_[k] * static_cast<double>(b);
        j = r <= 0.0 ? 0 : std::min(b - 1, static_cast<std::size_t>(r));
      }
      idx += j * stride;
      stride *= b;
    }
    return idx;
  }

 private:
  friend RegressionFit regress(std::span<const double>, std::size_t, std::span<const double>, const RegressionBasis&);

  RegressionBasis basis_;
  std::vector<double> center_, scale_;  // polynomial: location/scale; bins: lower edge/width
  std::vector<std::vector<int>> powers_;
  std::vector<double> coef_;
  double rms_ = 0.0;
};

/// Fits targets on basis functions of the points (row-major n x d in `points`).
inline RegressionFit regress(std::span<const double> points, std::size_t d, std::span<const double> targets,
                             const RegressionBasis& basis) {
  basis.validate();
  if (d == 0) throw InputError("regression: dimension must be >= 1");
  const std::size_t n = targets.size();
  if (points.size() != n * d) throw InputError("regression: points and targets have different lengths");
  if (n == 0) throw NumericalError("regression: no samples");

  RegressionFit fit;
  fit.basis_ = basis;
  fit.center_.assign(d, 0.0);
  fit.scale_.assign(d, 1.0);
  std::vector<double> col(n);

  if (basis.kind == RegressionBasis::Kind::Polynomial) {
    // robust location/scale: median and interquartile range
    for (std::size_t k = 0; k < d && basis.standardize; ++k) {
      for (std::size_t i = 0; i < n; ++i) col[i] = points[i * d + k];
      std::sort(col.begin(), col.end());
      fit.center_[k] = detail::quantile_sorted(col, 0.5);
      const double iqr = detail::quantile_sorted(col, 0.75) - detail::quantile_sorted(col, 0.25);
      const double range = col.back() - col.front();
      fit.scale_[k] = iqr > 0.0 ? iqr / 1.349 : (range > 0.0 ? range : 1.0);
    }
    fit.powers_ = detail::monomials(d, basis.degree);
    const std::size_t m = fit.powers_.size();
    if (n < m && basis.ridge == 0.0)
      throw NumericalError("regression: " + std::to_string(n) + " samples for " + std::to_string(m) +
                           " basis functions and no ridge");
    Eigen::MatrixXd A(n, m);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::span<const double> x = points.subspan(i * d, d);
      for (std::size_t j = 0; j < m; ++j) A(i, j) = fit.monomial(x, j);
      y(i) = targets[i];
    }
    Eigen::VectorXd beta;
    if (basis.ridge > 0.0) {
      Eigen::MatrixXd G = A.transpose() * A;
      for (std::size_t j = 1; j < m; ++j) G(j, j) += basis.ridge;
      beta = G.ldlt().solve(A.transpose() * y);
    } else {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
      if (qr.rank() < static_cast<Eigen::Index>(m))
        throw NumericalError("regression: design matrix is rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                             std::to_string(m) + ")");
      beta = qr.solve(y);
    }
    fit.coef_.assign(beta.data(), beta.data() + m);
  } else {
    const auto b = static_cast<std::size_t>(basis.bins);
    std::size_t cells = 1;
    for (std::size_t k = 0; k < d; ++k) {
      double lo = points[k], hi = points[k];
      for (std::size_t i = 0; i < n; ++i) {
        lo = std::min(lo, points[i * d + k]);
        hi = std::max(hi, points[i * d + k]);
      }
      fit.center_[k] = lo;
      fit.scale_[k] = hi - lo;
      cells *= b;
    }
    std::vector<double> sum(cells, 0.0);
    std::vector<std::size_t> count(cells, 0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = fit.bin_of(points.subspan(i * d, d));
      sum[c] += targets[i];
      ++count[c];
      total += targets[i];
    }
    const double global = total / static_cast<double>(n);
    fit.coef_.assign(cells, 0.0);
    for (std::size_t c = 0; c < cells; ++c) {
      if (count[c] == 0 && basis.ridge == 0.0)
        throw NumericalError("regression: bin " + std::to_string(c) + " is empty and no ridge is set");
      fit.coef_[c] = basis.ridge > 0.0 ? (sum[c] + basis.ridge * global) / (static_cast<double>(count[c]) + basis.ridge)
                                       : sum[c] / static_cast<double>(count[c]);
    }
  }

  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = targets[i] - fit(points.subspan(i * d, d));
    ss += r * r;
  }
  fit.rms_ = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

}  // namespace pseudopde
