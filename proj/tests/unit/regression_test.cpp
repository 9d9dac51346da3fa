#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "pseudopde/regression.hpp"

using namespace pseudopde;

namespace {

std::vector<double> sample(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> x(n);
  for (double& v : x) v = nd(rng);
  return x;
}

}  // namespace

TEST(Regress, ConstantTargets) {
  const auto x = sample(500, 1);
  const std::vector<double> y(500, 2.5);
  for (const auto& b : {RegressionBasis::polynomial(3), RegressionBasis::piecewise_constant(7)}) {
    const auto fit = regress(x, 1, y, b);
    EXPECT_NEAR(fit.residual_rms(), 0.0, 1e-12);
    for (double q : {-3.0, 0.0, 1.2}) EXPECT_NEAR(fit(std::span(&q, 1)), 2.5, 1e-12);
  }
}

TEST(Regress, LinearTargetsAreExact) {
  const auto x = sample(1000, 2);
  std::vector<double> y;
  for (double v : x) y.push_back(1.0 - 3.0 * v);
  for (int p : {1, 2, 4}) {
    const auto fit = regress(x, 1, y, RegressionBasis::polynomial(p));
    EXPECT_LE(fit.residual_rms(), 1e-10) << p;
  }
}

TEST(Regress, QuadraticCoefficientMatchesNormalEquations) {
  const std::size_t n = 10000;
  const auto x = sample(n, 3);
  const auto noise = sample(n, 4);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * x[i] + noise[i];
  RegressionBasis b = RegressionBasis::polynomial(2);
  b.standardize = false;
  const auto fit = regress(x, 1, y, b);
  // monomial order is graded: 1, x, x^2
  EXPECT_NEAR(fit.coefficients()[2], 1.0, 0.05);
  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd yy(n);
  for (std::size_t i = 0; i < n; ++i) {
    A(i, 0) = 1;
    A(i, 1) = x[i];
    A(i, 2) = x[i] * x[i];
    yy(i) = y[i];
  }
  const Eigen::VectorXd beta = (A.transpose() * A).ldlt().solve(A.transpose() * yy);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(fit.coefficients()[k], beta(k), 1e-9);
}

TEST(Regress, TwoDimensionalBasisSize) {
  // uniform points stay inside the standardization clamp, so the fit is exact
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ud(-2.0, 2.0);
  std::vector<double> a(400), b(400);
  for (std::size_t i = 0; i < 400; ++i) a[i] = ud(rng), b[i] = ud(rng);
  std::vector<double> pts, y;
  for (std::size_t i = 0; i < 400; ++i) {
    pts.push_back(a[i]);
    pts.push_back(b[i]);
    y.push_back(a[i] * b[i] + 0.5 * b[i] * b[i]);
  }
  const auto fit = regress(pts, 2, y, RegressionBasis::polynomial(2));
  EXPECT_EQ(fit.coefficients().size(), 6u);
  EXPECT_LE(fit.residual_rms(), 1e-10);
}

TEST(Regress, PiecewiseConstantBins) {
  std::vector<double> x, y;
  for (int i = 0; i < 100; ++i) {
    x.push_back(i / 99.0);
    y.push_back(x.back() < 0.5 ? 1.0 : 3.0);
  }
  const auto fit = regress(x, 1, y, RegressionBasis::piecewise_constant(2));
  double q = 0.2;
  EXPECT_DOUBLE_EQ(fit(std::span(&q, 1)), 1.0);
  q = 0.9;
  EXPECT_DOUBLE_EQ(fit(std::span(&q, 1)), 3.0);
}

TEST(Regress, Degeneracies) {
  const std::vector<double> x = {0.0, 1.0}, y = {1.0, 2.0};
  EXPECT_THROW(regress(x, 1, y, RegressionBasis::polynomial(3)), NumericalError);
  EXPECT_NO_THROW(regress(x, 1, y, RegressionBasis::polynomial(3, 1e-3)));
  const std::vector<double> same = {1.0, 1.0, 1.0, 1.0}, ys = {1, 2, 3, 4};
  EXPECT_THROW(regress(same, 1, ys, RegressionBasis::polynomial(1)), NumericalError);
  // gap in the middle leaves bin 1 empty
  const std::vector<double> gap = {0.0, 0.1, 0.9, 1.0}, yg = {1, 1, 5, 5};
  EXPECT_THROW(regress(gap, 1, yg, RegressionBasis::piecewise_constant(3)), NumericalError);
  const auto fit = regress(gap, 1, yg, RegressionBasis::piecewise_constant(3, 1.0));
  double mid = 0.5;
  EXPECT_DOUBLE_EQ(fit(std::span(&mid, 1)), 3.0);
  EXPECT_THROW(RegressionBasis::polynomial(2, -1.0).validate(), ConfigError);
}
