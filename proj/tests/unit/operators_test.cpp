#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pseudopde/operators.hpp"
#include "support/spectral.hpp"

using namespace pseudopde;

namespace {

const std::vector<double> kX = {0.4};

}  // namespace

TEST(GammaLocal, Examples) {
  const GeneratorSpec bm = Diffusion::brownian();
  const auto x1 = SmoothTestFunction::power(1), x2 = SmoothTestFunction::power(2);
  EXPECT_DOUBLE_EQ(gamma_local(bm, x1, x1, 0.0, kX), 1.0);
  for (double x : {-2.0, 0.0, 1.5}) EXPECT_NEAR(gamma_local(bm, x2, x2, 0.0, std::span(&x, 1)), 4 * x * x, 1e-12);
  const GeneratorSpec jd = JumpDiffusion{Diffusion::brownian(), 2.0, {JumpLaw::Kind::TwoPoint, 1.0}};
  EXPECT_NEAR(gamma_local(jd, x1, x1, 0.0, kX), 3.0, 1e-12);
  EXPECT_THROW(gamma_local(Stable{1.5, 1.0}, x1, x1, 0.0, kX), UnsupportedError);
}

TEST(GammaLocal, SymmetricAndBilinear) {
  const GeneratorSpec jd = JumpDiffusion{Diffusion::from_text({"0.3"}, {"1 + 0.2*x1^2"}), 1.5,
                                         {JumpLaw::Kind::Gaussian, 0.7}};
  const auto a = SmoothTestFunction::trig(1.3, 0.2), b = SmoothTestFunction::gaussian_bump(2.0);
  EXPECT_NEAR(gamma_local(jd, a, b, 0.0, kX), gamma_local(jd, b, a, 0.0, kX), 1e-12);
  EXPECT_NEAR(gamma_local(jd, a, b, 0.0, kX), gamma_from_generator(jd, a, b, 0.0, kX), 1e-6);
}

TEST(GammaFractional, Errors) {
  const auto c = SmoothTestFunction::constant(2.0);
  for (double alpha : {0.0, 2.0, -1.0, 2.5}) EXPECT_THROW(gamma_fractional(c, alpha, 1.0, 0.0, kX), InputError);
  EXPECT_EQ(gamma_fractional(c, 1.2, 1.0, 0.0, kX).value, 0.0);
}

TEST(FractionalAction, CosineIsAnEigenfunction) {
  for (double alpha : {0.5, 1.0, 1.5}) {
    const auto f = SmoothTestFunction::trig(1.7);
    FractionalQuadrature q;
    q.cutoff = 400.0;
    const auto r = fractional_action(f, alpha, 1.0, 0.0, kX, q);
    const double ref = -std::pow(1.7, alpha) * std::cos(1.7 * kX[0]);
    EXPECT_NEAR(r.value, ref, std::max(1e-3, 2 * r.remainder_bound)) << alpha;
  }
}

TEST(GammaFromGenerator, ConstantsHaveNoBracket) {
  const auto c = SmoothTestFunction::constant(3.0);
  EXPECT_NEAR(gamma_from_generator(Diffusion::brownian(), c, c, 0.0, kX), 0.0, 1e-12);
  EXPECT_NEAR(gamma_from_generator(Stable{1.0, 1.0}, c, c, 0.0, kX), 0.0, 1e-12);
}

TEST(GammaRoutes, BumpAgreesWithSpectralOracle) {
  const auto bump = SmoothTestFunction::gaussian_bump(1.0);
  oracle::SpectralFractional sp(400.0, 1 << 16);
  for (double alpha : {0.5, 1.0, 1.5}) {
    const auto ref = sp.gamma([](double x) { return std::exp(-x * x); }, alpha);
    for (double x : {0.0, 0.5, 1.25}) {
      const double r = ref[sp.index_of(x)];
      const double a = gamma_fractional(bump, alpha, 1.0, 0.0, std::span(&x, 1)).value;
      const double b = gamma_from_generator(Stable{alpha, 1.0}, bump, bump, 0.0, std::span(&x, 1));
      EXPECT_NEAR(a, r, 0.01 * std::fabs(r)) << alpha << " " << x;
      EXPECT_NEAR(b, r, 0.01 * std::fabs(r)) << alpha << " " << x;
    }
  }
}

TEST(GeneratorAction, JumpTerms) {
  const double k = 1.1, lam = 2.0, s = 0.6;
  const auto f = SmoothTestFunction::trig(k);
  for (auto law : {JumpLaw{JumpLaw::Kind::Gaussian, s}, JumpLaw{JumpLaw::Kind::Laplace, s},
                   JumpLaw{JumpLaw::Kind::TwoPoint, s}}) {
    const GeneratorSpec g = JumpDiffusion{Diffusion::brownian(), lam, law};
    const double ref = (-0.5 * k * k + lam * (law.characteristic(k) - 1.0)) * std::cos(k * kX[0]);
    EXPECT_NEAR(generator_action(g, f, 0.0, kX), ref, 1e-8) << law.name();
  }
}

TEST(ClassicalResidual, HeatPolynomial) {
  auto grid = make_grid(SpaceTimeGrid::uniform(1.0, 4, {-2}, {2}, {5}));
  ProblemSpec p;
  p.generator = Diffusion::brownian();
  p.driver = make_driver("0", 1, 0, 0);
  p.terminal_g = Expression::parse("x1^2", 1);
  const auto u = SmoothTestFunction::from_expression(Expression::parse("x1^2 + 1 - t", 1), 1);
  const auto r = classical_residual(u, p, [&](const auto& f, double t, auto x) { return gamma_auto(p.generator, f, t, x); },
                                    grid);
  for (double v : r.values()) EXPECT_NEAR(v, 0.0, 1e-6);
}

TEST(ClassicalResidual, ManufacturedSolution) {
  auto grid = make_grid(SpaceTimeGrid::uniform(1.0, 5, {-3}, {3}, {7}));
  ProblemSpec p;
  p.generator = Diffusion::brownian();
  p.driver = make_driver("-y + 0.5*sin(x1)*exp(t - 1)", 1, 1, 0);
  p.terminal_g = Expression::parse("sin(x1)", 1);
  SmoothTestFunction u;
  u.value = [](double t, std::span<const double> x) { return std::sin(x[0]) * std::exp(t - 1); };
  u.time_derivative = u.value;
  u.gradient = [](double t, std::span<const double> x, std::span<double> o) { o[0] = std::cos(x[0]) * std::exp(t - 1); };
  u.hessian = [](double t, std::span<const double> x, std::span<double> o) { o[0] = -std::sin(x[0]) * std::exp(t - 1); };
  auto gamma = [&](const auto& f, double t, auto x) { return gamma_local(p.generator, f, f, t, x); };
  const auto exact = classical_residual(u, p, gamma, grid);
  for (double v : exact.values()) EXPECT_LE(std::fabs(v), 1e-10);

  SmoothTestFunction shifted = u;
  shifted.value = [](double t, std::span<const double> x) { return std::sin(x[0]) * std::exp(t - 1) + 0.1; };
  const auto off = classical_residual(shifted, p, gamma, grid);
  for (double v : off.values()) EXPECT_NEAR(v, -0.1, 1e-10);

  auto broken = [](const auto&, double, auto) { return -1.0; };
  EXPECT_THROW(classical_residual(u, p, broken, grid), NumericalError);
}

TEST(Martingale, BrownianPositiveAndNegative) {
  const auto grid = SpaceTimeGrid::uniform(1.0, 10, {-4}, {4}, {9});
  const GeneratorSpec bm = Diffusion::brownian();
  const std::vector<double> x = {0.0};
  auto zero = [](double, std::span<const double>) { return 0.0; };
  auto one = [](double, std::span<const double>) { return 1.0; };
  const auto lin = martingale_test(bm, ClockV::identity(), grid, SmoothTestFunction::power(1), zero, 0, x, 100000, 1);
  EXPECT_LT(lin.max_abs_z, 4.0);
  const auto sq = martingale_test(bm, ClockV::identity(), grid, SmoothTestFunction::power(2), one, 0, x, 100000, 2);
  EXPECT_LT(sq.max_abs_z, 4.0);
  const auto bad = martingale_test(bm, ClockV::identity(), grid, SmoothTestFunction::power(2), zero, 0, x, 100000, 2);
  EXPECT_GT(bad.max_abs_z, 10.0);
}

TEST(Bracket, BrownianSquare) {
  const auto grid = SpaceTimeGrid::uniform(1.0, 10, {-4}, {4}, {9});
  const std::vector<double> x = {0.5};
  const auto ens = simulate(Diffusion::brownian(), ClockV::identity(), grid, 0, x, 50000, 3);
  const auto dv = v_increments(grid, ClockV::identity());
  const auto set = standard_test_set(Diffusion::brownian());
  ASSERT_EQ(set.size(), 5u);
  // x is exact at any step size; x^2 carries an O(dt) bracket bias, so only the linear function is checked
  const auto r = bracket_test(ens, dv, set[0].phi, set[0].a_phi, set[0].gamma);
  EXPECT_LT(r.max_abs_z, 4.0);
}

TEST(StandardTestSet, SizesPerGenerator) {
  EXPECT_EQ(standard_test_set(Stable{1.5, 1.0}).size(), 5u);
  EXPECT_EQ(standard_test_set(JumpDiffusion{Diffusion::brownian(), 1.0, {}}).size(), 5u);
  EXPECT_EQ(standard_test_set(Diffusion::brownian(2)).size(), 5u);
  const auto dd = DistributionalDrift::sampled([](double x) { return std::sin(x); }, -6, 6, 2001,
                                               Expression::constant(1.0));
  EXPECT_EQ(standard_test_set(dd).size(), 5u);
}
