#pragma once

// The Pseudo-PDE instance a(u) + f(t, x, u, sqrt(Gamma(u,u))) = 0, u(T, .) = g.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pseudopde/core.hpp"
#include "pseudopde/error.hpp"
#include "pseudopde/expr.hpp"
#include "pseudopde/processes.hpp"
#include "pseudopde/rng.hpp"

namespace pseudopde {

/// Driver f(t, x, y, z) with declared Lipschitz constants in y and z and growth constant C'.
struct LipschitzDriver {
  Expression f;
  double K_Y = 0.0;
  double K_Z = 0.0;
  double C_prime = 0.0;
  /// Set once spot_check_lipschitz has confirmed the declared constants.
  bool lipschitz_verified = false;

  double operator()(double t, std::span<const double> x, double y, double z) const { return f.eval({t, x, y, z}); }

  /// True when f does not depend on (y, z); such drivers make the Picard map constant.
  bool is_decoupled() const { return !f.uses_y() && !f.uses_z(); }
};

inline LipschitzDriver make_driver(const std::string& text, int dimension, double K_Y, double K_Z,
                                   double C_prime = 0.0) {
  if (!(K_Y >= 0.0) || !(K_Z >= 0.0) || !(C_prime >= 0.0))
    throw ConfigError("driver: Lipschitz and growth constants must be >= 0");
  return LipschitzDriver{Expression::parse(text, dimension), K_Y, K_Z, C_prime, false};
}

struct LipschitzCheck {
  double max_quotient_y = 0.0;
  double max_quotient_z = 0.0;
  bool ok = true;
};

/// Samples difference quotients of f in y and z on a box and compares them with the
/// declared constants (1% slack). Sets driver.lipschitz_verified on success.
/// Points where f raises a domain error are skipped.
inline LipschitzCheck spot_check_lipschitz(LipschitzDriver& driver, const SpaceTimeGrid& grid, double y_range,
                                           double z_range, std::size_t samples, std::uint64_t seed) {
  LipschitzCheck out;
  Xoshiro256pp rng(seed);
  const std::size_t d = grid.dimension();
  std::vector<double> x(d);
  for (std::size_t n = 0; n < samples; ++n) {
    const double t = grid.time(0) + rng.uniform() * (grid.horizon() - grid.time(0));
    for (std::size_t k = 0; k < d; ++k)
      x[k] = grid.space_min()[k] + rng.uniform() * (grid.space_max()[k] - grid.space_min()[k]);
    const double y1 = (2.0 * rng.uniform() - 1.0) * y_range, y2 = (2.0 * rng.uniform() - 1.0) * y_range;
    const double z1 = rng.uniform() * z_range, z2 = rng.uniform() * z_range;
    try {
      if (y1 != y2)
        out.max_quotient_y =
            std::max(out.max_quotient_y, std::fabs(driver(t, x, y1, z1) - driver(t, x, y2, z1)) / std::fabs(y1 - y2));
      if (z1 != z2)
        out.max_quotient_z =
            std::max(out.max_quotient_z, std::fabs(driver(t, x, y1, z1) - driver(t, x, y1, z2)) / std::fabs(z1 - z2));
    } catch (const DomainError&) {
    }
  }
  out.ok = out.max_quotient_y <= 1.01 * driver.K_Y + 1e-12 && out.max_quotient_z <= 1.01 * driver.K_Z + 1e-12;
  driver.lipschitz_verified = out.ok;
  return out;
}

/// A full Pseudo-PDE(f, g) instance.
struct ProblemSpec {
  GeneratorSpec generator;
  LipschitzDriver driver;
  Expression terminal_g;
  double horizon_T = 1.0;
  ClockV clock = ClockV::identity();
  double growth_zeta = 0.0;
  double growth_eta = 0.0;

  std::size_t dimension() const { return dimension_of(generator); }

  double g(std::span<const double> x) const { return terminal_g(horizon_T, x); }

  void validate() const {
    if (!(horizon_T > 0.0) || !std::isfinite(horizon_T)) throw ConfigError("problem: horizon_T must be > 0");
    if (!clock.covers(horizon_T)) throw ConfigError("problem: clock does not cover [0, horizon_T]");
    validate_generator(generator);
    const int d = static_cast<int>(dimension());
    if (driver.f.dimension() != d || terminal_g.dimension() != d)
      throw ConfigError("problem: driver/terminal dimension does not match the generator");
  }
};

}  // namespace pseudopde
