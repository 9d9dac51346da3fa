#pragma once

// Backward least-squares Monte Carlo for the forward-backward system
//   Y = g(X_T) + int_.^T f(r, X_r, Y_r, Z_r) dV_r - (M_T - M_.),   Z^2 = d<M>/dV,
// and the cross-check of its initial values against a mild solution.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pseudopde/core.hpp"
#include "pseudopde/error.hpp"
#include "pseudopde/mild_solver.hpp"
#include "pseudopde/problem.hpp"
#include "pseudopde/processes.hpp"
#include "pseudopde/regression.hpp"
#include "pseudopde/rng.hpp"
#include "pseudopde/semigroup.hpp"

namespace pseudopde {

struct BsdeStep {
  double time = 0.0;
  double dv = 0.0;
  RegressionFit y_fit;  ///< C_i(x) = E[Y_{t_{i+1}} | X_{t_i} = x]
  RegressionFit z_fit;  ///< Z_i^2(x) * dV_i
  double y_residual_rms = 0.0;
  double z_residual_rms = 0.0;
  bool degenerate = false;  ///< all paths share X_{t_i}; plain means used
  double y_mean = 0.0;
  double z2_mean = 0.0;

  double c(std::span<const double> x) const { return degenerate ? y_mean : y_fit(x); }
  double z(std::span<const double> x) const {
    if (dv <= 0.0) return 0.0;
    const double w = (degenerate ? z2_mean : z_fit(x)) / dv;
    return std::sqrt(std::max(w, 0.0));
  }
};

struct BsdeSolution {
  double s = 0.0;
  std::vector<double> x;
  Estimate y0;
  Estimate z0;
  std::vector<BsdeStep> steps;  ///< one per grid interval starting at s
  std::vector<double> terminal_y;
  std::uint64_t seed = 0;
  std::size_t paths = 0;
};

struct BsdeOptions {
  RegressionBasis basis = RegressionBasis::polynomial(8);
  unsigned threads = 1;
  std::size_t max_inner = 50;
  double inner_tolerance = 1e-12;
};

namespace detail {

// Y = c + f(t, x, Y, z) dv by fixed-point iteration; contraction since K_Y dv < 1.
inline double implicit_step(const LipschitzDriver& f, double t, std::span<const double> x, double c, double z,
                            double dv, std::size_t max_inner, double tol) {
  if (dv <= 0.0) return c;
  double y = c + f(t, x, c, z) * dv;
  if (!f.f.uses_y()) return y;
  for (std::size_t it = 1; it < max_inner; ++it) {
    const double next = c + f(t, x, y, z) * dv;
    const double delta = std::fabs(next - y);
    y = next;
    if (delta <= tol * (1.0 + std::fabs(y))) break;
  }
  return y;
}

}  // namespace detail

/// Throws ConfigError unless K_Y * max dV < 1.
inline void check_bsde_step_size(const ProblemSpec& problem, std::span<const double> dv) {
  double m = 0.0;
  for (double d : dv) m = std::max(m, d);
  if (problem.driver.K_Y * m >= 1.0)
    throw ConfigError("fbsde: K_Y * max dV = " + std::to_string(problem.driver.K_Y * m) +
                      " must be < 1; refine the time grid");
}

inline BsdeSolution lsmc_solve(const ProblemSpec& problem, const SpaceTimeGrid& grid, std::size_t s_index,
                               std::span<const double> x, std::size_t M, std::uint64_t seed,
                               const BsdeOptions& opts = {}) {
  problem.validate();
  if (s_index + 1 >= grid.time_count()) throw ConfigError("fbsde: s must be a grid time before T");
  if (grid.horizon() != problem.horizon_T) throw ConfigError("fbsde: grid horizon differs from horizon_T");
  const std::vector<double> dv_all = v_increments(grid, problem.clock);
  check_bsde_step_size(problem, dv_all);

  const PathEnsemble ens = simulate(problem.generator, problem.clock, grid, s_index, x, M, seed, opts.threads);
  const std::size_t nt = ens.time_count(), d = ens.dim;
  BsdeSolution out;
  out.s = ens.s;
  out.x.assign(x.begin(), x.end());
  out.seed = seed;
  out.paths = M;
  out.steps.resize(nt - 1);

  std::vector<double> y(M), next(M), pts(M * d), innov(M);
  for (std::size_t j = 0; j < M; ++j) {
    try {
      y[j] = problem.g(ens.terminal(j));
    } catch (const DomainError& e) {
      throw DomainError(std::string("terminal_g: ") + e.what() + " (path " + std::to_string(j) + ")");
    }
  }
  out.terminal_y = y;

  double z_carry = 0.0;
  bool have_carry = false;
  for (std::size_t k = nt - 1; k-- > 0;) {
    BsdeStep& st = out.steps[k];
    const std::size_t gi = s_index + k;
    st.time = ens.times[k];
    st.dv = dv_all[gi];
    for (std::size_t j = 0; j < M; ++j)
      for (std::size_t c = 0; c < d; ++c) pts[j * d + c] = ens.value(j, k, c);
    st.degenerate = k == 0;
    try {
      if (st.degenerate) {
        MeanAccumulator acc;
        for (double v : y) acc.add(v);
        st.y_mean = acc.mean();
        MeanAccumulator sq;
        for (double v : y) sq.add((v - st.y_mean) * (v - st.y_mean));
        st.z2_mean = sq.mean();
        st.y_residual_rms = std::sqrt(acc.variance());
        st.z_residual_rms = std::sqrt(sq.variance());
        out.y0.std_error = acc.std_error();
        const double z2 = st.dv > 0.0 ? st.z2_mean / st.dv : 0.0;
        const double zz = std::sqrt(std::max(z2, 0.0));
        const double z2_se = st.dv > 0.0 ? sq.std_error() / st.dv : 0.0;
        out.z0 = {zz, zz > 0.0 ? z2_se / (2.0 * zz) : std::sqrt(z2_se)};
      } else {
        st.y_fit = regress(pts, d, y, opts.basis);
        st.y_residual_rms = st.y_fit.residual_rms();
        for (std::size_t j = 0; j < M; ++j) {
          const double r = y[j] - st.y_fit(std::span<const double>(pts).subspan(j * d, d));
          innov[j] = r * r;
        }
        st.z_fit = regress(pts, d, innov, opts.basis);
        st.z_residual_rms = st.z_fit.residual_rms();
      }
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (fbsde step " + std::to_string(gi) + ")");
    }

    const bool uses_z = problem.driver.f.uses_z();
    parallel_for(M, opts.threads, [&](std::size_t j) {
      const auto xj = std::span<const double>(pts).subspan(j * d, d);
      const double c = st.c(xj);
      double z = 0.0;
      if (uses_z) z = st.dv > 0.0 ? st.z(xj) : (have_carry ? z_carry : 0.0);
      try {
        next[j] = detail::implicit_step(problem.driver, st.time, xj, c, z, st.dv, opts.max_inner, opts.inner_tolerance);
      } catch (const DomainError& e) {
        throw DomainError(std::string("driver: ") + e.what() + " (fbsde step " + std::to_string(gi) + ", path " +
                          std::to_string(j) + ")");
      }
    });
    if (st.dv > 0.0 && k > 0) {
      z_carry = st.z(std::span<const double>(pts).subspan(0, d));
      have_carry = true;
    }
    std::swap(y, next);
  }
  out.y0.value = y[0];
  return out;
}

struct CrosscheckRow {
  double s = 0.0;
  std::vector<double> x;
  Estimate u, v, y0, z0;
  double combined_stderr = 0.0;
  double u_gap = 0.0;  ///< |u - y0|
  double v_gap = 0.0;  ///< |v - Z0|
};

struct CrosscheckOptions {
  std::size_t paths = 100000;
  /// When > 0, u and v at each origin are re-estimated from a fresh ensemble of this size.
  std::size_t refine_paths = 100000;
  BsdeOptions bsde;
};

/// Runs the FBSDE solver at every origin with seeds derived from `seed` (independent of
/// the mild cache) and compares its (Y0, Z0) with the mild (u, v).
inline std::vector<CrosscheckRow> crosscheck(const MildSolver& solver, const MildSolution& mild,
                                             const ProblemSpec& problem, const SpaceTimeGrid& grid,
                                             const std::vector<std::pair<std::size_t, std::vector<double>>>& origins,
                                             std::uint64_t seed, const CrosscheckOptions& opts = {}) {
  std::vector<CrosscheckRow> rows;
  for (std::size_t o = 0; o < origins.size(); ++o) {
    const auto& [si, x] = origins[o];
    if (si >= grid.time_count()) throw InputError("crosscheck: origin time index out of range");
    CrosscheckRow row;
    row.s = grid.time(si);
    row.x = x;
    if (opts.refine_paths > 0) {
      const PointEstimate pe = solver.refine_at(mild, si, x, opts.refine_paths, derive_seed(seed, {2, o}));
      row.u = pe.u;
      row.v = pe.v;
    } else {
      row.u = {mild.u.interpolate(si, x), mild.u_stderr.interpolate(si, x)};
      row.v = {mild.v.interpolate(si, x), mild.v_stderr.interpolate(si, x)};
    }
    if (si + 1 < grid.time_count()) {
      const BsdeSolution b = lsmc_solve(problem, grid, si, x, opts.paths, derive_seed(seed, {1, o}), opts.bsde);
      row.y0 = b.y0;
      row.z0 = b.z0;
    } else {
      row.y0 = {problem.g(x), 0.0};
      row.z0 = row.v;
    }
    row.combined_stderr = std::hypot(row.u.std_error, row.y0.std_error);
    row.u_gap = std::fabs(row.u.value - row.y0.value);
    row.v_gap = std::fabs(row.v.value - row.z0.value);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace pseudopde
