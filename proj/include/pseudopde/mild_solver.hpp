#pragma once

// Picard iteration for the decoupled mild solution (u, v) of Pseudo-PDE(f, g):
//
//   u(s,x)   = P_{s,T}[g](x) + int_s^T P_{s,r}[f(r, ., u, v)](x) dV_r
//   u^2(s,x) = P_{s,T}[g^2](x) - int_s^T P_{s,r}[v^2 - 2 u f(r, ., u, v)](x) dV_r
//
// All semigroup terms are evaluated on a frozen EnsembleCache, so the Picard map is a
// deterministic map between grid fields.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pseudopde/core.hpp"
#include "pseudopde/error.hpp"
#include "pseudopde/parallel.hpp"
#include "pseudopde/problem.hpp"
#include "pseudopde/processes.hpp"
#include "pseudopde/semigroup.hpp"

namespace pseudopde {

enum class VScheme { Volterra, Variance };

struct PicardConfig {
  std::size_t max_iterations = 20;
  /// Stop when the sup-norm of the u update drops below this.
  double tolerance = 1e-3;
  VScheme v_scheme = VScheme::Variance;
  /// u <- (1 - damping) u_k + damping * update.
  double damping = 1.0;
  unsigned threads = 1;

  void validate() const {
    if (!(tolerance > 0.0)) throw ConfigError("mild: tolerance must be > 0");
    if (max_iterations < 1) throw ConfigError("mild: max_iterations must be >= 1");
    if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("mild: damping must lie in (0, 1]");
  }
};

/// A field update together with its per-cell standard errors.
struct FieldUpdate {
  ScalarField value;
  ScalarField std_error;
};

/// Negative-variance clamping telemetry.
struct ClampTelemetry {
  std::size_t count = 0;
  double mass = 0.0;  ///< sum of |w| over clamped cells
};

struct MildResiduals {
  double residual_1 = 0.0;  ///< sup |u - line-1 RHS|
  double residual_2 = 0.0;  ///< sup |u^2 - line-2 RHS|
  double scale_1 = 0.0;     ///< sup |u|
  double scale_2 = 0.0;     ///< sup u^2
  std::vector<double> cell_residual_1, cell_residual_2;
  std::vector<double> cell_stderr_1, cell_stderr_2;
  /// Fraction of the cell's path points that fall outside the grid bounds.
  std::vector<double> cell_outside;
  /// Cells with cell_outside <= this are interior: boundary clamping barely touches them.
  static constexpr double interior_threshold = 0.01;

  bool interior(std::size_t c) const { return cell_outside[c] <= interior_threshold; }

  /// sup of the line's cell residuals over interior cells.
  double interior_residual(int line) const {
    const auto& r = line == 1 ? cell_residual_1 : cell_residual_2;
    double m = 0.0;
    for (std::size_t c = 0; c < r.size(); ++c)
      if (interior(c)) m = std::max(m, r[c]);
    return m;
  }

  /// Every cell (or every interior cell) satisfies |res| <= max(k * stderr, rel * scale)
  /// for the given line (1 or 2).
  bool within(int line, double k, double rel, bool interior_only = false) const {
    const auto& r = line == 1 ? cell_residual_1 : cell_residual_2;
    const auto& s = line == 1 ? cell_stderr_1 : cell_stderr_2;
    const double floor = rel * (line == 1 ? scale_1 : scale_2);
    for (std::size_t c = 0; c < r.size(); ++c)
      if ((!interior_only || interior(c)) && r[c] > std::max(k * s[c], floor)) return false;
    return true;
  }
};

struct MildSolution {
  ScalarField u;
  ScalarField v;
  ScalarField u_stderr;
  ScalarField v_stderr;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> delta_history;
  MildResiduals residuals;
  double max_u_stderr = 0.0;
  ClampTelemetry clamps;
  double out_of_bounds_fraction = 0.0;
  std::vector<std::string> warnings;
};

/// u and v at one point, re-estimated from a fresh, typically larger, ensemble with the
/// converged fields frozen.
struct PointEstimate {
  std::size_t s_index = 0;
  std::vector<double> x;
  Estimate u;
  Estimate v;
};

/// Evaluates the Picard map and the residuals of both mild equations on a frozen cache.
class MildSolver {
 public:
  MildSolver(const ProblemSpec& problem, const EnsembleCache& cache, PicardConfig cfg = {})
      : problem_(problem), cache_(cache), cfg_(cfg), grid_(cache.grid_ptr()) {
    cfg_.validate();
    problem_.validate();
    if (cache.generator() != fingerprint(problem.generator))
      throw ConfigError("mild: cache was built for a different generator");
    if (grid_->horizon() != problem.horizon_T) throw ConfigError("mild: grid horizon differs from horizon_T");
    const auto dv = v_increments(*grid_, problem.clock);
    if (!std::equal(dv.begin(), dv.end(), cache.dv().begin(), cache.dv().end()))
      throw ConfigError("mild: cache was built with a different clock");
    precompute_terminal();
  }

  const PicardConfig& config() const { return cfg_; }
  ClampTelemetry last_clamps() const { return clamps_; }
  double last_out_of_bounds_fraction() const { return oob_fraction_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  ScalarField zero_field() const { return ScalarField::constant(grid_, 0.0); }

  /// u_{k+1}(t_i, x) = P[g] + E[sum_r f(r, X_r, u_k(r, X_r), v_k(r, X_r)) dV_r].
  FieldUpdate update_u(const ScalarField& u_k, const ScalarField& v_k) const {
    check_field(u_k);
    check_field(v_k);
    const std::size_t nodes = grid_->node_count(), nt = grid_->time_count();
    std::vector<double> val(grid_->cell_count()), se(grid_->cell_count());
    std::vector<std::size_t> clamped(grid_->cell_count(), 0), points(grid_->cell_count(), 0);
    const auto dv = cache_.dv();
    const bool coupled = !problem_.driver.is_decoupled();
    parallel_for(grid_->cell_count(), cfg_.threads, [&](std::size_t c) {
      const std::size_t i = c / nodes, node = c % nodes;
      const PathEnsemble& ens = cache_.cell(i, node);
      const double* g = terminal_g_.data() + c * cache_.paths();
      MeanAccumulator acc;
      Stencil st;
      for (std::size_t j = 0; j < ens.paths; ++j) {
        double sum = 0.0;
        for (std::size_t k = 0; i + k + 1 < nt; ++k) {
          const std::size_t r = i + k;
          const auto x = ens.point(j, k);
          double y = 0.0, z = 0.0;
          if (!grid_->contains(x)) ++clamped[c];
          if (coupled) {
            make_stencil(*grid_, x, st);
            y = u_k.apply(r, st);
            z = v_k.apply(r, st);
          }
          sum += driver_at(r, x, y, z, c, j) * dv[r];
          ++points[c];
        }
        acc.add(g[j] + sum);
      }
      val[c] = acc.mean();
      se[c] = acc.std_error();
    });
    std::size_t total_clamped = 0, total_points = 0;
    for (std::size_t c = 0; c < clamped.size(); ++c) {
      total_clamped += clamped[c];
      total_points += points[c];
    }
    oob_fraction_ = total_points ? static_cast<double>(total_clamped) / static_cast<double>(total_points) : 0.0;
    return {make_field(std::move(val), "u"), make_field(std::move(se), "u stderr")};
  }

  /// v from the one-step bracket density:
  /// v^2(t_i, x) = E[(u(t_{i+1}, X_{t_{i+1}}) - u(t_i, x) + f dV_i)^2] / dV_i.
  /// In 1-d, u(t_{i+1}, .) is read through a 3-point quadratic stencil: linear
  /// interpolation error enters the squared increment at order h^2 / dV.
  FieldUpdate update_v_variance(const ScalarField& u_next, const ScalarField& v_prev) const {
    check_field(u_next);
    check_field(v_prev);
    const std::size_t nodes = grid_->node_count(), nt = grid_->time_count();
    std::vector<double> w(grid_->cell_count(), 0.0), wse(grid_->cell_count(), 0.0);
    std::vector<char> defined(nt, 0);
    const auto dv = cache_.dv();
    parallel_for((nt - 1) * nodes, cfg_.threads, [&](std::size_t c) {
      const std::size_t i = c / nodes, node = c % nodes;
      if (dv[i] <= 0.0) return;
      const PathEnsemble& ens = cache_.cell(i, node);
      const auto x = ens.point(0, 0);
      const double u0 = u_next.at(i, node);
      const double drift = driver_at(i, x, u0, v_prev.at(i, node), c, 0) * dv[i];
      MeanAccumulator acc;
      Stencil st;
      const std::size_t m = cache_.step_paths();
      for (std::size_t j = 0; j < m; ++j) {
        make_quadratic_stencil(*grid_, cache_.step_point(i, node, j), st);
        const double inc = u_next.apply(i + 1, st) - u0 + drift;
        acc.add(inc * inc);
      }
      w[c] = acc.mean() / dv[i];
      wse[c] = acc.std_error() / dv[i];
    });
    for (std::size_t i = 0; i + 1 < nt; ++i) defined[i] = dv[i] > 0.0;
    fill_undefined_rows(w, wse, defined);
    return finish_v(std::move(w), std::move(wse));
  }

  /// v from the second mild equation, solved backward in time for w = v^2.
  FieldUpdate update_v_volterra(const ScalarField& u_next, const ScalarField& u_k, const ScalarField& v_k) const {
    check_field(u_next);
    check_field(u_k);
    check_field(v_k);
    const std::size_t nodes = grid_->node_count(), nt = grid_->time_count();
    const auto dv = cache_.dv();
    std::vector<double> w(grid_->cell_count(), 0.0), wse(grid_->cell_count(), 0.0);
    std::vector<char> defined(nt, 0);
    std::vector<std::size_t> clamp_count(nodes, 0);
    std::vector<double> clamp_mass(nodes, 0.0);
    ClampTelemetry telemetry;

    for (std::size_t ii = nt - 1; ii-- > 0;) {
      const std::size_t i = ii;
      if (dv[i] <= 0.0) continue;
      defined[i] = 1;
      std::fill(clamp_count.begin(), clamp_count.end(), 0);
      std::fill(clamp_mass.begin(), clamp_mass.end(), 0.0);
      parallel_for(nodes, cfg_.threads, [&](std::size_t node) {
        const std::size_t c = i * nodes + node;
        const PathEnsemble& ens = cache_.cell(i, node);
        const double* g = terminal_g_.data() + c * cache_.paths();
        const double u0 = u_next.at(i, node);
        const auto x0 = ens.point(0, 0);
        const double own = 2.0 * u0 * driver_at(i, x0, u_k.at(i, node), v_k.at(i, node), c, 0) * dv[i];
        MeanAccumulator acc, spread;
        Stencil st;
        for (std::size_t j = 0; j < ens.paths; ++j) {
          double later = 0.0;
          for (std::size_t k = 1; i + k + 1 < nt; ++k) {
            const std::size_t r = i + k;
            if (dv[r] <= 0.0) continue;
            const auto x = ens.point(j, k);
            make_stencil(*grid_, x, st);
            const double wr = apply_row(w, r, st);
            const double ur = u_next.apply(r, st);
            const double fr = driver_at(r, x, u_k.apply(r, st), v_k.apply(r, st), c, j);
            later += (wr - 2.0 * ur * fr) * dv[r];
          }
          const double q = g[j] * g[j] - later;
          acc.add(q);
          spread.add(q - 2.0 * u0 * g[j]);
        }
        double wi = (acc.mean() - u0 * u0 + own) / dv[i];
        if (wi < 0.0) {
          clamp_count[node] += 1;
          clamp_mass[node] += -wi;
          wi = 0.0;
        }
        w[c] = wi;
        wse[c] = spread.std_error() / dv[i];
      });
      for (std::size_t node = 0; node < nodes; ++node) {
        telemetry.count += clamp_count[node];
        telemetry.mass += clamp_mass[node];
      }
    }
    fill_undefined_rows(w, wse, defined);
    clamps_ = telemetry;
    return finish_v(std::move(w), std::move(wse));
  }

  /// Plug-in residuals of both mild equations for the pair (u, v).
  MildResiduals residuals(const ScalarField& u, const ScalarField& v) const {
    check_field(u);
    check_field(v);
    const std::size_t nodes = grid_->node_count(), nt = grid_->time_count();
    const auto dv = cache_.dv();
    MildResiduals out;
    const std::size_t n = grid_->cell_count();
    out.cell_residual_1.assign(n, 0.0);
    out.cell_residual_2.assign(n, 0.0);
    out.cell_stderr_1.assign(n, 0.0);
    out.cell_stderr_2.assign(n, 0.0);
    out.cell_outside.assign(n, 0.0);
    parallel_for(n, cfg_.threads, [&](std::size_t c) {
      const std::size_t i = c / nodes, node = c % nodes;
      const PathEnsemble& ens = cache_.cell(i, node);
      const double* g = terminal_g_.data() + c * cache_.paths();
      MeanAccumulator line1, line2;
      Stencil st;
      std::size_t outside = 0, seen = 0;
      for (std::size_t j = 0; j < ens.paths; ++j) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t k = 0; i + k + 1 < nt; ++k) {
          const std::size_t r = i + k;
          const auto x = ens.point(j, k);
          ++seen;
          if (!grid_->contains(x)) ++outside;
          make_stencil(*grid_, x, st);
          const double ur = u.apply(r, st), vr = v.apply(r, st);
          const double fr = driver_at(r, x, ur, vr, c, j);
          s1 += fr * dv[r];
          s2 += (vr * vr - 2.0 * ur * fr) * dv[r];
        }
        line1.add(g[j] + s1);
        line2.add(g[j] * g[j] - s2);
      }
      const double u0 = u.at(i, node);
      out.cell_residual_1[c] = std::fabs(u0 - line1.mean());
      out.cell_residual_2[c] = std::fabs(u0 * u0 - line2.mean());
      out.cell_stderr_1[c] = line1.std_error();
      out.cell_stderr_2[c] = line2.std_error();
      out.cell_outside[c] = seen ? static_cast<double>(outside) / static_cast<double>(seen) : 0.0;
    });
    for (std::size_t c = 0; c < n; ++c) {
      out.residual_1 = std::max(out.residual_1, out.cell_residual_1[c]);
      out.residual_2 = std::max(out.residual_2, out.cell_residual_2[c]);
      const double uc = u.values()[c];
      out.scale_1 = std::max(out.scale_1, std::fabs(uc));
      out.scale_2 = std::max(out.scale_2, uc * uc);
    }
    return out;
  }

  /// Picard iteration from u0 = v0 = 0.
  MildSolution solve() const {
    ScalarField u = zero_field(), v = zero_field();
    ScalarField u_se = zero_field(), v_se = zero_field();
    MildSolution out{u, v, u_se, v_se, 0, false, {}, {}, 0.0, {}, 0.0, {}};
    ClampTelemetry clamps;
    for (std::size_t it = 1; it <= cfg_.max_iterations; ++it) {
      auto [un, vn] = [&] {
        try {
          FieldUpdate nu = update_u(u, v);
          if (cfg_.damping < 1.0) nu.value = damp(u, nu.value);
          FieldUpdate nv = cfg_.v_scheme == VScheme::Variance ? update_v_variance(nu.value, v)
                                                              : update_v_volterra(nu.value, u, v);
          return std::pair<FieldUpdate, FieldUpdate>(std::move(nu), std::move(nv));
        } catch (const NumericalError& e) {
          throw NumericalError(std::string(e.what()) + " (Picard iteration " + std::to_string(it) + ")");
        }
      }();
      if (cfg_.v_scheme == VScheme::Volterra) {
        clamps.count += clamps_.count;
        clamps.mass += clamps_.mass;
      }
      const double delta = field_distance(un.value, u);
      out.delta_history.push_back(delta);
      u = un.value;
      v = vn.value;
      u_se = un.std_error;
      v_se = vn.std_error;
      out.iterations = it;
      if (delta < cfg_.tolerance) {
        out.converged = true;
        break;
      }
    }
    out.u = u;
    out.v = v;
    out.u_stderr = u_se;
    out.v_stderr = v_se;
    out.clamps = clamps;
    out.out_of_bounds_fraction = oob_fraction_;
    for (double s : u_se.values()) out.max_u_stderr = std::max(out.max_u_stderr, s);
    out.residuals = residuals(u, v);
    out.warnings = warnings_;
    if (oob_fraction_ > 0.01)
      out.warnings.push_back("mild: " + std::to_string(100.0 * oob_fraction_) +
                             "% of path points fell outside the space bounds and were clamped");
    if (!out.converged)
      out.warnings.push_back("mild: not converged after " + std::to_string(out.iterations) + " iterations");
    return out;
  }

  /// Re-estimates u and v at (t_{s_index}, x) from a fresh ensemble of M paths,
  /// holding the converged fields fixed (one application of the line-1 map and of the
  /// one-step bracket estimator).
  PointEstimate refine_at(const MildSolution& sol, std::size_t s_index, std::span<const double> x, std::size_t M,
                          std::uint64_t seed) const {
    check_field(sol.u);
    const std::size_t nt = grid_->time_count();
    if (s_index >= nt) throw InputError("refine: s is not a grid time");
    const PathEnsemble ens = simulate(problem_.generator, problem_.clock, *grid_, s_index, x, M, seed, cfg_.threads);
    const auto dv = cache_.dv();
    MeanAccumulator acc;
    Stencil st;
    for (std::size_t j = 0; j < ens.paths; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; s_index + k + 1 < nt; ++k) {
        const std::size_t r = s_index + k;
        const auto xr = ens.point(j, k);
        make_stencil(*grid_, xr, st);
        sum += driver_at(r, xr, sol.u.apply(r, st), sol.v.apply(r, st), 0, j) * dv[r];
      }
      acc.add(problem_.g(ens.terminal(j)) + sum);
    }
    PointEstimate pe;
    pe.s_index = s_index;
    pe.x.assign(x.begin(), x.end());
    pe.u = acc.estimate();
    if (s_index + 1 >= nt) {
      make_stencil(*grid_, x, st);
      pe.v = {sol.v.apply(s_index, st), 0.0};
      return pe;
    }
    std::size_t i = s_index;
    while (i + 1 < nt && dv[i] <= 0.0) ++i;
    if (i + 1 >= nt) {
      pe.v = {0.0, 0.0};
      return pe;
    }
    // The increment is taken within the converged field: its Monte-Carlo error is
    // coherent across neighboring cells (shared noise), unlike that of pe.u.
    make_quadratic_stencil(*grid_, x, st);
    const double u_ref = sol.u.apply(i, st);
    make_stencil(*grid_, x, st);
    const double drift = driver_at(i, x, u_ref, sol.v.apply(i, st), 0, 0) * dv[i];
    MeanAccumulator sq;
    for (std::size_t j = 0; j < ens.paths; ++j) {
      make_quadratic_stencil(*grid_, ens.point(j, i - s_index + 1), st);
      const double inc = sol.u.apply(i + 1, st) - u_ref + drift;
      sq.add(inc * inc);
    }
    const double w = std::max(sq.mean() / dv[i], 0.0);
    pe.v = v_estimate(w, sq.std_error() / dv[i]);
    return pe;
  }

 private:
  static Estimate v_estimate(double w, double w_se) {
    const double v = std::sqrt(std::max(w, 0.0));
    return {v, v > 0.0 ? w_se / (2.0 * v) : std::sqrt(w_se)};
  }

  void precompute_terminal() {
    const std::size_t M = cache_.paths();
    terminal_g_.assign(grid_->cell_count() * M, 0.0);
    parallel_for(grid_->cell_count(), cfg_.threads, [&](std::size_t c) {
      const std::size_t nodes = grid_->node_count();
      const PathEnsemble& ens = cache_.cell(c / nodes, c % nodes);
      for (std::size_t j = 0; j < M; ++j) {
        try {
          terminal_g_[c * M + j] = problem_.g(ens.terminal(j));
        } catch (const DomainError& e) {
          throw DomainError(std::string("terminal_g: ") + e.what() + " (cell " + std::to_string(c) + ", path " +
                            std::to_string(j) + ")");
        }
      }
    });
  }

  double driver_at(std::size_t r, std::span<const double> x, double y, double z, std::size_t cell,
                   std::size_t path) const {
    try {
      return problem_.driver(grid_->time(r), x, y, z);
    } catch (const DomainError& e) {
      throw DomainError(std::string("driver: ") + e.what() + " (cell " + std::to_string(cell) + ", path " +
                        std::to_string(path) + ")");
    }
  }

  double apply_row(const std::vector<double>& values, std::size_t r, const Stencil& st) const {
    const double* row = values.data() + r * grid_->node_count();
    double acc = 0.0;
    for (std::size_t c = 0; c < st.count; ++c) acc += st.weight[c] * row[st.node[c]];
    return acc;
  }

  void check_field(const ScalarField& f) const {
    if (f.grid_ptr() != grid_ && !(f.grid() == *grid_)) throw InputError("mild: field is not on the cache grid");
  }

  ScalarField make_field(std::vector<double> values, const char* what) const {
    for (std::size_t c = 0; c < values.size(); ++c)
      if (!std::isfinite(values[c]))
        throw NumericalError(std::string("mild: non-finite ") + what + " at cell " + std::to_string(c));
    return ScalarField(grid_, std::move(values));
  }

  ScalarField damp(const ScalarField& prev, const ScalarField& next) const {
    const std::size_t nodes = grid_->node_count(), last = grid_->time_count() - 1;
    std::vector<double> out(next.values().begin(), next.values().end());
    for (std::size_t c = 0; c < out.size(); ++c)
      if (c / nodes != last) out[c] = (1.0 - cfg_.damping) * prev.values()[c] + cfg_.damping * out[c];
    return make_field(std::move(out), "u");
  }

  // Rows where w is not identified (dV = 0, or the terminal row) take the value of the
  // next defined row; a trailing undefined suffix takes the last defined row before it.
  void fill_undefined_rows(std::vector<double>& w, std::vector<double>& wse, const std::vector<char>& defined) const {
    const std::size_t nodes = grid_->node_count(), nt = grid_->time_count();
    auto copy_row = [&](std::size_t dst, std::size_t src) {
      std::copy_n(w.begin() + static_cast<std::ptrdiff_t>(src * nodes), nodes,
                  w.begin() + static_cast<std::ptrdiff_t>(dst * nodes));
      std::copy_n(wse.begin() + static_cast<std::ptrdiff_t>(src * nodes), nodes,
                  wse.begin() + static_cast<std::ptrdiff_t>(dst * nodes));
    };
    std::ptrdiff_t next_defined = -1;
    std::vector<std::ptrdiff_t> source(nt, -1);
    for (std::size_t i = nt; i-- > 0;) {
      if (defined[i])
        next_defined = static_cast<std::ptrdiff_t>(i);
      else
        source[i] = next_defined;
    }
    std::ptrdiff_t prev_defined = -1;
    bool warned = false;
    for (std::size_t i = 0; i < nt; ++i) {
      if (defined[i]) {
        prev_defined = static_cast<std::ptrdiff_t>(i);
        continue;
      }
      std::ptrdiff_t src = source[i] >= 0 ? source[i] : prev_defined;
      if (src >= 0) {
        copy_row(i, static_cast<std::size_t>(src));
        if (i + 1 < nt && !warned) {
          warnings_.push_back("mild: clock is flat on [t_" + std::to_string(i) +
                              ", t_" + std::to_string(i + 1) + "]; v carried from a neighboring time level");
          warned = true;
        }
      } else if (!warned) {
        warnings_.push_back("mild: clock is flat on the whole grid; v set to 0");
        warned = true;
      }
    }
  }

  FieldUpdate finish_v(std::vector<double> w, std::vector<double> wse) const {
    std::vector<double> v(w.size()), vse(w.size());
    for (std::size_t c = 0; c < w.size(); ++c) {
      const Estimate e = v_estimate(w[c], wse[c]);
      v[c] = e.value;
      vse[c] = e.std_error;
    }
    return {make_field(std::move(v), "v"), make_field(std::move(vse), "v stderr")};
  }

  const ProblemSpec& problem_;
  const EnsembleCache& cache_;
  PicardConfig cfg_;
  GridPtr grid_;
  std::vector<double> terminal_g_;
  mutable ClampTelemetry clamps_;
  mutable double oob_fraction_ = 0.0;
  mutable std::vector<std::string> warnings_;
};

inline FieldUpdate update_u(const ScalarField& u_k, const ScalarField& v_k, const ProblemSpec& problem,
                            const EnsembleCache& cache) {
  return MildSolver(problem, cache).update_u(u_k, v_k);
}

inline FieldUpdate update_v_variance(const ScalarField& u_next, const ScalarField& v_prev, const ProblemSpec& problem,
                                     const EnsembleCache& cache) {
  return MildSolver(problem, cache).update_v_variance(u_next, v_prev);
}

inline FieldUpdate update_v_volterra(const ScalarField& u_next, const ScalarField& u_k, const ScalarField& v_k,
                                     const ProblemSpec& problem, const EnsembleCache& cache) {
  return MildSolver(problem, cache).update_v_volterra(u_next, u_k, v_k);
}

inline MildResiduals mild_residuals(const ScalarField& u, const ScalarField& v, const ProblemSpec& problem,
                                    const EnsembleCache& cache) {
  return MildSolver(problem, cache).residuals(u, v);
}

inline MildSolution picard_solve(const ProblemSpec& problem, const EnsembleCache& cache, const PicardConfig& cfg) {
  return MildSolver(problem, cache, cfg).solve();
}

}  // namespace pseudopde
