#pragma once

// Monte-Carlo estimators of P_{s,T}[phi](x) and E^{s,x}[int_s^T psi(r, X_r) dV_r]
// over a frozen cache of path ensembles (common random numbers).

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pseudopde/core.hpp"
#include "pseudopde/error.hpp"
#include "pseudopde/parallel.hpp"
#include "pseudopde/processes.hpp"
#include "pseudopde/rng.hpp"

namespace pseudopde {

/// A Monte-Carlo estimate and its standard error.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Accumulates the sample mean and the standard error of the mean (M - 1 normalization).
class MeanAccumulator {
 public:
  void add(double v) {
    ++n_;
    const double delta = v - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (v - mean_);
  }
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double std_error() const { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }
  Estimate estimate() const { return {mean_, std_error()}; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

namespace detail {

template <class Fn>
decltype(auto) with_path_context(std::size_t path, Fn&& fn) {
  try {
    return fn();
  } catch (const DomainError& e) {
    throw DomainError(std::string(e.what()) + " (path " + std::to_string(path) + ")");
  }
}

}  // namespace detail

/// Sample mean of phi(X_T) over an ensemble.
template <class Phi>
Estimate terminal_mean(const PathEnsemble& ens, Phi&& phi) {
  MeanAccumulator acc;
  for (std::size_t j = 0; j < ens.paths; ++j)
    acc.add(detail::with_path_context(j, [&] { return static_cast<double>(phi(ens.terminal(j))); }));
  return acc.estimate();
}

/// Per-path left-endpoint sum sum_{k} psi(t_k, X_k) dV_k over [s, T), averaged over paths.
/// psi receives the global grid time index.
template <class Psi>
Estimate running_mean(const PathEnsemble& ens, std::span<const double> dv, Psi&& psi) {
  MeanAccumulator acc;
  const std::size_t nt = ens.time_count();
  for (std::size_t j = 0; j < ens.paths; ++j) {
    double sum = 0.0;
    detail::with_path_context(j, [&] {
      for (std::size_t k = 0; k + 1 < nt; ++k) {
        const std::size_t i = ens.s_index + k;
        sum += static_cast<double>(psi(i, ens.point(j, k))) * dv[i];
      }
      return 0;
    });
    acc.add(sum);
  }
  return acc.estimate();
}

/// How per-cell seeds are derived.
enum class NoiseMode {
  /// Every cell uses the same seed, so path j of every cell sees the same driving noise.
  Shared,
  /// Cell (i, node) uses a seed derived from (master seed, i, node).
  Independent,
};

struct CacheOptions {
  std::size_t memory_cap_bytes = std::size_t{3} << 30;
  unsigned threads = 1;
  NoiseMode noise = NoiseMode::Shared;
  /// Size of the separate one-step ensemble kept per cell for bracket estimates; 0 reuses
  /// the first step of the cell's own ensemble.
  std::size_t step_paths = 0;
};

/// One path ensemble per (grid time, grid node), frozen for the lifetime of a solve.
class EnsembleCache {
 public:
  EnsembleCache(GridPtr grid, std::vector<double> dv, std::vector<PathEnsemble> cells, std::uint64_t master_seed,
                std::string generator, std::size_t paths, NoiseMode noise,
                std::vector<std::vector<double>> steps = {}, std::size_t step_paths = 0)
      : grid_(std::move(grid)),
        dv_(std::move(dv)),
        cells_(std::move(cells)),
        steps_(std::move(steps)),
        master_seed_(master_seed),
        generator_(std::move(generator)),
        paths_(paths),
        step_paths_(step_paths),
        noise_(noise) {}

  const SpaceTimeGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::span<const double> dv() const { return dv_; }
  std::uint64_t master_seed() const { return master_seed_; }
  const std::string& generator() const { return generator_; }
  std::size_t paths() const { return paths_; }
  NoiseMode noise() const { return noise_; }
  std::size_t cell_count() const { return cells_.size(); }
  /// Paths in the one-step ensembles (the cell ensembles' own when no separate ones exist).
  std::size_t step_paths() const { return steps_.empty() ? paths_ : step_paths_; }

  /// X_{t_{i+1}} of one-step path j started at cell (time_index, node); time_index < N.
  std::span<const double> step_point(std::size_t time_index, std::size_t node, std::size_t j) const {
    if (steps_.empty()) return cell(time_index, node).point(j, 1);
    const std::size_t d = grid_->dimension();
    return std::span<const double>(steps_[time_index * grid_->node_count() + node]).subspan(j * d, d);
  }

  const PathEnsemble& cell(std::size_t time_index, std::size_t node) const {
    if (time_index >= grid_->time_count() || node >= grid_->node_count())
      throw InputError("cache: cell (" + std::to_string(time_index) + ", " + std::to_string(node) + ") not present");
    return cells_[time_index * grid_->node_count() + node];
  }

  std::size_t bytes() const {
    std::size_t b = 0;
    for (const auto& c : cells_) b += c.bytes();
    for (const auto& s : steps_) b += s.size() * sizeof(double);
    return b;
  }

  /// Seed used for cell (time_index, node).
  static std::uint64_t cell_seed(std::uint64_t master, NoiseMode noise, std::size_t time_index, std::size_t node) {
    return noise == NoiseMode::Shared ? derive_seed(master, {})
                                      : derive_seed(master, {static_cast<std::uint64_t>(time_index),
                                                             static_cast<std::uint64_t>(node)});
  }

  /// Seed of the one-step ensemble at (time_index, node): one per time level when shared.
  static std::uint64_t step_seed(std::uint64_t master, NoiseMode noise, std::size_t time_index, std::size_t node) {
    constexpr std::uint64_t tag = 0x5354u;
    return noise == NoiseMode::Shared ? derive_seed(master, {tag, time_index})
                                      : derive_seed(master, {tag, time_index, node});
  }

  /// Bytes a cache with these parameters would hold.
  static std::size_t required_bytes(const SpaceTimeGrid& grid, std::size_t paths, std::size_t step_paths = 0) {
    const std::size_t nt = grid.time_count();
    const std::size_t path_points = nt * (nt + 1) / 2;  // sum over start times of remaining points
    return (path_points * paths + (nt - 1) * step_paths) * grid.node_count() * grid.dimension() * sizeof(double);
  }

 private:
  GridPtr grid_;
  std::vector<double> dv_;
  std::vector<PathEnsemble> cells_;
  std::vector<std::vector<double>> steps_;
  std::uint64_t master_seed_;
  std::string generator_;
  std::size_t paths_;
  std::size_t step_paths_;
  NoiseMode noise_;
};

inline EnsembleCache build_cache(const GeneratorSpec& gen, const ClockV& clock, GridPtr grid, std::size_t M,
                                 std::uint64_t master_seed, const CacheOptions& opts = {}) {
  if (!grid) throw ConfigError("cache: null grid");
  if (M == 0) throw ConfigError("cache: path count must be >= 1");
  const std::size_t need = EnsembleCache::required_bytes(*grid, M, opts.step_paths);
  if (need > opts.memory_cap_bytes)
    throw ResourceError("cache: " + std::to_string(need >> 20) + " MiB needed, cap is " +
                        std::to_string(opts.memory_cap_bytes >> 20) +
                        " MiB; reduce paths or grid size, or use streaming mode");
  std::vector<double> dv = v_increments(*grid, clock);
  const std::size_t nodes = grid->node_count();
  std::vector<PathEnsemble> cells(grid->cell_count());
  parallel_for(cells.size(), opts.threads, [&](std::size_t c) {
    const std::size_t i = c / nodes, node = c % nodes;
    const std::vector<double> x = grid->node_point(node);
    cells[c] = simulate(gen, clock, *grid, i, x, M, EnsembleCache::cell_seed(master_seed, opts.noise, i, node));
  });
  std::vector<std::vector<double>> steps;
  if (opts.step_paths > 0) {
    const std::size_t nt = grid->time_count(), d = grid->dimension();
    steps.resize((nt - 1) * nodes);
    parallel_for(steps.size(), opts.threads, [&](std::size_t c) {
      const std::size_t i = c / nodes, node = c % nodes;
      const SpaceTimeGrid one({grid->time(i), grid->time(i + 1)}, grid->space_min(), grid->space_max(),
                              grid->space_nodes());
      const std::vector<double> x = grid->node_point(node);
      const PathEnsemble e =
          simulate(gen, clock, one, 0, x, opts.step_paths, EnsembleCache::step_seed(master_seed, opts.noise, i, node));
      std::vector<double>& out = steps[c];
      out.resize(opts.step_paths * d);
      for (std::size_t j = 0; j < opts.step_paths; ++j)
        for (std::size_t k = 0; k < d; ++k) out[j * d + k] = e.value(j, 1, k);
    });
  }
  return EnsembleCache(std::move(grid), std::move(dv), std::move(cells), master_seed, fingerprint(gen), M, opts.noise,
                       std::move(steps), opts.step_paths);
}

/// P_{t_i,T}[phi](x_node): sample mean of phi(X_T) over the cell's ensemble.
template <class Phi>
Estimate terminal_expectation(const EnsembleCache& cache, std::size_t time_index, std::size_t node, Phi&& phi) {
  return terminal_mean(cache.cell(time_index, node), std::forward<Phi>(phi));
}

/// E^{t_i,x}[int_{t_i}^T psi(r, X_r) dV_r] with left-endpoint quadrature on the grid.
template <class Psi>
Estimate running_expectation(const EnsembleCache& cache, std::size_t time_index, std::size_t node, Psi&& psi) {
  return running_mean(cache.cell(time_index, node), cache.dv(), std::forward<Psi>(psi));
}

struct ChapmanKolmogorovResult {
  double direct = 0.0;
  double two_stage = 0.0;
  double z = 0.0;
};

/// Compares E^{s,x}[phi(X_u)] with the estimate obtained by restarting fresh ensembles
/// at time t from the realized X_t. Each outer path is paired with `inner` restarted
/// paths (independent seeds), and z is the studentized mean of the paired differences.
/// `sim(s_index, x, M, seed)` must return a PathEnsemble on `grid`.
template <class Sim, class Phi>
ChapmanKolmogorovResult chapman_kolmogorov_test(Sim&& sim, const SpaceTimeGrid& grid, std::size_t s, std::size_t t,
                                                std::size_t u, std::span<const double> x, Phi&& phi, std::size_t M,
                                                std::uint64_t seed, std::size_t inner = 1) {
  if (!(s < t && t < u && u < grid.time_count())) throw ConfigError("chapman-kolmogorov: need s < t < u on the grid");
  if (M == 0 || inner == 0) throw ConfigError("chapman-kolmogorov: path counts must be >= 1");
  const PathEnsemble outer = sim(s, x, M, derive_seed(seed, {0}));
  MeanAccumulator direct, staged, diff;
  for (std::size_t j = 0; j < M; ++j) {
    const double a = phi(outer.point(j, u - s));
    const PathEnsemble restart = sim(t, outer.point(j, t - s), inner, derive_seed(seed, {1, j}));
    double b = 0.0;
    for (std::size_t r = 0; r < inner; ++r) b += phi(restart.point(r, u - t));
    b /= static_cast<double>(inner);
    direct.add(a);
    staged.add(b);
    diff.add(a - b);
  }
  ChapmanKolmogorovResult out{direct.mean(), staged.mean(), 0.0};
  const double se = diff.std_error();
  out.z = se > 0.0 ? diff.mean() / se : (diff.mean() == 0.0 ? 0.0 : INFINITY);
  return out;
}

/// Chapman-Kolmogorov diagnostic for a generator.
template <class Phi>
ChapmanKolmogorovResult chapman_kolmogorov_test(const GeneratorSpec& gen, const ClockV& clock,
                                                const SpaceTimeGrid& grid, std::size_t s, std::size_t t, std::size_t u,
                                                std::span<const double> x, Phi&& phi, std::size_t M,
                                                std::uint64_t seed) {
  auto sim = [&](std::size_t si, std::span<const double> xi, std::size_t m, std::uint64_t sd) {
    return simulate(gen, clock, grid, si, xi, m, sd);
  };
  return chapman_kolmogorov_test(sim, grid, s, t, u, x, std::forward<Phi>(phi), M, seed);
}

}  // namespace pseudopde
