#pragma once

// Grids, the clock V and scalar fields on a space-time grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pseudopde/error.hpp"

namespace pseudopde {

/// Non-decreasing continuous clock V : [0, T] -> R+ with V(0) = 0.
/// Either the identity V(t) = t or a piecewise-linear interpolation of samples.
class ClockV {
 public:
  enum class Kind { Identity, Tabulated };

  static ClockV identity() { return ClockV(); }

  static ClockV tabulated(std::vector<double> times, std::vector<double> values) {
    if (times.size() != values.size()) throw ConfigError("clock: times and values differ in length");
    if (times.size() < 2) throw ConfigError("clock: at least two samples required");
    if (times.front() != 0.0) throw ConfigError("clock: first sample must be at time 0");
    if (values.front() != 0.0) throw ConfigError("clock: V(0) must be 0");
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!std::isfinite(times[i]) || !std::isfinite(values[i])) throw ConfigError("clock: non-finite sample");
      if (i > 0 && !(times[i] > times[i - 1])) throw ConfigError("clock: sample times must be strictly increasing");
      if (i > 0 && values[i] < values[i - 1]) throw ConfigError("clock: V must be non-decreasing");
    }
    ClockV c;
    c.kind_ = Kind::Tabulated;
    c.times_ = std::move(times);
    c.values_ = std::move(values);
    return c;
  }

  Kind kind() const { return kind_; }
  const std::vector<double>& sample_times() const { return times_; }
  const std::vector<double>& sample_values() const { return values_; }

  /// Whether the clock is defined on all of [0, horizon].
  bool covers(double horizon) const { return kind_ == Kind::Identity || horizon <= times_.back(); }

  double operator()(double t) const {
    if (kind_ == Kind::Identity) return t;
    if (t < 0.0 || t > times_.back())
      throw ConfigError("clock: time " + std::to_string(t) + " outside sampled domain [0, " +
                        std::to_string(times_.back()) + "]");
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    if (it == times_.end()) return values_.back();
    const std::size_t hi = static_cast<std::size_t>(it - times_.begin());
    const std::size_t lo = hi - 1;
    const double w = (t - times_[lo]) / (times_[hi] - times_[lo]);
    return values_[lo] + w * (values_[hi] - values_[lo]);
  }

 private:
  ClockV() = default;
  Kind kind_ = Kind::Identity;
  std::vector<double> times_;
  std::vector<double> values_;
};

/// Tensor-product grid on [t0, T] x prod_k [lo_k, hi_k].
class SpaceTimeGrid {
 public:
  SpaceTimeGrid(std::vector<double> times, std::vector<double> space_min, std::vector<double> space_max,
                std::vector<std::size_t> space_nodes)
      : times_(std::move(times)), lo_(std::move(space_min)), hi_(std::move(space_max)), nodes_(std::move(space_nodes)) {
    if (times_.size() < 2) throw ConfigError("grid: at least two time points required");
    for (std::size_t i = 0; i < times_.size(); ++i) {
      if (!std::isfinite(times_[i])) throw ConfigError("grid: non-finite time");
      if (i > 0 && !(times_[i] > times_[i - 1])) throw ConfigError("grid: times must be strictly increasing");
    }
    if (lo_.empty()) throw ConfigError("grid: dimension must be >= 1");
    if (lo_.size() != hi_.size() || lo_.size() != nodes_.size())
      throw ConfigError("grid: space_min, space_max and space_nodes must have the same length");
    node_count_ = 1;
    for (std::size_t k = 0; k < lo_.size(); ++k) {
      if (!(lo_[k] < hi_[k]) || !std::isfinite(lo_[k]) || !std::isfinite(hi_[k]))
        throw ConfigError("grid: space_min < space_max required in every dimension");
      if (nodes_[k] < 2) throw ConfigError("grid: at least two space nodes per dimension");
      step_.push_back((hi_[k] - lo_[k]) / static_cast<double>(nodes_[k] - 1));
      node_count_ *= nodes_[k];
    }
  }

  /// Uniform grid with `steps` time steps on [0, horizon].
  static SpaceTimeGrid uniform(double horizon, std::size_t steps, std::vector<double> space_min,
                               std::vector<double> space_max, std::vector<std::size_t> space_nodes) {
    if (!(horizon > 0.0)) throw ConfigError("grid: horizon must be > 0");
    if (steps < 1) throw ConfigError("grid: at least one time step required");
    std::vector<double> times(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) times[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
    times.back() = horizon;
    return SpaceTimeGrid(std::move(times), std::move(space_min), std::move(space_max), std::move(space_nodes));
  }

  std::size_t dimension() const { return lo_.size(); }
  std::size_t time_count() const { return times_.size(); }
  std::size_t node_count() const { return node_count_; }
  std::size_t cell_count() const { return node_count_ * times_.size(); }
  const std::vector<double>& times() const { return times_; }
  double time(std::size_t i) const { return times_[i]; }
  double horizon() const { return times_.back(); }
  const std::vector<double>& space_min() const { return lo_; }
  const std::vector<double>& space_max() const { return hi_; }
  const std::vector<std::size_t>& space_nodes() const { return nodes_; }
  double spacing(std::size_t k) const { return step_[k]; }

  /// Coordinate of node `j` along dimension `k`.
  double coordinate(std::size_t k, std::size_t j) const {
    return j + 1 == nodes_[k] ? hi_[k] : lo_[k] + static_cast<double>(j) * step_[k];
  }

  /// Spatial point of flat node index `node` (dimension 0 varies fastest).
  std::vector<double> node_point(std::size_t node) const {
    std::vector<double> p(dimension());
    for (std::size_t k = 0; k < dimension(); ++k) {
      p[k] = coordinate(k, node % nodes_[k]);
      node /= nodes_[k];
    }
    return p;
  }

  /// Index of the grid time equal to `t`, or npos.
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t time_index(double t) const {
    auto it = std::lower_bound(times_.begin(), times_.end(), t);
    if (it != times_.end() && *it == t) return static_cast<std::size_t>(it - times_.begin());
    return npos;
  }

  /// Flat node index nearest to `x` (clamped).
  std::size_t nearest_node(std::span<const double> x) const {
    std::size_t node = 0, stride = 1;
    for (std::size_t k = 0; k < dimension(); ++k) {
      const double r = std::clamp((x[k] - lo_[k]) / step_[k], 0.0, static_cast<double>(nodes_[k] - 1));
      node += static_cast<std::size_t>(std::lround(r)) * stride;
      stride *= nodes_[k];
    }
    return node;
  }

  bool contains(std::span<const double> x) const {
    for (std::size_t k = 0; k < dimension(); ++k)
      if (x[k] < lo_[k] || x[k] > hi_[k]) return false;
    return true;
  }

  bool operator==(const SpaceTimeGrid& o) const {
    return times_ == o.times_ && lo_ == o.lo_ && hi_ == o.hi_ && nodes_ == o.nodes_;
  }

 private:
  std::vector<double> times_;
  std::vector<double> lo_, hi_;
  std::vector<std::size_t> nodes_;
  std::vector<double> step_;
  std::size_t node_count_ = 0;
};

using GridPtr = std::shared_ptr<const SpaceTimeGrid>;

inline GridPtr make_grid(SpaceTimeGrid grid) { return std::make_shared<const SpaceTimeGrid>(std::move(grid)); }

/// Clock increments dV_i = V(t_{i+1}) - V(t_i) over the grid times.
inline std::vector<double> v_increments(const SpaceTimeGrid& grid, const ClockV& clock) {
  if (!clock.covers(grid.horizon()) || grid.time(0) < 0.0)
    throw ConfigError("clock does not cover the grid time range");
  std::vector<double> dv(grid.time_count() - 1);
  double prev = clock(grid.time(0));
  for (std::size_t i = 0; i + 1 < grid.time_count(); ++i) {
    const double next = clock(grid.time(i + 1));
    dv[i] = next - prev;
    prev = next;
  }
  return dv;
}

/// Precomputed multilinear interpolation stencil for one spatial point.
struct Stencil {
  static constexpr std::size_t kMaxCorners = 16;
  std::size_t count = 0;
  std::size_t node[kMaxCorners]{};
  double weight[kMaxCorners]{};
  bool clamped = false;
};

/// Builds the stencil of `x` on `grid`; points outside the bounds are clamped to the
/// nearest boundary node.
inline void make_stencil(const SpaceTimeGrid& grid, std::span<const double> x, Stencil& st) {
  const std::size_t d = grid.dimension();
  if (x.size() != d) throw InputError("interpolate: point dimension mismatch");
  if (d > 4) throw UnsupportedError("interpolate: dimension > 4 is not supported");
  std::size_t base[4];
  double frac[4];
  st.clamped = false;
  for (std::size_t k = 0; k < d; ++k) {
    if (!std::isfinite(x[k])) throw InputError("interpolate: non-finite coordinate");
    const std::size_t n = grid.space_nodes()[k];
    double r = (x[k] - grid.space_min()[k]) / grid.spacing(k);
    if (r <= 0.0) {
      st.clamped |= r < 0.0;
      base[k] = 0;
      frac[k] = 0.0;
    } else if (r >= static_cast<double>(n - 1)) {
      st.clamped |= x[k] > grid.space_max()[k];
      base[k] = n - 2;
      frac[k] = 1.0;
    } else {
      const double fl = std::floor(r);
      base[k] = static_cast<std::size_t>(fl);
      frac[k] = r - fl;
    }
  }
  st.count = std::size_t{1} << d;
  for (std::size_t c = 0; c < st.count; ++c) {
    std::size_t node = 0, stride = 1;
    double w = 1.0;
    for (std::size_t k = 0; k < d; ++k) {
      const bool upper = (c >> k) & 1U;
      node += (base[k] + (upper ? 1 : 0)) * stride;
      w *= upper ? frac[k] : 1.0 - frac[k];
      stride *= grid.space_nodes()[k];
    }
    st.node[c] = node;
    st.weight[c] = w;
  }
}

/// Three-point Lagrange stencil around the nearest node (d = 1, at least 3 nodes);
/// other grids get the multilinear stencil. Points outside the bounds are clamped.
inline void make_quadratic_stencil(const SpaceTimeGrid& grid, std::span<const double> x, Stencil& st) {
  if (grid.dimension() != 1 || grid.space_nodes()[0] < 3) {
    make_stencil(grid, x, st);
    return;
  }
  if (!std::isfinite(x[0])) throw InputError("interpolate: non-finite coordinate");
  const std::size_t n = grid.space_nodes()[0];
  const double lo = grid.space_min()[0], h = grid.spacing(0);
  st.clamped = x[0] < lo || x[0] > grid.space_max()[0];
  const double r = std::clamp((x[0] - lo) / h, 0.0, static_cast<double>(n - 1));
  const auto c = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(r)), 1, n - 2);
  double q = r - static_cast<double>(c);
  // points that sit on a node up to rounding read the node value exactly
  if (std::fabs(q) < 1e-12) q = 0.0;
  st.count = 3;
  st.node[0] = c - 1;
  st.node[1] = c;
  st.node[2] = c + 1;
  st.weight[0] = 0.5 * q * (q - 1.0);
  st.weight[1] = (1.0 - q) * (1.0 + q);
  st.weight[2] = 0.5 * q * (q + 1.0);
}

/// Values on a SpaceTimeGrid, indexed (time index, flat node index).
/// Defined only at grid times; multilinear in space, clamped outside the bounds.
class ScalarField {
 public:
  ScalarField(GridPtr grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (!grid_) throw InputError("field: null grid");
    if (values_.size() != grid_->cell_count()) throw InputError("field: value count does not match grid");
    for (double v : values_)
      if (!std::isfinite(v)) throw NumericalError("field: non-finite value");
  }

  static ScalarField constant(GridPtr grid, double c) {
    const std::size_t n = grid->cell_count();
    return ScalarField(std::move(grid), std::vector<double>(n, c));
  }

  const SpaceTimeGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::span<const double> values() const { return values_; }
  double at(std::size_t time_index, std::size_t node) const { return values_[time_index * grid_->node_count() + node]; }

  /// Row of values at one grid time.
  std::span<const double> row(std::size_t time_index) const {
    return std::span<const double>(values_).subspan(time_index * grid_->node_count(), grid_->node_count());
  }

  double interpolate(std::size_t time_index, std::span<const double> x) const {
    if (time_index >= grid_->time_count()) throw InputError("interpolate: time index out of range");
    Stencil st;
    make_stencil(*grid_, x, st);
    return apply(time_index, st);
  }

  double apply(std::size_t time_index, const Stencil& st) const {
    const double* row = values_.data() + time_index * grid_->node_count();
    double acc = 0.0;
    for (std::size_t c = 0; c < st.count; ++c) acc += st.weight[c] * row[st.node[c]];
    return acc;
  }

 private:
  GridPtr grid_;
  std::vector<double> values_;
};

inline double interpolate(const ScalarField& field, std::size_t time_index, std::span<const double> x) {
  return field.interpolate(time_index, x);
}

/// Sup norm of a - b over all grid nodes.
inline double field_distance(const ScalarField& a, const ScalarField& b) {
  if (a.grid_ptr() != b.grid_ptr() && !(a.grid() == b.grid()))
    throw InputError("field_distance: fields live on different grids");
  double m = 0.0;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) m = std::max(m, std::fabs(va[i] - vb[i]));
  return m;
}

}  // namespace pseudopde
