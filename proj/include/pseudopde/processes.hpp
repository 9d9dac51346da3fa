#pragma once

// Time-homogeneous Markov path simulators for the supported generator classes:
// diffusions, jump diffusions with finite-activity symmetric jumps, symmetric
// alpha-stable processes and one-dimensional SDEs with distributional drift
// (simulated through the h-transform).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <boost/random/exponential_distribution.hpp>
#include <boost/random/laplace_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include "pseudopde/core.hpp"
#include "pseudopde/error.hpp"
#include "pseudopde/expr.hpp"
#include "pseudopde/parallel.hpp"
#include "pseudopde/rng.hpp"

namespace pseudopde {

/// Symmetric jump-size law of a compound Poisson component (applied per coordinate).
struct JumpLaw {
  enum class Kind { TwoPoint, Gaussian, Laplace };
  Kind kind = Kind::TwoPoint;
  /// TwoPoint: jump size a (+/-a equiprobable); Gaussian: standard deviation; Laplace: scale b.
  double param = 1.0;

  template <class Rng>
  double sample(Rng& rng) const {
    switch (kind) {
      case Kind::TwoPoint:
        return (rng() >> 63) ? param : -param;
      case Kind::Gaussian:
        return boost::random::normal_distribution<double>(0.0, param)(rng);
      case Kind::Laplace:
        return boost::random::laplace_distribution<double>(0.0, param)(rng);
    }
    return 0.0;
  }

  /// E[cos(k J)]; the characteristic function of the (symmetric) law.
  double characteristic(double k) const {
    switch (kind) {
      case Kind::TwoPoint: return std::cos(k * param);
      case Kind::Gaussian: return std::exp(-0.5 * k * k * param * param);
      case Kind::Laplace: return 1.0 / (1.0 + k * k * param * param);
    }
    return 1.0;
  }

  std::string name() const {
    switch (kind) {
      case Kind::TwoPoint: return "two_point";
      case Kind::Gaussian: return "gaussian";
      case Kind::Laplace: return "laplace";
    }
    return "?";
  }
};

/// dX = mu(t,X) dV + sigma(t,X) dW.  sigma is d x d, row-major.
struct Diffusion {
  std::vector<Expression> mu;
  std::vector<Expression> sigma;

  std::size_t dimension() const { return mu.size(); }

  static Diffusion brownian(int d = 1, double vol = 1.0) {
    Diffusion g;
    for (int i = 0; i < d; ++i) g.mu.push_back(Expression::constant(0.0, d));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) g.sigma.push_back(Expression::constant(i == j ? vol : 0.0, d));
    return g;
  }

  static Diffusion zero(int d = 1) { return brownian(d, 0.0); }

  static Diffusion from_text(const std::vector<std::string>& mu, const std::vector<std::string>& sigma) {
    const int d = static_cast<int>(mu.size());
    if (d < 1 || sigma.size() != mu.size() * mu.size())
      throw ConfigError("diffusion: mu needs d entries and sigma d*d entries");
    Diffusion g;
    for (const auto& m : mu) g.mu.push_back(Expression::parse(m, d));
    for (const auto& s : sigma) g.sigma.push_back(Expression::parse(s, d));
    return g;
  }
};

/// Diffusion plus compound Poisson jumps with rate `rate` per unit of V.
struct JumpDiffusion {
  Diffusion diffusion;
  double rate = 0.0;
  JumpLaw law;

  std::size_t dimension() const { return diffusion.dimension(); }
};

/// Symmetric alpha-stable process with symbol scale * |xi|^alpha (d = 1).
struct Stable {
  double alpha = 2.0;
  double scale = 1.0;

  std::size_t dimension() const { return 1; }
};

/// Tables of the h-transform: Sigma(x), h(x) = int_0^x exp(-Sigma), its inverse,
/// and sigma0(y) = (sigma h')(h^{-1}(y)) on the image nodes y_k = h(x_k).
class HTransform {
 public:
  HTransform() = default;
  HTransform(std::vector<double> x, std::vector<double> sigma_big, std::vector<double> h, std::vector<double> sigma0)
      : x_(std::move(x)), Sigma_(std::move(sigma_big)), h_(std::move(h)), sigma0_(std::move(sigma0)) {}

  const std::vector<double>& nodes() const { return x_; }
  const std::vector<double>& Sigma_table() const { return Sigma_; }
  const std::vector<double>& h_table() const { return h_; }
  const std::vector<double>& sigma0_table() const { return sigma0_; }

  double Sigma(double x) const { return lerp_clamped(x_, Sigma_, x); }

  /// h, extended linearly beyond the table with the end slopes exp(-Sigma).
  double h(double x) const {
    if (x < x_.front()) return h_.front() + (x - x_.front()) * std::exp(-Sigma_.front());
    if (x > x_.back()) return h_.back() + (x - x_.back()) * std::exp(-Sigma_.back());
    return lerp_clamped(x_, h_, x);
  }

  double h_inv(double y) const {
    if (y < h_.front()) return x_.front() + (y - h_.front()) * std::exp(Sigma_.front());
    if (y > h_.back()) return x_.back() + (y - h_.back()) * std::exp(Sigma_.back());
    return lerp_clamped(h_, x_, y);
  }

  /// sigma0 on the image interval; constant continuation outside.
  double sigma0(double y) const { return lerp_clamped(h_, sigma0_, y); }

  /// (min, max) over the table of exp(Sigma)/sigma; h is well behaved when this ratio stays bounded.
  std::pair<double, double> ta_bounds(const std::function<double(double)>& sigma) const {
    double lo = INFINITY, hi = 0.0;
    for (std::size_t k = 0; k < x_.size(); ++k) {
      const double r = std::exp(Sigma_[k]) / sigma(x_[k]);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    return {lo, hi};
  }

 private:
  static double lerp_clamped(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
    const std::size_t lo = hi - 1;
    const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + w * (ys[hi] - ys[lo]);
  }

  std::vector<double> x_, Sigma_, h_, sigma0_;
};

/// Builds the h-transform of dX = b'(X) dt + sigma(X) dW from a sampled continuous b.
/// Sigma(x) = 2 int_0^x sigma^{-2} db (Riemann-Stieltjes on the table),
/// h(x) = int_0^x exp(-Sigma) (trapezoid rule). The table must bracket 0.
inline HTransform build_h_transform(std::span<const double> xs, std::span<const double> bs,
                                    const std::function<double(double)>& sigma) {
  const std::size_t n = xs.size();
  if (n < 2 || bs.size() != n) throw InputError("h-transform: b table needs >= 2 nodes and matching sizes");
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::isfinite(xs[k]) || !std::isfinite(bs[k])) throw InputError("h-transform: non-finite table entry");
    if (k > 0 && !(xs[k] > xs[k - 1])) throw InputError("h-transform: table nodes must be strictly increasing");
  }
  if (!(xs.front() < 0.0 && xs.back() > 0.0) && xs.front() != 0.0 && xs.back() != 0.0)
    throw InputError("h-transform: table must contain the origin");

  std::vector<double> inv_var(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = sigma(xs[k]);
    if (!(s > 0.0) || !std::isfinite(s))
      throw InputError("h-transform: sigma must be positive, got " + std::to_string(s) + " at x=" +
                       std::to_string(xs[k]));
    inv_var[k] = 1.0 / (s * s);
  }

  std::vector<double> Sigma(n, 0.0);
  for (std::size_t k = 1; k < n; ++k)
    Sigma[k] = Sigma[k - 1] + (bs[k] - bs[k - 1]) * (inv_var[k - 1] + inv_var[k]);  // 2 * mean * db

  auto value_at_zero = [&](const std::vector<double>& ys) {
    const auto it = std::lower_bound(xs.begin(), xs.end(), 0.0);
    const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
    if (xs[hi] == 0.0) return ys[hi];
    const std::size_t lo = hi - 1;
    const double w = (0.0 - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + w * (ys[hi] - ys[lo]);
  };
  const double s0 = value_at_zero(Sigma);
  for (double& s : Sigma) s -= s0;

  std::vector<double> h(n, 0.0);
  for (std::size_t k = 1; k < n; ++k)
    h[k] = h[k - 1] + 0.5 * (xs[k] - xs[k - 1]) * (std::exp(-Sigma[k - 1]) + std::exp(-Sigma[k]));
  const double h0 = value_at_zero(h);
  for (double& v : h) v -= h0;
  for (std::size_t k = 1; k < n; ++k)
    if (!(h[k] > h[k - 1]) || !std::isfinite(h[k]))
      throw NumericalError("h-transform: h is not strictly increasing near x=" + std::to_string(xs[k]));

  std::vector<double> sigma0(n);
  for (std::size_t k = 0; k < n; ++k) sigma0[k] = sigma(xs[k]) * std::exp(-Sigma[k]);

  return HTransform(std::vector<double>(xs.begin(), xs.end()), std::move(Sigma), std::move(h), std::move(sigma0));
}

/// One-dimensional SDE with drift b' for a continuous b given as a table, simulated
/// as Y = h(X), dY = sigma0(Y) dW.
struct DistributionalDrift {
  std::vector<double> table_x;
  std::vector<double> table_b;
  Expression sigma;
  HTransform transform;

  std::size_t dimension() const { return 1; }

  static DistributionalDrift make(std::vector<double> xs, std::vector<double> bs, Expression sigma) {
    DistributionalDrift g;
    g.table_x = std::move(xs);
    g.table_b = std::move(bs);
    g.sigma = std::move(sigma);
    const Expression& s = g.sigma;
    g.transform = build_h_transform(g.table_x, g.table_b, [&s](double x) { return s(0.0, std::span(&x, 1)); });
    return g;
  }

  /// Samples b on `nodes` uniform points of [lo, hi].
  static DistributionalDrift sampled(const std::function<double(double)>& b, double lo, double hi, std::size_t nodes,
                                     Expression sigma) {
    if (nodes < 2) throw InputError("distributional drift: table needs >= 2 nodes");
    std::vector<double> xs(nodes), bs(nodes);
    for (std::size_t k = 0; k < nodes; ++k) {
      xs[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(nodes - 1);
      bs[k] = b(xs[k]);
    }
    return make(std::move(xs), std::move(bs), std::move(sigma));
  }
};

using GeneratorSpec = std::variant<Diffusion, JumpDiffusion, Stable, DistributionalDrift>;

inline std::size_t dimension_of(const GeneratorSpec& g) {
  return std::visit([](const auto& v) { return v.dimension(); }, g);
}

inline std::string fingerprint(const GeneratorSpec& g) {
  std::ostringstream os;
  os.precision(17);
  auto diffusion = [&](const Diffusion& d) {
    os << "mu=[";
    for (const auto& e : d.mu) os << e.to_string() << ";";
    os << "] sigma=[";
    for (const auto& e : d.sigma) os << e.to_string() << ";";
    os << "]";
  };
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Diffusion>) {
          os << "diffusion ";
          diffusion(v);
        } else if constexpr (std::is_same_v<T, JumpDiffusion>) {
          os << "jump_diffusion ";
          diffusion(v.diffusion);
          os << " rate=" << v.rate << " law=" << v.law.name() << "(" << v.law.param << ")";
        } else if constexpr (std::is_same_v<T, Stable>) {
          os << "stable alpha=" << v.alpha << " scale=" << v.scale;
        } else {
          std::uint64_t h = 1469598103934665603ULL;
          auto mix = [&h](double x) {
            std::uint64_t bits;
            std::memcpy(&bits, &x, sizeof bits);
            h = (h ^ bits) * 1099511628211ULL;
          };
          for (double x : v.table_x) mix(x);
          for (double b : v.table_b) mix(b);
          os << "distributional_drift nodes=" << v.table_x.size() << " table=" << std::hex << h << std::dec
             << " sigma=" << v.sigma.to_string();
        }
      },
      g);
  return os.str();
}

/// Validates generator parameters; throws ConfigError on the first violation.
inline void validate_generator(const GeneratorSpec& g) {
  auto check_diffusion = [](const Diffusion& d) {
    if (d.mu.empty()) throw ConfigError("generator: dimension must be >= 1");
    if (d.sigma.size() != d.mu.size() * d.mu.size()) throw ConfigError("generator: sigma must be d x d");
  };
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Diffusion>) {
          check_diffusion(v);
        } else if constexpr (std::is_same_v<T, JumpDiffusion>) {
          check_diffusion(v.diffusion);
          if (!(v.rate >= 0.0) || !std::isfinite(v.rate)) throw ConfigError("generator: jump rate must be >= 0");
          if (!(v.law.param > 0.0)) throw ConfigError("generator: jump law parameter must be > 0");
        } else if constexpr (std::is_same_v<T, Stable>) {
          if (!(v.alpha > 0.0 && v.alpha <= 2.0)) throw ConfigError("generator: stable alpha must lie in (0, 2]");
          if (!(v.scale > 0.0)) throw ConfigError("generator: stable scale must be > 0");
        } else {
          if (v.table_x.size() < 2) throw ConfigError("generator: drift table needs >= 2 nodes");
        }
      },
      g);
}

/// M simulated trajectories from (s, x) on the grid times t_s < ... < t_N.
/// Storage is path-major: value(path, k, coord).
struct PathEnsemble {
  double s = 0.0;
  std::size_t s_index = 0;
  std::vector<double> origin;
  std::vector<double> times;
  std::size_t paths = 0;
  std::size_t dim = 1;
  std::vector<double> data;
  std::uint64_t seed = 0;
  std::string generator;

  std::size_t time_count() const { return times.size(); }

  std::span<const double> point(std::size_t path, std::size_t k) const {
    return std::span<const double>(data).subspan((path * times.size() + k) * dim, dim);
  }
  double value(std::size_t path, std::size_t k, std::size_t coord = 0) const {
    return data[(path * times.size() + k) * dim + coord];
  }
  /// X at the last time (T) of path `path`.
  std::span<const double> terminal(std::size_t path) const { return point(path, times.size() - 1); }

  std::size_t bytes() const { return data.size() * sizeof(double); }
};

/// Standard symmetric alpha-stable variate (E exp(i xi S) = exp(-|xi|^alpha)) by the
/// Chambers-Mallows-Stuck transform.
template <class Rng>
double sample_symmetric_stable(double alpha, Rng& rng) {
  const double v = std::numbers::pi * (rng.uniform_open() - 0.5);
  if (alpha == 1.0) return std::tan(v);
  const double w = boost::random::exponential_distribution<double>(1.0)(rng);
  return std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
         std::pow(std::cos(v - alpha * v) / w, (1.0 - alpha) / alpha);
}

namespace detail {

class CoefficientCache {
 public:
  explicit CoefficientCache(const std::vector<Expression>& exprs) : exprs_(&exprs), constant_(true) {
    values_.resize(exprs.size());
    for (std::size_t i = 0; i < exprs.size(); ++i) {
      if (exprs[i].is_constant())
        values_[i] = exprs[i](0.0, {});
      else
        constant_ = false;
    }
  }
  bool all_zero() const {
    if (!constant_) return false;
    for (double v : values_)
      if (v != 0.0) return false;
    return true;
  }
  void eval(double t, std::span<const double> x, std::span<double> out) const {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (constant_ || (*exprs_)[i].is_constant()) ? values_[i] : (*exprs_)[i](t, x);
  }

 private:
  const std::vector<Expression>* exprs_;
  std::vector<double> values_;
  bool constant_;
};

inline void simulate_diffusion_step(const CoefficientCache& mu, const CoefficientCache& sigma, std::size_t d, double t,
                                    double dv, const double* x, double* next, double* buf_mu, double* buf_sig,
                                    double* z, Xoshiro256pp& rng) {
  boost::random::normal_distribution<double> normal;
  const std::span<const double> xs(x, d);
  mu.eval(t, xs, std::span(buf_mu, d));
  const bool noisy = !sigma.all_zero();
  if (noisy) sigma.eval(t, xs, std::span(buf_sig, d * d));
  for (std::size_t j = 0; j < d; ++j) z[j] = noisy ? normal(rng) : 0.0;
  const double sq = std::sqrt(dv);
  for (std::size_t i = 0; i < d; ++i) {
    double acc = x[i] + buf_mu[i] * dv;
    if (noisy)
      for (std::size_t j = 0; j < d; ++j) acc += buf_sig[i * d + j] * sq * z[j];
    next[i] = acc;
  }
}

}  // namespace detail

/// Simulates M paths from (t_s, x) up to T on the grid. Path j draws from a stream
/// derived from (seed, j) only, so output does not depend on `threads`.
inline PathEnsemble simulate(const GeneratorSpec& gen, const ClockV& clock, const SpaceTimeGrid& grid,
                             std::size_t s_index, std::span<const double> x, std::size_t M, std::uint64_t seed,
                             unsigned threads = 1) {
  if (M == 0) throw ConfigError("simulate: path count must be >= 1");
  if (s_index >= grid.time_count()) throw ConfigError("simulate: s is not a grid time");
  const std::size_t d = dimension_of(gen);
  if (x.size() != d) throw ConfigError("simulate: starting point dimension does not match generator");
  if (grid.dimension() != d) throw ConfigError("simulate: grid dimension does not match generator");
  for (double xi : x)
    if (!std::isfinite(xi)) throw InputError("simulate: non-finite starting point");
  if (std::holds_alternative<Stable>(gen) && d != 1) throw ConfigError("simulate: stable generator requires d = 1");
  validate_generator(gen);

  const std::vector<double> dv_all = v_increments(grid, clock);
  PathEnsemble ens;
  ens.s = grid.time(s_index);
  ens.s_index = s_index;
  ens.origin.assign(x.begin(), x.end());
  ens.times.assign(grid.times().begin() + static_cast<std::ptrdiff_t>(s_index), grid.times().end());
  ens.paths = M;
  ens.dim = d;
  ens.seed = seed;
  ens.generator = fingerprint(gen);
  const std::size_t nt = ens.times.size();
  ens.data.resize(M * nt * d);

  auto run_path = [&](std::size_t j) {
    Xoshiro256pp rng = path_stream(seed, j);
    double* p = ens.data.data() + j * nt * d;
    std::copy(x.begin(), x.end(), p);
    std::visit(
        [&](const auto& g) {
          using T = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<T, Diffusion> || std::is_same_v<T, JumpDiffusion>) {
            const Diffusion* diff;
            if constexpr (std::is_same_v<T, Diffusion>)
              diff = &g;
            else
              diff = &g.diffusion;
            detail::CoefficientCache mu(diff->mu), sig(diff->sigma);
            std::vector<double> buf(2 * d + d * d);
            for (std::size_t k = 0; k + 1 < nt; ++k) {
              const double dv = dv_all[s_index + k];
              const double t = ens.times[k];
              double* cur = p + k * d;
              double* nxt = p + (k + 1) * d;
              detail::simulate_diffusion_step(mu, sig, d, t, dv, cur, nxt, buf.data(), buf.data() + d,
                                              buf.data() + d + d * d, rng);
              if constexpr (std::is_same_v<T, JumpDiffusion>) {
                if (g.rate > 0.0 && dv > 0.0) {
                  const int jumps = boost::random::poisson_distribution<int, double>(g.rate * dv)(rng);
                  for (int n = 0; n < jumps; ++n)
                    for (std::size_t i = 0; i < d; ++i) nxt[i] += g.law.sample(rng);
                }
              }
            }
          } else if constexpr (std::is_same_v<T, Stable>) {
            for (std::size_t k = 0; k + 1 < nt; ++k) {
              const double dv = dv_all[s_index + k];
              const double inc = dv > 0.0 ? std::pow(g.scale * dv, 1.0 / g.alpha) * sample_symmetric_stable(g.alpha, rng)
                                           : 0.0;
              p[k + 1] = p[k] + inc;
            }
          } else {
            boost::random::normal_distribution<double> normal;
            double y = g.transform.h(x[0]);
            for (std::size_t k = 0; k + 1 < nt; ++k) {
              const double dv = dv_all[s_index + k];
              y += g.transform.sigma0(y) * std::sqrt(dv) * normal(rng);
              p[k + 1] = g.transform.h_inv(y);
            }
          }
        },
        gen);
    for (std::size_t i = 0; i < nt * d; ++i)
      if (!std::isfinite(p[i])) throw NumericalError("simulate: path " + std::to_string(j) + " became non-finite");
  };

  parallel_for(M, threads, run_path);
  return ens;
}

}  // namespace pseudopde
