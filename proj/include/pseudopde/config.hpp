#pragma once

// JSON run configuration: validation with every violation reported at once, default
// filling, and the normalized echo that is written next to the outputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pseudopde/core.hpp"
#include "pseudopde/error.hpp"
#include "pseudopde/expr.hpp"
#include "pseudopde/mild_solver.hpp"
#include "pseudopde/problem.hpp"
#include "pseudopde/processes.hpp"
#include "pseudopde/regression.hpp"
#include "pseudopde/semigroup.hpp"

namespace pseudopde {

using json = nlohmann::ordered_json;

inline const std::vector<std::string>& known_phases() {
  static const std::vector<std::string> phases = {"mild", "fbsde", "crosscheck", "operators"};
  return phases;
}

/// All violations found in a configuration, one "path: message" per entry.
class ConfigErrors : public ConfigError {
 public:
  explicit ConfigErrors(std::vector<std::string> items) : ConfigError(join(items)), items_(std::move(items)) {}
  const std::vector<std::string>& items() const { return items_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : "\n") + s;
    return out;
  }
  std::vector<std::string> items_;
};

struct Origin {
  std::size_t s_index = 0;
  std::vector<double> x;
};

struct RunConfig {
  json normalized;
  ProblemSpec problem;
  GridPtr grid;
  std::uint64_t seed = 1;
  std::vector<std::string> phases;

  PicardConfig picard;
  std::size_t mild_paths = 2000;
  NoiseMode noise = NoiseMode::Shared;
  std::size_t memory_cap_bytes = std::size_t{3072} << 20;
  std::size_t refine_paths = 100000;
  std::size_t step_paths = 10000;
  bool check_lipschitz = true;

  std::size_t fbsde_paths = 100000;
  RegressionBasis basis = RegressionBasis::polynomial(8);
  std::vector<Origin> origins;

  std::size_t operator_paths = 100000;
  std::size_t operator_steps = 10;
  std::vector<double> operator_origin;

  std::vector<std::string> warnings;

  bool has_phase(const std::string& p) const { return std::find(phases.begin(), phases.end(), p) != phases.end(); }
};

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> phases;
};

namespace detail {

class ConfigReader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

  const json* child(const json& obj, const std::string& key) {
    if (!obj.is_object()) return nullptr;
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  double number(const json& obj, const std::string& key, const std::string& path, double def, bool required = false) {
    const json* v = child(obj, key);
    if (!v) {
      if (required) fail(path, "required");
      return def;
    }
    if (!v->is_number()) {
      fail(path, "must be a number");
      return def;
    }
    const double d = v->get<double>();
    if (!std::isfinite(d)) fail(path, "must be finite");
    return d;
  }

  std::size_t count(const json& obj, const std::string& key, const std::string& path, std::size_t def,
                    std::size_t min_value = 0) {
    const json* v = child(obj, key);
    if (!v) return def;
    if (!v->is_number_integer() || v->get<long long>() < 0) {
      fail(path, "must be a non-negative integer");
      return def;
    }
    const auto n = v->get<std::size_t>();
    if (n < min_value) fail(path, "must be >= " + std::to_string(min_value));
    return n;
  }

  std::string text(const json& obj, const std::string& key, const std::string& path, const std::string& def,
                   bool required = false) {
    const json* v = child(obj, key);
    if (!v) {
      if (required) fail(path, "required");
      return def;
    }
    if (v->is_string()) return v->get<std::string>();
    if (v->is_number()) return format_number(v->get<double>());
    fail(path, "must be a string");
    return def;
  }

  std::vector<double> numbers(const json& obj, const std::string& key, const std::string& path,
                              std::vector<double> def) {
    const json* v = child(obj, key);
    if (!v) return def;
    if (v->is_number()) return {v->get<double>()};
    if (!v->is_array()) {
      fail(path, "must be an array of numbers");
      return def;
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) {
        fail(path + "[" + std::to_string(i) + "]", "must be a number");
        return def;
      }
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }

  std::optional<Expression> expression(const std::string& src, int d, const std::string& path) {
    try {
      return Expression::parse(src, d);
    } catch (const InputError& e) {
      fail(path, e.what());
      return std::nullopt;
    }
  }

  static std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }
};

}  // namespace detail

/// Validates a parsed configuration and fills defaults. Throws ConfigErrors listing every
/// violation with its config path.
inline RunConfig validate_config(const json& in, const ConfigOverrides& ov = {}) {
  detail::ConfigReader r;
  RunConfig cfg;
  json norm;
  if (!in.is_object()) throw ConfigErrors({"(root): must be a JSON object"});

  const double schema = r.number(in, "schema", "schema", 1.0);
  if (schema != 1.0) r.fail("schema", "unsupported schema version (expected 1)");
  norm["schema"] = 1;

  // seed
  if (const json* s = r.child(in, "seed"); s && !s->is_number_unsigned())
    r.fail("seed", "must be a non-negative integer");
  else if (s)
    cfg.seed = s->get<std::uint64_t>();
  if (ov.seed) cfg.seed = *ov.seed;
  norm["seed"] = cfg.seed;

  // phases
  std::vector<std::string> phases = {"mild", "fbsde", "crosscheck"};
  if (const json* p = r.child(in, "phases")) {
    if (!p->is_array()) {
      r.fail("phases", "must be an array of phase names");
    } else {
      phases.clear();
      for (std::size_t i = 0; i < p->size(); ++i) {
        if (!(*p)[i].is_string())
          r.fail("phases[" + std::to_string(i) + "]", "must be a string");
        else
          phases.push_back((*p)[i].get<std::string>());
      }
    }
  }
  if (ov.phases) phases = *ov.phases;
  for (std::size_t i = 0; i < phases.size(); ++i)
    if (std::find(known_phases().begin(), known_phases().end(), phases[i]) == known_phases().end())
      r.fail("phases[" + std::to_string(i) + "]", "unknown phase '" + phases[i] + "' (known: mild, fbsde, crosscheck, operators)");
  // canonical order, no duplicates
  for (const auto& k : known_phases())
    if (std::find(phases.begin(), phases.end(), k) != phases.end()) cfg.phases.push_back(k);
  if (cfg.has_phase("crosscheck") && !cfg.has_phase("mild"))
    r.fail("phases", "crosscheck requires the mild phase");
  norm["phases"] = cfg.phases;

  // problem
  static const json kEmpty = json::object();
  const json* prob = r.child(in, "problem");
  if (!prob) r.fail("problem", "required");
  const json& P = prob ? *prob : kEmpty;
  json np;

  const json* gen = r.child(P, "generator");
  if (prob && !gen) r.fail("problem.generator", "required");
  const json& G = gen ? *gen : kEmpty;
  const std::string type = r.text(G, "type", "problem.generator.type", "diffusion", gen != nullptr);
  std::size_t d = 1;
  if (type == "diffusion" || type == "jump_diffusion") {
    if (const json* mu = r.child(G, "mu"); mu && mu->is_array()) d = std::max<std::size_t>(1, mu->size());
  }
  const double declared_d = r.number(P, "dimension", "problem.dimension", static_cast<double>(d));
  if (declared_d < 1 || declared_d != std::floor(declared_d) || declared_d > 4)
    r.fail("problem.dimension", "must be an integer in [1, 4]");
  else
    d = static_cast<std::size_t>(declared_d);
  const int di = static_cast<int>(d);
  np["dimension"] = d;

  // grid first: the distributional-drift table is checked against the bounds
  const json* grid_in = r.child(in, "grid");
  const json& Gr = grid_in ? *grid_in : kEmpty;
  const double T = r.number(P, "horizon_T", "problem.horizon_T", 1.0, prob != nullptr);
  if (!(T > 0.0)) r.fail("problem.horizon_T", "must be > 0");
  std::vector<double> lo = r.numbers(Gr, "space_min", "grid.space_min", std::vector<double>(d, -4.0));
  std::vector<double> hi = r.numbers(Gr, "space_max", "grid.space_max", std::vector<double>(d, 4.0));
  std::vector<double> nodes_d = r.numbers(Gr, "space_nodes", "grid.space_nodes", std::vector<double>(d, 41.0));
  if (lo.size() == 1 && d > 1) lo.assign(d, lo[0]);
  if (hi.size() == 1 && d > 1) hi.assign(d, hi[0]);
  if (nodes_d.size() == 1 && d > 1) nodes_d.assign(d, nodes_d[0]);
  std::vector<std::size_t> nodes;
  bool grid_ok = true;
  if (lo.size() != d || hi.size() != d || nodes_d.size() != d) {
    r.fail("grid", "space_min, space_max and space_nodes need one entry per dimension");
    grid_ok = false;
  } else {
    for (std::size_t k = 0; k < d; ++k) {
      if (!(lo[k] < hi[k])) {
        r.fail("grid.space_min[" + std::to_string(k) + "]", "must be < space_max");
        grid_ok = false;
      }
      if (nodes_d[k] < 2 || nodes_d[k] != std::floor(nodes_d[k])) {
        r.fail("grid.space_nodes[" + std::to_string(k) + "]", "must be an integer >= 2");
        grid_ok = false;
      }
      nodes.push_back(static_cast<std::size_t>(std::max(2.0, nodes_d[k])));
    }
  }
  std::vector<double> times;
  json ng;
  if (r.child(Gr, "times")) {
    times = r.numbers(Gr, "times", "grid.times", {});
    ng["times"] = times;
  } else {
    const std::size_t steps = r.count(Gr, "time_steps", "grid.time_steps", 50, 1);
    ng["time_steps"] = steps;
    if (T > 0.0 && steps >= 1) {
      times.resize(steps + 1);
      for (std::size_t i = 0; i <= steps; ++i) times[i] = T * static_cast<double>(i) / static_cast<double>(steps);
      times.back() = T;
    }
  }
  if (times.size() < 2) {
    r.fail("grid.times", "at least 2 time points are required");
    grid_ok = false;
  } else {
    for (std::size_t i = 1; i < times.size(); ++i)
      if (!(times[i] > times[i - 1])) {
        r.fail("grid.times", "must be strictly increasing");
        grid_ok = false;
        break;
      }
    if (times.back() != T) {
      r.fail("grid.times", "last time must equal problem.horizon_T");
      grid_ok = false;
    }
  }
  ng["space_min"] = lo;
  ng["space_max"] = hi;
  ng["space_nodes"] = nodes;
  if (grid_ok) {
    try {
      cfg.grid = make_grid(SpaceTimeGrid(times, lo, hi, nodes));
    } catch (const Error& e) {
      r.fail("grid", e.what());
      grid_ok = false;
    }
  }

  // generator
  json ngen;
  ngen["type"] = type;
  std::optional<GeneratorSpec> generator;
  auto read_diffusion = [&](const std::string& base) -> std::optional<Diffusion> {
    std::vector<std::string> mu(d, "0"), sigma(d * d, "0");
    for (std::size_t i = 0; i < d; ++i) sigma[i * d + i] = "1";
    auto read_list = [&](const std::string& key, std::vector<std::string>& out, std::size_t want) {
      const json* v = r.child(G, key);
      if (!v) return;
      if (v->is_string() || v->is_number()) {
        if (want != 1) {
          r.fail(base + "." + key, "needs " + std::to_string(want) + " entries");
          return;
        }
        out[0] = v->is_string() ? v->get<std::string>() : detail::ConfigReader::format_number(v->get<double>());
        return;
      }
      if (!v->is_array() || v->size() != want) {
        r.fail(base + "." + key, "needs " + std::to_string(want) + " entries");
        return;
      }
      for (std::size_t i = 0; i < want; ++i) {
        const json& e = (*v)[i];
        if (e.is_string())
          out[i] = e.get<std::string>();
        else if (e.is_number())
          out[i] = detail::ConfigReader::format_number(e.get<double>());
        else
          r.fail(base + "." + key + "[" + std::to_string(i) + "]", "must be an expression string or number");
      }
    };
    read_list("mu", mu, d);
    read_list("sigma", sigma, d * d);
    ngen["mu"] = mu;
    ngen["sigma"] = sigma;
    Diffusion out;
    bool ok = true;
    for (std::size_t i = 0; i < d; ++i) {
      auto e = r.expression(mu[i], di, base + ".mu[" + std::to_string(i) + "]");
      if (e && (e->uses_y() || e->uses_z())) {
        r.fail(base + ".mu[" + std::to_string(i) + "]", "may only use t and x");
        ok = false;
      }
      if (e) out.mu.push_back(*e); else ok = false;
    }
    for (std::size_t i = 0; i < d * d; ++i) {
      auto e = r.expression(sigma[i], di, base + ".sigma[" + std::to_string(i) + "]");
      if (e && (e->uses_y() || e->uses_z())) {
        r.fail(base + ".sigma[" + std::to_string(i) + "]", "may only use t and x");
        ok = false;
      }
      if (e) out.sigma.push_back(*e); else ok = false;
    }
    if (!ok) return std::nullopt;
    return out;
  };

  const std::string gpath = "problem.generator";
  if (type == "diffusion") {
    if (auto dd = read_diffusion(gpath)) generator = *dd;
  } else if (type == "jump_diffusion") {
    auto dd = read_diffusion(gpath);
    const double rate = r.number(G, "rate", gpath + ".rate", 0.0);
    if (!(rate >= 0.0)) r.fail(gpath + ".rate", "must be >= 0");
    const json* law = r.child(G, "jump_law");
    const json& L = law ? *law : kEmpty;
    const std::string kind = r.text(L, "kind", gpath + ".jump_law.kind", "two_point");
    const double param = r.number(L, "param", gpath + ".jump_law.param", 1.0);
    if (!(param > 0.0)) r.fail(gpath + ".jump_law.param", "must be > 0");
    JumpLaw jl;
    jl.param = param;
    if (kind == "two_point")
      jl.kind = JumpLaw::Kind::TwoPoint;
    else if (kind == "gaussian")
      jl.kind = JumpLaw::Kind::Gaussian;
    else if (kind == "laplace")
      jl.kind = JumpLaw::Kind::Laplace;
    else
      r.fail(gpath + ".jump_law.kind", "must be one of two_point, gaussian, laplace");
    ngen["rate"] = rate;
    ngen["jump_law"] = {{"kind", kind}, {"param", param}};
    if (dd) generator = JumpDiffusion{*dd, rate, jl};
  } else if (type == "stable") {
    const double alpha = r.number(G, "alpha", gpath + ".alpha", 2.0, true);
    const double scale = r.number(G, "scale", gpath + ".scale", 1.0);
    if (!(alpha > 0.0 && alpha <= 2.0)) r.fail(gpath + ".alpha", "must lie in (0, 2]");
    if (!(scale > 0.0)) r.fail(gpath + ".scale", "must be > 0");
    if (d != 1) r.fail(gpath, "stable generator requires problem.dimension = 1");
    ngen["alpha"] = alpha;
    ngen["scale"] = scale;
    generator = Stable{alpha, scale};
  } else if (type == "distributional_drift") {
    if (d != 1) r.fail(gpath, "distributional_drift requires problem.dimension = 1");
    const std::string sig = r.text(G, "sigma", gpath + ".sigma", "1");
    ngen["sigma"] = sig;
    auto sig_e = r.expression(sig, 1, gpath + ".sigma");
    if (sig_e && (sig_e->uses_t() || sig_e->uses_y() || sig_e->uses_z())) {
      r.fail(gpath + ".sigma", "may only use x1");
      sig_e.reset();
    }
    const json* b = r.child(G, "b");
    if (!b) r.fail(gpath + ".b", "required");
    std::vector<double> xs, bs;
    if (b) {
      if (r.child(*b, "table_x")) {
        xs = r.numbers(*b, "table_x", gpath + ".b.table_x", {});
        bs = r.numbers(*b, "table_b", gpath + ".b.table_b", {});
        if (xs.size() != bs.size() || xs.size() < 2) r.fail(gpath + ".b", "table_x and table_b need equal length >= 2");
        ngen["b"] = {{"table_x", xs}, {"table_b", bs}};
      } else {
        const std::string bexpr = r.text(*b, "expr", gpath + ".b.expr", "", true);
        const double tmin = r.number(*b, "table_min", gpath + ".b.table_min", lo.empty() ? -4.0 : lo[0]);
        const double tmax = r.number(*b, "table_max", gpath + ".b.table_max", hi.empty() ? 4.0 : hi[0]);
        const std::size_t tn = r.count(*b, "table_nodes", gpath + ".b.table_nodes", 10001, 2);
        ngen["b"] = {{"expr", bexpr}, {"table_min", tmin}, {"table_max", tmax}, {"table_nodes", tn}};
        auto be = r.expression(bexpr, 1, gpath + ".b.expr");
        if (be && (be->uses_t() || be->uses_y() || be->uses_z())) {
          r.fail(gpath + ".b.expr", "may only use x1");
          be.reset();
        }
        if (!(tmin < tmax)) r.fail(gpath + ".b", "table_min must be < table_max");
        if (be && tmin < tmax && tn >= 2) {
          xs.resize(tn);
          bs.resize(tn);
          try {
            for (std::size_t k = 0; k < tn; ++k) {
              xs[k] = tmin + (tmax - tmin) * static_cast<double>(k) / static_cast<double>(tn - 1);
              bs[k] = (*be)(0.0, std::span(&xs[k], 1));
            }
          } catch (const Error& e) {
            r.fail(gpath + ".b.expr", e.what());
            xs.clear();
          }
        }
      }
    }
    if (!xs.empty() && grid_ok && d == 1 && (xs.front() > lo[0] || xs.back() < hi[0]))
      r.fail(gpath + ".b", "table must cover the space bounds [grid.space_min, grid.space_max]");
    if (sig_e && xs.size() >= 2 && xs.size() == bs.size()) {
      try {
        DistributionalDrift dd = DistributionalDrift::make(xs, bs, *sig_e);
        const Expression& se = dd.sigma;
        auto [ta_lo, ta_hi] = dd.transform.ta_bounds([&se](double x) { return se(0.0, std::span(&x, 1)); });
        if (ta_hi / ta_lo > 1e6)
          cfg.warnings.push_back("problem.generator: exp(Sigma)/sigma spans [" + std::to_string(ta_lo) + ", " +
                                 std::to_string(ta_hi) + "] on the table; the h-transform is badly conditioned");
        generator = std::move(dd);
      } catch (const Error& e) {
        r.fail(gpath + ".b", e.what());
      }
    }
  } else {
    r.fail(gpath + ".type", "must be one of diffusion, jump_diffusion, stable, distributional_drift");
  }
  np["generator"] = ngen;

  // driver
  const json* drv = r.child(P, "driver");
  if (prob && !drv) r.fail("problem.driver", "required");
  const json& D = drv ? *drv : kEmpty;
  const std::string fexpr = r.text(D, "expr", "problem.driver.expr", "0", drv != nullptr);
  const double ky = r.number(D, "K_Y", "problem.driver.K_Y", 0.0);
  const double kz = r.number(D, "K_Z", "problem.driver.K_Z", 0.0);
  const double cp = r.number(D, "C_prime", "problem.driver.C_prime", 0.0);
  if (!(ky >= 0.0)) r.fail("problem.driver.K_Y", "must be >= 0");
  if (!(kz >= 0.0)) r.fail("problem.driver.K_Z", "must be >= 0");
  if (!(cp >= 0.0)) r.fail("problem.driver.C_prime", "must be >= 0");
  np["driver"] = {{"expr", fexpr}, {"K_Y", ky}, {"K_Z", kz}, {"C_prime", cp}};
  auto f_e = r.expression(fexpr, di, "problem.driver.expr");

  // terminal condition
  const json* tg = r.child(P, "terminal_g");
  std::string gexpr = "0";
  if (!tg) {
    if (prob) r.fail("problem.terminal_g", "required");
  } else if (tg->is_string()) {
    gexpr = tg->get<std::string>();
  } else {
    gexpr = r.text(*tg, "expr", "problem.terminal_g.expr", "0", true);
  }
  np["terminal_g"] = {{"expr", gexpr}};
  auto g_e = r.expression(gexpr, di, "problem.terminal_g.expr");
  if (g_e && (g_e->uses_y() || g_e->uses_z())) {
    r.fail("problem.terminal_g.expr", "may only use t and x");
    g_e.reset();
  }
  np["horizon_T"] = T;

  // clock
  ClockV clock = ClockV::identity();
  json nc;
  if (const json* c = r.child(P, "clock")) {
    const std::string kind = c->is_string() ? c->get<std::string>() : r.text(*c, "kind", "problem.clock.kind", "identity");
    nc["kind"] = kind;
    if (kind == "tabulated") {
      std::vector<double> ct = r.numbers(*c, "times", "problem.clock.times", {});
      std::vector<double> cv = r.numbers(*c, "values", "problem.clock.values", {});
      nc["times"] = ct;
      nc["values"] = cv;
      try {
        clock = ClockV::tabulated(ct, cv);
        if (T > 0.0 && !clock.covers(T)) r.fail("problem.clock", "does not cover [0, horizon_T]");
      } catch (const Error& e) {
        r.fail("problem.clock", e.what());
      }
    } else if (kind != "identity") {
      r.fail("problem.clock.kind", "must be identity or tabulated");
    }
  } else {
    nc["kind"] = "identity";
  }
  np["clock"] = nc;
  const double zeta = r.number(P, "growth_zeta", "problem.growth_zeta", 0.0);
  const double eta = r.number(P, "growth_eta", "problem.growth_eta", 0.0);
  if (!(zeta >= 0.0)) r.fail("problem.growth_zeta", "must be >= 0");
  if (!(eta >= 0.0)) r.fail("problem.growth_eta", "must be >= 0");
  np["growth_zeta"] = zeta;
  np["growth_eta"] = eta;
  norm["problem"] = np;
  norm["grid"] = ng;

  // mild
  const json* mild = r.child(in, "mild");
  const json& Mi = mild ? *mild : kEmpty;
  cfg.mild_paths = r.count(Mi, "paths", "mild.paths", 2000, 1);
  cfg.picard.max_iterations = r.count(Mi, "max_iterations", "mild.max_iterations", 20, 1);
  cfg.picard.tolerance = r.number(Mi, "tolerance", "mild.tolerance", 1e-3);
  if (!(cfg.picard.tolerance > 0.0)) r.fail("mild.tolerance", "must be > 0");
  cfg.picard.damping = r.number(Mi, "damping", "mild.damping", 1.0);
  if (!(cfg.picard.damping > 0.0 && cfg.picard.damping <= 1.0)) r.fail("mild.damping", "must lie in (0, 1]");
  const std::string vs = r.text(Mi, "v_scheme", "mild.v_scheme", "variance");
  if (vs == "variance")
    cfg.picard.v_scheme = VScheme::Variance;
  else if (vs == "volterra")
    cfg.picard.v_scheme = VScheme::Volterra;
  else
    r.fail("mild.v_scheme", "must be variance or volterra");
  const std::string noise = r.text(Mi, "noise", "mild.noise", "shared");
  if (noise == "shared")
    cfg.noise = NoiseMode::Shared;
  else if (noise == "independent")
    cfg.noise = NoiseMode::Independent;
  else
    r.fail("mild.noise", "must be shared or independent");
  const std::size_t cap_mb = r.count(Mi, "memory_cap_mb", "mild.memory_cap_mb", 3072, 1);
  cfg.memory_cap_bytes = cap_mb << 20;
  cfg.refine_paths = r.count(Mi, "refine_paths", "mild.refine_paths", 100000);
  cfg.step_paths = r.count(Mi, "step_paths", "mild.step_paths", 10000);
  if (const json* cl = r.child(Mi, "check_lipschitz")) {
    if (!cl->is_boolean())
      r.fail("mild.check_lipschitz", "must be a boolean");
    else
      cfg.check_lipschitz = cl->get<bool>();
  }
  norm["mild"] = {{"paths", cfg.mild_paths},       {"max_iterations", cfg.picard.max_iterations},
                  {"tolerance", cfg.picard.tolerance}, {"v_scheme", vs},
                  {"damping", cfg.picard.damping}, {"noise", noise},
                  {"memory_cap_mb", cap_mb},       {"refine_paths", cfg.refine_paths},
                  {"step_paths", cfg.step_paths},  {"check_lipschitz", cfg.check_lipschitz}};

  // fbsde
  const json* fb = r.child(in, "fbsde");
  const json& F = fb ? *fb : kEmpty;
  cfg.fbsde_paths = r.count(F, "paths", "fbsde.paths", 100000, 1);
  const json* bas = r.child(F, "basis");
  const json& B = bas ? *bas : kEmpty;
  const std::string bkind = r.text(B, "kind", "fbsde.basis.kind", "polynomial");
  const double ridge = r.number(B, "ridge", "fbsde.basis.ridge", 0.0);
  if (!(ridge >= 0.0)) r.fail("fbsde.basis.ridge", "must be >= 0");
  json nb;
  nb["kind"] = bkind;
  if (bkind == "polynomial") {
    const std::size_t deg = r.count(B, "degree", "fbsde.basis.degree", 8);
    cfg.basis = RegressionBasis::polynomial(static_cast<int>(deg), ridge);
    nb["degree"] = deg;
  } else if (bkind == "piecewise_constant") {
    const std::size_t bins = r.count(B, "bins", "fbsde.basis.bins", 20, 1);
    cfg.basis = RegressionBasis::piecewise_constant(static_cast<int>(bins), ridge);
    nb["bins"] = bins;
  } else {
    r.fail("fbsde.basis.kind", "must be polynomial or piecewise_constant");
  }
  nb["ridge"] = ridge;
  json norigins = json::array();
  auto snap_time = [&](double t, const std::string& path) -> std::optional<std::size_t> {
    if (!cfg.grid) return std::nullopt;
    const double tol = 1e-9 * std::max(1.0, T);
    for (std::size_t i = 0; i < cfg.grid->time_count(); ++i)
      if (std::fabs(cfg.grid->time(i) - t) <= tol) return i;
    r.fail(path, "is not a grid time");
    return std::nullopt;
  };
  if (const json* os = r.child(F, "origins"); os && !os->is_array()) {
    r.fail("fbsde.origins", "must be an array");
  } else {
    const json list = os ? *os : json::array({json{{"t", 0.0}, {"x", std::vector<double>(d, 0.0)}}});
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "fbsde.origins[" + std::to_string(i) + "]";
      const double t = r.number(list[i], "t", path + ".t", 0.0);
      const std::vector<double> x = r.numbers(list[i], "x", path + ".x", std::vector<double>(d, 0.0));
      if (x.size() != d) r.fail(path + ".x", "needs " + std::to_string(d) + " coordinates");
      norigins.push_back({{"t", t}, {"x", x}});
      if (auto si = snap_time(t, path + ".t")) {
        if (*si + 1 >= cfg.grid->time_count() && (cfg.has_phase("fbsde") || cfg.has_phase("crosscheck")))
          r.fail(path + ".t", "must be before horizon_T");
        cfg.origins.push_back({*si, x});
      }
    }
  }
  norm["fbsde"] = {{"paths", cfg.fbsde_paths}, {"basis", nb}, {"origins", norigins}};

  if ((cfg.has_phase("fbsde") || cfg.has_phase("crosscheck")) && cfg.grid) {
    const auto dv = v_increments(*cfg.grid, clock);
    const double m = *std::max_element(dv.begin(), dv.end());
    if (ky * m >= 1.0)
      r.fail("problem.driver.K_Y", "K_Y * max dV = " + detail::ConfigReader::format_number(ky * m) +
                                       " violates the FBSDE step rule K_Y * dV < 1; refine grid.time_steps");
  }

  // operators
  const json* op = r.child(in, "operators");
  const json& O = op ? *op : kEmpty;
  cfg.operator_paths = r.count(O, "paths", "operators.paths", 100000, 1);
  cfg.operator_steps = r.count(O, "time_steps", "operators.time_steps", 10, 1);
  cfg.operator_origin = r.numbers(O, "origin", "operators.origin", std::vector<double>(d, 0.0));
  if (cfg.operator_origin.size() != d) r.fail("operators.origin", "needs " + std::to_string(d) + " coordinates");
  norm["operators"] = {{"paths", cfg.operator_paths}, {"time_steps", cfg.operator_steps}, {"origin", cfg.operator_origin}};

  if (!r.errors.empty()) throw ConfigErrors(r.errors);

  cfg.problem.generator = *generator;
  cfg.problem.driver = LipschitzDriver{*f_e, ky, kz, cp, false};
  cfg.problem.terminal_g = *g_e;
  cfg.problem.horizon_T = T;
  cfg.problem.clock = clock;
  cfg.problem.growth_zeta = zeta;
  cfg.problem.growth_eta = eta;
  try {
    cfg.problem.validate();
  } catch (const Error& e) {
    throw ConfigErrors({std::string("problem: ") + e.what()});
  }
  cfg.picard.threads = 1;
  cfg.normalized = std::move(norm);
  return cfg;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigErrors({std::string("(root): invalid JSON: ") + e.what()});
  }
}

inline RunConfig validate_config_file(const std::string& path, const ConfigOverrides& ov = {}) {
  return validate_config(read_json_file(path), ov);
}

}  // namespace pseudopde
