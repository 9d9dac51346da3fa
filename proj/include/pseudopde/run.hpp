#pragma once

// Run orchestration: cache -> mild -> fbsde -> crosscheck -> operator tests, with CSV
// artifacts and a manifest. Links OpenSSL for the config hash.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "pseudopde/config.hpp"
#include "pseudopde/fbsde_solver.hpp"
#include "pseudopde/mild_solver.hpp"
#include "pseudopde/operators.hpp"
#include "pseudopde/semigroup.hpp"

namespace pseudopde {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitNotConverged = 2 };

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Comma-separated table with a leading "# config_sha256=..." line.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& hash, const std::vector<std::string>& columns)
      : out_(path, std::ios::binary) {
    if (!out_) throw ResourceError("cannot write '" + path.string() + "'");
    out_ << "# config_sha256=" << hash << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << "\n";
  }
  CsvWriter& cell(double v) {
    sep();
    out_ << fmt17(v);
    return *this;
  }
  CsvWriter& cell(std::size_t v) {
    sep();
    out_ << v;
    return *this;
  }
  CsvWriter& cell(const std::string& v) {
    sep();
    out_ << v;
    return *this;
  }
  void end_row() {
    out_ << "\n";
    first_ = true;
  }

 private:
  void sep() {
    if (!first_) out_ << ",";
    first_ = false;
  }
  std::ofstream out_;
  bool first_ = true;
};

inline std::vector<std::string> coordinate_columns(std::size_t d) {
  std::vector<std::string> c;
  for (std::size_t k = 0; k < d; ++k) c.push_back("x" + std::to_string(k + 1));
  return c;
}

inline void write_field_csv(const std::filesystem::path& path, const std::string& hash, const ScalarField& value,
                            const ScalarField& stderr_field) {
  const SpaceTimeGrid& g = value.grid();
  std::vector<std::string> cols = {"t"};
  for (auto& c : coordinate_columns(g.dimension())) cols.push_back(c);
  cols.push_back("value");
  cols.push_back("stderr");
  CsvWriter w(path, hash, cols);
  for (std::size_t i = 0; i < g.time_count(); ++i)
    for (std::size_t n = 0; n < g.node_count(); ++n) {
      w.cell(g.time(i));
      for (double x : g.node_point(n)) w.cell(x);
      w.cell(value.at(i, n)).cell(stderr_field.at(i, n));
      w.end_row();
    }
}

struct RunFlags {
  std::string out_dir = "out";
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> phases;
};

/// Seeds of the independent random streams of a run.
struct RunSeeds {
  static std::uint64_t cache(std::uint64_t s) { return derive_seed(s, {1}); }
  static std::uint64_t fbsde(std::uint64_t s, std::size_t o) { return derive_seed(s, {2, o}); }
  static std::uint64_t refine(std::uint64_t s, std::size_t o) { return derive_seed(s, {3, o}); }
  static std::uint64_t operators(std::uint64_t s, std::size_t f) { return derive_seed(s, {4, f}); }
  static std::uint64_t lipschitz(std::uint64_t s) { return derive_seed(s, {5}); }
};

struct OperatorRow {
  std::string test;
  std::string function;
  std::string statistic;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

/// Martingale and bracket tests of the configured generator on its standard test set.
inline std::vector<OperatorRow> operator_tests(const RunConfig& cfg, unsigned threads) {
  const auto& P = cfg.problem;
  const SpaceTimeGrid grid = SpaceTimeGrid::uniform(P.horizon_T, cfg.operator_steps, cfg.grid->space_min(),
                                                    cfg.grid->space_max(), cfg.grid->space_nodes());
  const std::vector<double> dv = v_increments(grid, P.clock);
  const auto set = standard_test_set(P.generator);
  std::vector<OperatorRow> rows;
  for (std::size_t f = 0; f < set.size(); ++f) {
    const PathEnsemble ens = simulate(P.generator, P.clock, grid, 0, cfg.operator_origin, cfg.operator_paths,
                                      RunSeeds::operators(cfg.seed, f), threads);
    const auto& tp = set[f];
    const MartingaleReport m = martingale_test(ens, dv, tp.phi, tp.a_phi, threads);
    rows.push_back({"martingale", tp.phi.name, "max_abs_z", m.max_abs_z, 4.0, m.max_abs_z < 4.0});
    if (tp.gamma) {
      const MartingaleReport b = bracket_test(ens, dv, tp.phi, tp.a_phi, tp.gamma, threads);
      rows.push_back({"bracket", tp.phi.name, "max_abs_z", b.max_abs_z, 4.0, b.max_abs_z < 4.0});
    }
  }
  return rows;
}

/// Executes a configuration and writes all artifacts into flags.out_dir.
/// Returns 0 on success, 2 when the mild solver ran but did not converge, 1 on error.
inline int run(const std::string& config_path, const RunFlags& flags, std::ostream& log) {
  namespace fs = std::filesystem;
  using clock = std::chrono::steady_clock;
  const fs::path out(flags.out_dir);
  json manifest;
  manifest["tool"] = "pseudopde";
  manifest["version"] = kVersion;
  json timings = json::object();
  json warnings = json::array();
  int code = kExitOk;
  std::string hash;

  auto write_manifest = [&] {
    manifest["timings_seconds"] = timings;
    manifest["warnings"] = warnings;
    manifest["exit_code"] = code;
    std::ofstream m(out / "manifest.json", std::ios::binary);
    if (m) m << manifest.dump(2) << "\n";
  };

  try {
    fs::create_directories(out);
  } catch (const fs::filesystem_error& e) {
    log << "error: cannot create output directory: " << e.what() << "\n";
    return kExitError;
  }

  std::string phase = "validate";
  try {
    auto t0 = clock::now();
    ConfigOverrides ov{flags.seed, flags.phases};
    RunConfig cfg = validate_config_file(config_path, ov);
    cfg.picard.threads = flags.threads;
    const std::string emitted = cfg.normalized.dump(2) + "\n";
    hash = sha256_hex(emitted);
    {
      std::ofstream c(out / "config.json", std::ios::binary);
      if (!c) throw ResourceError("cannot write config copy");
      c << emitted;
    }
    manifest["config_sha256"] = hash;
    manifest["config_copy"] = "config.json";
    manifest["seed"] = cfg.seed;
    manifest["phases"] = cfg.phases;
    manifest["threads"] = flags.threads;
    for (const auto& w : cfg.warnings) warnings.push_back(w);
    timings["validate"] = std::chrono::duration<double>(clock::now() - t0).count();

    if (cfg.check_lipschitz && cfg.problem.driver.f.uses_y() + cfg.problem.driver.f.uses_z() > 0) {
      LipschitzDriver drv = cfg.problem.driver;
      const LipschitzCheck lc = spot_check_lipschitz(drv, *cfg.grid, 10.0, 10.0, 2000, RunSeeds::lipschitz(cfg.seed));
      manifest["lipschitz_check"] = {{"max_quotient_y", lc.max_quotient_y},
                                     {"max_quotient_z", lc.max_quotient_z},
                                     {"ok", lc.ok}};
      if (!lc.ok) warnings.push_back("driver: sampled difference quotients exceed the declared K_Y/K_Z");
      cfg.problem.driver.lipschitz_verified = lc.ok;
    }

    std::optional<EnsembleCache> cache;
    std::optional<MildSolver> solver;
    std::optional<MildSolution> mild;
    std::vector<std::optional<BsdeSolution>> bsde(cfg.origins.size());

    if (cfg.has_phase("mild")) {
      phase = "cache";
      t0 = clock::now();
      CacheOptions co{cfg.memory_cap_bytes, flags.threads, cfg.noise, cfg.step_paths};
      cache.emplace(build_cache(cfg.problem.generator, cfg.problem.clock, cfg.grid, cfg.mild_paths,
                                RunSeeds::cache(cfg.seed), co));
      timings["cache"] = std::chrono::duration<double>(clock::now() - t0).count();
      manifest["cache_bytes"] = cache->bytes();
      log << "cache: " << cache->cell_count() << " cells, " << (cache->bytes() >> 20) << " MiB\n";

      phase = "mild";
      t0 = clock::now();
      solver.emplace(cfg.problem, *cache, cfg.picard);
      mild.emplace(solver->solve());
      timings["mild"] = std::chrono::duration<double>(clock::now() - t0).count();
      write_field_csv(out / "u.csv", hash, mild->u, mild->u_stderr);
      write_field_csv(out / "v.csv", hash, mild->v, mild->v_stderr);
      {
        CsvWriter w(out / "deltas.csv", hash, {"iteration", "sup_delta"});
        for (std::size_t k = 0; k < mild->delta_history.size(); ++k) {
          w.cell(k + 1).cell(mild->delta_history[k]);
          w.end_row();
        }
      }
      manifest["mild"] = {{"converged", mild->converged},
                          {"iterations", mild->iterations},
                          {"residual_1", mild->residuals.residual_1},
                          {"residual_2", mild->residuals.residual_2},
                          {"scale_1", mild->residuals.scale_1},
                          {"scale_2", mild->residuals.scale_2},
                          {"interior_residual_1", mild->residuals.interior_residual(1)},
                          {"interior_residual_2", mild->residuals.interior_residual(2)},
                          {"max_u_stderr", mild->max_u_stderr},
                          {"clamp_count", mild->clamps.count},
                          {"clamp_mass", mild->clamps.mass},
                          {"out_of_bounds_fraction", mild->out_of_bounds_fraction}};
      for (const auto& w : mild->warnings) warnings.push_back(w);
      log << "mild: " << (mild->converged ? "converged" : "not converged") << " after " << mild->iterations
          << " iterations\n";
      if (!mild->converged) code = kExitNotConverged;
    }

    BsdeOptions bo;
    bo.basis = cfg.basis;
    bo.threads = flags.threads;
    if (cfg.has_phase("fbsde")) {
      phase = "fbsde";
      t0 = clock::now();
      std::vector<std::string> cols = {"s"};
      for (auto& c : coordinate_columns(cfg.problem.dimension())) cols.push_back(c);
      for (const char* c : {"y0", "y0_stderr", "z0", "z0_stderr"}) cols.push_back(c);
      CsvWriter w(out / "fbsde.csv", hash, cols);
      for (std::size_t o = 0; o < cfg.origins.size(); ++o) {
        bsde[o] = lsmc_solve(cfg.problem, *cfg.grid, cfg.origins[o].s_index, cfg.origins[o].x, cfg.fbsde_paths,
                             RunSeeds::fbsde(cfg.seed, o), bo);
        w.cell(bsde[o]->s);
        for (double x : bsde[o]->x) w.cell(x);
        w.cell(bsde[o]->y0.value).cell(bsde[o]->y0.std_error).cell(bsde[o]->z0.value).cell(bsde[o]->z0.std_error);
        w.end_row();
      }
      timings["fbsde"] = std::chrono::duration<double>(clock::now() - t0).count();
    }

    if (cfg.has_phase("crosscheck")) {
      phase = "crosscheck";
      t0 = clock::now();
      std::vector<std::string> cols = {"s"};
      for (auto& c : coordinate_columns(cfg.problem.dimension())) cols.push_back(c);
      for (const char* c : {"u", "y0", "v", "z0", "combined_stderr"}) cols.push_back(c);
      CsvWriter w(out / "crosscheck.csv", hash, cols);
      for (std::size_t o = 0; o < cfg.origins.size(); ++o) {
        const Origin& org = cfg.origins[o];
        if (!bsde[o])
          bsde[o] = lsmc_solve(cfg.problem, *cfg.grid, org.s_index, org.x, cfg.fbsde_paths,
                               RunSeeds::fbsde(cfg.seed, o), bo);
        Estimate u, v;
        if (cfg.refine_paths > 0) {
          const PointEstimate pe =
              solver->refine_at(*mild, org.s_index, org.x, cfg.refine_paths, RunSeeds::refine(cfg.seed, o));
          u = pe.u;
          v = pe.v;
        } else {
          u = {mild->u.interpolate(org.s_index, org.x), mild->u_stderr.interpolate(org.s_index, org.x)};
          v = {mild->v.interpolate(org.s_index, org.x), mild->v_stderr.interpolate(org.s_index, org.x)};
        }
        w.cell(cfg.grid->time(org.s_index));
        for (double x : org.x) w.cell(x);
        w.cell(u.value).cell(bsde[o]->y0.value).cell(v.value).cell(bsde[o]->z0.value);
        w.cell(std::hypot(u.std_error, bsde[o]->y0.std_error));
        w.end_row();
      }
      timings["crosscheck"] = std::chrono::duration<double>(clock::now() - t0).count();
    }

    if (cfg.has_phase("operators")) {
      phase = "operators";
      t0 = clock::now();
      const auto rows = operator_tests(cfg, flags.threads);
      CsvWriter w(out / "operator_report.csv", hash, {"test", "function", "statistic", "value", "threshold", "pass"});
      for (const auto& r : rows) {
        w.cell(r.test).cell(r.function).cell(r.statistic).cell(r.value).cell(r.threshold).cell(std::string(r.pass ? "1" : "0"));
        w.end_row();
      }
      timings["operators"] = std::chrono::duration<double>(clock::now() - t0).count();
    }
  } catch (const ConfigErrors& e) {
    code = kExitError;
    manifest["error"] = {{"phase", phase}, {"kind", "config"}, {"messages", e.items()}};
    for (const auto& m : e.items()) log << "error: " << m << "\n";
  } catch (const std::exception& e) {
    code = kExitError;
    manifest["error"] = {{"phase", phase}, {"kind", "runtime"}, {"messages", json::array({e.what()})}};
    log << "error (" << phase << "): " << e.what() << "\n";
  }
  write_manifest();
  return code;
}

}  // namespace pseudopde
