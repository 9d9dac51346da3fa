#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "pseudopde/config.hpp"
#include "pseudopde/run.hpp"

using namespace pseudopde;
namespace fs = std::filesystem;

namespace {

json minimal() {
  return json::parse(R"({
    "problem": {
      "generator": {"type": "diffusion", "mu": ["0"], "sigma": ["1"]},
      "driver": {"expr": "0", "K_Y": 0, "K_Z": 0},
      "terminal_g": {"expr": "x1^2"},
      "horizon_T": 1.0
    }
  })");
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pseudopde_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "in.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> errors_of(const json& j) {
  try {
    validate_config(j, {});
  } catch (const ConfigErrors& e) {
    return e.items();
  }
  return {};
}

bool mentions(const std::vector<std::string>& errs, const std::string& s) {
  for (const auto& e : errs)
    if (e.find(s) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(Config, MinimalIsValidAndNormalized) {
  const RunConfig cfg = validate_config(minimal(), {});
  EXPECT_EQ(cfg.grid->node_count(), 41u);
  EXPECT_EQ(cfg.grid->time_count(), 51u);
  EXPECT_EQ(cfg.seed, 1u);
  EXPECT_TRUE(cfg.has_phase("mild"));
  EXPECT_EQ(cfg.normalized["mild"]["paths"], 2000);
  // normalization is idempotent
  const RunConfig again = validate_config(cfg.normalized, {});
  EXPECT_EQ(again.normalized.dump(), cfg.normalized.dump());
}

TEST(Config, MissingTerminal) {
  json j = minimal();
  j["problem"].erase("terminal_g");
  EXPECT_TRUE(mentions(errors_of(j), "problem.terminal_g: required"));
}

TEST(Config, StepSizeRuleForFbsde) {
  json j = minimal();
  j["problem"]["driver"] = {{"expr", "2*y"}, {"K_Y", 2}, {"K_Z", 0}};
  j["grid"] = {{"time_steps", 1}};
  EXPECT_TRUE(mentions(errors_of(j), "K_Y"));
  j["phases"] = {"mild"};
  EXPECT_TRUE(errors_of(j).empty());
}

TEST(Config, ReportsAllViolations) {
  json j = minimal();
  j["problem"]["horizon_T"] = -1;
  j["grid"] = {{"space_nodes", {1}}};
  j["mild"] = {{"v_scheme", "bogus"}};
  j["phases"] = {"crosscheck"};
  const auto errs = errors_of(j);
  EXPECT_GE(errs.size(), 4u);
  EXPECT_TRUE(mentions(errs, "problem.horizon_T"));
  EXPECT_TRUE(mentions(errs, "mild.v_scheme"));
}

TEST(Config, StableNeedsOneDimension) {
  json j = minimal();
  j["problem"]["generator"] = {{"type", "stable"}, {"alpha", 1.5}};
  j["grid"] = {{"space_min", {-1, -1}}, {"space_max", {1, 1}}, {"space_nodes", {5, 5}}};
  EXPECT_FALSE(errors_of(j).empty());
}

TEST(Config, OverridesApply) {
  ConfigOverrides ov;
  ov.seed = 99;
  ov.phases = std::vector<std::string>{"operators"};
  const RunConfig cfg = validate_config(minimal(), ov);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_FALSE(cfg.has_phase("mild"));
  EXPECT_TRUE(cfg.has_phase("operators"));
}

TEST(Run, SmokeHeat) {
  const fs::path dir = scratch("smoke");
  json j = minimal();
  j["phases"] = {"mild"};
  j["grid"] = {{"time_steps", 20}, {"space_nodes", {21}}};
  j["mild"] = {{"paths", 10000}, {"step_paths", 2000}};
  std::ostringstream log;
  RunFlags flags;
  flags.out_dir = (dir / "out").string();
  ASSERT_EQ(run(write_config(dir, j).string(), flags, log), 0) << log.str();
  std::ifstream u(dir / "out" / "u.csv");
  std::string line;
  std::getline(u, line);
  EXPECT_EQ(line.rfind("# config_sha256=", 0), 0u);
  std::getline(u, line);
  EXPECT_EQ(line, "t,x1,value,stderr");
  bool found = false;
  while (std::getline(u, line)) {
    double t, x, v, se;
    char c;
    std::istringstream ss(line);
    ss >> t >> c >> x >> c >> v >> c >> se;
    if (t == 0.0 && x == 0.0) {
      EXPECT_NEAR(v, 1.0, 3 * se);
      found = true;
    }
  }
  EXPECT_TRUE(found);
  const json manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["config_sha256"], sha256_hex(slurp(dir / "out" / "config.json")));
}

TEST(Run, ByteIdenticalAcrossRerunsAndThreads) {
  const fs::path dir = scratch("repro");
  json j = minimal();
  j["problem"]["driver"] = {{"expr", "0.3*y - 0.2*z"}, {"K_Y", 0.3}, {"K_Z", 0.2}};
  j["grid"] = {{"time_steps", 10}, {"space_nodes", {11}}};
  j["mild"] = {{"paths", 300}, {"step_paths", 300}, {"refine_paths", 2000}};
  j["fbsde"] = {{"paths", 3000}};
  const fs::path cfg = write_config(dir, j);
  std::ostringstream log;
  for (const auto& [name, threads] : std::vector<std::pair<std::string, unsigned>>{{"a", 1}, {"b", 1}, {"c", 3}}) {
    RunFlags flags;
    flags.out_dir = (dir / name).string();
    flags.threads = threads;
    ASSERT_EQ(run(cfg.string(), flags, log), 0) << log.str();
  }
  for (const char* f : {"u.csv", "v.csv", "deltas.csv", "crosscheck.csv", "config.json"}) {
    const std::string a = slurp(dir / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
    EXPECT_EQ(a, slurp(dir / "c" / f)) << f;
  }
}

TEST(Run, OperatorsOnly) {
  const fs::path dir = scratch("ops");
  json j = minimal();
  j["phases"] = {"operators"};
  j["operators"] = {{"paths", 2000}, {"time_steps", 4}};
  std::ostringstream log;
  RunFlags flags;
  flags.out_dir = (dir / "out").string();
  ASSERT_EQ(run(write_config(dir, j).string(), flags, log), 0) << log.str();
  EXPECT_TRUE(fs::exists(dir / "out" / "operator_report.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
  for (const char* f : {"u.csv", "v.csv", "deltas.csv", "crosscheck.csv", "fbsde.csv"})
    EXPECT_FALSE(fs::exists(dir / "out" / f)) << f;
}

TEST(Run, FailureWritesManifestAndExitsOne) {
  const fs::path dir = scratch("fail");
  json j = minimal();
  j["phases"] = {"mild"};
  j["problem"]["terminal_g"] = {{"expr", "log(x1)"}};
  j["grid"] = {{"time_steps", 2}, {"space_nodes", {5}}};
  j["mild"] = {{"paths", 10}};
  std::ostringstream log;
  RunFlags flags;
  flags.out_dir = (dir / "out").string();
  EXPECT_EQ(run(write_config(dir, j).string(), flags, log), 1);
  const json manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_TRUE(manifest.contains("error"));
}

TEST(Run, NotConvergedExitsTwo) {
  const fs::path dir = scratch("nc");
  json j = minimal();
  j["phases"] = {"mild"};
  j["problem"]["driver"] = {{"expr", "0.5*y"}, {"K_Y", 0.5}, {"K_Z", 0}};
  j["grid"] = {{"time_steps", 4}, {"space_nodes", {5}}};
  j["mild"] = {{"paths", 50}, {"max_iterations", 1}, {"tolerance", 1e-12}};
  std::ostringstream log;
  RunFlags flags;
  flags.out_dir = (dir / "out").string();
  EXPECT_EQ(run(write_config(dir, j).string(), flags, log), 2);
}
