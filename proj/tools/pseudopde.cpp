#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pseudopde/config.hpp"
#include "pseudopde/run.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte-Carlo solver for decoupled mild solutions of semilinear pseudo-PDEs"};
  app.require_subcommand(1);

  std::string config;
  pseudopde::RunFlags flags;
  std::uint64_t seed = 0;
  std::string phases;

  auto* run = app.add_subcommand("run", "solve a configuration and write artifacts");
  run->add_option("config", config, "config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", flags.out_dir, "output directory")->capture_default_str();
  run->add_option("--threads", flags.threads, "worker threads (output does not depend on it)")
      ->check(CLI::Range(1u, 1024u))
      ->capture_default_str();
  auto* seed_opt = run->add_option("--seed", seed, "master seed (overrides the config)");
  auto* phase_opt = run->add_option("--phases", phases, "comma-separated subset of mild,fbsde,crosscheck,operators");

  auto* validate = app.add_subcommand("validate", "check a configuration and print it normalized");
  validate->add_option("config", config, "config JSON")->required()->check(CLI::ExistingFile);

  app.add_subcommand("version", "print the version");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("version")) {
    std::cout << "pseudopde " << pseudopde::kVersion << "\n";
    return 0;
  }
  if (app.got_subcommand(validate)) {
    try {
      const pseudopde::RunConfig cfg = pseudopde::validate_config_file(config);
      std::cout << cfg.normalized.dump(2) << "\n";
      for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
      return 0;
    } catch (const pseudopde::ConfigErrors& e) {
      for (const auto& m : e.items()) std::cerr << "error: " << m << "\n";
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
    }
    return 1;
  }
  if (*seed_opt) flags.seed = seed;
  if (*phase_opt) flags.phases = split_list(phases);
  return pseudopde::run(config, flags, std::cerr);
}
