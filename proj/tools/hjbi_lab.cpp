// hjbi_lab: batch front end for the regime-switching game solvers.
//
//   hjbi_lab <solve-pde|solve-bsde|verify|compare|bench> --config PATH
//            [--seed N] [--out DIR] [--particles N] [--refine k]

#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "hjbi/runner.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> particles;
  int refine = 0;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "YAML run configuration")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "master seed (overrides the config and $HJBI_SEED)");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--particles", f.particles, "Monte Carlo particles")->check(CLI::PositiveNumber);
  cmd->add_option("--refine", f.refine, "extra refinement ladder levels")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regime-switching stochastic differential game solvers"};
  app.set_version_flag("--version", std::string(hjbi::io::tool_version()));
  app.require_subcommand(1);
  Flags flags;
  for (const auto& name : hjbi::subcommands()) add_flags(app.add_subcommand(name), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return hjbi::kExitConfig;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  hjbi::RunConfig config;
  try {
    config = hjbi::load_config(flags.config);
    if (const char* env = std::getenv(hjbi::kSeedEnv); env && *env) config.seed = hjbi::parse_seed(env);
    if (flags.seed) config.seed = *flags.seed;
    if (flags.out) config.output = *flags.out;
    if (flags.particles) config.mc.particles = *flags.particles;
  } catch (const hjbi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return hjbi::kExitConfig;
  }

  const auto summary = hjbi::run(sub, config, flags.refine);
  for (const auto& s : summary.stages) std::cerr << fmt::format("  {:<24} {:>9.3f} s\n", s.stage, s.seconds);
  for (const auto& [k, v] : summary.headline) std::cout << fmt::format("{:<28} {}\n", k, hjbi::io::format_number(v));
  for (const auto& [k, ok] : summary.checks) std::cout << fmt::format("{:<28} {}\n", k, ok ? "PASS" : "FAIL");
  std::cout << fmt::format("{} config {} -> exit {}", sub, summary.config_hash, summary.exit_code);
  if (!summary.message.empty()) std::cout << ": " << summary.message;
  std::cout << '\n';
  return summary.exit_code;
}
