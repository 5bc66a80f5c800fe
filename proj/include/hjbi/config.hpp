#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hjbi/catalog.hpp"
#include "hjbi/pde.hpp"

namespace hjbi {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridConfig {
  double x_min = -4.0;
  double x_max = 4.0;
  int intervals = 80;
  int steps = 1000;
  double cfl_safety = 0.9;

  SchemeParams scheme() const;
  bool operator==(const GridConfig&) const = default;
};

struct McConfig {
  int steps = 100;
  int particles = 10000;
  int degree = 3;
  double t0 = 0.0;
  double x0 = 0.0;
  int regime = 1;
  double x_spread = 0.0;
  bool stratify = true;
  std::string policy = "constant";  // or "feedback" (from the lower PDE)
  bool operator==(const McConfig&) const = default;
};

struct ToleranceConfig {
  double hamiltonian = 1e-9;
  double value = 1e-2;
  double uniqueness = 1e-3;
  bool operator==(const ToleranceConfig&) const = default;
};

struct VerifyConfig {
  std::vector<double> deltas{0.2, 0.1, 0.05};
  std::vector<double> x_probe{-1.0, 0.0, 1.0};
  GridConfig alternate{-5.0, 5.0, 60, 700, 0.9};  // second discretization
  int ladder = 2;                                  // rungs per discretization
  bool operator==(const VerifyConfig&) const = default;
};

struct RunConfig {
  std::string problem = "zero_dynamics";
  ProblemOverrides overrides;
  GridConfig pde;
  McConfig mc;
  std::uint64_t seed = 1;
  ToleranceConfig tolerances;
  VerifyConfig verify;
  double compare_shift = 1.0;
  int picard_iterations = 0;
  int surface_stride = 10;
  std::string output = "out";

  GameSpec spec() const;
};

bool operator==(const RunConfig& a, const RunConfig& b);

/// YAML text to config; throws ConfigError with the offending key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Canonical YAML with a fixed key order and round-trip number formatting.
/// The output directory is left out so that it does not enter the hash.
std::string emit_config(const RunConfig& config, bool with_output = true);

/// 16 hex digits of FNV-1a over the canonical text without the output path.
std::string config_hash(const RunConfig& config);

/// Name of the environment variable that overrides the seed.
inline constexpr const char* kSeedEnv = "HJBI_SEED";

/// Parses a decimal seed; throws ConfigError on junk.
std::uint64_t parse_seed(const std::string& text);

}  // namespace hjbi
