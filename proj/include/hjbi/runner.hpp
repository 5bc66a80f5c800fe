#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hjbi/config.hpp"
#include "hjbi/io.hpp"
#include "hjbi/pde.hpp"

namespace hjbi {

enum ExitCode : int {
  kExitPass = 0,
  kExitConfig = 2,
  kExitValidation = 3,
  kExitSolver = 4,
  kExitAcceptance = 5,
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"solve-pde", "solve-bsde", "verify", "compare", "bench"};
  return names;
}

struct StageTime {
  std::string stage;
  double seconds = 0.0;
};

struct RunSummary {
  std::string subcommand;
  std::string config_hash;
  std::vector<StageTime> stages;  // reported on the console, never in artifacts
  std::vector<std::pair<std::string, double>> headline;
  std::vector<std::pair<std::string, bool>> checks;
  std::vector<std::string> artifacts;  // file names inside the output directory
  int exit_code = kExitPass;
  std::string message;

  bool pass() const { return exit_code == kExitPass; }
  /// JSON with stable key order; leaves out the stage times.
  std::string to_json(const io::ArtifactMeta& meta) const;
};

/// Runs one subcommand and writes its artifacts into config.output.
/// `refine` adds that many ladder levels (dx / 2, dt / 4 for the PDE;
/// particles x 4, steps x 2 for the regression). Never throws.
RunSummary run(const std::string& subcommand, const RunConfig& config, int refine = 0);

struct LadderPoint {
  std::optional<double> dt;
  std::optional<double> dx;
  std::optional<long long> particles;
  double error = 0.0;
};

/// error_k / error_{k+1}; the last entry is empty.
std::vector<std::optional<double>> convergence_ratios(const std::vector<LadderPoint>& points);

/// Rows (dt, dx, particles, error, ratio).
void emit_convergence_table(std::ostream& os, const std::vector<LadderPoint>& points,
                            const io::ArtifactMeta& meta);
std::string convergence_json(const std::vector<LadderPoint>& points, const io::ArtifactMeta& meta);

/// Closed-form value for unmodified catalog presets (any horizon), when one
/// is known.
std::optional<double> catalog_oracle(const GameSpec& spec, GameSide side, double t, double x, int i);

}  // namespace hjbi
