#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hjbi/bsde.hpp"
#include "hjbi/io.hpp"
#include "hjbi/pde.hpp"

namespace hjbi {

struct VerifyOptions {
  SchemeParams pde;
  int mc_steps = 100;  // over [t0, T]
  int degree = 3;
  double x_spread = 0.0;
  std::uint64_t seed = 1;
  bool refine = true;  // estimate tol_grid from a rerun with halved steps
  double jitter = 1e-9;
};

/// PDE value against the regression value at one point.
struct GapEstimate {
  double pde = 0.0;
  double mc = 0.0;
  double gap = 0.0;
  double std_error = 0.0;
  double tol_grid = 0.0;   // |coarse - refined| summed over both solvers
  double tolerance = 0.0;  // tol_grid + 4 std_error + jitter
  bool pass = true;
};

/// Control-free representation check. Throws std::invalid_argument unless
/// both control grids are singletons.
GapEstimate feynman_kac_gap(const GameSpec& spec, double t0, double x0, int i0, int particles,
                            const VerifyOptions& options = {});

/// Same comparison with the forward and backward equations driven by the
/// feedback pair of the lower PDE.
GapEstimate feedback_value_gap(const GameSpec& spec, double t0, double x0, int i0, int particles,
                               const VerifyOptions& options = {});

struct DppReport {
  std::vector<double> deltas;
  std::vector<double> residual;
  std::vector<double> std_error;
  std::vector<double> ratio;  // residual_k / residual_{k+1}
  std::vector<bool> noise_floor;  // both residuals of the pair within 4 stderr + jitter
  bool first_order = true;        // every ratio in [1.5, 3] or at the noise floor
};

/// residual(delta) = |W(t0, x0, i0) - G_{t0, t0+delta}[W(t0 + delta, .)]| with
/// the semigroup step fixed at (T - t0) / mc_steps.
DppReport dpp_check(const GameSpec& spec, double t0, double x0, int i0,
                    const std::vector<double>& deltas, int particles,
                    const VerifyOptions& options = {});

struct ValueExistsReport {
  double isaacs_gap = 0.0;   // max over slices, regimes and interior nodes
  double value_gap = 0.0;    // max |W_lower - W_upper| over slices in the window
  double value_gap_t0 = 0.0; // same at t = 0
  double tol_hamiltonian = 0.0;
  double tol_value = 0.0;
  bool asserted = false;     // isaacs_gap <= tol_hamiltonian
  bool pass = true;
};

ValueExistsReport value_exists_check(const GameSpec& spec, const SchemeParams& params,
                                     double tol_hamiltonian = 1e-9, double tol_value = 1e-2);

/// Psi(x) = (log sqrt(|x|^2 + 1) + 1)^2.
double envelope_psi(double x);

struct Envelope {
  double A_tilde = 0.0;
  double C1 = 0.0;
  double value(double t, double T, double x) const;
};

struct UniquenessOptions {
  std::vector<SchemeParams> ladder_a;
  std::vector<SchemeParams> ladder_b;  // same length
  double tolerance = 1e-3;
  double min_A_tilde = 0.1;
};

struct UniquenessRung {
  double dx_a = 0.0, dt_a = 0.0, dx_b = 0.0, dt_b = 0.0;
  Window window;
  double disagreement = 0.0;
  double envelope_ratio = 0.0;  // max |W| / theta over both grids
};

struct UniquenessReport {
  std::vector<UniquenessRung> rungs;
  Envelope envelope;        // A_tilde from the terminal data, C1 from the interior windows of both ladders
  bool decreasing = true;   // disagreement non-increasing along the ladder
  bool finest_within = true;
  bool envelope_holds = true;
  bool pass = true;
};

UniquenessReport uniqueness_evidence(const GameSpec& spec, const UniquenessOptions& options);

struct RegularityReport {
  LipschitzGrowthReport lipschitz;
  HolderReport holder;
  bool stable() const { return lipschitz.stable && holder.stable; }
};

/// coarse = params, fine = dx halved and K quadrupled.
RegularityReport regularity_check(const GameSpec& spec, const SchemeParams& params,
                                  const std::vector<double>& x_probe);

SchemeParams refined(const SchemeParams& params);

struct VerificationReport {
  std::string problem;
  std::string representation_kind;  // "feynman_kac" or "feedback"
  std::optional<GapEstimate> representation;
  std::optional<DppReport> dpp;
  std::optional<ValueExistsReport> value;
  std::optional<RegularityReport> regularity;
  std::optional<UniquenessReport> uniqueness;

  bool pass() const;
};

/// JSON with stable key order.
std::string to_json(const VerificationReport& report, const io::ArtifactMeta& meta);

}  // namespace hjbi
