#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hjbi/forward.hpp"
#include "hjbi/io.hpp"
#include "hjbi/problem.hpp"
#include "hjbi/regression.hpp"

namespace hjbi {

/// Generic BSDE  dY = -g ds + Z dB + sum_l H(l) dN~(l) + int K dmu~,  Y_T = xi,
/// over a regime-switching forward cloud. The driver receives the
/// rho-integrated jump term k = sum_a w_a rho(x, e_a) K(e_a).
struct BsdeSpec {
  using Terminal = std::function<double(int i, ConstVec x)>;
  using Driver = std::function<double(double t, ConstVec x, int i, double y, ConstVec h,
                                      ConstVec z, double k, double u, double v)>;
  using Diffusion = std::function<void(int i, double t, ConstVec x, double u, double v, MutVec sigma)>;
  using Jump = std::function<void(int i, double t, ConstVec x, double u, double v, ConstVec e, MutVec out)>;
  using Rho = std::function<double(ConstVec x, ConstVec e)>;

  int m = 1;
  int n = 1;
  int d = 1;
  double lambda = 1.0;
  LevyMeasure levy;
  Terminal terminal;
  Driver driver;
  Diffusion diffusion;  // n x d, used for Z = Dy sigma
  Jump jump;
  Rho rho;
  ControlPolicy policy = ConstantControl{};
  double lipschitz = 0.0;  // L_g
  bool uses_h = true;
  bool uses_z = true;
  bool uses_k = true;
};

/// Game form: g = f~_i(t, x, y, h, z, k, u, v) - lambda sum_l h(l), with the
/// controls taken from the policy.
BsdeSpec make_game_bsde(const GameSpec& spec, const ControlPolicy& policy);
BsdeSpec with_terminal(BsdeSpec bsde, BsdeSpec::Terminal terminal);
BsdeSpec with_terminal_shift(BsdeSpec bsde, double shift);
/// g + phi(t, x, i).
BsdeSpec with_additive_driver(BsdeSpec bsde, std::function<double(double, ConstVec, int)> phi);

enum class RegimeExpectation {
  conditional,  // average the next value over the exact one-step regime law
  sampled,      // use the sampled next regime of each particle
};

struct BsdeOptions {
  int degree = 3;
  RegimeExpectation regime_expectation = RegimeExpectation::conditional;
  int implicit_sweeps = 0;
  bool keep_particles = true;
};

struct BsdeSolution {
  TimeGrid grid;
  int m = 1, n = 1, d = 1, atoms = 0;
  int particles = 0;
  double lambda = 1.0;
  std::vector<double> atom_weights;
  std::vector<LinearFit> value_fits;  // (K+1) x m, y^_{k,i}
  std::vector<double> fit_stderr;     // (K+1) x m
  std::vector<int> fit_count;         // (K+1) x m
  double terminal_residual = 0.0;
  // Particle level, present when kept: (K+1) x P [x width].
  std::vector<double> Y, H, Z, K;

  const LinearFit& fit(int k, int i) const {
    return value_fits[static_cast<std::size_t>(k) * m + static_cast<std::size_t>(i - 1)];
  }
  double value(int k, int i, ConstVec x) const { return fit(k, i).value(x); }
  double stderr_at(int k, int i) const {
    return fit_stderr[static_cast<std::size_t>(k) * m + static_cast<std::size_t>(i - 1)];
  }
  bool has_particles() const { return !Y.empty(); }
};

/// Per-step one-step regime law of the discretized chain:
/// P = e^{-lambda m dt} I + (1 - e^{-lambda m dt}) / m J.
std::vector<double> regime_transition(int m, double lambda, double dt);

BsdeSolution solve_regression(const BsdeSpec& bsde, const ForwardCloud& cloud,
                              const BsdeOptions& options = {});

/// All fits zero; the starting point of the Picard iteration.
BsdeSolution zero_solution(const BsdeSpec& bsde, const ForwardCloud& cloud);

/// One application of the Picard map: driver arguments frozen at `frozen`.
BsdeSolution picard_step(const BsdeSpec& bsde, const ForwardCloud& cloud, const BsdeSolution& frozen,
                         const BsdeOptions& options = {});

struct WeightedNormValue {
  double b = 0.0;
  double value = 0.0;  // squared norm
};

struct ProcessDelta {
  TimeGrid grid;
  int particles = 0;
  int marks = 0, d = 1, atoms = 0;
  double lambda = 1.0;
  std::vector<double> atom_weights;
  std::vector<double> Y, H, Z, K;  // same layout as BsdeSolution
};

/// a - b on the particle level; throws std::invalid_argument on mismatched grids.
ProcessDelta solution_delta(const BsdeSolution& a, const BsdeSolution& b);

/// Discrete E int e^{bt} (|dY|^2 + lambda sum |dH|^2 + |dZ|^2 + sum_a w_a |dK_a|^2) dt
/// with cloud averages and trapezoid weights in time.
WeightedNormValue weighted_norm_b(const ProcessDelta& delta, double b);

double picard_weight(double L_g, double lambda);

struct PicardOptions {
  int iterations = 6;
  double tolerance = 1e-10;  // on the norm (square root of the value)
  int max_expanding = 3;     // consecutive ratios >= 1 before aborting
};

struct PicardResult {
  BsdeSolution solution;
  double b = 0.0;
  std::vector<WeightedNormValue> gaps;  // gap n = ||Y^n - Y^{n-1}||_b, n = 1..
  std::vector<double> ratios;           // norm ratios gap_n / gap_{n-1}, n >= 2
  bool converged = false;
  bool aborted = false;
  int iterations = 0;
};

PicardResult picard_iterate(const BsdeSpec& bsde, const ForwardCloud& cloud,
                            const PicardOptions& picard = {}, const BsdeOptions& options = {});

struct AprioriReport {
  double beta = 0.0;
  double beta_min = 0.0;  // 2 L_g + 4 L_g^2 + (2 / lambda) L_g^2 + 1
  std::vector<double> t, lhs, rhs;
  double constant = 0.0;  // smallest C with lhs <= C rhs on the grid
  bool holds = true;
};

/// The two solutions solve the BSDE with drivers g + phi1, g + phi2 and
/// terminals xi1, xi2 on the same cloud.
AprioriReport apriori_gap(const BsdeSolution& sol1, const BsdeSolution& sol2,
                          const ForwardCloud& cloud, const BsdeSpec::Terminal& xi1,
                          const BsdeSpec::Terminal& xi2,
                          const std::function<double(double, ConstVec, int)>& phi1,
                          const std::function<double(double, ConstVec, int)>& phi2, double beta,
                          double L_g);

struct ComparisonReport {
  bool refused = false;
  std::string refusal;
  double min_margin = 0.0;  // min over (k, particle) of y^ - y^'
  double tol_mc = 0.0;
  bool dominated = false;   // min_margin >= -tol_mc
  double strict_fraction = 0.0;  // share of particles with xi > xi'
  double y0_diff = 0.0;
  double y0_stderr = 0.0;
  bool strict = false;      // y0_diff > 4 y0_stderr (only meaningful when strict_fraction > 0)
};

/// Solves both BSDEs on the same cloud and checks Y >= Y'.
ComparisonReport compare_solutions(const BsdeSpec& bsde1, const BsdeSpec& bsde2,
                                   const ForwardCloud& cloud, int i0, ConstVec x0,
                                   const BsdeOptions& options = {});

/// Slopes of the linearized difference equation, per step.
struct AdjointSlopes {
  int K = 0, marks = 0, d = 1, atoms = 0;
  std::vector<double> g1;       // K
  std::vector<double> g2;       // K x marks
  std::vector<double> g3;       // K x d
  std::vector<double> g4;       // K
  std::vector<double> rho_bar;  // K x atoms

  static AdjointSlopes constant(int K, int marks, int d, int atoms, double g1, double g2,
                                double g3, double g4, double rho_bar);
};

/// P_t along one driver path:
/// exp(int g1 + int g3 dB - 1/2 int |g3|^2) prod(1 + Q1) exp(-Q2).
/// Throws SolverError if P becomes nonpositive.
std::vector<double> adjoint_weight(const DriverPath& path, const TimeGrid& grid,
                                   const AdjointSlopes& slopes, double lambda,
                                   const LevyMeasure& levy);

struct SemigroupOptions {
  int steps = 20;
  int degree = 3;
  double x_spread = 0.0;
  std::uint64_t seed = 1;
  RegimeExpectation regime_expectation = RegimeExpectation::conditional;
};

struct SemigroupValue {
  double value = 0.0;
  double std_error = 0.0;
};

/// G_{t, t+delta}[field(N_{t+delta}, X_{t+delta})] started from (t, x, i).
SemigroupValue backward_semigroup_apply(const GameSpec& spec, int i, double t, ConstVec x,
                                        double delta, const BsdeSpec::Terminal& field,
                                        const ControlPolicy& policy, int particles,
                                        const SemigroupOptions& options = {});

/// E[sup_k |Y_k|^2] + E sum dt (lambda sum |H|^2 + |Z|^2 + sum_a w_a |K_a|^2).
double solution_energy(const BsdeSolution& sol);

void write_coefficients_csv(std::ostream& os, const BsdeSolution& sol, const io::ArtifactMeta& meta);
/// Value surface y^_{k,i}(x) on the given x nodes (n = 1).
void write_value_surface_csv(std::ostream& os, const BsdeSolution& sol,
                             const std::vector<double>& xs, const io::ArtifactMeta& meta);
std::string picard_log_json(const PicardResult& result, const io::ArtifactMeta& meta);

}  // namespace hjbi
