#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hjbi {

using ConstVec = std::span<const double>;
using MutVec = std::span<double>;

/// Named catalog parameters. Scalars are stored as length-one lists; lists
/// of length m are read per regime.
using ParamMap = std::map<std::string, std::vector<double>>;

/// Thrown for malformed problem descriptions that cannot be represented at
/// all (as opposed to assumption violations, which are reported).
class ProblemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LevyAtom {
  std::vector<double> mark;  // e_k in R^l, nonzero
  double weight = 0.0;       // w_k > 0

  bool operator==(const LevyAtom&) const = default;
};

/// Finite discrete Lévy measure nu = sum_k w_k delta_{e_k}.
struct LevyMeasure {
  std::vector<LevyAtom> atoms;

  std::size_t size() const { return atoms.size(); }
  bool empty() const { return atoms.empty(); }
  double total_mass() const;
  bool operator==(const LevyMeasure&) const = default;
};

/// sum_k w_k (1 ∧ |e_k|^2).
double levy_second_moment(const LevyMeasure& levy);

double mark_norm(ConstVec e);

struct ControlGrid {
  std::vector<double> u_points;  // Player I (maximizer in the lower game)
  std::vector<double> v_points;  // Player II

  bool singleton() const { return u_points.size() == 1 && v_points.size() == 1; }
  bool operator==(const ControlGrid&) const = default;
};

struct AssumptionConstants {
  double L = 0.0;            // Lipschitz constant of b_i, sigma_i in x
  double kappa_bound = 0.0;  // C with kappa(e) <= C (1 ∧ |e|), also bounds rho
  double alpha = 0.0;        // monotonicity of f_i in a_j, j != i
  double beta = 0.0;         // monotonicity of f_i in k
  double L_g = 0.0;          // Lipschitz constant of the transformed driver

  bool operator==(const AssumptionConstants&) const = default;
};

/// Deterministic coefficient evaluators of the game. Regimes are 1-based.
/// Matrices are row-major; sigma is n x d.
class Coefficients {
 public:
  virtual ~Coefficients() = default;

  virtual void drift(int i, double t, ConstVec x, double u, double v, MutVec out) const = 0;
  virtual void diffusion(int i, double t, ConstVec x, double u, double v, MutVec out) const = 0;
  virtual void jump(int i, double t, ConstVec x, double u, double v, ConstVec e,
                    MutVec out) const = 0;
  /// f_i(t, x, a, z, k, u, v) with a the full vector (W_1..W_m) and k the
  /// rho-weighted jump integral.
  virtual double driver(int i, double t, ConstVec x, ConstVec a, ConstVec z, double k,
                        double u, double v) const = 0;
  virtual double terminal(int i, ConstVec x) const = 0;
  virtual double rho(ConstVec x, ConstVec e) const = 0;
};

/// Full problem description. Immutable once built; safe to share.
struct GameSpec {
  std::string problem;  // catalog name
  ParamMap params;      // fully resolved catalog parameters
  int m = 1;            // regimes
  int n = 1;            // state dimension
  int d = 1;            // Brownian dimension
  double T = 1.0;
  double lambda = 1.0;  // per-mark intensity
  ControlGrid controls;
  LevyMeasure levy;
  AssumptionConstants assumptions;
  std::shared_ptr<const Coefficients> coefficients;

  const Coefficients& coeffs() const { return *coefficients; }
  std::size_t mark_dim() const;
};

/// Field-by-field equality of everything that is serialized.
bool same_description(const GameSpec& a, const GameSpec& b);

enum class ValidationMode { pde_existence, mc_only };

enum class Severity { error, warning };

struct Violation {
  std::string code;
  Severity severity = Severity::error;
  std::string message;
};

struct ValidationReport {
  ValidationMode mode = ValidationMode::mc_only;
  std::vector<Violation> violations;

  bool valid() const;
  bool has(const std::string& code) const;
  /// JSON text with stable key order.
  std::string to_json() const;
};

/// Sampling box used by the Lipschitz and rho checks.
struct DomainBox {
  double lo = -5.0;
  double hi = 5.0;
};

ValidationReport validate_spec(const GameSpec& spec, ValidationMode mode, DomainBox box = {});

const char* to_string(ValidationMode mode);

/// ((j - 1) mod m) + 1 for any integer j, m >= 1.
int wrap_regime(long long j, int m);

}  // namespace hjbi
