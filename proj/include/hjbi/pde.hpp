#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hjbi/drivers.hpp"
#include "hjbi/forward.hpp"
#include "hjbi/io.hpp"
#include "hjbi/operators.hpp"

namespace hjbi {

struct SchemeParams {
  SpatialGrid grid;
  int K = 1000;               // time steps over [0, T]
  double cfl_safety = 0.9;    // in (0, 1]
};

struct CflReport {
  double dt = 0.0;
  double diffusion = 0.0;  // max sigma^2 / dx^2
  double drift = 0.0;      // max |b| / dx
  double jumps = 0.0;      // sum_k w_k (1 + max rho)
  double driver = 0.0;     // declared driver Lipschitz constant
  double rate = 0.0;       // sum of the four
  double safety = 0.9;
  std::string binding;     // largest term
  double suggested_dt = 0.0;
  bool ok = true;
};

/// Samples the coefficients over regimes, controls, grid nodes and three
/// times to bound dt * rate <= safety.
CflReport cfl_check(const GameSpec& spec, const SchemeParams& params);

enum class GameSide { lower, upper };

const char* to_string(GameSide side);

struct PdeSolution {
  GameSide side = GameSide::lower;
  TimeGrid time;
  SpatialGrid grid;
  int m = 1;
  std::vector<GridFunction> slices;    // K+1
  std::vector<std::uint16_t> u_index;  // (K+1) x m x nodes
  std::vector<std::uint16_t> v_index;
  std::vector<double> u_points, v_points;

  const GridFunction& slice(int k) const { return slices[static_cast<std::size_t>(k)]; }
  /// Linear in t between slices and in x between nodes (extrapolated outside).
  double value(double t, double x, int i) const;
  std::size_t control_slot(int k, int i, int j) const {
    return (static_cast<std::size_t>(k) * m + static_cast<std::size_t>(i - 1)) * grid.nodes() +
           static_cast<std::size_t>(j);
  }
};

/// Thrown when the CFL check fails; carries the report.
class CflError : public std::runtime_error {
 public:
  explicit CflError(CflReport r);
  const CflReport& report() const { return report_; }

 private:
  CflReport report_;
};

/// W^k = W^{k+1} + dt H(t_{k+1}, W^{k+1}) on interior nodes, boundary by
/// linear extrapolation. Throws CflError or SolverError.
PdeSolution solve_pde(const GameSpec& spec, const SchemeParams& params, GameSide side);
PdeSolution solve_lower(const GameSpec& spec, const SchemeParams& params);
PdeSolution solve_upper(const GameSpec& spec, const SchemeParams& params);

/// Feedback table from the stored Hamiltonian selections.
FeedbackTable extract_feedback(const PdeSolution& sol);

/// Part of the domain not reached by boundary effects over the horizon:
/// shrinks each side by max|gamma| + max|b| T + 4 max|sigma| sqrt(T).
struct Window {
  double lo = 0.0;
  double hi = 0.0;
  bool empty() const { return !(lo <= hi); }
  bool contains(double x) const { return x >= lo - 1e-12 && x <= hi + 1e-12; }
};
Window interior_window(const GameSpec& spec, const SpatialGrid& grid);

struct RegularityConstants {
  double slope = 0.0;   // max grid slope over (t, i) in the window
  double growth = 0.0;  // max |W| / (1 + |x|) in the window
};
RegularityConstants lipschitz_growth(const PdeSolution& sol, const Window& window);

struct LipschitzGrowthReport {
  RegularityConstants coarse, fine;
  double slope_ratio = 1.0, growth_ratio = 1.0;  // fine / coarse
  bool stable = true;                            // both ratios within 20%
};
/// fine is the dx-halved (and dt-adjusted) solution of the same problem.
LipschitzGrowthReport lipschitz_growth_check(const PdeSolution& coarse, const PdeSolution& fine,
                                             const Window& window);

/// Smallest c with |W(t,x) - W(t',x)| <= c (1 + |x|) |t - t'|^{1/2} over all
/// slice pairs at the probes.
double holder_constant(const PdeSolution& sol, const std::vector<double>& x_probe);

struct HolderReport {
  double coarse = 0.0, fine = 0.0;
  double ratio = 1.0;
  bool stable = true;
};
HolderReport holder_check(const PdeSolution& coarse, const PdeSolution& fine,
                          const std::vector<double>& x_probe);

/// t, x, regime, W, u*, v* for every stride-th slice (slice 0 and K always).
void write_pde_surface_csv(std::ostream& os, const PdeSolution& sol, const io::ArtifactMeta& meta,
                           int stride = 1);

}  // namespace hjbi
