#pragma once

#include <span>
#include <vector>

#include "hjbi/problem.hpp"

namespace hjbi {

/// Uniform 1-D grid with nodes x_j = x_min + j dx, j = 0..J.
struct SpatialGrid {
  double x_min = -1.0;
  double x_max = 1.0;
  int J = 3;

  SpatialGrid() = default;
  /// Throws std::invalid_argument unless x_min < x_max and J >= 3.
  SpatialGrid(double lo, double hi, int intervals);

  int nodes() const { return J + 1; }
  double dx() const { return (x_max - x_min) / J; }
  double x(int j) const { return j == J ? x_max : x_min + j * dx(); }
  bool interior(int j) const { return j > 0 && j < J; }
  bool operator==(const SpatialGrid&) const = default;
};

/// m rows of J+1 values at one time.
struct GridFunction {
  SpatialGrid grid;
  int m = 1;
  std::vector<double> values;

  GridFunction() = default;
  GridFunction(const SpatialGrid& g, int regimes, double fill = 0.0);

  std::span<double> row(int i) {
    return {values.data() + static_cast<std::size_t>(i - 1) * grid.nodes(), static_cast<std::size_t>(grid.nodes())};
  }
  std::span<const double> row(int i) const {
    return {values.data() + static_cast<std::size_t>(i - 1) * grid.nodes(), static_cast<std::size_t>(grid.nodes())};
  }
  double& at(int i, int j) { return values[static_cast<std::size_t>(i - 1) * grid.nodes() + static_cast<std::size_t>(j)]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i - 1) * grid.nodes() + static_cast<std::size_t>(j)]; }
  /// Vector (W_1..W_m) at node j.
  std::vector<double> column(int j) const;
};

/// Linear interpolation inside the grid, linear extrapolation with the
/// boundary slope outside.
double interpolate(const SpatialGrid& grid, std::span<const double> row, double x);

/// Central first difference inside, one-sided at the two ends.
double first_difference(const SpatialGrid& grid, std::span<const double> row, int j);

/// 1/2 sigma sigma^T D^2 W + b D W with upwinded drift. Interior nodes only.
double op_A(const GameSpec& spec, int i, double t, const SpatialGrid& grid, int j, double u, double v,
            std::span<const double> row);
/// sum_k w_k [W(x + gamma_k) - W(x) - DW gamma_k].
double op_B(const GameSpec& spec, int i, double t, const SpatialGrid& grid, int j, double u, double v,
            std::span<const double> row);
/// sum_k w_k [W(x + gamma_k) - W(x)] rho(x, e_k).
double op_C(const GameSpec& spec, int i, double t, const SpatialGrid& grid, int j, double u, double v,
            std::span<const double> row);

struct HamiltonianResult {
  double value = 0.0;
  double u_star = 0.0;
  double v_star = 0.0;
  int u_index = 0;
  int v_index = 0;
};

/// sup_u inf_v { A + B + f_i(t, x, W(., x), DW sigma, C, u, v) }, exhaustive
/// over the control grids, lowest index wins ties.
HamiltonianResult hamiltonian_lower(const GameSpec& spec, int i, double t, int j, const GridFunction& W);
/// inf_v sup_u of the same expression.
HamiltonianResult hamiltonian_upper(const GameSpec& spec, int i, double t, int j, const GridFunction& W);

/// Max over regimes and interior nodes of |upper - lower|.
double isaacs_gap(const GameSpec& spec, double t, const GridFunction& W);

}  // namespace hjbi
