#include "hjbi/operators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace hjbi {
namespace {

struct NodeCoefficients {
  double b = 0.0;
  std::vector<double> sigma;  // 1 x d
};

NodeCoefficients node_coefficients(const GameSpec& spec, int i, double t, double x, double u, double v) {
  NodeCoefficients c;
  const double xv[1] = {x};
  double b[1];
  spec.coeffs().drift(i, t, xv, u, v, b);
  c.b = b[0];
  c.sigma.resize(static_cast<std::size_t>(spec.d));
  spec.coeffs().diffusion(i, t, xv, u, v, c.sigma);
  return c;
}

double jump_size(const GameSpec& spec, int i, double t, double x, double u, double v, const LevyAtom& a) {
  const double xv[1] = {x};
  double g[1];
  spec.coeffs().jump(i, t, xv, u, v, a.mark, g);
  return g[0];
}

void require_scalar_state(const GameSpec& spec) {
  if (spec.n != 1) throw std::invalid_argument("grid operators need a scalar state (n = 1)");
}

double diffusion_term(const SpatialGrid& g, std::span<const double> row, int j, const NodeCoefficients& c) {
  double s2 = 0.0;
  for (double s : c.sigma) s2 += s * s;
  const double dx = g.dx();
  const double d2 = (row[j + 1] - 2.0 * row[j] + row[j - 1]) / (dx * dx);
  const double d1 = c.b > 0.0 ? (row[j + 1] - row[j]) / dx : (row[j] - row[j - 1]) / dx;
  return 0.5 * s2 * d2 + c.b * d1;
}

// Payoff A + B + f over the full control product, row-major in (u, v).
std::vector<double> payoff_table(const GameSpec& spec, int i, double t, int j, const GridFunction& W) {
  require_scalar_state(spec);
  const auto& g = W.grid;
  if (!g.interior(j)) throw std::out_of_range(fmt::format("node {} is on the boundary", j));
  const auto row = W.row(i);
  const double x = g.x(j);
  const double xv[1] = {x};
  const auto a = W.column(j);
  const double Dw = first_difference(g, row, j);
  const auto& U = spec.controls.u_points;
  const auto& V = spec.controls.v_points;
  std::vector<double> table(U.size() * V.size());
  std::vector<double> z(static_cast<std::size_t>(spec.d));
  for (std::size_t a_u = 0; a_u < U.size(); ++a_u) {
    for (std::size_t a_v = 0; a_v < V.size(); ++a_v) {
      const double u = U[a_u], v = V[a_v];
      const auto c = node_coefficients(spec, i, t, x, u, v);
      for (std::size_t q = 0; q < z.size(); ++q) z[q] = Dw * c.sigma[q];
      double B = 0.0, C = 0.0;
      for (const auto& atom : spec.levy.atoms) {
        const double gam = jump_size(spec, i, t, x, u, v, atom);
        const double jumped = interpolate(g, row, x + gam) - row[j];
        B += atom.weight * (jumped - Dw * gam);
        C += atom.weight * jumped * spec.coeffs().rho(xv, atom.mark);
      }
      table[a_u * V.size() + a_v] = diffusion_term(g, row, j, c) + B +
                                     spec.coeffs().driver(i, t, xv, a, z, C, u, v);
    }
  }
  return table;
}

}  // namespace

SpatialGrid::SpatialGrid(double lo, double hi, int intervals) : x_min(lo), x_max(hi), J(intervals) {
  if (!(lo < hi)) throw std::invalid_argument("spatial grid needs x_min < x_max");
  if (intervals < 3) throw std::invalid_argument("spatial grid needs J >= 3");
}

GridFunction::GridFunction(const SpatialGrid& g, int regimes, double fill)
    : grid(g), m(regimes), values(static_cast<std::size_t>(regimes) * g.nodes(), fill) {}

std::vector<double> GridFunction::column(int j) const {
  std::vector<double> out(static_cast<std::size_t>(m));
  for (int i = 1; i <= m; ++i) out[static_cast<std::size_t>(i - 1)] = at(i, j);
  return out;
}

double interpolate(const SpatialGrid& g, std::span<const double> row, double x) {
  const double dx = g.dx();
  const double s = (x - g.x_min) / dx;
  int j = static_cast<int>(std::floor(s));
  j = std::clamp(j, 0, g.J - 1);
  const double w = s - j;
  return row[static_cast<std::size_t>(j)] + w * (row[static_cast<std::size_t>(j + 1)] - row[static_cast<std::size_t>(j)]);
}

double first_difference(const SpatialGrid& g, std::span<const double> row, int j) {
  const double dx = g.dx();
  if (j == 0) return (row[1] - row[0]) / dx;
  if (j == g.J) return (row[static_cast<std::size_t>(j)] - row[static_cast<std::size_t>(j - 1)]) / dx;
  return (row[static_cast<std::size_t>(j + 1)] - row[static_cast<std::size_t>(j - 1)]) / (2.0 * dx);
}

double op_A(const GameSpec& spec, int i, double t, const SpatialGrid& g, int j, double u, double v,
            std::span<const double> row) {
  require_scalar_state(spec);
  if (!g.interior(j)) throw std::out_of_range(fmt::format("node {} is on the boundary", j));
  return diffusion_term(g, row, j, node_coefficients(spec, i, t, g.x(j), u, v));
}

double op_B(const GameSpec& spec, int i, double t, const SpatialGrid& g, int j, double u, double v,
            std::span<const double> row) {
  require_scalar_state(spec);
  const double x = g.x(j);
  const double Dw = first_difference(g, row, j);
  double s = 0.0;
  for (const auto& atom : spec.levy.atoms) {
    const double gam = jump_size(spec, i, t, x, u, v, atom);
    s += atom.weight * (interpolate(g, row, x + gam) - row[static_cast<std::size_t>(j)] - Dw * gam);
  }
  return s;
}

double op_C(const GameSpec& spec, int i, double t, const SpatialGrid& g, int j, double u, double v,
            std::span<const double> row) {
  require_scalar_state(spec);
  const double x = g.x(j);
  const double xv[1] = {x};
  double s = 0.0;
  for (const auto& atom : spec.levy.atoms) {
    const double gam = jump_size(spec, i, t, x, u, v, atom);
    s += atom.weight * (interpolate(g, row, x + gam) - row[static_cast<std::size_t>(j)]) *
         spec.coeffs().rho(xv, atom.mark);
  }
  return s;
}

HamiltonianResult hamiltonian_lower(const GameSpec& spec, int i, double t, int j, const GridFunction& W) {
  const auto table = payoff_table(spec, i, t, j, W);
  const auto nu = spec.controls.u_points.size();
  const auto nv = spec.controls.v_points.size();
  HamiltonianResult r;
  bool first = true;
  for (std::size_t a = 0; a < nu; ++a) {
    std::size_t best_v = 0;
    for (std::size_t b = 1; b < nv; ++b) {
      if (table[a * nv + b] < table[a * nv + best_v]) best_v = b;
    }
    const double val = table[a * nv + best_v];
    if (first || val > r.value) {
      r.value = val;
      r.u_index = static_cast<int>(a);
      r.v_index = static_cast<int>(best_v);
      first = false;
    }
  }
  r.u_star = spec.controls.u_points[static_cast<std::size_t>(r.u_index)];
  r.v_star = spec.controls.v_points[static_cast<std::size_t>(r.v_index)];
  return r;
}

HamiltonianResult hamiltonian_upper(const GameSpec& spec, int i, double t, int j, const GridFunction& W) {
  const auto table = payoff_table(spec, i, t, j, W);
  const auto nu = spec.controls.u_points.size();
  const auto nv = spec.controls.v_points.size();
  HamiltonianResult r;
  bool first = true;
  for (std::size_t b = 0; b < nv; ++b) {
    std::size_t best_u = 0;
    for (std::size_t a = 1; a < nu; ++a) {
      if (table[a * nv + b] > table[best_u * nv + b]) best_u = a;
    }
    const double val = table[best_u * nv + b];
    if (first || val < r.value) {
      r.value = val;
      r.u_index = static_cast<int>(best_u);
      r.v_index = static_cast<int>(b);
      first = false;
    }
  }
  r.u_star = spec.controls.u_points[static_cast<std::size_t>(r.u_index)];
  r.v_star = spec.controls.v_points[static_cast<std::size_t>(r.v_index)];
  return r;
}

double isaacs_gap(const GameSpec& spec, double t, const GridFunction& W) {
  double gap = 0.0;
  for (int i = 1; i <= W.m; ++i) {
    for (int j = 1; j < W.grid.J; ++j) {
      gap = std::max(gap, std::abs(hamiltonian_upper(spec, i, t, j, W).value -
                                   hamiltonian_lower(spec, i, t, j, W).value));
    }
  }
  return gap;
}

}  // namespace hjbi
