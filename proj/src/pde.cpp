#include "hjbi/pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

namespace hjbi {
namespace {

struct CoefficientBounds {
  double b = 0.0, sigma = 0.0, gamma = 0.0, rho = 0.0;
};

CoefficientBounds coefficient_bounds(const GameSpec& spec, const SpatialGrid& g) {
  CoefficientBounds out;
  std::vector<double> sigma(static_cast<std::size_t>(spec.d));
  double b[1], gam[1];
  for (double t : {0.0, 0.5 * spec.T, spec.T}) {
    for (int i = 1; i <= spec.m; ++i) {
      for (int j = 0; j <= g.J; ++j) {
        const double xv[1] = {g.x(j)};
        for (double u : spec.controls.u_points) {
          for (double v : spec.controls.v_points) {
            spec.coeffs().drift(i, t, xv, u, v, b);
            out.b = std::max(out.b, std::abs(b[0]));
            spec.coeffs().diffusion(i, t, xv, u, v, sigma);
            double s2 = 0.0;
            for (double s : sigma) s2 += s * s;
            out.sigma = std::max(out.sigma, std::sqrt(s2));
            for (const auto& a : spec.levy.atoms) {
              spec.coeffs().jump(i, t, xv, u, v, a.mark, gam);
              out.gamma = std::max(out.gamma, std::abs(gam[0]));
            }
          }
        }
        for (const auto& a : spec.levy.atoms) out.rho = std::max(out.rho, std::abs(spec.coeffs().rho(xv, a.mark)));
      }
    }
  }
  return out;
}

void extrapolate_boundary(std::span<double> row) {
  const std::size_t J = row.size() - 1;
  row[0] = 2.0 * row[1] - row[2];
  row[J] = 2.0 * row[J - 1] - row[J - 2];
}

}  // namespace

const char* to_string(GameSide side) { return side == GameSide::lower ? "lower" : "upper"; }

CflError::CflError(CflReport r)
    : std::runtime_error(fmt::format("CFL condition fails: dt {} x rate {} = {} > {} (binding term: {}); use dt <= {}",
                                     r.dt, r.rate, r.dt * r.rate, r.safety, r.binding, r.suggested_dt)),
      report_(std::move(r)) {}

CflReport cfl_check(const GameSpec& spec, const SchemeParams& params) {
  if (spec.n != 1) throw std::invalid_argument("the PDE solver needs a scalar state (n = 1)");
  CflReport r;
  const auto& g = params.grid;
  const double dx = g.dx();
  r.dt = spec.T / params.K;
  r.safety = params.cfl_safety;
  const auto bounds = coefficient_bounds(spec, g);
  r.diffusion = bounds.sigma * bounds.sigma / (dx * dx);
  r.drift = bounds.b / dx;
  for (const auto& a : spec.levy.atoms) r.jumps += a.weight * (1.0 + bounds.rho);
  r.driver = spec.assumptions.L_g;
  r.rate = r.diffusion + r.drift + r.jumps + r.driver;
  const std::pair<const char*, double> terms[] = {
      {"diffusion", r.diffusion}, {"drift", r.drift}, {"jumps", r.jumps}, {"driver", r.driver}};
  double top = -1.0;
  for (const auto& [name, v] : terms) {
    if (v > top) {
      top = v;
      r.binding = name;
    }
  }
  r.suggested_dt = r.rate > 0.0 ? r.safety / r.rate : r.dt;
  r.ok = r.dt * r.rate <= r.safety * (1.0 + 1e-12);
  return r;
}

double PdeSolution::value(double t, double x, int i) const {
  const double dt = time.dt();
  int k = static_cast<int>(std::floor((t - time.t0) / dt));
  k = std::clamp(k, 0, time.K - 1);
  const double theta = std::clamp((t - time.t(k)) / dt, 0.0, 1.0);
  const double a = interpolate(grid, slice(k).row(i), x);
  const double b = interpolate(grid, slice(k + 1).row(i), x);
  return (1.0 - theta) * a + theta * b;
}

PdeSolution solve_pde(const GameSpec& spec, const SchemeParams& params, GameSide side) {
  const auto cfl = cfl_check(spec, params);
  if (!cfl.ok) throw CflError(cfl);
  PdeSolution sol;
  sol.side = side;
  sol.time = TimeGrid(0.0, spec.T, params.K);
  sol.grid = params.grid;
  sol.m = spec.m;
  sol.u_points = spec.controls.u_points;
  sol.v_points = spec.controls.v_points;
  const auto& g = params.grid;
  const int K = params.K;
  const double dt = sol.time.dt();
  const auto slots = static_cast<std::size_t>(K + 1) * static_cast<std::size_t>(spec.m) * g.nodes();
  sol.u_index.assign(slots, 0);
  sol.v_index.assign(slots, 0);
  sol.slices.assign(static_cast<std::size_t>(K + 1), GridFunction(g, spec.m));

  auto& last = sol.slices.back();
  for (int i = 1; i <= spec.m; ++i) {
    for (int j = 0; j <= g.J; ++j) {
      const double xv[1] = {g.x(j)};
      last.at(i, j) = spec.coeffs().terminal(i, xv);
    }
  }

  for (int k = K - 1; k >= 0; --k) {
    const auto& next = sol.slices[static_cast<std::size_t>(k + 1)];
    auto& cur = sol.slices[static_cast<std::size_t>(k)];
    const double t = sol.time.t(k + 1);
    for (int i = 1; i <= spec.m; ++i) {
      for (int j = 1; j < g.J; ++j) {
        const auto h = side == GameSide::lower ? hamiltonian_lower(spec, i, t, j, next)
                                               : hamiltonian_upper(spec, i, t, j, next);
        const double w = next.at(i, j) + dt * h.value;
        if (!std::isfinite(w)) {
          throw SolverError(fmt::format("non-finite PDE value at step {} regime {} node {} (x = {})", k, i, j, g.x(j)));
        }
        cur.at(i, j) = w;
        sol.u_index[sol.control_slot(k, i, j)] = static_cast<std::uint16_t>(h.u_index);
        sol.v_index[sol.control_slot(k, i, j)] = static_cast<std::uint16_t>(h.v_index);
      }
      extrapolate_boundary(cur.row(i));
      for (auto* idx : {&sol.u_index, &sol.v_index}) {
        (*idx)[sol.control_slot(k, i, 0)] = (*idx)[sol.control_slot(k, i, 1)];
        (*idx)[sol.control_slot(k, i, g.J)] = (*idx)[sol.control_slot(k, i, g.J - 1)];
      }
    }
  }
  for (int i = 1; i <= spec.m; ++i) {
    for (int j = 0; j <= g.J; ++j) {
      sol.u_index[sol.control_slot(K, i, j)] = sol.u_index[sol.control_slot(K - 1, i, j)];
      sol.v_index[sol.control_slot(K, i, j)] = sol.v_index[sol.control_slot(K - 1, i, j)];
    }
  }
  return sol;
}

PdeSolution solve_lower(const GameSpec& spec, const SchemeParams& params) {
  return solve_pde(spec, params, GameSide::lower);
}

PdeSolution solve_upper(const GameSpec& spec, const SchemeParams& params) {
  return solve_pde(spec, params, GameSide::upper);
}

FeedbackTable extract_feedback(const PdeSolution& sol) {
  FeedbackTable f;
  f.t0 = sol.time.t0;
  f.T = sol.time.T;
  f.K = sol.time.K;
  f.x_min = sol.grid.x_min;
  f.dx = sol.grid.dx();
  f.nodes = sol.grid.nodes();
  f.m = sol.m;
  f.u_points = sol.u_points;
  f.v_points = sol.v_points;
  f.u_index = sol.u_index;
  f.v_index = sol.v_index;
  return f;
}

Window interior_window(const GameSpec& spec, const SpatialGrid& grid) {
  const auto b = coefficient_bounds(spec, grid);
  const double margin = b.gamma + b.b * spec.T + 4.0 * b.sigma * std::sqrt(spec.T);
  return {grid.x_min + margin, grid.x_max - margin};
}

RegularityConstants lipschitz_growth(const PdeSolution& sol, const Window& w) {
  RegularityConstants c;
  const auto& g = sol.grid;
  const double dx = g.dx();
  for (const auto& s : sol.slices) {
    for (int i = 1; i <= sol.m; ++i) {
      const auto row = s.row(i);
      for (int j = 0; j <= g.J; ++j) {
        const double x = g.x(j);
        if (!w.contains(x)) continue;
        c.growth = std::max(c.growth, std::abs(row[static_cast<std::size_t>(j)]) / (1.0 + std::abs(x)));
        if (j < g.J && w.contains(g.x(j + 1))) {
          c.slope = std::max(c.slope, std::abs(row[static_cast<std::size_t>(j + 1)] - row[static_cast<std::size_t>(j)]) / dx);
        }
      }
    }
  }
  return c;
}

namespace {

double stable_ratio(double fine, double coarse) {
  const double scale = std::max(std::abs(fine), std::abs(coarse));
  if (scale < 1e-12) return 1.0;
  if (std::abs(coarse) < 1e-12) return std::numeric_limits<double>::infinity();
  return fine / coarse;
}

bool within_20_percent(double ratio) { return std::abs(ratio - 1.0) < 0.2; }

}  // namespace

LipschitzGrowthReport lipschitz_growth_check(const PdeSolution& coarse, const PdeSolution& fine,
                                             const Window& window) {
  LipschitzGrowthReport r;
  r.coarse = lipschitz_growth(coarse, window);
  r.fine = lipschitz_growth(fine, window);
  r.slope_ratio = stable_ratio(r.fine.slope, r.coarse.slope);
  r.growth_ratio = stable_ratio(r.fine.growth, r.coarse.growth);
  r.stable = within_20_percent(r.slope_ratio) && within_20_percent(r.growth_ratio);
  return r;
}

double holder_constant(const PdeSolution& sol, const std::vector<double>& x_probe) {
  const int K = sol.time.K;
  double c = 0.0;
  std::vector<double> col(static_cast<std::size_t>(K + 1));
  for (int i = 1; i <= sol.m; ++i) {
    for (double x : x_probe) {
      for (int k = 0; k <= K; ++k) col[static_cast<std::size_t>(k)] = interpolate(sol.grid, sol.slice(k).row(i), x);
      const double scale = 1.0 + std::abs(x);
      for (int a = 0; a < K; ++a) {
        for (int b = a + 1; b <= K; ++b) {
          const double dt = sol.time.t(b) - sol.time.t(a);
          const double d = std::abs(col[static_cast<std::size_t>(b)] - col[static_cast<std::size_t>(a)]);
          c = std::max(c, d / (scale * std::sqrt(dt)));
        }
      }
    }
  }
  return c;
}

HolderReport holder_check(const PdeSolution& coarse, const PdeSolution& fine,
                          const std::vector<double>& x_probe) {
  HolderReport r;
  r.coarse = holder_constant(coarse, x_probe);
  r.fine = holder_constant(fine, x_probe);
  r.ratio = stable_ratio(r.fine, r.coarse);
  r.stable = within_20_percent(r.ratio);
  return r;
}

void write_pde_surface_csv(std::ostream& os, const PdeSolution& sol, const io::ArtifactMeta& meta,
                           int stride) {
  io::CsvWriter w(os, meta, {"t", "x", "regime", "W", "u_star", "v_star"});
  const int K = sol.time.K;
  stride = std::max(1, stride);
  for (int k = 0; k <= K; ++k) {
    if (k % stride != 0 && k != K) continue;
    for (int i = 1; i <= sol.m; ++i) {
      for (int j = 0; j <= sol.grid.J; ++j) {
        const auto slot = sol.control_slot(k, i, j);
        w.row({sol.time.t(k), sol.grid.x(j), static_cast<long long>(i), sol.slice(k).at(i, j),
               sol.u_points[sol.u_index[slot]], sol.v_points[sol.v_index[slot]]});
      }
    }
  }
}

}  // namespace hjbi
