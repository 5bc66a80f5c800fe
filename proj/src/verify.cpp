#include "hjbi/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace hjbi {
namespace {

struct PointValues {
  double pde = 0.0;
  double mc = 0.0;
  double se = 0.0;
};

ControlPolicy policy_from(const GameSpec& spec, const PdeSolution& sol, bool feedback) {
  if (!feedback || spec.controls.singleton()) {
    return ConstantControl{spec.controls.u_points.front(), spec.controls.v_points.front()};
  }
  return extract_feedback(sol);
}

PointValues point_values(const GameSpec& spec, double t0, double x0, int i0, int particles,
                         const SchemeParams& scheme, int mc_steps, const VerifyOptions& options,
                         bool feedback) {
  const auto sol = solve_lower(spec, scheme);
  const auto policy = policy_from(spec, sol, feedback);
  const double xv[1] = {x0};
  CloudOptions co;
  co.stratify_regimes = spec.m > 1;
  co.x_spread = options.x_spread;
  const auto cloud = simulate_forward(spec, TimeGrid(t0, spec.T, mc_steps), i0, xv, policy, particles,
                                      options.seed, co);
  BsdeOptions bo;
  bo.degree = options.degree;
  bo.keep_particles = false;
  const auto y = solve_regression(make_game_bsde(spec, policy), cloud, bo);
  return {sol.value(t0, x0, i0), y.value(0, i0, xv), y.stderr_at(0, i0)};
}

GapEstimate representation_gap(const GameSpec& spec, double t0, double x0, int i0, int particles,
                               const VerifyOptions& options, bool feedback) {
  if (i0 < 1 || i0 > spec.m) throw std::invalid_argument("initial regime out of range");
  if (!(t0 >= 0.0 && t0 < spec.T)) throw std::invalid_argument("t0 must lie in [0, T)");
  const auto c = point_values(spec, t0, x0, i0, particles, options.pde, options.mc_steps, options, feedback);
  GapEstimate g;
  g.pde = c.pde;
  g.mc = c.mc;
  g.gap = std::abs(c.pde - c.mc);
  g.std_error = c.se;
  if (options.refine) {
    const auto f = point_values(spec, t0, x0, i0, particles, refined(options.pde), 2 * options.mc_steps,
                                options, feedback);
    // First-order error of the coarse pair from its distance to the refined pair.
    g.tol_grid = 2.0 * (std::abs(c.pde - f.pde) + std::abs(c.mc - f.mc));
  }
  g.tolerance = g.tol_grid + 4.0 * g.std_error + options.jitter;
  g.pass = std::isfinite(g.gap) && g.gap <= g.tolerance;
  return g;
}

double max_abs_slice_gap(const PdeSolution& a, const PdeSolution& b, const Window& w, int k) {
  double out = 0.0;
  for (int i = 1; i <= a.m; ++i) {
    for (int j = 0; j <= a.grid.J; ++j) {
      if (!w.contains(a.grid.x(j))) continue;
      out = std::max(out, std::abs(a.slice(k).at(i, j) - b.slice(k).at(i, j)));
    }
  }
  return out;
}

double safe_log_ratio(double w, double psi) {
  const double a = std::abs(w);
  return a > 1.0 ? std::log(a) / psi : 0.0;
}

// Smallest exponent with |Phi_i(x)| <= exp(A Psi(x)) at every node of both
// ladders and on a dense sample of their hull.
double terminal_exponent(const GameSpec& spec, const UniquenessOptions& options) {
  double A = options.min_A_tilde;
  double lo = 0.0, hi = 0.0;
  const auto cover = [&](double x) {
    for (int i = 1; i <= spec.m; ++i) {
      const double xv[1] = {x};
      A = std::max(A, safe_log_ratio(spec.coeffs().terminal(i, xv), envelope_psi(x)));
    }
  };
  for (const auto* ladder : {&options.ladder_a, &options.ladder_b}) {
    for (const auto& p : *ladder) {
      lo = std::min(lo, p.grid.x_min);
      hi = std::max(hi, p.grid.x_max);
      for (int j = 0; j <= p.grid.J; ++j) cover(p.grid.x(j));
    }
  }
  constexpr int kSamples = 4000;
  for (int q = 0; q <= kSamples; ++q) cover(lo + (hi - lo) * q / kSamples);
  return A;
}

}  // namespace

SchemeParams refined(const SchemeParams& params) {
  SchemeParams r = params;
  r.grid = SpatialGrid(params.grid.x_min, params.grid.x_max, 2 * params.grid.J);
  r.K = 4 * params.K;
  return r;
}

GapEstimate feynman_kac_gap(const GameSpec& spec, double t0, double x0, int i0, int particles,
                            const VerifyOptions& options) {
  if (!spec.controls.singleton()) {
    throw std::invalid_argument("feynman_kac_gap needs singleton control grids");
  }
  return representation_gap(spec, t0, x0, i0, particles, options, false);
}

GapEstimate feedback_value_gap(const GameSpec& spec, double t0, double x0, int i0, int particles,
                               const VerifyOptions& options) {
  return representation_gap(spec, t0, x0, i0, particles, options, true);
}

DppReport dpp_check(const GameSpec& spec, double t0, double x0, int i0, const std::vector<double>& deltas,
                    int particles, const VerifyOptions& options) {
  if (deltas.empty()) throw std::invalid_argument("dpp_check needs at least one delta");
  const auto sol = solve_lower(spec, options.pde);
  const auto policy = policy_from(spec, sol, true);
  const double h = (spec.T - t0) / options.mc_steps;
  const double w0 = sol.value(t0, x0, i0);
  const double xv[1] = {x0};
  DppReport r;
  r.deltas = deltas;
  for (double delta : deltas) {
    if (!(delta > 0.0) || t0 + delta > spec.T + 1e-12) throw std::invalid_argument("delta must lie in (0, T - t0]");
    const double t1 = std::min(spec.T, t0 + delta);
    SemigroupOptions so;
    so.steps = std::max(1, static_cast<int>(std::lround(delta / h)));
    so.degree = options.degree;
    so.x_spread = options.x_spread;
    so.seed = options.seed;
    const auto field = [&sol, t1](int i, ConstVec x) { return sol.value(t1, x[0], i); };
    const auto g = backward_semigroup_apply(spec, i0, t0, xv, t1 - t0, field, policy, particles, so);
    r.residual.push_back(std::abs(w0 - g.value));
    r.std_error.push_back(g.std_error);
  }
  for (std::size_t k = 0; k + 1 < deltas.size(); ++k) {
    const double a = r.residual[k], b = r.residual[k + 1];
    const bool floor = a <= 4.0 * r.std_error[k] + options.jitter && b <= 4.0 * r.std_error[k + 1] + options.jitter;
    double ratio = 1.0;
    if (b > 0.0) ratio = a / b;
    else if (a > 0.0) ratio = std::numeric_limits<double>::infinity();
    r.ratio.push_back(ratio);
    r.noise_floor.push_back(floor);
    if (!floor && !(ratio >= 1.5 && ratio <= 3.0)) r.first_order = false;
  }
  return r;
}

ValueExistsReport value_exists_check(const GameSpec& spec, const SchemeParams& params, double tol_hamiltonian,
                                     double tol_value) {
  const auto lo = solve_lower(spec, params);
  const auto up = solve_upper(spec, params);
  const auto w = interior_window(spec, params.grid);
  ValueExistsReport r;
  r.tol_hamiltonian = tol_hamiltonian;
  r.tol_value = tol_value;
  for (int k = 0; k <= params.K; ++k) {
    r.isaacs_gap = std::max(r.isaacs_gap, isaacs_gap(spec, lo.time.t(k), lo.slice(k)));
    r.value_gap = std::max(r.value_gap, max_abs_slice_gap(lo, up, w, k));
  }
  r.value_gap_t0 = max_abs_slice_gap(lo, up, w, 0);
  r.asserted = r.isaacs_gap <= tol_hamiltonian;
  r.pass = !r.asserted || r.value_gap <= tol_value;
  return r;
}

double envelope_psi(double x) {
  const double l = 0.5 * std::log(x * x + 1.0) + 1.0;
  return l * l;
}

double Envelope::value(double t, double T, double x) const {
  return std::exp((C1 * (T - t) + A_tilde) * envelope_psi(x));
}

UniquenessReport uniqueness_evidence(const GameSpec& spec, const UniquenessOptions& options) {
  if (options.ladder_a.empty() || options.ladder_a.size() != options.ladder_b.size()) {
    throw std::invalid_argument("uniqueness ladders must be non-empty and of equal length");
  }
  UniquenessReport r;
  const double T = spec.T;
  const double A = terminal_exponent(spec, options);
  std::vector<PdeSolution> ladder_a, ladder_b;
  for (const auto& p : options.ladder_a) ladder_a.push_back(solve_lower(spec, p));
  for (const auto& p : options.ladder_b) ladder_b.push_back(solve_lower(spec, p));
  double C1 = 0.0;
  for (const auto* ladder : {&ladder_a, &ladder_b}) {
    for (const auto& s : *ladder) {
      const auto fit = interior_window(spec, s.grid);
      for (int k = 0; k < s.time.K; ++k) {
        for (int i = 1; i <= s.m; ++i) {
          for (int j = 0; j <= s.grid.J; ++j) {
            if (!fit.contains(s.grid.x(j))) continue;
            const double excess = safe_log_ratio(s.slice(k).at(i, j), envelope_psi(s.grid.x(j))) - A;
            if (excess > 0.0) C1 = std::max(C1, excess / (T - s.time.t(k)));
          }
        }
      }
    }
  }
  r.envelope = {A, C1};

  for (std::size_t rung = 0; rung < ladder_a.size(); ++rung) {
    const auto& a = ladder_a[rung];
    const auto& b = ladder_b[rung];

    UniquenessRung u;
    u.dx_a = a.grid.dx();
    u.dt_a = a.time.dt();
    u.dx_b = b.grid.dx();
    u.dt_b = b.time.dt();
    const auto wa = interior_window(spec, a.grid), wb = interior_window(spec, b.grid);
    u.window = {std::max(wa.lo, wb.lo), std::min(wa.hi, wb.hi)};
    if (u.window.empty()) {
      u.disagreement = std::numeric_limits<double>::infinity();
    } else {
      for (int k = 0; k <= a.time.K; ++k) {
        const double t = a.time.t(k);
        for (int i = 1; i <= a.m; ++i) {
          for (int j = 0; j <= a.grid.J; ++j) {
            const double x = a.grid.x(j);
            if (!u.window.contains(x)) continue;
            u.disagreement = std::max(u.disagreement, std::abs(a.slice(k).at(i, j) - b.value(t, x, i)));
          }
        }
      }
    }
    for (const auto* s : {&a, &b}) {
      for (int k = 0; k <= s->time.K; ++k) {
        const double t = s->time.t(k);
        for (int i = 1; i <= s->m; ++i) {
          for (int j = 0; j <= s->grid.J; ++j) {
            const double x = s->grid.x(j);
            u.envelope_ratio = std::max(u.envelope_ratio, std::abs(s->slice(k).at(i, j)) / r.envelope.value(t, T, x));
          }
        }
      }
    }
    if (!r.rungs.empty() && u.disagreement > r.rungs.back().disagreement + 1e-12) r.decreasing = false;
    if (!(u.envelope_ratio <= 1.0 + 1e-9)) r.envelope_holds = false;
    r.rungs.push_back(u);
  }
  r.finest_within = r.rungs.back().disagreement <= options.tolerance;
  r.pass = r.decreasing && r.finest_within && r.envelope_holds;
  return r;
}

RegularityReport regularity_check(const GameSpec& spec, const SchemeParams& params,
                                  const std::vector<double>& x_probe) {
  const auto coarse = solve_lower(spec, params);
  const auto fine = solve_lower(spec, refined(params));
  RegularityReport r;
  r.lipschitz = lipschitz_growth_check(coarse, fine, interior_window(spec, params.grid));
  r.holder = holder_check(coarse, fine, x_probe);
  return r;
}

bool VerificationReport::pass() const {
  if (representation && !representation->pass) return false;
  if (dpp && !dpp->first_order) return false;
  if (value && !value->pass) return false;
  if (regularity && !regularity->stable()) return false;
  if (uniqueness && !uniqueness->pass) return false;
  return true;
}

namespace {

using Json = nlohmann::ordered_json;

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json to_json(const GapEstimate& g) {
  Json j;
  j["pde"] = number(g.pde);
  j["mc"] = number(g.mc);
  j["gap"] = number(g.gap);
  j["std_error"] = number(g.std_error);
  j["tol_grid"] = number(g.tol_grid);
  j["tolerance"] = number(g.tolerance);
  j["pass"] = g.pass;
  return j;
}

Json to_json(const DppReport& d) {
  Json rows = Json::array();
  for (std::size_t k = 0; k < d.deltas.size(); ++k) {
    Json row;
    row["delta"] = d.deltas[k];
    row["residual"] = number(d.residual[k]);
    row["std_error"] = number(d.std_error[k]);
    if (k < d.ratio.size()) {
      row["ratio"] = number(d.ratio[k]);
      row["noise_floor"] = static_cast<bool>(d.noise_floor[k]);
    } else {
      row["ratio"] = nullptr;
      row["noise_floor"] = nullptr;
    }
    rows.push_back(row);
  }
  Json j;
  j["residuals"] = rows;
  j["first_order"] = d.first_order;
  return j;
}

Json to_json(const ValueExistsReport& v) {
  Json j;
  j["isaacs_gap"] = number(v.isaacs_gap);
  j["value_gap"] = number(v.value_gap);
  j["value_gap_t0"] = number(v.value_gap_t0);
  j["tol_hamiltonian"] = v.tol_hamiltonian;
  j["tol_value"] = v.tol_value;
  j["asserted"] = v.asserted;
  j["pass"] = v.pass;
  return j;
}

Json to_json(const RegularityReport& r) {
  Json j;
  j["slope"] = {{"coarse", number(r.lipschitz.coarse.slope)},
                {"fine", number(r.lipschitz.fine.slope)},
                {"ratio", number(r.lipschitz.slope_ratio)}};
  j["growth"] = {{"coarse", number(r.lipschitz.coarse.growth)},
                 {"fine", number(r.lipschitz.fine.growth)},
                 {"ratio", number(r.lipschitz.growth_ratio)}};
  j["holder"] = {{"coarse", number(r.holder.coarse)},
                 {"fine", number(r.holder.fine)},
                 {"ratio", number(r.holder.ratio)}};
  j["stable"] = r.stable();
  return j;
}

Json to_json(const UniquenessReport& u) {
  Json rungs = Json::array();
  for (const auto& r : u.rungs) {
    Json row;
    row["dx_a"] = r.dx_a;
    row["dt_a"] = r.dt_a;
    row["dx_b"] = r.dx_b;
    row["dt_b"] = r.dt_b;
    row["window"] = {number(r.window.lo), number(r.window.hi)};
    row["disagreement"] = number(r.disagreement);
    row["envelope_ratio"] = number(r.envelope_ratio);
    rungs.push_back(row);
  }
  Json j;
  j["rungs"] = rungs;
  j["envelope"] = {{"A_tilde", u.envelope.A_tilde}, {"C1", u.envelope.C1}};
  j["decreasing"] = u.decreasing;
  j["finest_within"] = u.finest_within;
  j["envelope_holds"] = u.envelope_holds;
  j["pass"] = u.pass;
  return j;
}

}  // namespace

std::string to_json(const VerificationReport& report, const io::ArtifactMeta& meta) {
  Json j;
  j["meta"] = {{"tool", meta.tool}, {"version", meta.version}, {"config_hash", meta.config_hash}};
  j["problem"] = report.problem;
  if (report.representation) {
    j["representation_kind"] = report.representation_kind;
    j["representation_gap"] = to_json(*report.representation);
  }
  if (report.dpp) j["dpp_residual"] = to_json(*report.dpp);
  if (report.value) j["value"] = to_json(*report.value);
  if (report.regularity) j["regularity"] = to_json(*report.regularity);
  if (report.uniqueness) j["uniqueness"] = to_json(*report.uniqueness);
  j["pass"] = report.pass();
  return j.dump(2) + "\n";
}

}  // namespace hjbi
