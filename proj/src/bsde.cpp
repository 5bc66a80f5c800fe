#include "hjbi/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "hjbi/coupling.hpp"

namespace hjbi {
namespace {

struct Scratch {
  std::vector<double> h, z, kv, grad, sigma, jump, shifted;

  explicit Scratch(const BsdeSpec& b)
      : h(static_cast<std::size_t>(b.m - 1)), z(static_cast<std::size_t>(b.d)),
        kv(b.levy.size()), grad(static_cast<std::size_t>(b.n)),
        sigma(static_cast<std::size_t>(b.n * b.d)), jump(static_cast<std::size_t>(b.n)),
        shifted(static_cast<std::size_t>(b.n)) {}
};

// Fills y, h, z, K(e_a) and returns k = sum_a w_a rho K(e_a), reading the
// regime fits of one step.
double driver_args(const BsdeSpec& b, const LinearFit* fits, double t, ConstVec x, int j, double u,
                   double v, Scratch& s, double& y) {
  const auto& own = fits[j - 1];
  y = own.value(x);
  for (int l = 1; l < b.m; ++l) {
    s.h[static_cast<std::size_t>(l - 1)] = fits[wrap_regime(j + l, b.m) - 1].value(x) - y;
  }
  std::fill(s.z.begin(), s.z.end(), 0.0);
  if (b.diffusion) {
    own.gradient(x, s.grad);
    b.diffusion(j, t, x, u, v, s.sigma);
    for (int q = 0; q < b.d; ++q) {
      double acc = 0.0;
      for (int c = 0; c < b.n; ++c) acc += s.grad[static_cast<std::size_t>(c)] * s.sigma[static_cast<std::size_t>(c * b.d + q)];
      s.z[static_cast<std::size_t>(q)] = acc;
    }
  }
  double k = 0.0;
  for (std::size_t a = 0; a < b.levy.size(); ++a) {
    const auto& atom = b.levy.atoms[a];
    b.jump(j, t, x, u, v, atom.mark, s.jump);
    for (std::size_t c = 0; c < x.size(); ++c) s.shifted[c] = x[c] + s.jump[c];
    s.kv[a] = own.value(s.shifted) - y;
    k += atom.weight * (b.rho ? b.rho(x, atom.mark) : 0.0) * s.kv[a];
  }
  return k;
}

double eval_driver(const BsdeSpec& b, const LinearFit* fits, double t, ConstVec x, int j,
                   Scratch& s) {
  const auto [u, v] = control_at(b.policy, t, x, j);
  double y = 0.0;
  const double k = driver_args(b, fits, t, x, j, u, v, s, y);
  return b.driver(t, x, j, y, s.h, s.z, k, u, v);
}

void check_cloud(const BsdeSpec& b, const ForwardCloud& cloud) {
  if (cloud.n != b.n) throw std::invalid_argument("cloud dimension differs from the BSDE");
  if (!b.terminal || !b.driver) throw std::invalid_argument("BSDE needs terminal and driver");
  if (!b.levy.empty() && !b.jump) throw std::invalid_argument("BSDE with jumps needs a jump map");
}

BsdeSolution empty_solution(const BsdeSpec& b, const ForwardCloud& cloud) {
  BsdeSolution sol;
  sol.grid = cloud.grid;
  sol.m = b.m;
  sol.n = b.n;
  sol.d = b.d;
  sol.atoms = static_cast<int>(b.levy.size());
  sol.particles = cloud.particles;
  sol.lambda = b.lambda;
  for (const auto& a : b.levy.atoms) sol.atom_weights.push_back(a.weight);
  const auto slots = static_cast<std::size_t>(cloud.grid.K + 1) * static_cast<std::size_t>(b.m);
  sol.value_fits.resize(slots);
  sol.fit_stderr.assign(slots, 0.0);
  sol.fit_count.assign(slots, 0);
  return sol;
}

void fill_particles(const BsdeSpec& b, const ForwardCloud& cloud, BsdeSolution& sol) {
  const auto K = static_cast<std::size_t>(cloud.grid.K);
  const auto P = static_cast<std::size_t>(cloud.particles);
  const auto marks = static_cast<std::size_t>(b.m - 1);
  const auto d = static_cast<std::size_t>(b.d);
  const auto A = b.levy.size();
  sol.Y.assign((K + 1) * P, 0.0);
  sol.H.assign((K + 1) * P * marks, 0.0);
  sol.Z.assign((K + 1) * P * d, 0.0);
  sol.K.assign((K + 1) * P * A, 0.0);
  Scratch s(b);
  for (std::size_t k = 0; k <= K; ++k) {
    const double t = cloud.grid.t(static_cast<int>(k));
    const LinearFit* fits = &sol.value_fits[k * static_cast<std::size_t>(b.m)];
    for (std::size_t p = 0; p < P; ++p) {
      const auto x = cloud.state(static_cast<int>(k), static_cast<int>(p));
      const int j = cloud.regime(static_cast<int>(k), static_cast<int>(p));
      const auto [u, v] = control_at(b.policy, t, x, j);
      double y = 0.0;
      driver_args(b, fits, t, x, j, u, v, s, y);
      const std::size_t at = k * P + p;
      sol.Y[at] = y;
      std::copy(s.h.begin(), s.h.end(), sol.H.begin() + static_cast<std::ptrdiff_t>(at * marks));
      std::copy(s.z.begin(), s.z.end(), sol.Z.begin() + static_cast<std::ptrdiff_t>(at * d));
      std::copy(s.kv.begin(), s.kv.end(), sol.K.begin() + static_cast<std::ptrdiff_t>(at * A));
    }
  }
}

// Error of a fitted value: residual spread times sqrt(terms / (count - terms)).
double level_stderr(double residual_rms, int count, std::size_t terms) {
  const auto t = static_cast<double>(terms);
  if (count <= static_cast<int>(terms)) return residual_rms;
  return residual_rms * std::sqrt(t / (count - t));
}

BsdeSolution backward_pass(const BsdeSpec& b, const ForwardCloud& cloud, const BsdeOptions& opt,
                           const BsdeSolution* frozen) {
  check_cloud(b, cloud);
  const int K = cloud.grid.K;
  const int P = cloud.particles;
  const int m = b.m;
  const auto n = static_cast<std::size_t>(b.n);
  const double dt = cloud.grid.dt();
  BsdeSolution sol = empty_solution(b, cloud);
  const auto trans = regime_transition(m, b.lambda, dt);

  {
    const auto last = cloud.X.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(K) * P * n);
    const std::vector<double> pts(last, last + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(P) * n));
    LeastSquares ls(pts, b.n, opt.degree);
    std::vector<double> tgt(static_cast<std::size_t>(P));
    for (int j = 1; j <= m; ++j) {
      for (int p = 0; p < P; ++p) tgt[static_cast<std::size_t>(p)] = b.terminal(j, cloud.state(K, p));
      auto r = ls.solve(tgt);
      sol.terminal_residual = std::max(sol.terminal_residual, r.residual_rms);
      const auto slot = static_cast<std::size_t>(K) * m + static_cast<std::size_t>(j - 1);
      sol.value_fits[slot] = std::move(r.fit);
      sol.fit_count[slot] = P;
    }
  }

  Scratch s(b);
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(m));
  std::vector<double> target(static_cast<std::size_t>(P));
  // Realized values xi + sum dt g along each path; their spread around the
  // fit carries the noise accumulated over all later steps.
  std::vector<double> realized(static_cast<std::size_t>(P)), drive(static_cast<std::size_t>(P));
  for (int p = 0; p < P; ++p) realized[static_cast<std::size_t>(p)] = b.terminal(cloud.regime(K, p), cloud.state(K, p));
  for (int k = K - 1; k >= 0; --k) {
    const double t = cloud.grid.t(k);
    for (auto& g : groups) g.clear();
    for (int p = 0; p < P; ++p) groups[static_cast<std::size_t>(cloud.regime(k, p) - 1)].push_back(p);

    auto next_value = [&](int j, ConstVec x) {
      return k + 1 == K ? b.terminal(j, x) : sol.fit(k + 1, j).value(x);
    };
    for (int p = 0; p < P; ++p) {
      const auto x1 = cloud.state(k + 1, p);
      double v = 0.0;
      if (opt.regime_expectation == RegimeExpectation::conditional) {
        const int j = cloud.regime(k, p);
        for (int q = 1; q <= m; ++q) {
          const double w = trans[static_cast<std::size_t>((j - 1) * m + (q - 1))];
          if (w != 0.0) v += w * next_value(q, x1);
        }
      } else {
        v = next_value(cloud.regime(k + 1, p), x1);
      }
      target[static_cast<std::size_t>(p)] = v;
    }

    std::vector<std::optional<LeastSquares>> ls(static_cast<std::size_t>(m));
    std::vector<LinearFit> cont(static_cast<std::size_t>(m));
    std::vector<std::vector<double>> group_target(static_cast<std::size_t>(m));
    for (int j = 1; j <= m; ++j) {
      const auto& grp = groups[static_cast<std::size_t>(j - 1)];
      if (grp.empty()) {
        throw RegressionError(fmt::format("regime {} has no particles at step {}", j, k), 0.0);
      }
      std::vector<double> pts;
      pts.reserve(grp.size() * n);
      auto& gt = group_target[static_cast<std::size_t>(j - 1)];
      for (int p : grp) {
        const auto x = cloud.state(k, p);
        pts.insert(pts.end(), x.begin(), x.end());
        gt.push_back(target[static_cast<std::size_t>(p)]);
      }
      try {
        ls[static_cast<std::size_t>(j - 1)].emplace(pts, b.n, opt.degree);
      } catch (const RegressionError& e) {
        throw RegressionError(fmt::format("step {} regime {}: {}", k, j, e.what()), e.condition());
      }
      cont[static_cast<std::size_t>(j - 1)] = ls[static_cast<std::size_t>(j - 1)]->solve(gt).fit;
    }

    auto refit = [&](const LinearFit* arg_fits) {
      for (int j = 1; j <= m; ++j) {
        const auto& grp = groups[static_cast<std::size_t>(j - 1)];
        const auto& gt = group_target[static_cast<std::size_t>(j - 1)];
        std::vector<double> val(grp.size());
        for (std::size_t q = 0; q < grp.size(); ++q) {
          const auto x = cloud.state(k, grp[q]);
          const double g = eval_driver(b, arg_fits, t, x, j, s);
          drive[static_cast<std::size_t>(grp[q])] = g;
          val[q] = gt[q] + dt * g;
        }
        auto r = ls[static_cast<std::size_t>(j - 1)]->solve(val);
        const auto slot = static_cast<std::size_t>(k) * m + static_cast<std::size_t>(j - 1);
        sol.fit_stderr[slot] = level_stderr(r.residual_rms, static_cast<int>(grp.size()), r.fit.basis.size());
        sol.fit_count[slot] = static_cast<int>(grp.size());
        sol.value_fits[slot] = std::move(r.fit);
      }
    };

    if (frozen) {
      refit(&frozen->value_fits[static_cast<std::size_t>(k) * m]);
    } else {
      refit(cont.data());
      for (int sweep = 0; sweep < opt.implicit_sweeps; ++sweep) {
        const std::vector<LinearFit> current(sol.value_fits.begin() + static_cast<std::ptrdiff_t>(k) * m,
                                             sol.value_fits.begin() + static_cast<std::ptrdiff_t>(k + 1) * m);
        refit(current.data());
      }
    }

    for (int p = 0; p < P; ++p) realized[static_cast<std::size_t>(p)] += dt * drive[static_cast<std::size_t>(p)];
    for (int j = 1; j <= m; ++j) {
      const auto& grp = groups[static_cast<std::size_t>(j - 1)];
      const auto& f = sol.fit(k, j);
      double ss = 0.0;
      for (int p : grp) {
        const double e = realized[static_cast<std::size_t>(p)] - f.value(cloud.state(k, p));
        ss += e * e;
      }
      const auto slot = static_cast<std::size_t>(k) * m + static_cast<std::size_t>(j - 1);
      const double path_se = level_stderr(std::sqrt(ss / static_cast<double>(grp.size())),
                                          static_cast<int>(grp.size()), f.basis.size());
      sol.fit_stderr[slot] = std::max(sol.fit_stderr[slot], path_se);
    }
  }
  if (opt.keep_particles) fill_particles(b, cloud, sol);
  return sol;
}

double trapezoid_weight(int k, int from, int to) {
  if (from == to) return 0.0;
  return (k == from || k == to) ? 0.5 : 1.0;
}

}  // namespace

std::vector<double> regime_transition(int m, double lambda, double dt) {
  const auto um = static_cast<std::size_t>(m);
  std::vector<double> P(um * um);
  const double stay = std::exp(-lambda * m * dt);
  for (std::size_t a = 0; a < um; ++a) {
    for (std::size_t c = 0; c < um; ++c) P[a * um + c] = (a == c ? stay : 0.0) + (1.0 - stay) / m;
  }
  return P;
}

BsdeSpec make_game_bsde(const GameSpec& spec, const ControlPolicy& policy) {
  BsdeSpec b;
  b.m = spec.m;
  b.n = spec.n;
  b.d = spec.d;
  b.lambda = spec.lambda;
  b.levy = spec.levy;
  b.policy = policy;
  b.lipschitz = spec.assumptions.L_g;
  auto cf = spec.coefficients;
  const double lambda = spec.lambda;
  b.terminal = [cf](int i, ConstVec x) { return cf->terminal(i, x); };
  b.driver = [cf, lambda](double t, ConstVec x, int i, double y, ConstVec h, ConstVec z, double k,
                          double u, double v) {
    double hs = 0.0;
    for (double hl : h) hs += hl;
    return tilde_f_eval(*cf, i, t, x, y, h, z, k, u, v) - lambda * hs;
  };
  b.diffusion = [cf](int i, double t, ConstVec x, double u, double v, MutVec out) {
    cf->diffusion(i, t, x, u, v, out);
  };
  b.jump = [cf](int i, double t, ConstVec x, double u, double v, ConstVec e, MutVec out) {
    cf->jump(i, t, x, u, v, e, out);
  };
  b.rho = [cf](ConstVec x, ConstVec e) { return cf->rho(x, e); };
  return b;
}

BsdeSpec with_terminal(BsdeSpec bsde, BsdeSpec::Terminal terminal) {
  bsde.terminal = std::move(terminal);
  return bsde;
}

BsdeSpec with_terminal_shift(BsdeSpec bsde, double shift) {
  auto base = bsde.terminal;
  bsde.terminal = [base, shift](int i, ConstVec x) { return base(i, x) + shift; };
  return bsde;
}

BsdeSpec with_additive_driver(BsdeSpec bsde, std::function<double(double, ConstVec, int)> phi) {
  auto base = bsde.driver;
  bsde.driver = [base, phi](double t, ConstVec x, int i, double y, ConstVec h, ConstVec z, double k,
                            double u, double v) { return base(t, x, i, y, h, z, k, u, v) + phi(t, x, i); };
  return bsde;
}

BsdeSolution solve_regression(const BsdeSpec& bsde, const ForwardCloud& cloud,
                              const BsdeOptions& options) {
  return backward_pass(bsde, cloud, options, nullptr);
}

BsdeSolution zero_solution(const BsdeSpec& bsde, const ForwardCloud& cloud) {
  BsdeSolution sol = empty_solution(bsde, cloud);
  for (auto& f : sol.value_fits) f = LinearFit::constant(bsde.n, 0.0);
  const auto cells = static_cast<std::size_t>(cloud.grid.K + 1) * static_cast<std::size_t>(cloud.particles);
  sol.Y.assign(cells, 0.0);
  sol.H.assign(cells * static_cast<std::size_t>(bsde.m - 1), 0.0);
  sol.Z.assign(cells * static_cast<std::size_t>(bsde.d), 0.0);
  sol.K.assign(cells * bsde.levy.size(), 0.0);
  return sol;
}

BsdeSolution picard_step(const BsdeSpec& bsde, const ForwardCloud& cloud, const BsdeSolution& frozen,
                         const BsdeOptions& options) {
  if (!(frozen.grid == cloud.grid) || frozen.m != bsde.m) {
    throw std::invalid_argument("frozen iterate lives on a different grid");
  }
  return backward_pass(bsde, cloud, options, &frozen);
}

ProcessDelta solution_delta(const BsdeSolution& a, const BsdeSolution& b) {
  if (!(a.grid == b.grid) || a.particles != b.particles || a.m != b.m || a.d != b.d ||
      a.atoms != b.atoms) {
    throw std::invalid_argument("solutions live on different grids or clouds");
  }
  if (!a.has_particles() || !b.has_particles()) {
    throw std::invalid_argument("particle-level values were not kept");
  }
  ProcessDelta dlt;
  dlt.grid = a.grid;
  dlt.particles = a.particles;
  dlt.marks = a.m - 1;
  dlt.d = a.d;
  dlt.atoms = a.atoms;
  dlt.lambda = a.lambda;
  dlt.atom_weights = a.atom_weights;
  auto diff = [](const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> out(x.size());
    for (std::size_t q = 0; q < x.size(); ++q) out[q] = x[q] - y[q];
    return out;
  };
  dlt.Y = diff(a.Y, b.Y);
  dlt.H = diff(a.H, b.H);
  dlt.Z = diff(a.Z, b.Z);
  dlt.K = diff(a.K, b.K);
  return dlt;
}

WeightedNormValue weighted_norm_b(const ProcessDelta& dl, double b) {
  const int K = dl.grid.K;
  const auto P = static_cast<std::size_t>(dl.particles);
  const auto marks = static_cast<std::size_t>(dl.marks);
  const auto d = static_cast<std::size_t>(dl.d);
  const auto A = static_cast<std::size_t>(dl.atoms);
  const double dt = dl.grid.dt();
  double total = 0.0;
  for (int k = 0; k <= K; ++k) {
    double acc = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t at = static_cast<std::size_t>(k) * P + p;
      double e = dl.Y.empty() ? 0.0 : dl.Y[at] * dl.Y[at];
      for (std::size_t l = 0; l < marks && !dl.H.empty(); ++l) e += dl.lambda * dl.H[at * marks + l] * dl.H[at * marks + l];
      for (std::size_t q = 0; q < d && !dl.Z.empty(); ++q) e += dl.Z[at * d + q] * dl.Z[at * d + q];
      for (std::size_t a = 0; a < A && !dl.K.empty(); ++a) e += dl.atom_weights[a] * dl.K[at * A + a] * dl.K[at * A + a];
      acc += e;
    }
    total += trapezoid_weight(k, 0, K) * dt * std::exp(b * dl.grid.t(k)) * acc / static_cast<double>(P);
  }
  return {b, total};
}

double picard_weight(double L_g, double lambda) { return 1.0 + 8.0 * L_g * L_g * (1.0 + lambda) / lambda; }

PicardResult picard_iterate(const BsdeSpec& bsde, const ForwardCloud& cloud,
                            const PicardOptions& picard, const BsdeOptions& options) {
  PicardResult res;
  res.b = picard_weight(bsde.lipschitz, bsde.lambda);
  BsdeOptions opt = options;
  opt.keep_particles = true;
  BsdeSolution prev = zero_solution(bsde, cloud);
  int expanding = 0;
  for (int it = 1; it <= picard.iterations; ++it) {
    BsdeSolution cur = picard_step(bsde, cloud, prev, opt);
    const auto gap = weighted_norm_b(solution_delta(cur, prev), res.b);
    res.gaps.push_back(gap);
    res.iterations = it;
    if (it >= 2) {
      const double before = res.gaps[res.gaps.size() - 2].value;
      const double ratio = before > 0.0 ? std::sqrt(gap.value / before) : 0.0;
      res.ratios.push_back(ratio);
      expanding = ratio >= 1.0 ? expanding + 1 : 0;
    }
    prev = std::move(cur);
    if (std::sqrt(gap.value) < picard.tolerance) {
      res.converged = true;
      break;
    }
    if (expanding >= picard.max_expanding) {
      res.aborted = true;
      break;
    }
  }
  res.solution = std::move(prev);
  return res;
}

AprioriReport apriori_gap(const BsdeSolution& sol1, const BsdeSolution& sol2,
                          const ForwardCloud& cloud, const BsdeSpec::Terminal& xi1,
                          const BsdeSpec::Terminal& xi2,
                          const std::function<double(double, ConstVec, int)>& phi1,
                          const std::function<double(double, ConstVec, int)>& phi2, double beta,
                          double L_g) {
  const auto dl = solution_delta(sol1, sol2);
  AprioriReport r;
  r.beta = beta;
  r.beta_min = 2 * L_g + 4 * L_g * L_g + (2.0 / sol1.lambda) * L_g * L_g + 1.0;
  const int K = cloud.grid.K;
  const int P = cloud.particles;
  const auto marks = static_cast<std::size_t>(dl.marks);
  const auto d = static_cast<std::size_t>(dl.d);
  const auto A = static_cast<std::size_t>(dl.atoms);
  const double dt = cloud.grid.dt();
  const double T = cloud.grid.T;

  std::vector<double> energy(static_cast<std::size_t>(K + 1)), ysq(static_cast<std::size_t>(K + 1)),
      phisq(static_cast<std::size_t>(K + 1));
  double xisq = 0.0;
  for (int k = 0; k <= K; ++k) {
    double e = 0.0, y2 = 0.0, f2 = 0.0;
    const double t = cloud.grid.t(k);
    for (int p = 0; p < P; ++p) {
      const std::size_t at = static_cast<std::size_t>(k) * P + static_cast<std::size_t>(p);
      double q = dl.Y[at] * dl.Y[at];
      y2 += q;
      for (std::size_t l = 0; l < marks; ++l) q += dl.lambda * dl.H[at * marks + l] * dl.H[at * marks + l];
      for (std::size_t c = 0; c < d; ++c) q += dl.Z[at * d + c] * dl.Z[at * d + c];
      for (std::size_t a = 0; a < A; ++a) q += dl.atom_weights[a] * dl.K[at * A + a] * dl.K[at * A + a];
      e += q;
      const auto x = cloud.state(k, p);
      const int j = cloud.regime(k, p);
      const double df = (phi1 ? phi1(t, x, j) : 0.0) - (phi2 ? phi2(t, x, j) : 0.0);
      f2 += df * df;
      if (k == K) {
        const double dx = xi1(j, x) - xi2(j, x);
        xisq += dx * dx;
      }
    }
    energy[static_cast<std::size_t>(k)] = e / P;
    ysq[static_cast<std::size_t>(k)] = y2 / P;
    phisq[static_cast<std::size_t>(k)] = f2 / P;
  }
  xisq /= P;

  for (int k = 0; k <= K; ++k) {
    const double t = cloud.grid.t(k);
    double lhs = ysq[static_cast<std::size_t>(k)];
    double rhs = std::exp(beta * (T - t)) * xisq;
    for (int s = k; s <= K; ++s) {
      const double w = trapezoid_weight(s, k, K) * dt * std::exp(beta * (cloud.grid.t(s) - t));
      lhs += w * energy[static_cast<std::size_t>(s)];
      rhs += w * phisq[static_cast<std::size_t>(s)];
    }
    r.t.push_back(t);
    r.lhs.push_back(lhs);
    r.rhs.push_back(rhs);
    if (rhs > 0.0) {
      r.constant = std::max(r.constant, lhs / rhs);
    } else if (lhs > 1e-24) {
      r.constant = std::numeric_limits<double>::infinity();
    }
  }
  r.holds = beta > r.beta_min && std::isfinite(r.constant);
  return r;
}

ComparisonReport compare_solutions(const BsdeSpec& bsde1, const BsdeSpec& bsde2,
                                   const ForwardCloud& cloud, int i0, ConstVec x0,
                                   const BsdeOptions& options) {
  ComparisonReport rep;
  const int K = cloud.grid.K;
  const int P = cloud.particles;
  const double tiny = 1e-12;

  int strict = 0;
  for (int p = 0; p < P; ++p) {
    const auto x = cloud.state(K, p);
    const int j = cloud.regime(K, p);
    const double a = bsde1.terminal(j, x), b = bsde2.terminal(j, x);
    if (a < b - tiny * (1.0 + std::abs(b))) {
      rep.refused = true;
      rep.refusal = fmt::format("terminal ordering fails on particle {}", p);
      return rep;
    }
    if (a > b + tiny * (1.0 + std::abs(b))) ++strict;
  }
  rep.strict_fraction = static_cast<double>(strict) / P;

  std::mt19937_64 rng(0x0c0ffee);
  std::uniform_real_distribution<double> arg(-3.0, 3.0);
  std::uniform_int_distribution<int> pick_p(0, P - 1), pick_k(0, K - 1), pick_i(1, bsde1.m);
  std::vector<double> h(static_cast<std::size_t>(bsde1.m - 1)), z(static_cast<std::size_t>(bsde1.d));
  for (int sample = 0; sample < 1000 && !rep.refused; ++sample) {
    const int k = pick_k(rng);
    const auto x = cloud.state(k, pick_p(rng));
    const int j = pick_i(rng);
    const double t = cloud.grid.t(k);
    for (auto& v : h) v = arg(rng);
    for (auto& v : z) v = arg(rng);
    const double y = arg(rng), kk = arg(rng);
    const auto [u, v] = control_at(bsde1.policy, t, x, j);
    const double g1 = bsde1.driver(t, x, j, y, h, z, kk, u, v);
    const double g2 = bsde2.driver(t, x, j, y, h, z, kk, u, v);
    const double scale = tiny * (1.0 + std::abs(g1) + std::abs(g2));
    if (g1 < g2 - scale) {
      rep.refused = true;
      rep.refusal = fmt::format("driver ordering fails at t={} regime {}", t, j);
      break;
    }
    for (std::size_t l = 0; l < h.size(); ++l) {
      auto hh = h;
      hh[l] += 0.5;
      if (bsde1.driver(t, x, j, y, hh, z, kk, u, v) < g1 - scale) {
        rep.refused = true;
        rep.refusal = fmt::format("driver decreases in h({}) at t={} regime {}", l + 1, t, j);
      }
    }
    if (bsde1.driver(t, x, j, y, h, z, kk + 0.5, u, v) < g1 - scale) {
      rep.refused = true;
      rep.refusal = fmt::format("driver decreases in k at t={} regime {}", t, j);
    }
  }
  if (rep.refused) return rep;

  BsdeOptions opt = options;
  opt.keep_particles = true;
  const auto s1 = solve_regression(bsde1, cloud, opt);
  const auto s2 = solve_regression(bsde2, cloud, opt);
  rep.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < s1.Y.size(); ++q) rep.min_margin = std::min(rep.min_margin, s1.Y[q] - s2.Y[q]);
  double worst_se = 0.0;
  for (std::size_t q = 0; q < s1.fit_stderr.size(); ++q) {
    worst_se = std::max(worst_se, std::hypot(s1.fit_stderr[q], s2.fit_stderr[q]));
  }
  rep.tol_mc = 4.0 * worst_se + 2.0 * cloud.grid.dt() * std::max(bsde1.lipschitz, bsde2.lipschitz);
  rep.dominated = rep.min_margin >= -rep.tol_mc;
  rep.y0_diff = s1.value(0, i0, x0) - s2.value(0, i0, x0);
  rep.y0_stderr = std::hypot(s1.stderr_at(0, i0), s2.stderr_at(0, i0));
  rep.strict = rep.y0_diff > 4.0 * rep.y0_stderr && rep.y0_diff > 0.0;
  return rep;
}

AdjointSlopes AdjointSlopes::constant(int K, int marks, int d, int atoms, double g1, double g2,
                                      double g3, double g4, double rho_bar) {
  AdjointSlopes s;
  s.K = K;
  s.marks = marks;
  s.d = d;
  s.atoms = atoms;
  const auto uK = static_cast<std::size_t>(K);
  s.g1.assign(uK, g1);
  s.g2.assign(uK * static_cast<std::size_t>(marks), g2);
  s.g3.assign(uK * static_cast<std::size_t>(d), g3);
  s.g4.assign(uK, g4);
  s.rho_bar.assign(uK * static_cast<std::size_t>(atoms), rho_bar);
  return s;
}

std::vector<double> adjoint_weight(const DriverPath& path, const TimeGrid& grid,
                                   const AdjointSlopes& sl, double lambda, const LevyMeasure& levy) {
  if (path.K != grid.K || sl.K != grid.K || sl.marks != path.marks || sl.d != path.d ||
      sl.atoms != static_cast<int>(levy.size())) {
    throw std::invalid_argument("adjoint slopes do not match the driver path");
  }
  const double dt = grid.dt();
  const auto marks = static_cast<std::size_t>(sl.marks);
  const auto d = static_cast<std::size_t>(sl.d);
  const auto A = levy.size();
  std::vector<double> P(static_cast<std::size_t>(grid.K) + 1);
  P[0] = 1.0;
  for (int k = 0; k < grid.K; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    double expo = sl.g1[uk] * dt;
    const auto dB = path.dB_at(k);
    for (std::size_t q = 0; q < d; ++q) {
      const double g3 = sl.g3[uk * d + q];
      expo += g3 * dB[q] - 0.5 * g3 * g3 * dt;
    }
    double factor = 1.0;
    const auto counts = path.counts_at(k);
    for (std::size_t l = 0; l < marks; ++l) {
      const double g2 = sl.g2[uk * marks + l];
      expo -= lambda * g2 * dt;
      if (counts[l] > 0) factor *= std::pow(1.0 + g2, static_cast<double>(counts[l]));
      if (counts[l] > 0 && !(1.0 + g2 > 0.0)) {
        throw SolverError(fmt::format("adjoint weight nonpositive at step {}: 1 + g2 = {}", k, 1.0 + g2));
      }
    }
    for (std::size_t a = 0; a < A; ++a) expo -= levy.atoms[a].weight * sl.g4[uk] * sl.rho_bar[uk * A + a] * dt;
    for (const auto& e : path.mu_at(k)) {
      const double f = 1.0 + sl.g4[uk] * sl.rho_bar[uk * A + e.atom];
      if (!(f > 0.0)) {
        throw SolverError(fmt::format("adjoint weight nonpositive at step {}: jump factor {}", k, f));
      }
      factor *= f;
    }
    P[uk + 1] = P[uk] * std::exp(expo) * factor;
    if (!(P[uk + 1] > 0.0) || !std::isfinite(P[uk + 1])) {
      throw SolverError(fmt::format("adjoint weight left (0, inf) at step {}", k + 1));
    }
  }
  return P;
}

SemigroupValue backward_semigroup_apply(const GameSpec& spec, int i, double t, ConstVec x,
                                        double delta, const BsdeSpec::Terminal& field,
                                        const ControlPolicy& policy, int particles,
                                        const SemigroupOptions& options) {
  const TimeGrid grid(t, t + delta, options.steps);
  CloudOptions co;
  co.stratify_regimes = spec.m > 1;
  co.x_spread = options.x_spread;
  const auto cloud = simulate_forward(spec, grid, i, x, policy, particles, options.seed, co);
  const auto bsde = with_terminal(make_game_bsde(spec, policy), field);
  BsdeOptions bo;
  bo.degree = options.degree;
  bo.regime_expectation = options.regime_expectation;
  bo.keep_particles = false;
  const auto sol = solve_regression(bsde, cloud, bo);
  return {sol.value(0, i, x), sol.stderr_at(0, i)};
}

double solution_energy(const BsdeSolution& sol) {
  if (!sol.has_particles()) throw std::invalid_argument("particle-level values were not kept");
  const int K = sol.grid.K;
  const auto P = static_cast<std::size_t>(sol.particles);
  const auto marks = static_cast<std::size_t>(sol.m - 1);
  const auto d = static_cast<std::size_t>(sol.d);
  const auto A = static_cast<std::size_t>(sol.atoms);
  const double dt = sol.grid.dt();
  double sup_term = 0.0, integral = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    double worst = 0.0;
    for (int k = 0; k <= K; ++k) {
      const double y = sol.Y[static_cast<std::size_t>(k) * P + p];
      worst = std::max(worst, y * y);
    }
    sup_term += worst;
  }
  for (int k = 0; k <= K; ++k) {
    double acc = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t at = static_cast<std::size_t>(k) * P + p;
      for (std::size_t l = 0; l < marks; ++l) acc += sol.lambda * sol.H[at * marks + l] * sol.H[at * marks + l];
      for (std::size_t q = 0; q < d; ++q) acc += sol.Z[at * d + q] * sol.Z[at * d + q];
      for (std::size_t a = 0; a < A; ++a) acc += sol.atom_weights[a] * sol.K[at * A + a] * sol.K[at * A + a];
    }
    integral += trapezoid_weight(k, 0, K) * dt * acc / static_cast<double>(P);
  }
  return sup_term / static_cast<double>(P) + integral;
}

void write_coefficients_csv(std::ostream& os, const BsdeSolution& sol, const io::ArtifactMeta& meta) {
  io::CsvWriter w(os, meta, {"step", "t", "regime", "count", "stderr", "term", "exponents", "coefficient"});
  for (int k = 0; k <= sol.grid.K; ++k) {
    for (int i = 1; i <= sol.m; ++i) {
      const auto& f = sol.fit(k, i);
      for (std::size_t t = 0; t < f.coef.size(); ++t) {
        std::string ex;
        for (std::size_t c = 0; c < f.basis.active.size(); ++c) {
          if (c) ex += ';';
          ex += fmt::format("x{}^{}", f.basis.active[c], f.basis.terms[t][c]);
        }
        w.row({static_cast<long long>(k), sol.grid.t(k), static_cast<long long>(i),
               static_cast<long long>(sol.fit_count[static_cast<std::size_t>(k) * sol.m + static_cast<std::size_t>(i - 1)]),
               sol.stderr_at(k, i), static_cast<long long>(t), ex, f.coef[t]});
      }
    }
  }
}

void write_value_surface_csv(std::ostream& os, const BsdeSolution& sol,
                             const std::vector<double>& xs, const io::ArtifactMeta& meta) {
  if (sol.n != 1) throw std::invalid_argument("value surfaces are written for n = 1 only");
  io::CsvWriter w(os, meta, {"t", "regime", "x", "y"});
  for (int k = 0; k <= sol.grid.K; ++k) {
    for (int i = 1; i <= sol.m; ++i) {
      for (double x : xs) {
        const double xv[1] = {x};
        w.row({sol.grid.t(k), static_cast<long long>(i), x, sol.value(k, i, xv)});
      }
    }
  }
}

std::string picard_log_json(const PicardResult& result, const io::ArtifactMeta& meta) {
  nlohmann::ordered_json j;
  j["meta"] = {{"tool", meta.tool}, {"version", meta.version}, {"config_hash", meta.config_hash}};
  j["b"] = result.b;
  j["iterations"] = result.iterations;
  j["converged"] = result.converged;
  j["aborted"] = result.aborted;
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t n = 0; n < result.gaps.size(); ++n) {
    nlohmann::ordered_json row;
    row["iteration"] = n + 1;
    row["squared_norm"] = result.gaps[n].value;
    row["norm"] = std::sqrt(result.gaps[n].value);
    if (n >= 1) {
      row["ratio"] = result.ratios[n - 1];
    } else {
      row["ratio"] = nullptr;
    }
    rows.push_back(row);
  }
  j["gaps"] = rows;
  return j.dump(2) + "\n";
}

}  // namespace hjbi
