#include "hjbi/forward.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

namespace hjbi {

std::pair<int, int> FeedbackTable::indices(double t, double x, int i) const {
  const double dt = (T - t0) / K;
  int k = static_cast<int>(std::floor((t - t0) / dt + 1e-9));
  k = std::clamp(k, 0, K);
  int j = static_cast<int>(std::lround((x - x_min) / dx));
  j = std::clamp(j, 0, nodes - 1);
  const auto at = (static_cast<std::size_t>(k) * m + static_cast<std::size_t>(i - 1)) * nodes + j;
  return {u_index[at], v_index[at]};
}

std::pair<double, double> FeedbackTable::lookup(double t, double x, int i) const {
  const auto [a, b] = indices(t, x, i);
  return {u_points[static_cast<std::size_t>(a)], v_points[static_cast<std::size_t>(b)]};
}

std::pair<double, double> control_at(const ControlPolicy& policy, double t, ConstVec x, int i) {
  if (const auto* c = std::get_if<ConstantControl>(&policy)) return {c->u, c->v};
  return std::get<FeedbackTable>(policy).lookup(t, x[0], i);
}

void euler_step(const GameSpec& spec, int i, double t, ConstVec x, double u, double v,
                ConstVec dB, std::span<const MuEvent> events, double dt, MutVec out) {
  const auto n = static_cast<std::size_t>(spec.n);
  const auto d = static_cast<std::size_t>(spec.d);
  const auto& cf = spec.coeffs();
  std::vector<double> b(n), sigma(n * d), g(n), comp(n);
  cf.drift(i, t, x, u, v, b);
  cf.diffusion(i, t, x, u, v, sigma);
  compensator_drift(spec, i, t, x, u, v, comp);
  for (std::size_t c = 0; c < n; ++c) {
    double s = 0.0;
    for (std::size_t q = 0; q < d; ++q) s += sigma[c * d + q] * dB[q];
    out[c] = x[c] + (b[c] - comp[c]) * dt + s;
  }
  for (const auto& e : events) {
    cf.jump(i, t, x, u, v, spec.levy.atoms[e.atom].mark, g);
    for (std::size_t c = 0; c < n; ++c) out[c] += g[c];
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (!std::isfinite(out[c])) {
      throw SolverError(fmt::format("non-finite state at t={} regime {} (coefficient blow-up)", t, i));
    }
  }
}

ForwardPath ForwardCloud::path(int p) const {
  ForwardPath fp;
  fp.X.resize(static_cast<std::size_t>(grid.K + 1) * n);
  fp.regimes.regimes.resize(static_cast<std::size_t>(grid.K) + 1);
  for (int k = 0; k <= grid.K; ++k) {
    const auto s = state(k, p);
    std::copy(s.begin(), s.end(), fp.X.begin() + static_cast<std::ptrdiff_t>(k) * n);
    fp.regimes.regimes[static_cast<std::size_t>(k)] = regime(k, p);
  }
  fp.regimes.i0 = regime(0, p);
  return fp;
}

ForwardCloud simulate_forward(const GameSpec& spec, const TimeGrid& grid, int i0, ConstVec x0,
                              const ControlPolicy& policy, int particles, std::uint64_t seed,
                              const CloudOptions& options) {
  if (particles < 1) throw std::invalid_argument("need at least one particle");
  if (x0.size() != static_cast<std::size_t>(spec.n)) {
    throw std::invalid_argument(fmt::format("initial state has {} components, n = {}", x0.size(), spec.n));
  }
  if (i0 < 1 || i0 > spec.m) throw std::out_of_range(fmt::format("regime {} outside 1..{}", i0, spec.m));
  ForwardCloud cloud;
  cloud.grid = grid;
  cloud.n = spec.n;
  cloud.particles = particles;
  const auto P = static_cast<std::size_t>(particles);
  const auto n = static_cast<std::size_t>(spec.n);
  const auto K = grid.K;
  cloud.X.resize(static_cast<std::size_t>(K + 1) * P * n);
  cloud.regimes.resize(static_cast<std::size_t>(K + 1) * P);
  if (options.keep_drivers) cloud.drivers.resize(P);
  const double dt = grid.dt();
  const int per_regime = options.stratify_regimes ? (particles + spec.m - 1) / spec.m : particles;

  for (int p = 0; p < particles; ++p) {
    const int start = options.stratify_regimes ? wrap_regime(i0 + p, spec.m) : i0;
    const int slot = options.stratify_regimes ? p / spec.m : p;
    const double offset =
        per_regime > 1 ? options.x_spread * (2.0 * (slot + 0.5) / per_regime - 1.0) : 0.0;
    double* x = cloud.X.data() + static_cast<std::size_t>(p) * n;
    for (std::size_t c = 0; c < n; ++c) x[c] = x0[c] + offset;

    auto drv = sample_drivers(grid, spec, options.stream_offset + static_cast<std::uint64_t>(p), seed);
    int regime = start;
    cloud.regimes[static_cast<std::size_t>(p)] = regime;
    for (int k = 0; k < K; ++k) {
      const double t = grid.t(k);
      const auto cur = cloud.state(k, p);
      const auto [u, v] = control_at(policy, t, cur, regime);
      double* next = cloud.X.data() + (static_cast<std::size_t>(k + 1) * P + p) * n;
      euler_step(spec, regime, t, cur, u, v, drv.dB_at(k), drv.mu_at(k), dt, MutVec(next, n));
      regime = wrap_regime(regime + drv.mark_shift(k), spec.m);
      cloud.regimes[static_cast<std::size_t>(k + 1) * P + p] = regime;
    }
    if (options.keep_drivers) cloud.drivers[static_cast<std::size_t>(p)] = std::move(drv);
  }
  return cloud;
}

MomentReport moment_check(const ForwardCloud& cloud, int p, ConstVec x0,
                          const std::vector<double>& deltas) {
  if (p != 2 && p != 4) throw std::invalid_argument("moment order must be 2 or 4");
  MomentReport r;
  r.p = p;
  r.deltas = deltas;
  const auto& g = cloud.grid;
  const double dt = g.dt();
  auto norm_p = [&](ConstVec x, ConstVec centre) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double dx = x[c] - (centre.empty() ? 0.0 : centre[c]);
      s += dx * dx;
    }
    return p == 2 ? s : s * s;
  };
  const ConstVec none{};
  double total = 0.0;
  for (int q = 0; q < cloud.particles; ++q) {
    double worst = 0.0;
    for (int k = 0; k <= g.K; ++k) worst = std::max(worst, norm_p(cloud.state(k, q), none));
    total += worst;
  }
  r.sup_moment = total / cloud.particles;

  double x0p = 0.0;
  for (double c : x0) x0p += c * c;
  if (p == 4) x0p *= x0p;
  for (double delta : deltas) {
    const int steps = static_cast<int>(std::lround(delta / dt));
    if (steps < 1 || steps > g.K || std::abs(steps * dt - delta) > 1e-9 * std::max(1.0, delta)) {
      throw std::invalid_argument(fmt::format("delta {} is not a multiple of dt {} within the horizon", delta, dt));
    }
    double s = 0.0, s2 = 0.0;
    for (int q = 0; q < cloud.particles; ++q) {
      double worst = 0.0;
      for (int k = 0; k <= steps; ++k) worst = std::max(worst, norm_p(cloud.state(k, q), x0));
      s += worst;
      s2 += worst * worst;
    }
    const double mean = s / cloud.particles;
    const double var = std::max(0.0, s2 / cloud.particles - mean * mean);
    r.local_moment.push_back(mean / delta);
    r.local_stderr.push_back(std::sqrt(var / cloud.particles) / delta);
  }
  for (double v : r.local_moment) r.bound_constant = std::max(r.bound_constant, v / (1.0 + x0p));
  // Along the refinement sequence the scaled moment may not blow up.
  for (std::size_t a = 0; a + 1 < r.local_moment.size(); ++a) {
    const double coarse = r.local_moment[a], fine = r.local_moment[a + 1];
    const double noise = 4.0 * std::hypot(r.local_stderr[a], r.local_stderr[a + 1]);
    if (!std::isfinite(fine) || fine > 2.0 * coarse + noise) r.bounded = false;
  }
  if (!std::isfinite(r.sup_moment)) r.bounded = false;
  return r;
}

void write_path_csv(std::ostream& os, const ForwardCloud& cloud, const io::ArtifactMeta& meta,
                    int max_particles) {
  std::vector<std::string> header{"particle", "t", "regime"};
  for (int c = 0; c < cloud.n; ++c) header.push_back(fmt::format("x{}", c));
  io::CsvWriter w(os, meta, header);
  const int count = std::min(max_particles, cloud.particles);
  for (int q = 0; q < count; ++q) {
    for (int k = 0; k <= cloud.grid.K; ++k) {
      std::vector<io::CsvField> row{static_cast<long long>(q), cloud.grid.t(k),
                                    static_cast<long long>(cloud.regime(k, q))};
      for (double x : cloud.state(k, q)) row.emplace_back(x);
      w.row(row);
    }
  }
}

}  // namespace hjbi
