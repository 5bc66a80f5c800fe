#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <variant>
#include <vector>

#include "hjbi/drivers.hpp"
#include "hjbi/io.hpp"
#include "hjbi/problem.hpp"

namespace hjbi {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConstantControl {
  double u = 0.0;
  double v = 0.0;
};

/// Feedback maps on a PDE grid: slice k holds the selection used on
/// [t_k, t_{k+1}). Lookup is nearest node in x, slice containing t.
struct FeedbackTable {
  double t0 = 0.0;
  double T = 1.0;
  int K = 1;         // time slices 0..K
  double x_min = 0.0;
  double dx = 1.0;
  int nodes = 0;     // spatial nodes
  int m = 1;
  std::vector<double> u_points;
  std::vector<double> v_points;
  std::vector<std::uint16_t> u_index;  // (K+1) x m x nodes
  std::vector<std::uint16_t> v_index;

  std::pair<int, int> indices(double t, double x, int i) const;
  std::pair<double, double> lookup(double t, double x, int i) const;
};

using ControlPolicy = std::variant<ConstantControl, FeedbackTable>;

/// (u, v) used at (t, x, i).
std::pair<double, double> control_at(const ControlPolicy& policy, double t, ConstVec x, int i);

/// x' = x + b dt + sigma dB + sum_events gamma(x-, e) - dt sum_k w_k gamma(e_k).
/// Throws SolverError on a non-finite result.
void euler_step(const GameSpec& spec, int i, double t, ConstVec x, double u, double v,
                ConstVec dB, std::span<const MuEvent> events, double dt, MutVec out);

struct ForwardPath {
  std::vector<double> X;  // (K+1) x n
  RegimePath regimes;
};

struct CloudOptions {
  bool stratify_regimes = false;  // particle p starts in regime i0 + p (wrapped)
  double x_spread = 0.0;          // initial states spread evenly over x0 +- spread
  bool keep_drivers = false;
  std::uint64_t stream_offset = 0;  // particle p uses stream stream_offset + p
};

/// Particle cloud on a common time grid.
struct ForwardCloud {
  TimeGrid grid;
  int n = 1;
  int particles = 0;
  std::vector<double> X;     // (K+1) x particles x n
  std::vector<int> regimes;  // (K+1) x particles
  std::vector<DriverPath> drivers;  // per particle, when kept

  ConstVec state(int k, int p) const {
    return {X.data() + (static_cast<std::size_t>(k) * particles + p) * n, static_cast<std::size_t>(n)};
  }
  int regime(int k, int p) const { return regimes[static_cast<std::size_t>(k) * particles + p]; }
  ForwardPath path(int p) const;
};

ForwardCloud simulate_forward(const GameSpec& spec, const TimeGrid& grid, int i0, ConstVec x0,
                              const ControlPolicy& policy, int particles, std::uint64_t seed,
                              const CloudOptions& options = {});

struct MomentReport {
  int p = 2;
  double sup_moment = 0.0;          // E[sup_s |X_s|^p]
  std::vector<double> deltas;
  std::vector<double> local_moment;  // E[sup_{s <= t0 + delta} |X_s - x0|^p] / delta
  std::vector<double> local_stderr;
  double bound_constant = 0.0;       // max local moment / (1 + |x0|^p)
  bool bounded = true;
};

/// p in {2, 4}; deltas must be multiples of the grid step inside the horizon.
MomentReport moment_check(const ForwardCloud& cloud, int p, ConstVec x0,
                          const std::vector<double>& deltas);

/// Debug dump: one row per (particle, step) with t, regime and state.
void write_path_csv(std::ostream& os, const ForwardCloud& cloud, const io::ArtifactMeta& meta,
                    int max_particles);

}  // namespace hjbi
