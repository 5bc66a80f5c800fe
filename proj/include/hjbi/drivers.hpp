#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "hjbi/problem.hpp"

namespace hjbi {

/// Uniform grid t_k = t0 + k dt, k = 0..K.
struct TimeGrid {
  double t0 = 0.0;
  double T = 1.0;
  int K = 1;

  TimeGrid() = default;
  TimeGrid(double t0_, double T_, int K_);

  double dt() const { return (T - t0) / K; }
  double t(int k) const { return k == K ? T : t0 + k * dt(); }
  bool operator==(const TimeGrid&) const = default;
};

struct MuEvent {
  std::uint32_t step = 0;
  std::uint32_t atom = 0;
  bool operator==(const MuEvent&) const = default;
};

/// One realization of (B, N, mu) on a time grid.
struct DriverPath {
  int K = 0;
  int d = 0;
  int marks = 0;                          // m - 1
  std::vector<double> dB;                 // K x d
  std::vector<std::uint32_t> regime_counts;  // K x marks, c_l per step
  std::vector<MuEvent> mu_events;         // sorted by step
  std::vector<std::uint32_t> mu_offsets;  // K + 1 offsets into mu_events

  std::span<const double> dB_at(int k) const {
    return {dB.data() + static_cast<std::size_t>(k) * d, static_cast<std::size_t>(d)};
  }
  std::span<const std::uint32_t> counts_at(int k) const {
    return {regime_counts.data() + static_cast<std::size_t>(k) * marks,
            static_cast<std::size_t>(marks)};
  }
  std::span<const MuEvent> mu_at(int k) const {
    return {mu_events.data() + mu_offsets[static_cast<std::size_t>(k)],
            mu_offsets[static_cast<std::size_t>(k) + 1] - mu_offsets[static_cast<std::size_t>(k)]};
  }
  /// sum_l l * c_l at step k.
  long long mark_shift(int k) const;

  bool operator==(const DriverPath&) const = default;
};

struct RegimePath {
  int i0 = 1;
  std::vector<int> regimes;  // K + 1 values; regimes[k] holds on [t_k, t_{k+1})
};

/// dB ~ N(0, dt I_d); c_l ~ Poisson(lambda dt) per mark; mu counts per atom
/// ~ Poisson(w_k dt). Fully determined by (seed, stream_id).
DriverPath sample_drivers(const TimeGrid& grid, const GameSpec& spec, std::uint64_t stream_id,
                          std::uint64_t seed);

/// N^{t,i}: i0 plus the accumulated marks, identified into 1..m.
RegimePath regime_path(int i0, const DriverPath& events, int m);

/// sum_k w_k gamma_i(t, x, u, v, e_k).
void compensator_drift(const GameSpec& spec, int i, double t, ConstVec x, double u, double v,
                       MutVec out);

/// Debug dump: "HJBIDRV1" magic, u32 version, u32 K, d, marks, u64 event
/// count, then little-endian arrays dB (f64), counts (u32), events (u32 pairs).
void write_driver_path(std::ostream& os, const DriverPath& path);
DriverPath read_driver_path(std::istream& is);

}  // namespace hjbi
