#include "hjbi/drivers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "hjbi/rng.hpp"

namespace hjbi {

TimeGrid::TimeGrid(double t0_, double T_, int K_) : t0(t0_), T(T_), K(K_) {
  if (K < 1) throw std::invalid_argument(fmt::format("time grid needs K >= 1, got {}", K));
  if (!(T > t0)) throw std::invalid_argument(fmt::format("time grid needs T > t0 ({} <= {})", T, t0));
}

long long DriverPath::mark_shift(int k) const {
  long long s = 0;
  const auto c = counts_at(k);
  for (std::size_t l = 0; l < c.size(); ++l) s += static_cast<long long>(l + 1) * c[l];
  return s;
}

DriverPath sample_drivers(const TimeGrid& grid, const GameSpec& spec, std::uint64_t stream_id,
                          std::uint64_t seed) {
  DriverPath p;
  p.K = grid.K;
  p.d = spec.d;
  p.marks = spec.m - 1;
  const double dt = grid.dt();
  const double sdt = std::sqrt(dt);
  const auto K = static_cast<std::size_t>(grid.K);
  p.dB.resize(K * static_cast<std::size_t>(p.d));
  p.regime_counts.resize(K * static_cast<std::size_t>(p.marks));
  p.mu_offsets.assign(K + 1, 0);
  const double mark_mean = spec.lambda * dt;

  for (std::size_t k = 0; k < K; ++k) {
    StepDraws draws(seed, stream_id, static_cast<std::uint32_t>(k));
    for (int c = 0; c < p.d; ++c) p.dB[k * p.d + c] = sdt * draws.normal();
    for (int l = 0; l < p.marks; ++l) p.regime_counts[k * p.marks + l] = draws.poisson(mark_mean);
    for (std::size_t a = 0; a < spec.levy.atoms.size(); ++a) {
      const auto count = draws.poisson(spec.levy.atoms[a].weight * dt);
      for (std::uint32_t e = 0; e < count; ++e) {
        p.mu_events.push_back({static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(a)});
      }
    }
    p.mu_offsets[k + 1] = static_cast<std::uint32_t>(p.mu_events.size());
  }
  return p;
}

RegimePath regime_path(int i0, const DriverPath& events, int m) {
  if (i0 < 1 || i0 > m) throw std::out_of_range(fmt::format("regime {} outside 1..{}", i0, m));
  RegimePath r;
  r.i0 = i0;
  r.regimes.resize(static_cast<std::size_t>(events.K) + 1);
  long long acc = i0;
  r.regimes[0] = i0;
  for (int k = 0; k < events.K; ++k) {
    acc = wrap_regime(acc + events.mark_shift(k), m);
    r.regimes[static_cast<std::size_t>(k) + 1] = static_cast<int>(acc);
  }
  return r;
}

void compensator_drift(const GameSpec& spec, int i, double t, ConstVec x, double u, double v,
                       MutVec out) {
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> g(out.size());
  for (const auto& atom : spec.levy.atoms) {
    spec.coeffs().jump(i, t, x, u, v, atom.mark, g);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += atom.weight * g[c];
  }
}

namespace {

constexpr char kMagic[8] = {'H', 'J', 'B', 'I', 'D', 'R', 'V', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw std::runtime_error("truncated driver dump");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_driver_path(std::ostream& os, const DriverPath& path) {
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(path.K));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(path.d));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(path.marks));
  put<std::uint64_t>(os, path.mu_events.size());
  for (double v : path.dB) put(os, v);
  for (auto c : path.regime_counts) put(os, c);
  for (const auto& e : path.mu_events) {
    put(os, e.step);
    put(os, e.atom);
  }
}

DriverPath read_driver_path(std::istream& is) {
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a driver dump");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw std::runtime_error(fmt::format("unsupported dump version {}", version));
  DriverPath p;
  p.K = static_cast<int>(get<std::uint32_t>(is));
  p.d = static_cast<int>(get<std::uint32_t>(is));
  p.marks = static_cast<int>(get<std::uint32_t>(is));
  const auto events = get<std::uint64_t>(is);
  const auto K = static_cast<std::size_t>(p.K);
  p.dB.resize(K * static_cast<std::size_t>(p.d));
  for (auto& v : p.dB) v = get<double>(is);
  p.regime_counts.resize(K * static_cast<std::size_t>(p.marks));
  for (auto& c : p.regime_counts) c = get<std::uint32_t>(is);
  p.mu_events.resize(events);
  for (auto& e : p.mu_events) {
    e.step = get<std::uint32_t>(is);
    e.atom = get<std::uint32_t>(is);
  }
  p.mu_offsets.assign(K + 1, 0);
  for (const auto& e : p.mu_events) {
    if (e.step >= K) throw std::runtime_error("driver dump event outside grid");
    ++p.mu_offsets[e.step + 1];
  }
  for (std::size_t k = 0; k < K; ++k) p.mu_offsets[k + 1] += p.mu_offsets[k];
  return p;
}

}  // namespace hjbi
