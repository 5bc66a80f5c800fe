#include "hjbi/rng.hpp"

#include <cmath>
#include <numbers>

namespace hjbi {
namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

// Largest Poisson mean handled by one inversion pass; larger means are split.
constexpr double kInversionMean = 30.0;

}  // namespace

Philox4x32::Counter Philox4x32::apply(Counter ctr, Key key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, ctr[0], hi0, lo0);
    mulhilo(kM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

StepDraws::StepDraws(std::uint64_t seed, std::uint64_t stream, std::uint32_t step)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      ctr_{step, 0u, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)} {}

void StepDraws::refill() {
  block_ = Philox4x32::apply(ctr_, key_);
  ++ctr_[1];
  used_ = 0;
}

double StepDraws::uniform() {
  if (used_ > 2) refill();
  const std::uint64_t a = block_[static_cast<std::size_t>(used_)];
  const std::uint64_t b = block_[static_cast<std::size_t>(used_ + 1)];
  used_ += 2;
  const std::uint64_t bits = (a << 21) ^ (b >> 11);
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double StepDraws::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

std::uint32_t StepDraws::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  std::uint32_t total = 0;
  while (mean > kInversionMean) {
    total += poisson(kInversionMean);
    mean -= kInversionMean;
  }
  const double u = uniform();
  double p = std::exp(-mean);
  double cdf = p;
  std::uint32_t k = 0;
  while (u > cdf && p > 0.0) {
    ++k;
    p *= mean / k;
    cdf += p;
  }
  return total + k;
}

}  // namespace hjbi
