#pragma once

#include <array>
#include <cstdint>

namespace hjbi {

/// Philox4x32-10 counter-based generator.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter apply(Counter ctr, Key key);
};

/// Random draws for one (seed, stream, step) cell. Every cell has its own
/// counter range, so the draws of a step never depend on how many numbers
/// other steps or streams consumed.
class StepDraws {
 public:
  StepDraws(std::uint64_t seed, std::uint64_t stream, std::uint32_t step);

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform();
  double normal();
  /// Poisson(mean) by sequential inversion; mean is expected to be small.
  std::uint32_t poisson(double mean);

 private:
  void refill();

  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  Philox4x32::Counter block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hjbi
