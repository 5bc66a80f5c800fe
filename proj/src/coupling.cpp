#include "hjbi/coupling.hpp"

#include <fmt/format.h>

namespace hjbi {
namespace {

void check_regime(int i, std::size_t m) {
  if (i < 1 || static_cast<std::size_t>(i) > m) {
    throw std::out_of_range(fmt::format("regime {} outside 1..{}", i, m));
  }
}

}  // namespace

CouplingCoords a_to_yh(int i, ConstVec a) {
  const auto m = a.size();
  check_regime(i, m);
  CouplingCoords c;
  c.i = i;
  c.y = a[static_cast<std::size_t>(i - 1)];
  c.h.resize(m - 1);
  for (std::size_t j = 1; j < m; ++j) {
    const int target = wrap_regime(i + static_cast<long long>(j), static_cast<int>(m));
    c.h[j - 1] = a[static_cast<std::size_t>(target - 1)] - c.y;
  }
  return c;
}

void yh_to_a(int i, double y, ConstVec h, MutVec a) {
  const auto m = h.size() + 1;
  check_regime(i, m);
  if (a.size() != m) throw std::out_of_range("output length must be h.size() + 1");
  const auto ii = static_cast<std::size_t>(i);
  for (std::size_t j = 1; j <= m; ++j) {
    if (j < ii) {
      a[j - 1] = y + h[m - ii + j - 1];
    } else if (j == ii) {
      a[j - 1] = y;
    } else {
      a[j - 1] = y + h[j - ii - 1];
    }
  }
}

std::vector<double> yh_to_a(const CouplingCoords& coords) {
  std::vector<double> a(coords.h.size() + 1);
  yh_to_a(coords.i, coords.y, coords.h, a);
  return a;
}

double tilde_f_eval(const Coefficients& cf, int i, double t, ConstVec x, double y, ConstVec h,
                    ConstVec z, double k, double u, double v) {
  constexpr std::size_t kStack = 16;
  const std::size_t m = h.size() + 1;
  if (m <= kStack) {
    double buf[kStack];
    MutVec a(buf, m);
    yh_to_a(i, y, h, a);
    return cf.driver(i, t, x, a, z, k, u, v);
  }
  std::vector<double> a(m);
  yh_to_a(i, y, h, a);
  return cf.driver(i, t, x, a, z, k, u, v);
}

}  // namespace hjbi
