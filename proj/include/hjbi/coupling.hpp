#pragma once

#include <vector>

#include "hjbi/problem.hpp"

namespace hjbi {

/// (y, h) coordinates of a value vector a seen from regime i:
/// y = a_i and h(j) = a_{(i+j) mod m} - a_i for j = 1..m-1.
struct CouplingCoords {
  int i = 1;
  double y = 0.0;
  std::vector<double> h;  // length m - 1
};

CouplingCoords a_to_yh(int i, ConstVec a);

/// Inverse of a_to_yh; the result has length h.size() + 1.
std::vector<double> yh_to_a(const CouplingCoords& coords);
void yh_to_a(int i, double y, ConstVec h, MutVec a);

/// f~_i(t, x, y, h, z, k, u, v) := f_i(t, x, a(y, h), z, k, u, v).
double tilde_f_eval(const Coefficients& cf, int i, double t, ConstVec x, double y, ConstVec h,
                    ConstVec z, double k, double u, double v);

}  // namespace hjbi
