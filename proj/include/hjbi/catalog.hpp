#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hjbi/problem.hpp"

namespace hjbi {

// Every catalog problem is a preset of one affine family. With c = component
// index and s = sum of components,
//
//   b_i     = b0_i + bx x_c + bu u + bv v + buv u v
//   sigma_i = (s0_i + sx x_c) I              (n = d)
//   gamma_i = ge e_1 (per component)
//   f_i     = c0 + cy a_i + kappa sum_{j != i} (a_j - a_i) + cz sum(z) + ck k
//   Phi_i   = p0_i + p1 s + p2 |x|^2 + ptanh_i tanh(s) + prat_i / (1 + |x|^2)
//   rho     = r0 (1 ∧ |e|)
//
// Per-regime parameters accept either one value or m values.

/// Parameters that may be overridden on top of a preset.
struct ProblemOverrides {
  std::optional<int> m;
  std::optional<int> n;
  std::optional<double> T;
  std::optional<double> lambda;
  ParamMap params;
  std::optional<std::vector<double>> u_points;
  std::optional<std::vector<double>> v_points;
  std::optional<std::vector<LevyAtom>> atoms;
  std::optional<AssumptionConstants> assumptions;  // replaces the declared constants
};

std::vector<std::string> catalog_names();
bool catalog_contains(const std::string& name);

/// Builds a validated-shape GameSpec from a preset plus overrides.
/// Throws ProblemError for unknown names, unknown parameters or wrong list
/// lengths.
GameSpec make_problem(const std::string& name, const ProblemOverrides& overrides = {});

/// The preset's default parameters (after resolution for m).
ParamMap preset_defaults(const std::string& name, int m);

}  // namespace hjbi
