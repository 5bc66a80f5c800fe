#include "hjbi/problem.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace hjbi {

double LevyMeasure::total_mass() const {
  double s = 0.0;
  for (const auto& a : atoms) s += a.weight;
  return s;
}

double mark_norm(ConstVec e) {
  double s = 0.0;
  for (double v : e) s += v * v;
  return std::sqrt(s);
}

double levy_second_moment(const LevyMeasure& levy) {
  double s = 0.0;
  for (const auto& a : levy.atoms) {
    const double r = mark_norm(a.mark);
    s += a.weight * std::min(1.0, r * r);
  }
  return s;
}

std::size_t GameSpec::mark_dim() const {
  return levy.atoms.empty() ? 1 : levy.atoms.front().mark.size();
}

bool same_description(const GameSpec& a, const GameSpec& b) {
  return a.problem == b.problem && a.params == b.params && a.m == b.m && a.n == b.n &&
         a.d == b.d && a.T == b.T && a.lambda == b.lambda && a.controls == b.controls &&
         a.levy == b.levy && a.assumptions == b.assumptions;
}

int wrap_regime(long long j, int m) {
  long long r = (j - 1) % m;
  if (r < 0) r += m;
  return static_cast<int>(r) + 1;
}

const char* to_string(ValidationMode mode) {
  return mode == ValidationMode::pde_existence ? "pde-existence" : "mc-only";
}

bool ValidationReport::valid() const {
  return std::none_of(violations.begin(), violations.end(),
                      [](const Violation& v) { return v.severity == Severity::error; });
}

bool ValidationReport::has(const std::string& code) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.code == code; });
}

std::string ValidationReport::to_json() const {
  nlohmann::ordered_json j;
  j["valid"] = valid();
  j["mode"] = to_string(mode);
  auto arr = nlohmann::ordered_json::array();
  for (const auto& v : violations) {
    nlohmann::ordered_json e;
    e["code"] = v.code;
    e["severity"] = v.severity == Severity::error ? "error" : "warning";
    e["message"] = v.message;
    arr.push_back(std::move(e));
  }
  j["violations"] = std::move(arr);
  return j.dump(2);
}

namespace {

constexpr int kSamplePairs = 1000;
constexpr double kRelSlack = 1e-9;
constexpr double kAbsSlack = 1e-12;

double distance(ConstVec a, ConstVec b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(s);
}

// Sampled checks of the declared constants. Uses a fixed private seed so the
// report is a pure function of the spec.
void sampled_checks(const GameSpec& spec, DomainBox box, std::vector<Violation>& out) {
  const auto& cf = spec.coeffs();
  const auto& ac = spec.assumptions;
  const auto n = static_cast<std::size_t>(spec.n);
  const auto d = static_cast<std::size_t>(spec.d);
  std::mt19937_64 rng(0x5eed5eedULL);
  std::uniform_real_distribution<double> ux(box.lo, box.hi);
  std::uniform_real_distribution<double> ut(0.0, spec.T);
  std::uniform_int_distribution<std::size_t> pick_u(0, spec.controls.u_points.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_v(0, spec.controls.v_points.size() - 1);
  std::uniform_int_distribution<int> pick_i(1, spec.m);

  std::vector<double> x1(n), x2(n), b1(n), b2(n), s1(n * d), s2(n * d), g1(n), g2(n);
  std::vector<double> zero(n, 0.0), z(d, 0.0), a(static_cast<std::size_t>(spec.m));
  double worst_b = 0.0, worst_s = 0.0;
  bool rho_bad = false, kappa_bad = false, mono_bad = false;
  double worst_rho = 0.0, worst_kappa = 0.0, worst_mono = 0.0;

  for (int s = 0; s < kSamplePairs; ++s) {
    for (auto& v : x1) v = ux(rng);
    for (auto& v : x2) v = ux(rng);
    const double t = ut(rng);
    const double u = spec.controls.u_points[pick_u(rng)];
    const double v = spec.controls.v_points[pick_v(rng)];
    const int i = pick_i(rng);
    const double dist = distance(x1, x2);
    if (dist <= 0.0) continue;

    cf.drift(i, t, x1, u, v, b1);
    cf.drift(i, t, x2, u, v, b2);
    worst_b = std::max(worst_b, distance(b1, b2) / dist);
    cf.diffusion(i, t, x1, u, v, s1);
    cf.diffusion(i, t, x2, u, v, s2);
    worst_s = std::max(worst_s, distance(s1, s2) / dist);

    for (const auto& atom : spec.levy.atoms) {
      const double cap = ac.kappa_bound * std::min(1.0, mark_norm(atom.mark));
      const double r = cf.rho(x1, atom.mark);
      if (r < -kAbsSlack || r > cap * (1 + kRelSlack) + kAbsSlack) {
        rho_bad = true;
        worst_rho = r;
      }
      cf.jump(i, t, zero, u, v, atom.mark, g1);
      const double at0 = mark_norm(g1);
      cf.jump(i, t, x1, u, v, atom.mark, g1);
      cf.jump(i, t, x2, u, v, atom.mark, g2);
      const double slope = distance(g1, g2) / dist;
      if (at0 > cap * (1 + kRelSlack) + kAbsSlack || slope > cap * (1 + kRelSlack) + kAbsSlack) {
        kappa_bad = true;
        worst_kappa = std::max(at0, slope);
      }
    }

    if (spec.m > 1) {
      // Raising one foreign coordinate a_j, or k, must raise f_i by alpha (beta) times the step.
      for (auto& av : a) av = ux(rng);
      const double k = ux(rng);
      const double f0 = cf.driver(i, t, x1, a, z, k, u, v);
      const int j = pick_i(rng);
      if (j != i) {
        a[static_cast<std::size_t>(j - 1)] += 1.0;
        const double fa = cf.driver(i, t, x1, a, z, k, u, v);
        a[static_cast<std::size_t>(j - 1)] -= 1.0;
        if (fa - f0 < ac.alpha - kAbsSlack) {
          mono_bad = true;
          worst_mono = fa - f0;
        }
      }
      const double fk = cf.driver(i, t, x1, a, z, k + 1.0, u, v);
      if (fk - f0 < ac.beta - kAbsSlack) {
        mono_bad = true;
        worst_mono = fk - f0;
      }
    }
  }

  if (worst_b > ac.L * (1 + kRelSlack) + kAbsSlack || worst_s > ac.L * (1 + kRelSlack) + kAbsSlack) {
    out.push_back({"lipschitz_dominance", Severity::error,
                   fmt::format("empirical slopes b={:.6g}, sigma={:.6g} exceed declared L={:.6g}",
                               worst_b, worst_s, ac.L)});
  }
  if (rho_bad) {
    out.push_back({"rho_bound", Severity::error,
                   fmt::format("rho={:.6g} outside [0, C(1∧|e|)]", worst_rho)});
  }
  if (kappa_bad) {
    out.push_back({"kappa_bound", Severity::error,
                   fmt::format("jump size or slope {:.6g} exceeds C(1∧|e|)", worst_kappa)});
  }
  if (mono_bad) {
    out.push_back({"monotonicity", Severity::warning,
                   fmt::format("driver increment {:.6g} below declared alpha/beta", worst_mono)});
  }
}

}  // namespace

ValidationReport validate_spec(const GameSpec& spec, ValidationMode mode, DomainBox box) {
  ValidationReport r;
  r.mode = mode;
  auto& out = r.violations;
  auto hard = [&](std::string code, std::string msg) {
    out.push_back({std::move(code), Severity::error, std::move(msg)});
  };

  bool structural_ok = true;
  const std::pair<const char*, int> dims[] = {{"m", spec.m}, {"n", spec.n}, {"d", spec.d}};
  for (const auto& [name, value] : dims) {
    if (value < 1) {
      hard(fmt::format("{}_positive", name), fmt::format("{}={} must be >= 1", name, value));
      structural_ok = false;
    }
  }
  if (!(spec.T > 0.0)) hard("horizon_positive", fmt::format("T={} must be > 0", spec.T));
  if (!(spec.lambda > 0.0)) hard("lambda_positive", fmt::format("lambda={} must be > 0", spec.lambda));
  if (spec.controls.u_points.empty() || spec.controls.v_points.empty()) {
    hard("controls_nonempty", "both control grids must be nonempty");
    structural_ok = false;
  }
  const std::size_t l = spec.mark_dim();
  for (std::size_t k = 0; k < spec.levy.atoms.size(); ++k) {
    const auto& a = spec.levy.atoms[k];
    if (a.mark.size() != l || a.mark.empty()) {
      hard("atom_dimension", fmt::format("atom {} has mark dimension {}", k, a.mark.size()));
      structural_ok = false;
    } else if (mark_norm(a.mark) == 0.0) {
      hard("atom_at_zero", fmt::format("atom {} sits at e = 0", k));
      structural_ok = false;
    }
    if (!(a.weight > 0.0)) hard("atom_weight", fmt::format("atom {} weight {} must be > 0", k, a.weight));
  }
  const auto& ac = spec.assumptions;
  if (ac.L < 0 || ac.kappa_bound < 0 || ac.alpha < 0 || ac.beta < 0 || ac.L_g < 0) {
    hard("assumption_nonnegative", "assumption constants must be nonnegative");
  }

  if (mode == ValidationMode::pde_existence) {
    const double load = spec.lambda * (spec.m - 1) * spec.T;
    if (!(load < 1.0)) {
      hard("lambda_feasibility",
           fmt::format("lambda*(m-1)*T = {:.6g} must be < 1 (lambda < {:.6g})", load,
                       spec.m > 1 ? 1.0 / ((spec.m - 1) * spec.T) : 0.0));
    }
    if (spec.n != 1) hard("pde_dimension", fmt::format("the PDE solver needs n = 1, got {}", spec.n));
  }

  if (structural_ok && spec.coefficients && spec.T > 0.0) sampled_checks(spec, box, out);
  if (!spec.coefficients) hard("coefficients_missing", "no coefficient evaluators attached");
  return r;
}

}  // namespace hjbi
