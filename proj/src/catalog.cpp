#include "hjbi/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace hjbi {
namespace {

const std::vector<std::string> kPerRegimeKeys = {"b0", "s0", "p0", "ptanh", "prat"};
const std::vector<std::string> kScalarKeys = {"bx", "bu", "bv", "buv", "sx", "ge", "c0",
                                              "cy", "kappa", "cz", "ck", "r0", "p1", "p2"};

bool is_per_regime(const std::string& key) {
  return std::find(kPerRegimeKeys.begin(), kPerRegimeKeys.end(), key) != kPerRegimeKeys.end();
}

bool is_known_key(const std::string& key) {
  return is_per_regime(key) ||
         std::find(kScalarKeys.begin(), kScalarKeys.end(), key) != kScalarKeys.end();
}

struct Preset {
  std::string name;
  int m = 1;
  double T = 1.0;
  double lambda = 1.0;
  ParamMap params;
  std::vector<double> u_points{0.0};
  std::vector<double> v_points{0.0};
  std::vector<LevyAtom> atoms;
};

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = [] {
    std::vector<Preset> p;
    p.push_back({.name = "zero_dynamics", .params = {{"p1", {1.0}}}});
    p.push_back({.name = "constant_driver", .params = {{"c0", {1.0}}}});
    p.push_back({.name = "coupled_linear",
                 .m = 2,
                 .lambda = 0.4,
                 .params = {{"kappa", {1.0}}, {"p0", {0.0, 1.0}}}});
    p.push_back({.name = "separable_game",
                 .params = {{"bu", {1.0}}, {"bv", {1.0}}, {"p1", {1.0}}},
                 .u_points = {-1.0, 0.0, 1.0},
                 .v_points = {-2.0, 2.0}});
    p.push_back({.name = "bilinear_game",
                 .params = {{"buv", {1.0}}, {"p1", {1.0}}},
                 .u_points = {-1.0, 1.0},
                 .v_points = {-1.0, 1.0}});
    p.push_back({.name = "compensated_jump",
                 .params = {{"ge", {1.0}}, {"p1", {1.0}}},
                 .atoms = {{{1.0}, 1.0}}});
    p.push_back({.name = "heat_quadratic", .params = {{"s0", {1.0}}, {"p2", {1.0}}}});
    p.push_back({.name = "linear_driver",
                 .params = {{"cy", {1.0}}, {"s0", {0.3}}, {"ge", {0.2}}, {"p1", {1.0}}},
                 .atoms = {{{1.0}, 0.5}, {{-1.0}, 0.5}}});
    p.push_back({.name = "mixed_regime",
                 .m = 2,
                 .lambda = 0.4,
                 .params = {{"s0", {0.5, 0.8}},
                            {"ge", {0.3}},
                            {"kappa", {1.0}},
                            {"ck", {0.1}},
                            {"r0", {1.0}},
                            {"ptanh", {1.0, 0.0}},
                            {"prat", {0.0, 1.0}}},
                 .atoms = {{{1.0}, 0.5}, {{-1.0}, 0.5}}});
    return p;
  }();
  return table;
}

const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets()) {
    if (p.name == name) return p;
  }
  throw ProblemError(fmt::format("unknown catalog problem '{}'", name));
}

ParamMap resolve(const ParamMap& base, const ParamMap& overrides, int m) {
  ParamMap out;
  for (const auto& k : kPerRegimeKeys) out[k] = {0.0};
  for (const auto& k : kScalarKeys) out[k] = {0.0};
  auto apply = [&](const ParamMap& src) {
    for (const auto& [k, v] : src) {
      if (!is_known_key(k)) throw ProblemError(fmt::format("unknown parameter '{}'", k));
      if (v.empty()) throw ProblemError(fmt::format("parameter '{}' has no value", k));
      out[k] = v;
    }
  };
  apply(base);
  apply(overrides);
  for (auto& [k, v] : out) {
    if (is_per_regime(k)) {
      if (v.size() == 1) {
        v.assign(static_cast<std::size_t>(m), v.front());
      } else if (v.size() != static_cast<std::size_t>(m)) {
        throw ProblemError(
            fmt::format("parameter '{}' needs 1 or {} values, got {}", k, m, v.size()));
      }
    } else if (v.size() != 1) {
      throw ProblemError(fmt::format("parameter '{}' is scalar, got {} values", k, v.size()));
    }
  }
  return out;
}

class AffineCoefficients final : public Coefficients {
 public:
  AffineCoefficients(const ParamMap& p, int n)
      : n_(n),
        b0_(p.at("b0")), s0_(p.at("s0")), p0_(p.at("p0")), ptanh_(p.at("ptanh")),
        prat_(p.at("prat")),
        bx_(p.at("bx")[0]), bu_(p.at("bu")[0]), bv_(p.at("bv")[0]), buv_(p.at("buv")[0]),
        sx_(p.at("sx")[0]), ge_(p.at("ge")[0]), c0_(p.at("c0")[0]), cy_(p.at("cy")[0]),
        kappa_(p.at("kappa")[0]), cz_(p.at("cz")[0]), ck_(p.at("ck")[0]), r0_(p.at("r0")[0]),
        p1_(p.at("p1")[0]), p2_(p.at("p2")[0]) {}

  void drift(int i, double, ConstVec x, double u, double v, MutVec out) const override {
    const double common = b0_[idx(i)] + bu_ * u + bv_ * v + buv_ * u * v;
    for (int c = 0; c < n_; ++c) out[c] = common + bx_ * x[c];
  }

  void diffusion(int i, double, ConstVec x, double, double, MutVec out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    for (int c = 0; c < n_; ++c) out[c * n_ + c] = s0_[idx(i)] + sx_ * x[c];
  }

  void jump(int, double, ConstVec, double, double, ConstVec e, MutVec out) const override {
    for (int c = 0; c < n_; ++c) out[c] = ge_ * e[0];
  }

  double driver(int i, double, ConstVec, ConstVec a, ConstVec z, double k, double,
                double) const override {
    const double ai = a[idx(i)];
    double coupling = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (j != idx(i)) coupling += a[j] - ai;
    }
    double zs = 0.0;
    for (double zc : z) zs += zc;
    return c0_ + cy_ * ai + kappa_ * coupling + cz_ * zs + ck_ * k;
  }

  double terminal(int i, ConstVec x) const override {
    double s = 0.0, r2 = 0.0;
    for (double xc : x) {
      s += xc;
      r2 += xc * xc;
    }
    const auto k = idx(i);
    return p0_[k] + p1_ * s + p2_ * r2 + ptanh_[k] * std::tanh(s) + prat_[k] / (1.0 + r2);
  }

  double rho(ConstVec, ConstVec e) const override { return r0_ * std::min(1.0, mark_norm(e)); }

 private:
  static std::size_t idx(int i) { return static_cast<std::size_t>(i - 1); }

  int n_;
  std::vector<double> b0_, s0_, p0_, ptanh_, prat_;
  double bx_, bu_, bv_, buv_, sx_, ge_, c0_, cy_, kappa_, cz_, ck_, r0_, p1_, p2_;
};

AssumptionConstants declare(const ParamMap& p, int m, int n, double lambda,
                            const std::vector<LevyAtom>& atoms) {
  const auto s = [&](const char* k) { return p.at(k)[0]; };
  AssumptionConstants c;
  c.L = std::max(std::abs(s("bx")), std::abs(s("sx")));
  double kap = 0.0, rho_l2 = 0.0;
  for (const auto& a : atoms) {
    const double r = mark_norm(a.mark);
    if (r == 0.0) continue;  // reported by validation
    const double cap = std::min(1.0, r);
    kap = std::max(kap, std::abs(s("ge")) * std::abs(a.mark[0]) * std::sqrt(double(n)) / cap);
    rho_l2 += a.weight * std::pow(s("r0") * cap, 2);
  }
  c.kappa_bound = std::max(kap, std::abs(s("r0")));
  c.alpha = m > 1 ? std::max(0.0, s("kappa")) : 0.0;
  c.beta = std::max(0.0, s("ck"));
  double lg = std::abs(s("cy"));
  if (m > 1) lg = std::max(lg, std::abs(s("kappa") - lambda) * std::sqrt(double(m - 1)));
  lg = std::max(lg, std::abs(s("cz")) * std::sqrt(double(n)));
  lg = std::max(lg, std::abs(s("ck")) * std::sqrt(rho_l2));
  c.L_g = lg;
  return c;
}

}  // namespace

std::vector<std::string> catalog_names() {
  std::vector<std::string> names;
  for (const auto& p : presets()) names.push_back(p.name);
  return names;
}

bool catalog_contains(const std::string& name) {
  const auto names = catalog_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

ParamMap preset_defaults(const std::string& name, int m) {
  return resolve(find_preset(name).params, {}, m);
}

GameSpec make_problem(const std::string& name, const ProblemOverrides& ov) {
  const Preset& pre = find_preset(name);
  GameSpec spec;
  spec.problem = name;
  spec.m = ov.m.value_or(pre.m);
  spec.n = ov.n.value_or(1);
  spec.d = spec.n;
  spec.T = ov.T.value_or(pre.T);
  spec.lambda = ov.lambda.value_or(pre.lambda);
  if (spec.m < 1) throw ProblemError(fmt::format("m={} must be >= 1", spec.m));
  if (spec.n < 1) throw ProblemError(fmt::format("n={} must be >= 1", spec.n));
  spec.params = resolve(pre.params, ov.params, spec.m);
  spec.controls.u_points = ov.u_points.value_or(pre.u_points);
  spec.controls.v_points = ov.v_points.value_or(pre.v_points);
  spec.levy.atoms = ov.atoms.value_or(pre.atoms);
  spec.assumptions =
      ov.assumptions.value_or(declare(spec.params, spec.m, spec.n, spec.lambda, spec.levy.atoms));
  spec.coefficients = std::make_shared<AffineCoefficients>(spec.params, spec.n);
  return spec;
}

}  // namespace hjbi
