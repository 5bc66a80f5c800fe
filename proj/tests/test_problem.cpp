#include <doctest.h>

#include <nlohmann/json.hpp>

#include "hjbi/catalog.hpp"
#include "hjbi/problem.hpp"

using namespace hjbi;

TEST_SUITE("problem") {

TEST_CASE("lambda feasibility in pde-existence mode") {
  ProblemOverrides o;
  o.m = 3;
  o.lambda = 0.4;
  o.params["p0"] = {0.0};
  auto spec = make_problem("coupled_linear", o);
  CHECK(validate_spec(spec, ValidationMode::pde_existence).valid());

  o.lambda = 0.6;
  spec = make_problem("coupled_linear", o);
  const auto report = validate_spec(spec, ValidationMode::pde_existence);
  CHECK_FALSE(report.valid());
  CHECK(report.has("lambda_feasibility"));
  CHECK(validate_spec(spec, ValidationMode::mc_only).valid());
}

TEST_CASE("single regime is valid for any lambda") {
  ProblemOverrides o;
  o.lambda = 25.0;
  CHECK(validate_spec(make_problem("zero_dynamics", o), ValidationMode::mc_only).valid());
  CHECK(validate_spec(make_problem("zero_dynamics", o), ValidationMode::pde_existence).valid());
}

TEST_CASE("structural errors are hard in every mode") {
  auto spec = make_problem("separable_game");
  spec.controls.v_points.clear();
  for (auto mode : {ValidationMode::mc_only, ValidationMode::pde_existence}) {
    const auto r = validate_spec(spec, mode);
    CHECK_FALSE(r.valid());
    CHECK(r.has("controls_nonempty"));
  }
  spec = make_problem("compensated_jump");
  spec.levy.atoms.push_back({{0.0}, 1.0});
  CHECK(validate_spec(spec, ValidationMode::mc_only).has("atom_at_zero"));
  spec = make_problem("zero_dynamics");
  spec.m = 0;
  CHECK(validate_spec(spec, ValidationMode::mc_only).has("m_positive"));
}

TEST_CASE("levy second moment") {
  CHECK(levy_second_moment(LevyMeasure{{{{1.0}, 1.0}}}) == doctest::Approx(1.0));
  CHECK(levy_second_moment(LevyMeasure{}) == 0.0);
  LevyMeasure nu{{{{0.5}, 2.0}, {{2.0}, 0.25}}};
  CHECK(levy_second_moment(nu) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("catalog problems pass their own sampled assumption checks") {
  for (const auto& name : catalog_names()) {
    CAPTURE(name);
    const auto spec = make_problem(name);
    const auto r = validate_spec(spec, ValidationMode::mc_only);
    for (const auto& v : r.violations) {
      CAPTURE(v.code);
      CAPTURE(v.message);
      CHECK(v.severity == Severity::warning);
    }
    CHECK(r.valid());
  }
}

TEST_CASE("understated Lipschitz constant is caught") {
  ProblemOverrides o;
  o.params["bx"] = {2.0};
  auto spec = make_problem("zero_dynamics", o);
  CHECK(validate_spec(spec, ValidationMode::mc_only).valid());
  spec.assumptions.L = 1.0;
  CHECK(validate_spec(spec, ValidationMode::mc_only).has("lipschitz_dominance"));
}

TEST_CASE("rho above its bound is caught") {
  auto spec = make_problem("mixed_regime");
  spec.assumptions.kappa_bound = 0.1;
  CHECK(validate_spec(spec, ValidationMode::mc_only).has("rho_bound"));
}

TEST_CASE("validation is deterministic and reports in stable order") {
  auto spec = make_problem("coupled_linear");
  spec.lambda = 5.0;
  spec.controls.u_points.clear();
  const auto a = validate_spec(spec, ValidationMode::pde_existence).to_json();
  const auto b = validate_spec(spec, ValidationMode::pde_existence).to_json();
  CHECK(a == b);
  const auto j = nlohmann::ordered_json::parse(a);
  CHECK(j.begin().key() == "valid");
  CHECK(j["valid"] == false);
  CHECK(j["mode"] == "pde-existence");
  CHECK(j["violations"].size() >= 2);
}

TEST_CASE("regime wrap identifies multiples of m with m") {
  CHECK(wrap_regime(3, 3) == 3);
  CHECK(wrap_regime(4, 3) == 1);
  CHECK(wrap_regime(6, 3) == 3);
  CHECK(wrap_regime(0, 3) == 3);
  CHECK(wrap_regime(-1, 3) == 2);
  CHECK(wrap_regime(17, 1) == 1);
}

TEST_CASE("catalog rejects malformed parameters") {
  ProblemOverrides o;
  o.params["nonsense"] = {1.0};
  CHECK_THROWS_AS(make_problem("zero_dynamics", o), ProblemError);
  ProblemOverrides bad_len;
  bad_len.params["p0"] = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(make_problem("coupled_linear", bad_len), ProblemError);
  CHECK_THROWS_AS(make_problem("no_such_problem"), ProblemError);
}

TEST_CASE("coupled linear preset has the documented coefficients") {
  const auto spec = make_problem("coupled_linear");
  const auto& cf = spec.coeffs();
  const double x[1] = {0.3};
  const double a[2] = {0.25, 1.0};
  const double z[1] = {0.0};
  CHECK(cf.driver(1, 0.0, x, a, z, 0.0, 0.0, 0.0) == doctest::Approx(0.75));
  CHECK(cf.driver(2, 0.0, x, a, z, 0.0, 0.0, 0.0) == doctest::Approx(-0.75));
  CHECK(cf.terminal(1, x) == 0.0);
  CHECK(cf.terminal(2, x) == 1.0);
  CHECK(spec.assumptions.alpha == 1.0);
}

}  // TEST_SUITE
