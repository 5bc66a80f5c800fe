#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hjbi/bsde.hpp"
#include "hjbi/catalog.hpp"
#include "test_support.hpp"

using namespace hjbi;

namespace {

ForwardCloud cloud_for(const GameSpec& spec, int K, int particles, double x0v, std::uint64_t seed = 7,
                       bool stratify = false) {
  const double x0[1] = {x0v};
  CloudOptions co;
  co.stratify_regimes = stratify;
  return simulate_forward(spec, TimeGrid(0, spec.T, K), 1, x0, ConstantControl{}, particles, seed, co);
}

ProcessDelta flat_delta(int K, int particles, double y, double z) {
  ProcessDelta d;
  d.grid = TimeGrid(0, 1, K);
  d.particles = particles;
  d.marks = 0;
  d.d = 1;
  const auto cells = static_cast<std::size_t>(K + 1) * static_cast<std::size_t>(particles);
  d.Y.assign(cells, y);
  d.Z.assign(cells, z);
  return d;
}

}  // namespace

TEST_SUITE("bsde") {

TEST_CASE("one-step regime law is stochastic") {
  CHECK(regime_transition(1, 0.7, 0.1) == std::vector<double>{1.0});
  const auto P = regime_transition(3, 0.3, 0.05);
  for (int a = 0; a < 3; ++a) {
    double s = 0;
    for (int c = 0; c < 3; ++c) s += P[static_cast<std::size_t>(a * 3 + c)];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(P[0] == doctest::Approx(std::exp(-0.9 * 0.05) + (1 - std::exp(-0.9 * 0.05)) / 3));
}

TEST_CASE("constant driver integrates exactly") {
  const auto spec = make_problem("constant_driver");
  const auto cloud = cloud_for(spec, 40, 200, 0.3);
  const auto sol = solve_regression(make_game_bsde(spec, ConstantControl{}), cloud);
  const double x0[1] = {0.3};
  CHECK(sol.value(0, 1, x0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sol.terminal_residual < 1e-12);
  for (double z : sol.Z) CHECK(std::abs(z) < 1e-9);
}

TEST_CASE("zero driver with terminal x is a martingale") {
  const auto spec = make_problem("compensated_jump");
  const auto cloud = cloud_for(spec, 50, 20000, 0.4);
  const auto sol = solve_regression(make_game_bsde(spec, ConstantControl{}), cloud);
  const double x0[1] = {0.4};
  CHECK(std::abs(sol.value(0, 1, x0) - 0.4) < 4.0 * sol.stderr_at(0, 1) + 1e-12);
  CHECK(sol.terminal_residual < 1e-12);
}

TEST_CASE("coupled linear system matches the closed form") {
  const auto spec = make_problem("coupled_linear");
  const auto cloud = cloud_for(spec, 200, 2000, 0.0, 7, true);
  const auto sol = solve_regression(make_game_bsde(spec, ConstantControl{}), cloud);
  const double x0[1] = {0.0};
  CHECK(std::abs(sol.value(0, 1, x0) - (1 - std::exp(-2.0)) / 2) < 1e-2);
  CHECK(std::abs(sol.value(0, 2, x0) - (1 + std::exp(-2.0)) / 2) < 1e-2);

  // H is read off the neighbouring regime fit.
  const auto P = static_cast<std::size_t>(cloud.particles);
  for (int k : {0, 100, 199}) {
    for (std::size_t p = 0; p < P; p += 97) {
      const auto x = cloud.state(k, static_cast<int>(p));
      const int j = cloud.regime(k, static_cast<int>(p));
      const double expect = sol.value(k, wrap_regime(j + 1, 2), x) - sol.value(k, j, x);
      CHECK(sol.H[static_cast<std::size_t>(k) * P + p] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("empty regime groups are reported") {
  const auto spec = make_problem("coupled_linear");
  const auto cloud = cloud_for(spec, 20, 5, 0.0);
  CHECK_THROWS_AS(solve_regression(make_game_bsde(spec, ConstantControl{}), cloud), RegressionError);
}

TEST_CASE("weighted norm examples") {
  const auto one = weighted_norm_b(flat_delta(1000, 3, 1.0, 0.0), 1.0);
  CHECK(one.value == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-6));
  const auto z = weighted_norm_b(flat_delta(10, 3, 0.0, 1.0), 0.0);
  CHECK(z.value == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(weighted_norm_b(flat_delta(10, 3, 0.0, 0.0), 5.0).value == 0.0);
  CHECK(picard_weight(1.0, 1.0) == 17.0);
}

TEST_CASE("deltas refuse mismatched solutions") {
  const auto spec = make_problem("constant_driver");
  const auto a = solve_regression(make_game_bsde(spec, ConstantControl{}), cloud_for(spec, 10, 50, 0.0));
  const auto b = solve_regression(make_game_bsde(spec, ConstantControl{}), cloud_for(spec, 20, 50, 0.0));
  CHECK_THROWS_AS(solution_delta(a, b), std::invalid_argument);
}

TEST_CASE("Picard map contracts in the weighted norm") {
  const auto spec = make_problem("linear_driver");
  const auto cloud = cloud_for(spec, 50, 4000, 1.0);
  const auto bsde = make_game_bsde(spec, ConstantControl{});
  CHECK(bsde.lipschitz == doctest::Approx(1.0));
  const auto res = picard_iterate(bsde, cloud);
  CHECK(res.b == 17.0);
  REQUIRE(res.ratios.size() == 5);
  for (double r : res.ratios) CHECK(r <= 1.0 / std::sqrt(2.0));
  CHECK_FALSE(res.aborted);

  PicardOptions many;
  many.iterations = 30;
  const auto fixed = picard_iterate(bsde, cloud, many);
  BsdeOptions implicit;
  implicit.implicit_sweeps = 30;
  const auto direct = solve_regression(bsde, cloud, implicit);
  const double x0[1] = {1.0};
  CHECK(fixed.solution.value(0, 1, x0) == doctest::Approx(direct.value(0, 1, x0)).epsilon(1e-8));
}

TEST_CASE("Picard stops after one refinement when the driver ignores the solution") {
  const auto spec = make_problem("constant_driver");
  const auto res = picard_iterate(make_game_bsde(spec, ConstantControl{}), cloud_for(spec, 20, 100, 0.0));
  CHECK(res.converged);
  CHECK(res.iterations == 2);
  CHECK(res.gaps[1].value == 0.0);
  CHECK(res.ratios[0] == 0.0);
}

TEST_CASE("a-priori gap examples") {
  const auto spec = make_problem("constant_driver");
  const auto cloud = cloud_for(spec, 40, 100, 0.0);
  const auto bsde = make_game_bsde(spec, ConstantControl{});
  const auto a = solve_regression(bsde, cloud);
  const auto same = apriori_gap(a, a, cloud, bsde.terminal, bsde.terminal, nullptr, nullptr, 3.0, 0.0);
  CHECK(same.constant == 0.0);
  CHECK(same.beta_min == 1.0);
  CHECK(same.holds);

  const auto shifted = with_terminal_shift(bsde, 1.0);
  const auto b = solve_regression(shifted, cloud);
  const auto r = apriori_gap(b, a, cloud, shifted.terminal, bsde.terminal, nullptr, nullptr, 2.0, 0.0);
  CHECK(r.lhs.front() == doctest::Approx(1.0 + (std::exp(2.0) - 1.0) / 2.0).epsilon(1e-3));
  CHECK(r.rhs.front() == doctest::Approx(std::exp(2.0)));
  CHECK(r.holds);
  CHECK(r.constant <= 2.0);

  const auto ld = make_problem("linear_driver");
  const auto lc = cloud_for(ld, 50, 2000, 0.5);
  const auto lb = make_game_bsde(ld, ConstantControl{});
  const auto phi = [](double, ConstVec, int) { return 0.5; };
  const auto y1 = solve_regression(with_additive_driver(lb, phi), lc);
  const auto y2 = solve_regression(lb, lc);
  const double beta_min = 2 + 4 + 2 + 1;
  CHECK(apriori_gap(y1, y2, lc, lb.terminal, lb.terminal, phi, nullptr, beta_min, 1.0).beta_min == beta_min);
  const auto ok = apriori_gap(y1, y2, lc, lb.terminal, lb.terminal, phi, nullptr, beta_min + 1, 1.0);
  CHECK(ok.holds);
  CHECK(std::isfinite(ok.constant));
  CHECK_FALSE(apriori_gap(y1, y2, lc, lb.terminal, lb.terminal, phi, nullptr, 1.0, 1.0).holds);
}

TEST_CASE("comparison examples") {
  const auto spec = make_problem("linear_driver");
  const auto cloud = cloud_for(spec, 100, 2000, 0.5);
  const auto bsde = make_game_bsde(spec, ConstantControl{});
  const double x0[1] = {0.5};

  const auto eq = compare_solutions(bsde, bsde, cloud, 1, x0);
  CHECK_FALSE(eq.refused);
  CHECK(eq.dominated);
  CHECK(eq.strict_fraction == 0.0);
  CHECK(eq.min_margin == 0.0);

  const auto low = with_terminal_shift(bsde, -1.0);
  const auto gap = compare_solutions(bsde, low, cloud, 1, x0);
  CHECK(gap.dominated);
  CHECK(gap.strict_fraction == 1.0);
  CHECK(gap.strict);
  CHECK(gap.y0_diff == doctest::Approx(std::pow(1.01, 100)).epsilon(1e-9));
  CHECK(gap.y0_diff == doctest::Approx(std::exp(1.0)).epsilon(1e-2));

  const auto flipped = compare_solutions(low, bsde, cloud, 1, x0);
  CHECK(flipped.refused);

  auto bad = bsde;
  bad.driver = [](double, ConstVec, int, double, ConstVec, ConstVec, double k, double, double) { return -k; };
  const auto rk = compare_solutions(bad, bad, cloud, 1, x0);
  CHECK(rk.refused);
  CHECK(rk.refusal.find("in k") != std::string::npos);

  const auto two = make_problem("coupled_linear");
  auto hb = make_game_bsde(two, ConstantControl{});
  hb.driver = [](double, ConstVec, int, double, ConstVec h, ConstVec, double, double, double) { return -h[0]; };
  const auto tc = cloud_for(two, 20, 100, 0.0, 7, true);
  CHECK(compare_solutions(hb, hb, tc, 1, x0).refused);
}

TEST_CASE("adjoint weight examples") {
  LevyMeasure levy;
  levy.atoms = {{{1.0}, 0.5}};
  const GameSpec spec = make_problem("mixed_regime");
  const TimeGrid g(0, 1, 20);
  const auto path = sample_drivers(g, spec, 3, 11);

  const auto ones = adjoint_weight(path, g, AdjointSlopes::constant(20, 1, 1, 2, 0, 0, 0, 0, 0), 0.4,
                                   spec.levy);
  for (double p : ones) CHECK(p == 1.0);

  const auto growth = adjoint_weight(path, g, AdjointSlopes::constant(20, 1, 1, 2, 0.3, 0, 0, 0, 0),
                                     0.4, spec.levy);
  for (int k = 0; k <= 20; ++k) CHECK(growth[static_cast<std::size_t>(k)] == doctest::Approx(std::exp(0.3 * g.t(k))));

  const auto neg = AdjointSlopes::constant(20, 1, 1, 2, 0, -1.5, 0, 0, 0);
  bool saw_jump = false;
  for (int k = 0; k < 20; ++k) saw_jump = saw_jump || path.counts_at(k)[0] > 0;
  if (saw_jump) CHECK_THROWS_AS(adjoint_weight(path, g, neg, 0.4, spec.levy), SolverError);

  CHECK_THROWS_AS(adjoint_weight(path, g, AdjointSlopes::constant(10, 1, 1, 2, 0, 0, 0, 0, 0), 0.4,
                                 spec.levy),
                  std::invalid_argument);
}

TEST_CASE("adjoint weight without growth has unit mean") {
  const GameSpec spec = make_problem("mixed_regime");
  const TimeGrid g(0, 1, 20);
  const auto sl = AdjointSlopes::constant(20, 1, 1, 2, 0.0, 0.5, 0.3, 0.5, 1.0);
  const int N = 40000;
  double s = 0, s2 = 0;
  for (int p = 0; p < N; ++p) {
    const double w = adjoint_weight(sample_drivers(g, spec, static_cast<std::uint64_t>(p), 5), g, sl,
                                    spec.lambda, spec.levy)
                         .back();
    s += w;
    s2 += w * w;
  }
  const double mean = s / N, se = std::sqrt((s2 / N - mean * mean) / N);
  CHECK(std::abs(mean - 1.0) < 4.0 * se);
}

TEST_CASE("adjoint weight reproduces a linear BSDE by duality") {
  const auto spec = make_problem("coupled_linear");
  const int K = 200;
  const TimeGrid g(0, 1, K);
  BsdeSpec lin = make_game_bsde(spec, ConstantControl{});
  const double lambda = spec.lambda;
  lin.driver = [lambda](double, ConstVec, int, double, ConstVec h, ConstVec, double, double, double) {
    return lambda * h[0];
  };
  lin.terminal = [](int i, ConstVec) { return static_cast<double>(i); };
  const auto sol = solve_regression(lin, cloud_for(spec, K, 2000, 0.0, 7, true));
  const double x0[1] = {0.0};

  const auto sl = AdjointSlopes::constant(K, 1, 1, 0, 0.0, 1.0, 0.0, 0.0, 0.0);
  const int N = 40000;
  double s = 0, s2 = 0;
  for (int p = 0; p < N; ++p) {
    const auto path = sample_drivers(g, spec, static_cast<std::uint64_t>(p), 99);
    const double w = adjoint_weight(path, g, sl, spec.lambda, spec.levy).back() *
                     regime_path(1, path, 2).regimes.back();
    s += w;
    s2 += w * w;
  }
  const double mean = s / N, se = std::sqrt((s2 / N - mean * mean) / N);
  CHECK(std::abs(mean - sol.value(0, 1, x0)) < 4.0 * se + 1e-2);
}

TEST_CASE("backward semigroup examples") {
  const auto zero = make_problem("zero_dynamics");
  const double x[1] = {0.2};
  const auto c = backward_semigroup_apply(zero, 1, 0.0, x, 0.5, [](int, ConstVec) { return 3.0; },
                                          ConstantControl{}, 50);
  CHECK(c.value == doctest::Approx(3.0).epsilon(1e-12));

  const auto cd = make_problem("constant_driver");
  const auto a = backward_semigroup_apply(cd, 1, 0.25, x, 0.5, [](int, ConstVec) { return 0.0; },
                                          ConstantControl{}, 50);
  CHECK(a.value == doctest::Approx(0.5).epsilon(1e-12));

  const auto cl = make_problem("coupled_linear");
  const double x0[1] = {0.0};
  SemigroupOptions so;
  so.steps = 200;
  const auto w = backward_semigroup_apply(cl, 1, 0.0, x0, 1.0,
                                          [cl](int i, ConstVec xx) { return cl.coefficients->terminal(i, xx); },
                                          ConstantControl{}, 1000, so);
  CHECK(std::abs(w.value - (1 - std::exp(-2.0)) / 2) < 1e-2);
}

TEST_CASE("independent seeds agree within their standard errors") {
  const auto spec = make_problem("heat_quadratic");
  const auto bsde = make_game_bsde(spec, ConstantControl{});
  const double x0[1] = {0.5};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto sol = solve_regression(bsde, cloud_for(spec, 50, 4000, 0.5, seed * 1000003));
    CHECK(std::abs(sol.value(0, 1, x0) - 1.25) < 4.0 * sol.stderr_at(0, 1) + 1e-2);
  }
}

TEST_CASE("energy grows at most quadratically in the start point") {
  const auto spec = make_problem("linear_driver");
  const auto bsde = make_game_bsde(spec, ConstantControl{});
  std::vector<double> c;
  for (double x0 : {0.0, 1.0, 5.0}) {
    const auto sol = solve_regression(bsde, cloud_for(spec, 40, 2000, x0));
    c.push_back(solution_energy(sol) / (1.0 + x0 * x0));
  }
  for (double v : c) CHECK(v < 4.0 * std::exp(2.0));
  CHECK(c[2] < 2.0 * c[1]);
}

TEST_CASE("regime-symmetric problems have negligible regime martingale parts") {
  ProblemOverrides o;
  o.m = 2;
  o.lambda = 0.4;
  const auto spec = make_problem("heat_quadratic", o);
  const auto cloud = cloud_for(spec, 40, 4000, 0.0, 3, true);
  const auto sol = solve_regression(make_game_bsde(spec, ConstantControl{}), cloud);
  double acc = 0;
  for (double h : sol.H) acc += std::abs(h);
  CHECK(acc / static_cast<double>(sol.H.size()) < 0.05);
}

TEST_CASE("regression artifacts") {
  const auto spec = make_problem("constant_driver");
  const auto sol = solve_regression(make_game_bsde(spec, ConstantControl{}), cloud_for(spec, 4, 30, 0.0));
  std::ostringstream cs;
  write_coefficients_csv(cs, sol, io::ArtifactMeta{});
  const auto rows = io::parse_csv(cs.str());
  CHECK(rows[0].size() == 8);
  CHECK(rows.size() > 5);
  std::ostringstream vs;
  write_value_surface_csv(vs, sol, {-1.0, 0.0, 1.0}, io::ArtifactMeta{});
  CHECK(io::parse_csv(vs.str()).size() == 1 + 5 * 3);

  const auto res = picard_iterate(make_game_bsde(spec, ConstantControl{}), cloud_for(spec, 4, 30, 0.0));
  const auto j = nlohmann::json::parse(picard_log_json(res, io::ArtifactMeta{}));
  CHECK(j["gaps"][0]["ratio"].is_null());
  CHECK(j["b"].get<double>() == res.b);
  CHECK(j.contains("meta"));
}

}  // TEST_SUITE
