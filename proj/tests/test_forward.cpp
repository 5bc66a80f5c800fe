#include <doctest.h>

#include <cmath>
#include <sstream>

#include "hjbi/catalog.hpp"
#include "hjbi/forward.hpp"
#include "hjbi/io.hpp"
#include "test_support.hpp"

using namespace hjbi;
using hjbi::testing::FnCoefficients;
using hjbi::testing::custom_spec;

namespace {

struct Stats {
  double mean = 0, var = 0;
};

Stats terminal_stats(const ForwardCloud& c) {
  double s = 0, s2 = 0;
  for (int p = 0; p < c.particles; ++p) {
    const double x = c.state(c.grid.K, p)[0];
    s += x;
    s2 += x * x;
  }
  Stats st;
  st.mean = s / c.particles;
  st.var = s2 / c.particles - st.mean * st.mean;
  return st;
}

}  // namespace

TEST_SUITE("forward") {

TEST_CASE("euler step examples") {
  auto cf = std::make_shared<FnCoefficients>();
  cf->b = [](int, double, double, double, double) { return 1.0; };
  auto spec = custom_spec(cf);
  const double x[1] = {0.0}, dB[1] = {0.3};
  double out[1];
  euler_step(spec, 1, 0.0, x, 0, 0, dB, {}, 0.1, out);
  CHECK(out[0] == doctest::Approx(0.1));

  auto jump = std::make_shared<FnCoefficients>();
  jump->gamma = [](int, double, double, double, double, double e) { return e; };
  auto js = custom_spec(jump);
  js.levy.atoms = {{{1.0}, 1.0}};
  const double x1[1] = {2.0};
  const MuEvent ev[1] = {{0, 0}};
  euler_step(js, 1, 0.0, x1, 0, 0, dB, ev, 0.1, out);
  CHECK(out[0] == doctest::Approx(2.0 + 1.0 - 0.1));

  auto zero = custom_spec(std::make_shared<FnCoefficients>());
  euler_step(zero, 1, 0.0, x1, 0, 0, dB, {}, 0.1, out);
  CHECK(out[0] == 2.0);
}

TEST_CASE("euler step flags blow-up") {
  auto cf = std::make_shared<FnCoefficients>();
  cf->b = [](int, double, double x, double, double) { return x * 1e308; };
  auto spec = custom_spec(cf);
  const double x[1] = {10.0}, dB[1] = {0.0};
  double out[1];
  CHECK_THROWS_AS(euler_step(spec, 1, 0.0, x, 0, 0, dB, {}, 1.0, out), SolverError);
}

TEST_CASE("zero coefficients keep every path at x0") {
  const auto spec = custom_spec(std::make_shared<FnCoefficients>());
  const double x0[1] = {1.25};
  const auto c = simulate_forward(spec, TimeGrid(0, 1, 20), 1, x0, ConstantControl{}, 50, 3);
  for (int p = 0; p < c.particles; ++p) {
    for (int k = 0; k <= 20; ++k) CHECK(c.state(k, p)[0] == 1.25);
  }
}

TEST_CASE("pure drift is deterministic") {
  auto cf = std::make_shared<FnCoefficients>();
  cf->b = [](int, double, double, double, double) { return 1.0; };
  const auto spec = custom_spec(cf, 1, 2.0);
  const double x0[1] = {-0.5};
  const auto c = simulate_forward(spec, TimeGrid(0.5, 2.0, 30), 1, x0, ConstantControl{}, 20, 9);
  for (int p = 0; p < c.particles; ++p) CHECK(c.state(30, p)[0] == doctest::Approx(-0.5 + 1.5).epsilon(1e-13));
}

TEST_CASE("compensated jump forward is a martingale") {
  const auto spec = make_problem("compensated_jump");
  const double x0[1] = {0.7};
  const auto c = simulate_forward(spec, TimeGrid(0, 1, 50), 1, x0, ConstantControl{}, 40000, 21);
  const auto st = terminal_stats(c);
  CHECK(std::abs(st.mean - 0.7) < 4.0 * std::sqrt(st.var / c.particles));
  CHECK(st.var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("weak error of the compensated jump mean over a dt ladder") {
  const auto spec = make_problem("compensated_jump");
  const double x0[1] = {0.0};
  for (int K : {50, 100, 200}) {
    const auto c = simulate_forward(spec, TimeGrid(0, 1, K), 1, x0, ConstantControl{}, 20000, 5);
    const auto st = terminal_stats(c);
    CHECK(std::abs(st.mean) < 4.0 * std::sqrt(st.var / c.particles) + 1.0 / K);
  }
}

TEST_CASE("moment check examples") {
  const double x0[1] = {0.0};
  {
    const auto spec = custom_spec(std::make_shared<FnCoefficients>());
    const auto c = simulate_forward(spec, TimeGrid(0, 1, 20), 1, x0, ConstantControl{}, 10, 1);
    const auto r = moment_check(c, 2, x0, {0.1, 0.05});
    CHECK(r.sup_moment == 0.0);
    CHECK(r.local_moment == std::vector<double>{0.0, 0.0});
    CHECK(r.bounded);
  }
  {
    auto cf = std::make_shared<FnCoefficients>();
    cf->b = [](int, double, double, double, double) { return 1.0; };
    const auto spec = custom_spec(cf);
    const auto c = simulate_forward(spec, TimeGrid(0, 1, 20), 1, x0, ConstantControl{}, 10, 1);
    const auto r = moment_check(c, 2, x0, {0.1});
    CHECK(r.local_moment[0] == doctest::Approx(0.1));
    CHECK(r.bound_constant <= 1.0);
  }
  {
    auto cf = std::make_shared<FnCoefficients>();
    cf->sigma = [](int, double, double, double, double) { return 1.0; };
    const auto spec = custom_spec(cf);
    const auto c = simulate_forward(spec, TimeGrid(0, 1, 100), 1, x0, ConstantControl{}, 20000, 4);
    const auto r = moment_check(c, 2, x0, {1.0, 0.5, 0.25});
    CHECK(r.local_moment[0] <= 4.0 * 1.0 * 1.1);
    CHECK(r.bounded);
    const auto r4 = moment_check(c, 4, x0, {0.5, 0.25, 0.12});
    CHECK(r4.bounded);
  }
  const auto spec = custom_spec(std::make_shared<FnCoefficients>());
  const auto c = simulate_forward(spec, TimeGrid(0, 1, 20), 1, x0, ConstantControl{}, 10, 1);
  CHECK_THROWS(moment_check(c, 3, x0, {0.1}));
  CHECK_THROWS(moment_check(c, 2, x0, {0.033}));
}

TEST_CASE("flow Lipschitz constant is stable under dt refinement") {
  ProblemOverrides o;
  o.params = {{"bx", {0.5}}, {"sx", {0.2}}, {"s0", {0.3}}};
  const auto spec = make_problem("zero_dynamics", o);
  const double xa[1] = {0.2}, xb[1] = {0.3};
  std::vector<double> constants;
  for (int K : {50, 100}) {
    const TimeGrid g(0, 1, K);
    const auto a = simulate_forward(spec, g, 1, xa, ConstantControl{}, 5000, 12);
    const auto b = simulate_forward(spec, g, 1, xb, ConstantControl{}, 5000, 12);
    double acc = 0;
    for (int p = 0; p < a.particles; ++p) {
      double worst = 0;
      for (int k = 0; k <= K; ++k) {
        const double dd = a.state(k, p)[0] - b.state(k, p)[0];
        worst = std::max(worst, dd * dd);
      }
      acc += worst;
    }
    constants.push_back(acc / a.particles / (0.1 * 0.1));
  }
  CHECK(constants[0] >= 1.0);
  CHECK(constants[1] == doctest::Approx(constants[0]).epsilon(0.2));
}

TEST_CASE("regime-independent coefficients give an i0-invariant law") {
  ProblemOverrides o;
  o.m = 3;
  o.lambda = 0.3;
  const auto spec = make_problem("heat_quadratic", o);
  const double x0[1] = {0.4};
  const TimeGrid g(0, 1, 40);
  CloudOptions oa, ob;
  ob.stream_offset = 1000000;
  const auto a = simulate_forward(spec, g, 1, x0, ConstantControl{}, 20000, 8, oa);
  const auto b = simulate_forward(spec, g, 3, x0, ConstantControl{}, 20000, 8, ob);
  const auto sa = terminal_stats(a), sb = terminal_stats(b);
  CHECK(std::abs(sa.mean - sb.mean) < 4.0 * std::sqrt(sa.var / a.particles + sb.var / b.particles));
}

TEST_CASE("stratified clouds cover every regime and spread the start") {
  const auto spec = make_problem("mixed_regime");
  const double x0[1] = {0.0};
  CloudOptions co;
  co.stratify_regimes = true;
  co.x_spread = 1.0;
  const auto c = simulate_forward(spec, TimeGrid(0, 1, 4), 1, x0, ConstantControl{}, 100, 2, co);
  int per[2] = {0, 0};
  double lo = 1e9, hi = -1e9;
  for (int p = 0; p < 100; ++p) {
    ++per[c.regime(0, p) - 1];
    lo = std::min(lo, c.state(0, p)[0]);
    hi = std::max(hi, c.state(0, p)[0]);
  }
  CHECK(per[0] == 50);
  CHECK(per[1] == 50);
  CHECK(lo == doctest::Approx(-0.98));
  CHECK(hi == doctest::Approx(0.98));
}

TEST_CASE("feedback lookup by time slice and nearest node") {
  FeedbackTable f;
  f.t0 = 0;
  f.T = 1;
  f.K = 2;
  f.x_min = -1;
  f.dx = 1;
  f.nodes = 3;
  f.m = 1;
  f.u_points = {-1, 1};
  f.v_points = {0, 5};
  f.u_index = {0, 0, 1, 1, 1, 0, 0, 0, 0};
  f.v_index = {1, 1, 1, 0, 0, 0, 0, 0, 0};
  CHECK(f.lookup(0.0, 0.4, 1) == std::pair<double, double>{1 * -1.0, 5.0});
  CHECK(f.lookup(0.2, 0.6, 1) == std::pair<double, double>{1.0, 5.0});
  CHECK(f.lookup(0.5, -0.9, 1) == std::pair<double, double>{1.0, 0.0});
  CHECK(f.lookup(0.5, 7.0, 1) == std::pair<double, double>{-1.0, 0.0});
  const ControlPolicy pol = ConstantControl{2.0, -3.0};
  const double x[1] = {0};
  CHECK(control_at(pol, 0.3, x, 1) == std::pair<double, double>{2.0, -3.0});
}

TEST_CASE("path dump is CSV with a provenance line") {
  const auto spec = make_problem("mixed_regime");
  const double x0[1] = {0.0};
  const auto c = simulate_forward(spec, TimeGrid(0, 1, 3), 2, x0, ConstantControl{}, 5, 2);
  std::ostringstream os;
  write_path_csv(os, c, io::ArtifactMeta{}, 2);
  const auto rows = io::parse_csv(os.str());
  REQUIRE(rows.size() == 1 + 2 * 4);
  CHECK(rows[0] == std::vector<std::string>{"particle", "t", "regime", "x0"});
  CHECK(os.str().rfind("# hjbi_lab", 0) == 0);
}

}  // TEST_SUITE
