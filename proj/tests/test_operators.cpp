#include <doctest.h>

#include <cmath>
#include <random>

#include "hjbi/catalog.hpp"
#include "hjbi/operators.hpp"
#include "test_support.hpp"

using namespace hjbi;
using hjbi::testing::FnCoefficients;
using hjbi::testing::custom_spec;

namespace {

const SpatialGrid kGrid(-2.0, 2.0, 16);  // dx = 0.25

GridFunction sampled(const SpatialGrid& g, int m, double (*fn)(double)) {
  GridFunction W(g, m);
  for (int i = 1; i <= m; ++i) {
    for (int j = 0; j <= g.J; ++j) W.at(i, j) = fn(g.x(j));
  }
  return W;
}

double linear(double x) { return x; }
double square(double x) { return x * x; }
double constant(double) { return 3.5; }

int node_of(const SpatialGrid& g, double x) { return static_cast<int>(std::lround((x - g.x_min) / g.dx())); }

GameSpec game(std::shared_ptr<FnCoefficients> cf, std::vector<double> U, std::vector<double> V) {
  auto s = custom_spec(std::move(cf));
  s.controls = {std::move(U), std::move(V)};
  return s;
}

}  // namespace

TEST_SUITE("operators") {

TEST_CASE("grid shape") {
  CHECK(kGrid.dx() == 0.25);
  CHECK(kGrid.nodes() == 17);
  CHECK(kGrid.x(16) == 2.0);
  CHECK_THROWS(SpatialGrid(1.0, 1.0, 4));
  CHECK_THROWS(SpatialGrid(0.0, 1.0, 2));
  const auto W = sampled(kGrid, 1, linear);
  CHECK(interpolate(kGrid, W.row(1), 0.1) == doctest::Approx(0.1));
  CHECK(interpolate(kGrid, W.row(1), 7.0) == doctest::Approx(7.0));
  CHECK(interpolate(kGrid, W.row(1), -9.5) == doctest::Approx(-9.5));
}

TEST_CASE("local operator examples") {
  auto cf = std::make_shared<FnCoefficients>();
  cf->b = [](int, double, double, double, double) { return 2.0; };
  const auto drift = custom_spec(cf);
  const int j0 = node_of(kGrid, 0.0);
  CHECK(op_A(drift, 1, 0, kGrid, j0, 0, 0, sampled(kGrid, 1, linear).row(1)) == doctest::Approx(2.0));

  auto sq = std::make_shared<FnCoefficients>();
  sq->sigma = [](int, double, double, double, double) { return std::sqrt(2.0); };
  const auto diff = custom_spec(sq);
  CHECK(op_A(diff, 1, 0, kGrid, 5, 0, 0, sampled(kGrid, 1, square).row(1)) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(op_A(diff, 1, 0, kGrid, 5, 0, 0, sampled(kGrid, 1, constant).row(1)) == 0.0);
  CHECK_THROWS_AS(op_A(diff, 1, 0, kGrid, 0, 0, 0, sampled(kGrid, 1, constant).row(1)), std::out_of_range);

  auto back = std::make_shared<FnCoefficients>();
  back->b = [](int, double, double, double, double) { return -1.0; };
  GridFunction kink(kGrid, 1);
  for (int j = 0; j <= kGrid.J; ++j) kink.at(1, j) = std::abs(kGrid.x(j));
  // Upwinding picks the left difference for negative drift.
  CHECK(op_A(custom_spec(back), 1, 0, kGrid, j0, 0, 0, kink.row(1)) == doctest::Approx(1.0));
}

TEST_CASE("nonlocal operator examples") {
  auto cf = std::make_shared<FnCoefficients>();
  cf->gamma = [](int, double, double, double, double, double e) { return e; };
  cf->rho_fn = [](ConstVec, ConstVec) { return 1.0; };
  auto spec = custom_spec(cf);
  const int j0 = node_of(kGrid, 0.0);

  spec.levy.atoms = {{{1.0}, 0.5}};
  CHECK(op_B(spec, 1, 0, kGrid, j0, 0, 0, sampled(kGrid, 1, square).row(1)) == doctest::Approx(0.5));
  spec.levy.atoms = {{{1.0}, 1.0}};
  CHECK(op_C(spec, 1, 0, kGrid, j0, 0, 0, sampled(kGrid, 1, square).row(1)) == doctest::Approx(1.0));
  CHECK(op_C(spec, 1, 0, kGrid, j0, 0, 0, sampled(kGrid, 1, constant).row(1)) == 0.0);

  auto no_rho = spec;
  auto cf0 = std::make_shared<FnCoefficients>(*cf);
  cf0->rho_fn = nullptr;
  no_rho.coefficients = cf0;
  CHECK(op_C(no_rho, 1, 0, kGrid, j0, 0, 0, sampled(kGrid, 1, square).row(1)) == 0.0);

  spec.levy.atoms.clear();
  CHECK(op_B(spec, 1, 0, kGrid, j0, 0, 0, sampled(kGrid, 1, square).row(1)) == 0.0);
}

TEST_CASE("jump operators cancel exactly on constants and linear functions") {
  auto cf = std::make_shared<FnCoefficients>();
  cf->gamma = [](int, double, double x, double, double, double e) { return e * (1.0 + 0.25 * x); };
  cf->rho_fn = [](ConstVec, ConstVec e) { return std::min(1.0, std::abs(e[0])); };
  auto spec = custom_spec(cf);
  spec.levy.atoms = {{{0.5}, 0.75}, {{-1.25}, 0.5}, {{3.0}, 0.25}};
  const auto lin = sampled(kGrid, 1, linear);
  const auto con = sampled(kGrid, 1, constant);
  for (int j = 0; j <= kGrid.J; ++j) {
    CHECK(op_B(spec, 1, 0, kGrid, j, 0, 0, lin.row(1)) == 0.0);
    CHECK(op_B(spec, 1, 0, kGrid, j, 0, 0, con.row(1)) == 0.0);
    CHECK(op_C(spec, 1, 0, kGrid, j, 0, 0, con.row(1)) == 0.0);
  }
}

TEST_CASE("Hamiltonian examples") {
  const int j0 = node_of(kGrid, 0.0);
  {
    auto cf = std::make_shared<FnCoefficients>();
    cf->b = [](int, double, double, double u, double v) { return u + v; };
    const auto spec = game(cf, {-1, 0, 1}, {-2, 2});
    const auto W = sampled(kGrid, 1, linear);
    const auto lo = hamiltonian_lower(spec, 1, 0, j0, W);
    CHECK(lo.value == doctest::Approx(-1.0));
    CHECK(lo.u_star == 1.0);
    CHECK(lo.v_star == -2.0);
    CHECK(hamiltonian_upper(spec, 1, 0, j0, W).value == doctest::Approx(-1.0));
    CHECK(isaacs_gap(spec, 0, W) == 0.0);
  }
  {
    auto cf = std::make_shared<FnCoefficients>();
    cf->b = [](int, double, double, double u, double v) { return u * v; };
    const auto spec = game(cf, {-1, 1}, {-1, 1});
    const auto W = sampled(kGrid, 1, linear);
    CHECK(hamiltonian_lower(spec, 1, 0, j0, W).value == doctest::Approx(-1.0));
    CHECK(hamiltonian_upper(spec, 1, 0, j0, W).value == doctest::Approx(1.0));
    CHECK(isaacs_gap(spec, 0, W) == doctest::Approx(2.0));
  }
  {
    auto cf = std::make_shared<FnCoefficients>();
    cf->f = [](int, double, ConstVec, ConstVec, ConstVec, double, double, double) { return 0.75; };
    const auto spec = custom_spec(cf);
    const auto W = sampled(kGrid, 1, square);
    CHECK(hamiltonian_lower(spec, 1, 0, j0, W).value == 0.75);
    CHECK(hamiltonian_upper(spec, 1, 0, j0, W).value == 0.75);
    CHECK(isaacs_gap(spec, 0, W) == 0.0);
  }
  {
    // Singleton grids reduce to generator plus driver.
    auto cf = std::make_shared<FnCoefficients>();
    cf->b = [](int, double, double, double, double) { return 0.5; };
    cf->sigma = [](int, double, double, double, double) { return 1.0; };
    cf->f = [](int, double, ConstVec, ConstVec a, ConstVec z, double, double, double) { return a[0] + z[0]; };
    const auto spec = custom_spec(cf);
    const auto W = sampled(kGrid, 1, square);
    const double x = kGrid.x(10);
    const double expect = 1.0 + 0.5 * (W.at(1, 11) - W.at(1, 10)) / 0.25 + x * x + 2.0 * x;
    CHECK(hamiltonian_lower(spec, 1, 0, 10, W).value == doctest::Approx(expect));
  }
}

TEST_CASE("coupled drivers read every regime at the node") {
  const auto spec = make_problem("coupled_linear");
  GridFunction W(kGrid, 2);
  for (int j = 0; j <= kGrid.J; ++j) {
    W.at(1, j) = 0.25;
    W.at(2, j) = 1.0;
  }
  CHECK(hamiltonian_lower(spec, 1, 0, 4, W).value == doctest::Approx(0.75));
  CHECK(hamiltonian_lower(spec, 2, 0, 4, W).value == doctest::Approx(-0.75));
}

TEST_CASE("minimax inequality on random data") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const double c1 = nd(gen), c2 = nd(gen), c3 = nd(gen);
    auto cf = std::make_shared<FnCoefficients>();
    cf->b = [c1](int, double, double x, double u, double v) { return c1 * u * v + std::sin(x) * u; };
    cf->sigma = [c2](int, double, double, double u, double) { return 0.2 + std::abs(c2) * u * u; };
    cf->f = [c3](int, double, ConstVec x, ConstVec, ConstVec, double, double u, double v) {
      return c3 * std::cos(u * x[0] - v);
    };
    const auto spec = game(cf, {-1, -0.3, 0.5, 1}, {-1, 0, 0.7});
    GridFunction W(kGrid, 1);
    for (auto& w : W.values) w = nd(gen);
    for (int j = 1; j < kGrid.J; ++j) {
      CHECK(hamiltonian_lower(spec, 1, 0, j, W).value <= hamiltonian_upper(spec, 1, 0, j, W).value);
    }
  }
}

TEST_CASE("control-independent shifts move values, not selections") {
  auto base = std::make_shared<FnCoefficients>();
  base->b = [](int, double, double x, double u, double v) { return u * v + x * u - v; };
  base->f = [](int, double, ConstVec, ConstVec, ConstVec, double, double u, double v) { return u * u - v; };
  auto shifted = std::make_shared<FnCoefficients>(*base);
  shifted->f = [](int, double, ConstVec x, ConstVec, ConstVec, double, double u, double v) {
    return u * u - v + 2.0 + x[0];
  };
  const auto a = game(base, {-1, 0, 1}, {-1, 1});
  const auto b = game(shifted, {-1, 0, 1}, {-1, 1});
  const auto W = sampled(kGrid, 1, square);
  for (int j = 1; j < kGrid.J; ++j) {
    const auto ha = hamiltonian_lower(a, 1, 0, j, W), hb = hamiltonian_lower(b, 1, 0, j, W);
    CHECK(hb.value == doctest::Approx(ha.value + 2.0 + kGrid.x(j)));
    CHECK(hb.u_index == ha.u_index);
    CHECK(hb.v_index == ha.v_index);
    const auto ua = hamiltonian_upper(a, 1, 0, j, W), ub = hamiltonian_upper(b, 1, 0, j, W);
    CHECK(ub.u_index == ua.u_index);
    CHECK(ub.v_index == ua.v_index);
  }
}

TEST_CASE("ties go to the lowest control index") {
  auto cf = std::make_shared<FnCoefficients>();
  const auto spec = game(cf, {3, 2, 1}, {5, 4});
  const auto W = sampled(kGrid, 1, linear);
  const auto h = hamiltonian_lower(spec, 1, 0, 3, W);
  CHECK(h.u_index == 0);
  CHECK(h.v_index == 0);
  CHECK(hamiltonian_upper(spec, 1, 0, 3, W).u_index == 0);
}

}  // TEST_SUITE
