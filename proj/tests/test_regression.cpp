#include <doctest.h>

#include <cmath>
#include <random>

#include "hjbi/regression.hpp"

using namespace hjbi;

TEST_SUITE("regression") {

TEST_CASE("cubic targets are recovered exactly") {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd(0.3, 1.7);
  std::vector<double> xs(500), ys(500);
  for (std::size_t p = 0; p < xs.size(); ++p) {
    xs[p] = nd(gen);
    ys[p] = 1.0 + 2.0 * xs[p] - xs[p] * xs[p] * xs[p];
  }
  const LeastSquares ls(xs, 1, 3);
  CHECK(ls.basis().degree == 3);
  const auto r = ls.solve(ys);
  CHECK(r.residual_rms < 1e-10);
  for (double x : {-2.0, 0.0, 0.5, 3.0}) {
    const double pt[1] = {x};
    CHECK(r.fit.value(pt) == doctest::Approx(1.0 + 2.0 * x - x * x * x).epsilon(1e-9));
    double g[1];
    r.fit.gradient(pt, g);
    CHECK(g[0] == doctest::Approx(2.0 - 3.0 * x * x).epsilon(1e-9));
  }
}

TEST_CASE("two-dimensional quadratic with a cross term") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> ud(-1.0, 2.0);
  std::vector<double> pts, ys;
  for (int p = 0; p < 300; ++p) {
    const double a = ud(gen), b = ud(gen);
    pts.push_back(a);
    pts.push_back(b);
    ys.push_back(a * b - 0.5 * b * b + 3.0);
  }
  const LeastSquares ls(pts, 2, 2);
  CHECK(ls.basis().size() == 6);
  const auto r = ls.solve(ys);
  const double at[2] = {0.7, -0.4};
  CHECK(r.fit.value(at) == doctest::Approx(0.7 * -0.4 - 0.5 * 0.16 + 3.0).epsilon(1e-10));
  double g[2];
  r.fit.gradient(at, g);
  CHECK(g[0] == doctest::Approx(-0.4).epsilon(1e-9));
  CHECK(g[1] == doctest::Approx(0.7 + 0.4).epsilon(1e-9));
}

TEST_CASE("degree drops with few distinct values or few points") {
  const std::vector<double> two = {0.0, 1.0, 0.0, 1.0, 1.0};
  CHECK(LeastSquares(two, 1, 4).basis().degree == 1);
  const std::vector<double> flat = {2.0, 2.0, 2.0};
  const LeastSquares c(flat, 1, 3);
  CHECK(c.basis().degree == 0);
  CHECK(c.basis().active.empty());
  const std::vector<double> y = {5.0, 5.0, 5.0};
  const double pt[1] = {-9.0};
  CHECK(c.solve(y).fit.value(pt) == doctest::Approx(5.0));
  const std::vector<double> few = {0.0, 1.0, 2.0};
  CHECK(LeastSquares(few, 1, 5).basis().degree == 2);
}

TEST_CASE("collinear coordinates are rejected with the condition number") {
  std::vector<double> pts;
  for (int p = 0; p < 50; ++p) {
    pts.push_back(p * 0.1);
    pts.push_back(p * 0.1);
  }
  bool thrown = false;
  try {
    LeastSquares ls(pts, 2, 1);
  } catch (const RegressionError& e) {
    thrown = true;
    CHECK(e.condition() > 1e10);
  }
  CHECK(thrown);
  CHECK_THROWS_AS(LeastSquares(std::vector<double>{}, 1, 2), RegressionError);
}

TEST_CASE("fits are linear in the targets") {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd;
  std::vector<double> xs(200), ya(200), yb(200), ysum(200);
  for (std::size_t p = 0; p < xs.size(); ++p) {
    xs[p] = nd(gen);
    ya[p] = std::sin(xs[p]);
    yb[p] = std::exp(0.3 * xs[p]);
    ysum[p] = ya[p] - 2.0 * yb[p];
  }
  const LeastSquares ls(xs, 1, 3);
  const auto a = ls.solve(ya), b = ls.solve(yb), s = ls.solve(ysum);
  for (std::size_t t = 0; t < s.fit.coef.size(); ++t) {
    CHECK(s.fit.coef[t] == doctest::Approx(a.fit.coef[t] - 2.0 * b.fit.coef[t]).epsilon(1e-10));
  }
  CHECK_THROWS_AS(ls.solve(std::vector<double>(3)), std::invalid_argument);
}

TEST_CASE("constant fit") {
  const auto f = LinearFit::constant(3, 1.5);
  const double x[3] = {1, 2, 3};
  CHECK(f.value(x) == 1.5);
  double g[3];
  f.gradient(x, g);
  CHECK(g[0] == 0.0);
  CHECK(g[2] == 0.0);
}

}  // TEST_SUITE
