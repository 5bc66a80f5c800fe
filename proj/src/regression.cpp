#include "hjbi/regression.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace hjbi {
namespace {

void add_terms(std::vector<std::vector<int>>& out, std::vector<int>& cur, std::size_t pos,
               int remaining) {
  if (pos == cur.size()) {
    out.push_back(cur);
    return;
  }
  for (int e = 0; e <= remaining; ++e) {
    cur[pos] = e;
    add_terms(out, cur, pos + 1, remaining - e);
  }
  cur[pos] = 0;
}

std::vector<std::vector<int>> total_degree_terms(std::size_t dims, int degree) {
  std::vector<std::vector<int>> all;
  std::vector<int> cur(dims, 0);
  add_terms(all, cur, 0, degree);
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    int sa = 0, sb = 0;
    for (int e : a) sa += e;
    for (int e : b) sb += e;
    return sa < sb;
  });
  return all;
}

std::size_t term_count(std::size_t dims, int degree) {
  // binomial(dims + degree, degree)
  double c = 1.0;
  for (int k = 1; k <= degree; ++k) c = c * static_cast<double>(dims + static_cast<std::size_t>(k)) / k;
  return static_cast<std::size_t>(std::llround(c));
}

int distinct_values(std::vector<double> v, int cap) {
  std::sort(v.begin(), v.end());
  int count = 0;
  double last = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k == 0 || v[k] - last > 1e-12 * (1.0 + std::abs(last))) {
      ++count;
      last = v[k];
      if (count >= cap) break;
    }
  }
  return count;
}

}  // namespace

void PolyBasis::eval(ConstVec x, double* row) const {
  constexpr int kMaxDeg = 16;
  double powers[8][kMaxDeg + 1];
  const std::size_t a = active.size();
  std::vector<std::array<double, kMaxDeg + 1>> heap;
  auto pw = [&](std::size_t c) -> double* { return a <= 8 ? powers[c] : heap[c].data(); };
  if (a > 8) heap.resize(a);
  for (std::size_t c = 0; c < a; ++c) {
    const auto coord = static_cast<std::size_t>(active[c]);
    const double z = (x[coord] - centre[coord]) / scale[coord];
    double* p = pw(c);
    p[0] = 1.0;
    for (int e = 1; e <= degree; ++e) p[e] = p[e - 1] * z;
  }
  for (std::size_t t = 0; t < terms.size(); ++t) {
    double v = 1.0;
    for (std::size_t c = 0; c < a; ++c) v *= pw(c)[terms[t][c]];
    row[t] = v;
  }
}

double LinearFit::value(ConstVec x) const {
  if (basis.size() == 1) return coef[0];
  std::vector<double> row(basis.size());
  basis.eval(x, row.data());
  double s = 0.0;
  for (std::size_t t = 0; t < row.size(); ++t) s += coef[t] * row[t];
  return s;
}

void LinearFit::gradient(ConstVec x, MutVec out) const {
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t a = basis.active.size();
  if (a == 0) return;
  std::vector<double> z(a);
  for (std::size_t c = 0; c < a; ++c) {
    const auto coord = static_cast<std::size_t>(basis.active[c]);
    z[c] = (x[coord] - basis.centre[coord]) / basis.scale[coord];
  }
  for (std::size_t t = 0; t < basis.terms.size(); ++t) {
    const auto& ex = basis.terms[t];
    for (std::size_t c = 0; c < a; ++c) {
      if (ex[c] == 0) continue;
      double d = ex[c] * std::pow(z[c], ex[c] - 1);
      for (std::size_t q = 0; q < a; ++q) {
        if (q != c) d *= std::pow(z[q], ex[q]);
      }
      const auto coord = static_cast<std::size_t>(basis.active[c]);
      out[coord] += coef[t] * d / basis.scale[coord];
    }
  }
}

LinearFit LinearFit::constant(int n, double c) {
  LinearFit f;
  f.basis.n = n;
  f.basis.centre.assign(static_cast<std::size_t>(n), 0.0);
  f.basis.scale.assign(static_cast<std::size_t>(n), 1.0);
  f.basis.terms = {{}};
  f.coef = {c};
  return f;
}

struct LeastSquares::Impl {
  Eigen::MatrixXd design;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
};

LeastSquares::~LeastSquares() = default;
LeastSquares::LeastSquares(LeastSquares&&) noexcept = default;
LeastSquares& LeastSquares::operator=(LeastSquares&&) noexcept = default;

LeastSquares::LeastSquares(ConstVec points, int n, int max_degree) : impl_(std::make_unique<Impl>()) {
  const auto un = static_cast<std::size_t>(n);
  count_ = static_cast<int>(points.size() / un);
  if (count_ < 1) throw RegressionError("regression over an empty point set", 0.0);
  basis_.n = n;
  basis_.centre.assign(un, 0.0);
  basis_.scale.assign(un, 1.0);
  int degree = std::max(0, max_degree);
  for (std::size_t c = 0; c < un; ++c) {
    double s = 0.0, s2 = 0.0;
    std::vector<double> column(static_cast<std::size_t>(count_));
    for (int p = 0; p < count_; ++p) {
      const double v = points[static_cast<std::size_t>(p) * un + c];
      column[static_cast<std::size_t>(p)] = v;
      s += v;
    }
    const double mean = s / count_;
    for (double v : column) s2 += (v - mean) * (v - mean);
    const double sd = std::sqrt(s2 / count_);
    basis_.centre[c] = mean;
    if (sd > 1e-12 * (1.0 + std::abs(mean))) {
      basis_.scale[c] = sd;
      basis_.active.push_back(static_cast<int>(c));
      degree = std::min(degree, distinct_values(std::move(column), degree + 1) - 1);
    }
  }
  if (basis_.active.empty()) degree = 0;
  while (degree > 0 && term_count(basis_.active.size(), degree) > static_cast<std::size_t>(count_)) --degree;
  basis_.degree = degree;
  basis_.terms = total_degree_terms(basis_.active.size(), degree);

  const auto cols = static_cast<Eigen::Index>(basis_.size());
  impl_->design.resize(count_, cols);
  std::vector<double> row(basis_.size());
  for (int p = 0; p < count_; ++p) {
    basis_.eval(points.subspan(static_cast<std::size_t>(p) * un, un), row.data());
    for (Eigen::Index t = 0; t < cols; ++t) impl_->design(p, t) = row[static_cast<std::size_t>(t)];
  }
  impl_->qr.setThreshold(1e-11);
  impl_->qr.compute(impl_->design);
  const auto& R = impl_->qr.matrixR();
  const double top = std::abs(R(0, 0));
  const double bottom = std::abs(R(cols - 1, cols - 1));
  condition_ = bottom > 0.0 ? top / bottom : std::numeric_limits<double>::infinity();
  if (impl_->qr.rank() < cols) {
    throw RegressionError(
        fmt::format("rank-deficient regression: rank {} of {} over {} points, condition {:.3g}",
                    impl_->qr.rank(), cols, count_, condition_),
        condition_);
  }
}

LeastSquares::Result LeastSquares::solve(ConstVec targets) const {
  if (targets.size() != static_cast<std::size_t>(count_)) {
    throw std::invalid_argument("target count differs from point count");
  }
  const Eigen::Map<const Eigen::VectorXd> y(targets.data(), count_);
  Result r;
  const Eigen::VectorXd coef = impl_->qr.solve(y);
  const Eigen::VectorXd fitted = impl_->design * coef;
  r.fit.basis = basis_;
  r.fit.coef.assign(coef.data(), coef.data() + coef.size());
  r.fitted.assign(fitted.data(), fitted.data() + fitted.size());
  r.residual_rms = std::sqrt((y - fitted).squaredNorm() / count_);
  return r;
}

}  // namespace hjbi
