#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include "hjbi/problem.hpp"

namespace hjbi {

class RegressionError : public std::runtime_error {
 public:
  RegressionError(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

/// Total-degree monomials in standardized coordinates z = (x - centre) / scale.
/// Coordinates without spread are dropped.
struct PolyBasis {
  int n = 1;
  int degree = 0;
  std::vector<int> active;             // coordinates that enter the basis
  std::vector<double> centre, scale;   // length n
  std::vector<std::vector<int>> terms;  // exponents over active coordinates

  std::size_t size() const { return terms.size(); }
  void eval(ConstVec x, double* row) const;
};

struct LinearFit {
  PolyBasis basis;
  std::vector<double> coef;

  double value(ConstVec x) const;
  /// d value / dx, length n.
  void gradient(ConstVec x, MutVec out) const;
  static LinearFit constant(int n, double c);
};

/// Least squares over one point set. The design is factored once and reused
/// for several right-hand sides.
class LeastSquares {
 public:
  /// points is count x n row-major. The effective degree is reduced when a
  /// coordinate has few distinct values or the set is too small.
  LeastSquares(ConstVec points, int n, int max_degree);
  ~LeastSquares();
  LeastSquares(LeastSquares&&) noexcept;
  LeastSquares& operator=(LeastSquares&&) noexcept;

  struct Result {
    LinearFit fit;
    std::vector<double> fitted;  // fitted values at the points
    double residual_rms = 0.0;
  };
  Result solve(ConstVec targets) const;

  int count() const { return count_; }
  const PolyBasis& basis() const { return basis_; }
  double condition() const { return condition_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  PolyBasis basis_;
  int count_ = 0;
  double condition_ = 1.0;
};

}  // namespace hjbi
