#pragma once

#include "credsurr/types.hpp"

#include <vector>

namespace credsurr {

// Clamped B-spline basis on [lo, hi]. Inputs outside the range are clamped.
struct BSplineBasis {
  int degree = 3;
  std::vector<Scalar> knots;  // full knot vector, boundary knots repeated degree + 1 times
  Scalar lo = 0.0;
  Scalar hi = 1.0;

  int size() const { return static_cast<int>(knots.size()) - degree - 1; }
  // strictly increasing distinct knots (boundaries plus interior)
  std::vector<Scalar> breakpoints() const;
};

// Interior knots at unique empirical quantiles of x, at most max_interior
// of them; the degree drops below `degree` when x has few distinct values.
// Requires at least two distinct values.
BSplineBasis make_basis(ConstRef<Vector> x, int max_interior, int degree = 3);
BSplineBasis make_basis(Scalar lo, Scalar hi, std::vector<Scalar> interior, int degree);

// Number of distinct values (exact comparison).
int distinct_count(ConstRef<Vector> x);

// Values of all basis functions at x (clamped into range). Returns true when
// x had to be clamped.
bool eval_basis(const BSplineBasis& b, Scalar x, Eigen::Ref<Vector> out);
Vector eval_basis(const BSplineBasis& b, Scalar x);

}  // namespace credsurr
