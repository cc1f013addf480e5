#include "credsurr/bspline.hpp"

#include "credsurr/error.hpp"

#include <algorithm>
#include <cmath>

namespace credsurr {

std::vector<Scalar> BSplineBasis::breakpoints() const {
  std::vector<Scalar> out;
  for (Scalar k : knots) {
    if (out.empty() || k > out.back()) out.push_back(k);
  }
  return out;
}

int distinct_count(ConstRef<Vector> x) {
  std::vector<Scalar> v(x.data(), x.data() + x.size());
  std::sort(v.begin(), v.end());
  return static_cast<int>(std::unique(v.begin(), v.end()) - v.begin());
}

BSplineBasis make_basis(Scalar lo, Scalar hi, std::vector<Scalar> interior, int degree) {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) throw NumericError("spline range must be non-empty");
  if (degree < 1 || degree > 10) throw ConfigError("spline degree must lie in [1, 10]");
  BSplineBasis b;
  b.degree = degree;
  b.lo = lo;
  b.hi = hi;
  b.knots.assign(static_cast<std::size_t>(degree + 1), lo);
  Scalar prev = lo;
  for (Scalar k : interior) {
    if (!(k > prev) || !(k < hi)) throw NumericError("interior knots must be strictly increasing inside the range");
    b.knots.push_back(k);
    prev = k;
  }
  b.knots.insert(b.knots.end(), static_cast<std::size_t>(degree + 1), hi);
  return b;
}

BSplineBasis make_basis(ConstRef<Vector> x, int max_interior, int degree) {
  std::vector<Scalar> v(x.data(), x.data() + x.size());
  std::sort(v.begin(), v.end());
  std::vector<Scalar> u = v;
  u.erase(std::unique(u.begin(), u.end()), u.end());
  if (u.size() < 2) throw NumericError("spline input is constant");
  const Scalar lo = u.front(), hi = u.back();
  const int deg = std::min<int>(degree, static_cast<int>(u.size()) - 1);
  // a discrete input cannot support more knots than it has inner values
  const int room = static_cast<int>(u.size()) - 2;
  const int m = std::max(0, std::min(max_interior, room));
  std::vector<Scalar> interior;
  const std::size_t n = v.size();
  for (int j = 1; j <= m; ++j) {
    const Scalar q = static_cast<Scalar>(j) / static_cast<Scalar>(m + 1);
    // type-7 quantile
    const Scalar pos = q * static_cast<Scalar>(n - 1);
    const std::size_t i = static_cast<std::size_t>(std::floor(pos));
    const Scalar frac = pos - static_cast<Scalar>(i);
    const Scalar k = i + 1 < n ? v[i] + frac * (v[i + 1] - v[i]) : v[i];
    const Scalar gap = 1e-9 * (hi - lo);
    if (k > lo + gap && k < hi - gap && (interior.empty() || k > interior.back() + gap)) interior.push_back(k);
  }
  return make_basis(lo, hi, std::move(interior), deg);
}

bool eval_basis(const BSplineBasis& b, Scalar x, Eigen::Ref<Vector> out) {
  const int p = b.degree;
  const int nb = b.size();
  out.setZero();
  bool clamped = false;
  if (x < b.lo) {
    x = b.lo;
    clamped = true;
  } else if (x > b.hi) {
    x = b.hi;
    clamped = true;
  } else if (std::isnan(x)) {
    throw NumericError("spline input is NaN");
  }
  const auto& t = b.knots;
  // span index s with t[s] <= x < t[s+1], last span closed on the right
  int s = p;
  if (x >= b.hi) {
    s = nb - 1;
  } else {
    s = static_cast<int>(std::upper_bound(t.begin() + p, t.begin() + nb + 1, x) - t.begin()) - 1;
  }
  // Cox-de Boor, triangular table
  Scalar N[16] = {0};
  Scalar left[16], right[16];
  N[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - t[static_cast<std::size_t>(s + 1 - j)];
    right[j] = t[static_cast<std::size_t>(s + j)] - x;
    Scalar saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const Scalar den = right[r + 1] + left[j - r];
      const Scalar tmp = den != 0.0 ? N[r] / den : 0.0;
      N[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    N[j] = saved;
  }
  for (int r = 0; r <= p; ++r) out[s - p + r] = N[r];
  return clamped;
}

Vector eval_basis(const BSplineBasis& b, Scalar x) {
  Vector out(b.size());
  eval_basis(b, x, out);
  return out;
}

}  // namespace credsurr
