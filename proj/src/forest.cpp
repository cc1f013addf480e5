#include "credsurr/forest.hpp"

#include "credsurr/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace credsurr {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Builder {
  const Matrix& X;
  const Vector& y;
  const ForestParams& par;
  int mtry;
  Rng& rng;
  Tree tree;
  std::vector<std::pair<Scalar, Scalar>> buf;  // (x, y) scratch

  int leaf(Scalar v) {
    tree.feature.push_back(-1);
    tree.threshold.push_back(0.0);
    tree.left.push_back(-1);
    tree.right.push_back(-1);
    tree.value.push_back(v);
    return static_cast<int>(tree.value.size()) - 1;
  }

  int build(std::vector<Index>& idx, std::size_t lo, std::size_t hi, int depth) {
    const std::size_t n = hi - lo;
    Scalar sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) sum += y[idx[i]];
    const Scalar mean = sum / static_cast<Scalar>(n);
    const std::size_t min_leaf = static_cast<std::size_t>(std::max(1, par.min_leaf));
    if (depth >= par.max_depth || n < 2 * min_leaf) return leaf(mean);

    // candidate features without replacement
    const int p = static_cast<int>(X.cols());
    std::vector<int> feats(static_cast<std::size_t>(p));
    std::iota(feats.begin(), feats.end(), 0);
    for (int k = 0; k < mtry; ++k) {
      const int j = k + static_cast<int>(rng() % static_cast<std::uint64_t>(p - k));
      std::swap(feats[static_cast<std::size_t>(k)], feats[static_cast<std::size_t>(j)]);
    }

    Scalar best_gain = 0.0, best_thr = 0.0;
    int best_f = -1;
    const Scalar base = sum * sum / static_cast<Scalar>(n);
    for (int k = 0; k < mtry; ++k) {
      const int f = feats[static_cast<std::size_t>(k)];
      buf.clear();
      for (std::size_t i = lo; i < hi; ++i) buf.emplace_back(X(idx[i], f), y[idx[i]]);
      std::sort(buf.begin(), buf.end());
      Scalar left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += buf[i].second;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        if (buf[i].first == buf[i + 1].first) continue;
        const Scalar right_sum = sum - left_sum;
        const Scalar gain = left_sum * left_sum / static_cast<Scalar>(nl) +
                            right_sum * right_sum / static_cast<Scalar>(nr) - base;
        if (gain > best_gain * (1.0 + 1e-12) + 1e-300) {
          best_gain = gain;
          best_f = f;
          best_thr = 0.5 * (buf[i].first + buf[i + 1].first);
        }
      }
    }
    if (best_f < 0) return leaf(mean);

    auto mid = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(hi),
                              [&](Index i) { return X(i, best_f) <= best_thr; });
    const std::size_t m = static_cast<std::size_t>(mid - idx.begin());
    const int node = leaf(mean);
    tree.feature[static_cast<std::size_t>(node)] = best_f;
    tree.threshold[static_cast<std::size_t>(node)] = best_thr;
    const int l = build(idx, lo, m, depth + 1);
    const int r = build(idx, m, hi, depth + 1);
    tree.left[static_cast<std::size_t>(node)] = l;
    tree.right[static_cast<std::size_t>(node)] = r;
    return node;
  }
};

}  // namespace

Scalar Tree::predict(const Scalar* x) const {
  std::size_t node = 0;
  while (feature[node] >= 0) {
    node = static_cast<std::size_t>(x[feature[node]] <= threshold[node] ? left[node] : right[node]);
  }
  return value[node];
}

Scalar Forest::predict(ConstRef<Vector> x) const {
  if (x.size() != n_features) throw ConfigError("feature vector has the wrong length");
  Scalar s = 0.0;
  for (const auto& t : trees) s += t.predict(x.data());
  return s / static_cast<Scalar>(trees.size());
}

Vector Forest::predict_rows(const Matrix& X) const {
  Vector out(X.rows()), row(X.cols());
  for (Index i = 0; i < X.rows(); ++i) {
    row = X.row(i).transpose();
    out[i] = predict(row);
  }
  return out;
}

Forest fit_forest(const Matrix& X, ConstRef<Vector> y_in, const ForestParams& params) {
  const Index n = X.rows(), p = X.cols();
  if (n == 0 || p == 0) throw ConfigError("forest needs at least one row and one feature");
  if (y_in.size() != n) throw ConfigError("forest targets and features differ in length");
  if (params.n_trees < 1 || params.max_depth < 0 || params.min_leaf < 1) {
    throw ConfigError("forest needs n_trees >= 1, max_depth >= 0, min_leaf >= 1");
  }
  if (!X.allFinite() || !y_in.allFinite()) throw NumericError("forest inputs must be finite");
  const Vector y = y_in;
  Forest f;
  f.params = params;
  f.n_features = static_cast<int>(p);
  const int mtry = params.mtry > 0 ? std::min<int>(params.mtry, static_cast<int>(p))
                                   : std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<Scalar>(p)))));
  f.trees.reserve(static_cast<std::size_t>(params.n_trees));
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng(splitmix(params.seed * 1000003ULL + static_cast<std::uint64_t>(t)));
    for (auto& i : idx) i = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));
    Builder b{X, y, params, mtry, rng, {}, {}};
    b.build(idx, 0, idx.size(), 0);
    f.trees.push_back(std::move(b.tree));
  }
  return f;
}

}  // namespace credsurr
