#pragma once

#include "credsurr/types.hpp"

#include <cstdint>
#include <vector>

namespace credsurr {

struct ForestParams {
  int n_trees = 200;
  int max_depth = 8;
  int min_leaf = 5;
  // features tried per split; 0 means floor(sqrt(p)), at least 1
  int mtry = 0;
  std::uint64_t seed = 0;
};

// Flat regression tree. Leaves have feature == -1.
struct Tree {
  std::vector<int> feature;
  std::vector<Scalar> threshold;  // go left when x <= threshold
  std::vector<int> left;
  std::vector<int> right;
  std::vector<Scalar> value;

  Scalar predict(const Scalar* x) const;
};

struct Forest {
  ForestParams params;
  int n_features = 0;
  std::vector<Tree> trees;

  Scalar predict(ConstRef<Vector> x) const;
  Vector predict_rows(const Matrix& X) const;  // one row per sample
};

// Bagged CART, squared error splits. Deterministic given params.seed.
Forest fit_forest(const Matrix& X, ConstRef<Vector> y, const ForestParams& params);

}  // namespace credsurr
