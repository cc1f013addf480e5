#pragma once

#include "credsurr/bspline.hpp"
#include "credsurr/credindex.hpp"
#include "credsurr/dist.hpp"
#include "credsurr/forest.hpp"
#include "credsurr/portfolio.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace credsurr {

enum class GForm {
  RatingFactorAdditive,  // sum_d g_d(index_d) + sum_d g(n_d)
  Unstructured,          // tensor basis over index_d, n_d and the log manual premium
};

std::string_view gform_name(GForm f);
GForm parse_gform(std::string_view s);

// Raw g inputs: [index_1..index_D, n_1..n_D, log manual].
Vector g_inputs(const IndexValue& idx, Scalar manual);
std::vector<std::string> g_input_names(int D);

struct GComponent {
  GForm form = GForm::RatingFactorAdditive;
  int n_inputs = 0;                 // length of the raw input vector
  std::vector<int> used;            // raw inputs that carry a basis
  std::vector<BSplineBasis> bases;  // aligned with `used`
  Vector coef;
  Scalar lambda = 1e-4;
  Scalar smoothing = 0.0;              // absolute curvature weights actually used
  Scalar smoothing_interaction = 0.0;  // tensor cross terms
  // g is clamped to this range, the span of training fits widened to hold 0
  Scalar range_lo = -std::numeric_limits<Scalar>::infinity();
  Scalar range_hi = std::numeric_limits<Scalar>::infinity();

  int size() const { return static_cast<int>(coef.size()); }
};

// Design row for one raw input vector. Returns true if any input was clamped.
bool g_design_row(const GComponent& g, ConstRef<Vector> x, Eigen::Ref<Vector> row);
Scalar eval_g(const GComponent& g, ConstRef<Vector> x, bool* clamped = nullptr);

struct GFitOptions {
  int interior_knots = 8;
  int degree = 3;
  // Weight of the curvature penalty (second divided differences of the
  // coefficients over the Greville abscissae; linear functions are free),
  // relative to trace(BᵀB)/trace(P). Tensor fits add a penalty on mixed
  // first differences with its own weight. Negative selects both by GCV.
  Scalar smoothing = -1.0;
  // GCV picks the smoothest fit scoring within this factor of the minimum
  Scalar gcv_tolerance = 0.1;
};

// Penalized least squares of y on the basis built from the rows of X.
GComponent fit_g(ConstRef<Vector> y, const Matrix& X, GForm form, Scalar lambda, const GFitOptions& opt = {});

struct HComponent {
  Forest forest;
  std::vector<std::string> features;  // log_mu_<d> or attr_<name>
};

std::vector<std::string> default_h_features(int D);
Vector h_features(const Policyholder& ph, const std::vector<std::string>& names,
                  const std::vector<std::string>& attr_names);

struct Metrics {
  Scalar R2 = 0.0;
  Scalar ME = 0.0;
  Scalar MAE = 0.0;
  Scalar MAPE = 0.0;
  Scalar MSE = 0.0;
  Index n = 0;
};

// Premium-scale metrics of fitted values against target premiums.
Metrics compute_metrics(ConstRef<Vector> target, ConstRef<Vector> fitted);

// Latent domain searched for theta-tilde.
std::pair<Scalar, Scalar> default_theta_bounds(const ModelSpec& model);

struct TrainingRow {
  const Policyholder* ph = nullptr;
  Scalar premium = 0.0;
  Scalar manual = 0.0;
};

// argmin over [lo, hi] of (premium - manual exp(g(index(theta), n)))^2.
// Coarse grid then Brent to 1e-6; a flat objective returns the midpoint.
Scalar tune_theta(const TrainingRow& row, const ModelSpec& model, const GComponent& g, std::pair<Scalar, Scalar> bounds,
                  int grid_points = 41);
// Same search for an arbitrary objective; exposed for tests.
Scalar minimize_bounded(const std::function<Scalar(Scalar)>& f, Scalar lo, Scalar hi, int grid_points = 41);

struct SurrogateConfig {
  GForm form = GForm::Unstructured;
  Scalar lambda = 1e-4;
  GFitOptions spline;
  int max_iter = 20;
  Scalar tol = 1e-4;
  int grid_points = 41;
  // initial theta levels tried (the latent centre first, then an even grid
  // over the bounds); the run with the lowest training MSE is kept
  int starts = 5;
  ForestParams forest;
  std::vector<std::string> features;  // empty: log mu per dimension
  std::optional<std::pair<Scalar, Scalar>> theta_bounds;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct SurrogateModel {
  ModelSpec model;
  GComponent g;
  HComponent h;
  std::vector<std::string> attr_names;  // portfolio attribute order used for features
  Scalar theta_lo = 0.0;
  Scalar theta_hi = 1.0;
  Metrics train;
  std::optional<Metrics> test;
  int iterations_used = 0;
  bool converged = false;
  std::vector<Scalar> mse_history;  // premium-scale MSE of each accepted iterate
  std::vector<std::string> train_ids;
  Vector theta_train;  // theta-tilde of the training policyholders
  std::uint64_t seed = 0;
};

// Alternating fit of g and h. Rows with no observed period are skipped.
SurrogateModel fit_surrogate(const std::vector<TrainingRow>& rows, const ModelSpec& model,
                             const std::vector<std::string>& attr_names, const SurrogateConfig& cfg);

struct Prediction {
  Scalar theta_tilde = 0.0;
  Scalar factor = 1.0;
  Scalar premium = 0.0;
  bool clamped = false;
};

Prediction predict(const SurrogateModel& m, const Policyholder& ph, Scalar manual);
// manual * exp(g(index(h(features)), n)); exactly manual when n = 0
Scalar predict_premium(const SurrogateModel& m, const Policyholder& ph, Scalar manual);
std::vector<Prediction> predict_all(const SurrogateModel& m, const Portfolio& p, const std::vector<Scalar>& manuals,
                                    int threads);

Metrics assess(const SurrogateModel& m, const std::vector<TrainingRow>& holdout);

std::string surrogate_to_json(const SurrogateModel& m);
SurrogateModel surrogate_from_json(std::string_view text);
void save_surrogate(const SurrogateModel& m, const std::string& path);
SurrogateModel load_surrogate(const std::string& path);

}  // namespace credsurr
