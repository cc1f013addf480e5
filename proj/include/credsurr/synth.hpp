#pragma once

#include "credsurr/balance.hpp"
#include "credsurr/oracle.hpp"
#include "credsurr/portfolio.hpp"
#include "credsurr/surrogate.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace credsurr {

struct Scenario {
  ModelSpec model;
  std::vector<PremiumPrinciple> principles;
  Index N = 1000;
  int n = 5;
  // systematic effect alpha_d ~ Normal(mean, sd) per dimension
  std::vector<std::pair<Scalar, Scalar>> alpha_dist;
  std::uint64_t seed = 0;
};

void validate(const Scenario& sc);

// Default shape parameters per family (the mean comes from the link).
std::vector<Scalar> default_shape(Family f);
// Normal(log 0.3, 0.5^2) for counts, Normal(log 5, 0.5^2) for amounts.
std::pair<Scalar, Scalar> default_alpha_dist(Family f);
// Single-dimension scenario with frailty link, prior mean 1 and variance 0.58.
Scenario default_scenario(Family model_family, Family prior_family, Index N, int n, std::uint64_t seed);

struct SynthPortfolio {
  Portfolio portfolio;
  Matrix alpha;  // N x D, hidden
  Vector theta;  // N, hidden
};

// mu_id = exp(alpha_id); observations drawn with mean link(mu, theta_i).
SynthPortfolio generate_portfolio(const Scenario& sc);

struct StudyConfig {
  Index K = 5000;
  Scalar fraction = 0.05;
  // share of the sub-portfolio held out; 0 trains on all of it and tests
  // on the policyholders left out of the sample
  Scalar test_fraction = 0.0;
  std::vector<std::string> balance_vars;  // empty: defaults
  SurrogateConfig surrogate;
  int threads = 1;
  std::uint64_t seed = 0;
};

struct StudyRow {
  std::string model;
  std::string prior;
  std::string principle;
  std::string status = "ok";  // ok, divergent, or error text
  Scalar R2_train = 0.0;
  Scalar R2_test = 0.0;
  Scalar R2_full = 0.0;
  Index M = 0;
  Index N = 0;
  Index K = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

// Seeded train/test split of positions [0, n): returns (train, test).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_test(std::size_t n, Scalar test_fraction,
                                                                               std::uint64_t seed);

std::vector<StudyRow> run_study(const std::vector<Scenario>& scenarios, const StudyConfig& cfg);
std::string study_to_csv(const std::vector<StudyRow>& rows);
std::string study_table(const std::vector<StudyRow>& rows);

}  // namespace credsurr
