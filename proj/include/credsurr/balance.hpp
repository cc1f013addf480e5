#pragma once

#include "credsurr/portfolio.hpp"
#include "credsurr/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace credsurr {

struct BalanceProblem {
  Matrix X;   // N x p balancing variables, first column usually pi itself
  Vector pi;  // inclusion probabilities in (0, 1]
  std::uint64_t seed = 0;
};

struct SampleResult {
  VectorI indicator;
  Index achieved_size = 0;
  Vector balance_gaps;  // (HT total - total) / |total| per column of X
};

void validate(const BalanceProblem& problem);

// Flight phase of the cube method. Returns pi* with Aᵀpi* = Aᵀpi for the
// Horvitz-Thompson matrix A = X / pi (row-wise); at most p entries of pi*
// stay fractional.
Vector flight_phase(const BalanceProblem& problem);

// Landing by suppression of balancing columns, last column first.
SampleResult landing_phase(const BalanceProblem& problem, const Vector& pi_star);

// Convenience: flight then landing.
SampleResult cube_sample(const BalanceProblem& problem);

// (sum_i s_i X_ij / pi_i - sum_i X_ij) / |sum_i X_ij|, absolute when the
// total is zero.
Vector ht_gaps(const Matrix& X, const Vector& pi, const VectorI& indicator);

// Names understood by select_subportfolio: claims_<d> (average observed
// claim per observed period), mu_<d>, n_<d>, and any numeric attribute
// attr_<name>.
std::vector<std::string> default_balance_vars(int D);
Matrix balance_matrix(const Portfolio& p, const std::vector<std::string>& vars);

struct Subportfolio {
  std::vector<std::string> ids;
  std::vector<std::size_t> members;  // positions in the portfolio
  SampleResult result;
  std::vector<std::string> columns;  // "pi" then the balancing variables
};

Subportfolio select_subportfolio(const Portfolio& p, Scalar fraction, const std::vector<std::string>& balance_vars,
                                 std::uint64_t seed);

}  // namespace credsurr
