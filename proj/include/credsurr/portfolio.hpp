#pragma once

#include "credsurr/dist.hpp"
#include "credsurr/types.hpp"

#include <string>
#include <vector>

namespace credsurr {

enum class Censor { Exact, RightCensored, Missing };

std::string_view censor_name(Censor c);  // exact / rcens / missing
Censor parse_censor(std::string_view s);

struct Observation {
  int period = 1;  // >= 1
  int dim = 1;     // 1-based, in [1, D]
  Scalar value = 0.0;
  Scalar exposure = 1.0;  // in (0, 1]
  Censor censor = Censor::Exact;

  bool operator==(const Observation&) const = default;
};

struct Policyholder {
  std::string id;
  Vector mu;  // fitted means per dimension, covariate effects folded in
  std::vector<Observation> history;  // ordered by (period, dim)
  VectorI n_per_dim;                 // non-missing periods per dimension
  std::vector<std::string> attrs;    // aligned with Portfolio::attr_names

  int D() const { return static_cast<int>(mu.size()); }
  int max_period() const { return history.empty() ? 0 : history.back().period; }
  // total count of non-missing observations
  int n_total() const { return n_per_dim.sum(); }
};

bool operator==(const Policyholder& a, const Policyholder& b);

struct Portfolio {
  int D = 1;
  std::vector<std::string> attr_names;  // without the attr_ prefix
  std::vector<Policyholder> members;

  std::size_t size() const { return members.size(); }
  bool operator==(const Portfolio&) const = default;
};

Policyholder make_policyholder(std::string id, Vector mu, std::vector<std::string> attrs = {});

// Returns a copy with obs appended. The period must equal the current max
// period (another dimension) or max + 1; duplicates of (period, dim) and gaps
// raise SequencingError.
Policyholder append_observation(const Policyholder& ph, const Observation& obs);
// In-place variant used by the loaders and generators.
void append_observation_inplace(Policyholder& ph, const Observation& obs);

// Recount of n_per_dim from the history.
VectorI count_observed(const Policyholder& ph);

// Checks invariants, and support of every value when a model is given.
void validate(const Portfolio& p);
void validate(const Portfolio& p, const ModelSpec& model);

std::string portfolio_to_csv(const Portfolio& p);
Portfolio portfolio_from_csv(std::string_view text, const std::string& source, const ModelSpec* model);

Portfolio load_portfolio(const std::string& path, const ModelSpec& model);
// Loads without model checks; D comes from the mu_ columns.
Portfolio load_portfolio(const std::string& path);
void save_portfolio(const Portfolio& p, const std::string& path);

// Per-dimension sums used for balancing and for standardized frequency.
Vector observed_claims(const Policyholder& ph);   // sum of exact/censored values per dim
Vector expected_claims(const Policyholder& ph);   // sum of exposure * mu per observed period, per dim
// observed / expected per dim; NaN where nothing was observed
Vector standardized_frequency(const Policyholder& ph);

// Value of an attribute as a number; NaN when absent or non-numeric.
Scalar numeric_attr(const Portfolio& p, const Policyholder& ph, std::string_view name);

}  // namespace credsurr
