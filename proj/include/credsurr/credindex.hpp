#pragma once

#include "credsurr/dist.hpp"
#include "credsurr/portfolio.hpp"

namespace credsurr {

struct IndexValue {
  Scalar total = 0.0;
  Vector per_dim;  // sub-indexes, total is their sum
  Scalar theta_tilde = 0.0;
  VectorI n_per_dim;
};

// Contribution of a single observation at theta: log f, log S or 0.
Scalar index_contribution(const Observation& obs, const Policyholder& ph, const ModelSpec& model, Scalar theta);

IndexValue credibility_index(const Policyholder& ph, const ModelSpec& model, Scalar theta_tilde);

// Exponential dispersion family pieces: f(y) ~ exp((theta S(y) - C(theta)) / phi).
struct EdfSpec {
  enum class S { Identity, Log };
  enum class C {
    Exp,         // Poisson, canonical theta = log mean
    NegLog,      // Gamma, -log(-theta) with theta < 0
    HalfSquare,  // Normal, theta^2 / 2
  };
  S s = S::Identity;
  C c = C::Exp;
  // one per period; a single entry applies to every period
  std::vector<Scalar> phi = {1.0};

  Scalar phi_at(int period) const;
};

void validate(const EdfSpec& e);
Scalar edf_s(const EdfSpec& e, Scalar y);
Scalar edf_c(const EdfSpec& e, Scalar theta);

// sum_j S(Y_j)/phi_j over exact observations
Scalar sufficient_statistic(const Policyholder& ph, const EdfSpec& edf);
// theta * sum_j S(Y_j)/phi_j - sum_j C(theta)/phi_j
Scalar refined_credibility_index(const Policyholder& ph, const EdfSpec& edf, Scalar theta_tilde);

}  // namespace credsurr
