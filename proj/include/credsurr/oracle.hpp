#pragma once

#include "credsurr/dist.hpp"
#include "credsurr/portfolio.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace credsurr {

// Draws from the prior shared by every policyholder of a portfolio.
struct PriorDraws {
  Vector theta;
  std::uint64_t seed = 0;
  PriorSpec prior;

  Index K() const { return theta.size(); }
};

PriorDraws draw_prior(const PriorSpec& prior, Index K, std::uint64_t seed);
// K copies of theta0, for degenerate-prior checks.
PriorDraws point_mass_draws(Scalar theta0, Index K);

enum class PrincipleKind { Net, ExpectedValue, Utility, StdDev, Variance, Exponential, Esscher };

struct PremiumPrinciple {
  PrincipleKind kind = PrincipleKind::Net;
  Scalar alpha = 0.0;
};

std::string_view principle_name(PrincipleKind k);
PrincipleKind parse_principle(std::string_view name);
void validate(const PremiumPrinciple& p);

struct PremiumEstimate {
  Scalar value = 0.0;
  Scalar std_error = 0.0;
  Scalar ess = 0.0;
};

// Conditional log-likelihood of the whole history at theta.
Scalar log_likelihood(const Policyholder& ph, const ModelSpec& model, Scalar theta);
// Same, for every draw.
Vector log_likelihoods(const Policyholder& ph, const ModelSpec& model, const PriorDraws& draws);

// E[pi(Y) | theta] for the next full period, Y summed over dimensions.
Scalar conditional_sum_expectation(const ModelSpec& model, ConstRef<Vector> mu, Scalar theta, const WeightFn& w);

// Self-normalized estimate of sum h_k exp(l_k) / sum exp(l_k), in log space.
PremiumEstimate self_normalized_estimate(ConstRef<Vector> log_w, ConstRef<Vector> h);

PremiumEstimate predictive_expectation(const Policyholder& ph, const ModelSpec& model, const PriorDraws& draws,
                                       const WeightFn& w);
PremiumEstimate premium(const Policyholder& ph, const ModelSpec& model, const PriorDraws& draws,
                        const PremiumPrinciple& principle);
// Premium with no experience: uniform weights over the draws.
PremiumEstimate manual_premium(const Policyholder& ph, const ModelSpec& model, const PriorDraws& draws,
                               const PremiumPrinciple& principle);

// Same computations starting from given log-weights (length K).
PremiumEstimate premium_from_log_weights(ConstRef<Vector> log_w, const Policyholder& ph, const ModelSpec& model,
                                         const PriorDraws& draws, const PremiumPrinciple& principle);

// Poisson-Gamma(a, rate b) frailty with unit exposures.
Scalar conjugate_net_premium(Scalar a, Scalar b, Scalar mu, int n, Scalar sum_y);
// The same value written as Z * ybar + (1 - Z) * mu * a / b, n >= 1.
Scalar conjugate_net_premium_credibility_form(Scalar a, Scalar b, Scalar mu, int n, Scalar sum_y);

// Whole-portfolio evaluation, one slot per member regardless of scheduling.
std::vector<PremiumEstimate> premiums(const Portfolio& p, const ModelSpec& model, const PriorDraws& draws,
                                      const PremiumPrinciple& principle, int threads);
std::vector<PremiumEstimate> manual_premiums(const Portfolio& p, const ModelSpec& model, const PriorDraws& draws,
                                             const PremiumPrinciple& principle, int threads);

}  // namespace credsurr
