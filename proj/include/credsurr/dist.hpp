#pragma once

// Mean-parameterized model distributions and latent priors.
//
// Every family is addressed through its mean so that a link function can
// scale it per policyholder and per period. Parameter vectors are laid out
// as [mean, shape...]:
//
//   family        params              notes
//   Poisson       [m]
//   NegBinom      [m, r]              var = m + m^2/r
//   Logarithmic   [m]                 log-series shifted to start at 0, p solved from m
//   GammaCount    [rate, alpha]       gamma(alpha, alpha*rate) inter-arrival times over a
//                                     unit window; the mean equals rate only for alpha = 1
//   GenPoisson    [m, lambda]         Consul's form, theta = m (1 - lambda), 0 <= lambda < 1
//   Gamma         [m, k]              scale = m / k
//   LogNormal     [m, sigma]          log-mean = log m - sigma^2 / 2
//   LogLogistic   [m, beta]           scale = m sin(pi/beta) beta / pi, beta > 1
//   InvGaussian   [m, lambda]         var = m^3 / lambda
//   ParetoLomax   [m, alpha]          scale = m (alpha - 1), alpha > 1
//   Burr          [m, c, k]           type XII, scale solved from m, c k > 1
//   Weibull       [m, k]              scale = m / Gamma(1 + 1/k)
//
// Discrete support is {0, 1, ...}. Continuous log-densities are defined for
// y > 0 and log-survivals for y >= 0. All log values are clamped below at
// kLogFloor.

#include "credsurr/types.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace credsurr {

enum class Family {
  Poisson,
  NegBinom,
  Logarithmic,
  GammaCount,
  GenPoisson,
  Gamma,
  LogNormal,
  LogLogistic,
  InvGaussian,
  ParetoLomax,
  Burr,
  Weibull,
};

inline constexpr Family kAllFamilies[] = {
    Family::Poisson,     Family::NegBinom,    Family::Logarithmic, Family::GammaCount,
    Family::GenPoisson,  Family::Gamma,       Family::LogNormal,   Family::LogLogistic,
    Family::InvGaussian, Family::ParetoLomax, Family::Burr,        Family::Weibull,
};

bool is_discrete(Family f);
std::string_view family_name(Family f);
Family parse_family(std::string_view name);
// Number of entries in the params vector, mean included.
int param_count(Family f);

// A validated member of the catalog.
struct Distribution {
  Family family = Family::Poisson;
  Scalar mean = 1.0;
  Scalar shape = 0.0;
  Scalar shape2 = 0.0;
};

// Validates and packs [mean, shape...]. Throws ParameterError.
Distribution make_distribution(Family f, std::span<const Scalar> params);
void validate(const Distribution& d);

// Copy with a different mean (the link applied to the base params).
inline Distribution with_mean(Distribution d, Scalar mean) {
  d.mean = mean;
  return d;
}

Scalar log_density(const Distribution& d, Scalar y);
Scalar log_survival(const Distribution& d, Scalar y);
// Continuous families only (priors, bounds); discrete throws UnsupportedError.
Scalar quantile(const Distribution& d, Scalar p);
Scalar sample(const Distribution& d, Rng& rng);

inline Scalar log_density(Family f, std::span<const Scalar> params, Scalar y) {
  return log_density(make_distribution(f, params), y);
}
inline Scalar log_survival(Family f, std::span<const Scalar> params, Scalar y) {
  return log_survival(make_distribution(f, params), y);
}
inline Scalar sample(Family f, std::span<const Scalar> params, Rng& rng) {
  return sample(make_distribution(f, params), rng);
}

// Weight functions pi(y) of the premium principles.
struct WeightFn {
  enum class Kind { Identity, Square, Exp, YExp };
  Kind kind = Kind::Identity;
  Scalar alpha = 0.0;

  static WeightFn identity() { return {Kind::Identity, 0.0}; }
  static WeightFn square() { return {Kind::Square, 0.0}; }
  static WeightFn exp(Scalar a) { return {Kind::Exp, a}; }
  static WeightFn y_exp(Scalar a) { return {Kind::YExp, a}; }
};

// E[pi(Y)] under d. Closed form where available, otherwise truncated
// summation (discrete) or adaptive quadrature (continuous) at 1e-8 relative.
// Throws DivergenceError when the expectation does not exist.
Scalar conditional_expectation(const Distribution& d, const WeightFn& w);

// Same quantity by brute force only; used to cross-check closed forms.
Scalar numeric_expectation(const Distribution& d, const WeightFn& w);

// Variance of the family at its current mean (may diverge).
Scalar variance(const Distribution& d);

struct PriorSpec {
  Distribution dist;
  std::optional<Scalar> mean_constraint;
};

bool is_prior_family(Family f);
// Mean/variance parameterization shared by all prior families.
PriorSpec make_prior(Family f, Scalar mean, Scalar var, std::optional<Scalar> mean_constraint = {});
void validate(const PriorSpec& p);

enum class Link {
  MultiplicativeFrailty,  // mean = omega * mu * theta, theta > 0
  LogAdditive,            // mean = omega * mu * exp(theta), mu = exp(alpha)
};

std::string_view link_name(Link l);
Link parse_link(std::string_view name);

// One Bayesian credibility model. `dims[d]` carries the family and its fixed
// shape parameters; its mean field is a placeholder replaced by the link.
struct ModelSpec {
  std::vector<Distribution> dims;
  Link link = Link::MultiplicativeFrailty;
  PriorSpec prior;

  int D() const { return static_cast<int>(dims.size()); }
};

void validate(const ModelSpec& m);

// Conditional mean of dimension d for a policyholder mean mu and exposure.
inline Scalar link_mean(const ModelSpec& m, Scalar mu, Scalar exposure, Scalar theta) {
  return m.link == Link::LogAdditive ? exposure * mu * std::exp(theta) : exposure * mu * theta;
}

// Distribution of dimension d given theta, mu and exposure.
inline Distribution conditional_dist(const ModelSpec& m, int d, Scalar mu, Scalar exposure, Scalar theta) {
  return with_mean(m.dims[static_cast<std::size_t>(d)], link_mean(m, mu, exposure, theta));
}

}  // namespace credsurr
