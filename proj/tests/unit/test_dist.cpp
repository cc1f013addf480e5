#include "credsurr/dist.hpp"
#include "credsurr/error.hpp"

#include <doctest.h>

#include <boost/math/distributions/inverse_gaussian.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace credsurr;

namespace {

struct Case {
  Family f;
  std::vector<Scalar> params;
};

// two parameter points per family, away from the edges of the domain
std::vector<Case> grid() {
  return {
      {Family::Poisson, {0.3}},         {Family::Poisson, {2.0}},
      {Family::NegBinom, {0.3, 0.86}},  {Family::NegBinom, {2.0, 3.0}},
      {Family::Logarithmic, {0.5}},     {Family::Logarithmic, {2.0}},
      {Family::GammaCount, {0.7, 1.5}}, {Family::GammaCount, {2.0, 0.8}},
      {Family::GenPoisson, {0.5, 0.2}}, {Family::GenPoisson, {2.0, 0.4}},
      {Family::Gamma, {1.0, 1.0}},      {Family::Gamma, {3.0, 2.0}},
      {Family::LogNormal, {1.0, 0.5}},  {Family::LogNormal, {5.0, 0.8}},
      {Family::LogLogistic, {1.0, 4.0}}, {Family::LogLogistic, {2.0, 3.0}},
      {Family::InvGaussian, {1.0, 1.0 / 0.58}}, {Family::InvGaussian, {2.0, 5.0}},
      {Family::ParetoLomax, {1.0, 3.0}}, {Family::ParetoLomax, {5.0, 2.5}},
      {Family::Burr, {1.0, 2.0, 3.0}},  {Family::Burr, {2.0, 3.0, 1.0}},
      {Family::Weibull, {1.0, 2.0}},    {Family::Weibull, {1.0, 1.5}},
  };
}

Scalar pdf(const Distribution& d, Scalar y) { return std::exp(log_density(d, y)); }

Scalar mass_below(const Distribution& d, Scalar y) {
  if (is_discrete(d.family)) {
    Scalar s = 0.0;
    for (int k = 0; k <= static_cast<int>(y); ++k) s += pdf(d, k);
    return s;
  }
  boost::math::quadrature::gauss_kronrod<Scalar, 61> gk;
  return gk.integrate([&](Scalar t) { return t > 0.0 ? pdf(d, t) : 0.0; }, 0.0, y, 15, 1e-12);
}

}  // namespace

TEST_CASE("log density examples") {
  const Scalar one[] = {1.0};
  CHECK(log_density(Family::Poisson, one, 0.0) == doctest::Approx(-1.0).epsilon(1e-15));
  const Scalar exp1[] = {1.0, 1.0};
  CHECK(log_density(Family::Gamma, exp1, 0.5) == doctest::Approx(-0.5).epsilon(1e-14));
  // frozen from an independent scipy evaluation of nbinom.logpmf(2, 0.86, 0.86/1.16)
  const Scalar nb[] = {0.3, 0.86};
  CHECK(log_density(Family::NegBinom, nb, 2.0) == doctest::Approx(-3.185528091031295).epsilon(1e-12));
  Scalar total = 0.0;
  for (int y = 0; y <= 1000; ++y) total += std::exp(log_density(Family::NegBinom, nb, y));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("support and parameter errors") {
  const Scalar one[] = {1.0};
  CHECK_THROWS_AS(log_density(Family::Poisson, one, 1.5), DomainError);
  CHECK_THROWS_AS(log_density(Family::Poisson, one, -1.0), DomainError);
  const Scalar g[] = {1.0, 2.0};
  CHECK_THROWS_AS(log_density(Family::Gamma, g, -0.1), DomainError);
  const Scalar bad[] = {1.0, -2.0};
  CHECK_THROWS_AS(make_distribution(Family::Gamma, bad), ParameterError);
  const Scalar pareto[] = {1.0, 0.9};  // needs shape > 1 for a finite mean
  CHECK_THROWS_AS(make_distribution(Family::ParetoLomax, pareto), ParameterError);
  CHECK_THROWS_AS(make_distribution(Family::Gamma, one), ParameterError);
}

TEST_CASE("log survival examples") {
  const Scalar exp1[] = {1.0, 1.0};
  CHECK(log_survival(Family::Gamma, exp1, 0.0) == doctest::Approx(0.0));
  const Scalar one[] = {1.0};
  CHECK(log_survival(Family::Poisson, one, 1000.0) == kLogFloor);
  // Weibull(k=2) with mean 1: scale 1/Gamma(1.5), median scale*sqrt(log 2)
  const Scalar w[] = {1.0, 2.0};
  const Scalar median = 0.9394372786996512;
  CHECK(log_survival(Family::Weibull, w, median) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(quantile(make_distribution(Family::Weibull, w), 0.5) == doctest::Approx(median).epsilon(1e-10));
}

TEST_CASE("survival is non-increasing") {
  for (const auto& c : grid()) {
    const Distribution d = make_distribution(c.f, c.params);
    Scalar prev = 0.0;
    for (Scalar y = 0.0; y <= 40.0; y += is_discrete(c.f) ? 1.0 : 0.25) {
      const Scalar s = log_survival(d, y);
      CHECK(s <= prev + 1e-12);
      prev = s;
    }
  }
}

TEST_CASE("densities normalize and match survival") {
  for (const auto& c : grid()) {
    CAPTURE(family_name(c.f));
    CAPTURE(c.params[0]);
    const Distribution d = make_distribution(c.f, c.params);
    Scalar total = 0.0;
    if (is_discrete(c.f)) {
      for (int y = 0; y <= 2000; ++y) total += pdf(d, y);
    } else {
      boost::math::quadrature::exp_sinh<Scalar> es;
      total = es.integrate([&](Scalar t) { return pdf(d, t); }, 1e-10);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    for (Scalar y : {0.0, 1.0, 2.0, 5.0}) {
      const Scalar cdf = mass_below(d, y);
      CHECK(std::exp(log_survival(d, y)) == doctest::Approx(1.0 - cdf).epsilon(1e-6));
    }
  }
}

TEST_CASE("mean consistency") {
  for (const auto& c : grid()) {
    CAPTURE(family_name(c.f));
    const Distribution d = make_distribution(c.f, c.params);
    const Scalar m = conditional_expectation(d, WeightFn::identity());
    if (c.f == Family::GammaCount) continue;  // the mean is not the rate, checked below
    CHECK(m == doctest::Approx(c.params[0]).epsilon(1e-8));
  }
}

TEST_CASE("conditional expectation examples") {
  const Scalar mu = 0.7, a = 0.3;
  const Distribution p = make_distribution(Family::Poisson, std::vector<Scalar>{mu});
  CHECK(conditional_expectation(p, WeightFn::identity()) == doctest::Approx(mu).epsilon(1e-14));
  CHECK(conditional_expectation(p, WeightFn::exp(a)) ==
        doctest::Approx(std::exp(mu * (std::exp(a) - 1.0))).epsilon(1e-12));
  // GammaCount mean: sum over k of P(S_k <= 1), frozen from scipy gammainc
  const Distribution gc = make_distribution(Family::GammaCount, std::vector<Scalar>{0.7, 1.5});
  CHECK(conditional_expectation(gc, WeightFn::identity()) == doctest::Approx(0.5488322108528458).epsilon(1e-8));
  CHECK(log_density(gc, 1.0) == doctest::Approx(-1.026209379673641).epsilon(1e-8));
}

TEST_CASE("closed forms agree with brute force") {
  const std::vector<WeightFn> ws{WeightFn::identity(), WeightFn::square(), WeightFn::exp(0.05),
                                 WeightFn::y_exp(0.05)};
  for (const auto& c : grid()) {
    const Distribution d = make_distribution(c.f, c.params);
    for (const auto& w : ws) {
      CAPTURE(family_name(c.f));
      CAPTURE(static_cast<int>(w.kind));
      Scalar closed = 0.0, brute = 0.0;
      try {
        closed = conditional_expectation(d, w);
      } catch (const DivergenceError&) {
        CHECK_THROWS_AS(numeric_expectation(d, w), DivergenceError);
        continue;
      }
      brute = numeric_expectation(d, w);
      CHECK(closed == doctest::Approx(brute).epsilon(1e-6));
    }
  }
}

TEST_CASE("exponential weight diverges for heavy tails") {
  for (Family f : {Family::LogNormal, Family::ParetoLomax, Family::LogLogistic, Family::Burr}) {
    const auto g = grid();
    const auto c = *std::find_if(g.begin(), g.end(), [&](const Case& x) { return x.f == f; });
    CHECK_THROWS_AS(conditional_expectation(make_distribution(f, c.params), WeightFn::exp(0.05)), DivergenceError);
  }
  const Distribution g = make_distribution(Family::Gamma, std::vector<Scalar>{2.0, 2.0});
  // Gamma MGF exists for alpha < rate = k/m = 1
  CHECK_THROWS_AS(conditional_expectation(g, WeightFn::exp(1.5)), DivergenceError);
  CHECK(conditional_expectation(g, WeightFn::exp(0.5)) == doctest::Approx(std::pow(1.0 - 0.5, -2.0)).epsilon(1e-12));
}

TEST_CASE("sampling moments") {
  Rng rng(17);
  const Distribution zero = make_distribution(Family::Poisson, std::vector<Scalar>{0.0});
  for (int i = 0; i < 100; ++i) CHECK(sample(zero, rng) == 0.0);

  const int n = 1000000;
  const Distribution g = make_distribution(Family::Gamma, std::vector<Scalar>{3.0, 2.0});
  Scalar s = 0.0;
  for (int i = 0; i < n; ++i) s += sample(g, rng);
  const Scalar se = std::sqrt(9.0 / 2.0 / n);
  CHECK(std::abs(s / n - 3.0) < 4.0 * se);

  // inverse Gaussian with mean 1 and variance 0.58
  const Distribution ig = make_distribution(Family::InvGaussian, std::vector<Scalar>{1.0, 1.0 / 0.58});
  std::vector<Scalar> v(n);
  for (auto& x : v) x = sample(ig, rng);
  Scalar m = 0.0, m2 = 0.0;
  for (Scalar x : v) m += x;
  m /= n;
  for (Scalar x : v) m2 += (x - m) * (x - m);
  const Scalar var = m2 / (n - 1);
  // fourth central moment of IG(1, lambda): 15 mu^7/lambda^3 + 3 var^2
  const Scalar lam = 1.0 / 0.58;
  const Scalar mu4 = 15.0 / (lam * lam * lam) + 3.0 * 0.58 * 0.58;
  CHECK(std::abs(var - 0.58) < 4.0 * std::sqrt((mu4 - 0.58 * 0.58) / n));
  const boost::math::inverse_gaussian_distribution<Scalar> ref(1.0, lam);
  CHECK(boost::math::variance(ref) == doctest::Approx(0.58));
}

TEST_CASE("sample means within four standard errors") {
  Rng rng(23);
  const int n = 1000000;
  for (const auto& c : grid()) {
    const Distribution d = make_distribution(c.f, c.params);
    Scalar var = 0.0;
    try {
      var = variance(d);
    } catch (const DivergenceError&) {
      continue;
    }
    if (!std::isfinite(var)) continue;
    const Scalar mean = conditional_expectation(d, WeightFn::identity());
    Scalar s = 0.0;
    for (int i = 0; i < n; ++i) s += sample(d, rng);
    CAPTURE(family_name(c.f));
    CHECK(std::abs(s / n - mean) < 4.0 * std::sqrt(var / n));
  }
}

TEST_CASE("Kolmogorov-Smirnov against the analytic cdf") {
  const int n = 100000;
  const Scalar crit = 1.628 / std::sqrt(static_cast<Scalar>(n));  // 1% level
  const auto g = grid();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto& c = g[k];
    if (is_discrete(c.f)) continue;
    Rng rng(1000 + k);
    const Distribution d = make_distribution(c.f, c.params);
    std::vector<Scalar> v(n);
    for (auto& x : v) x = sample(d, rng);
    std::sort(v.begin(), v.end());
    Scalar D = 0.0;
    for (int i = 0; i < n; ++i) {
      const Scalar F = 1.0 - std::exp(log_survival(d, v[static_cast<std::size_t>(i)]));
      D = std::max({D, std::abs(F - static_cast<Scalar>(i) / n), std::abs(F - static_cast<Scalar>(i + 1) / n)});
    }
    CAPTURE(family_name(c.f));
    CHECK(D < crit);
  }
}

TEST_CASE("priors use the mean-variance parameterization") {
  for (Family f : {Family::Gamma, Family::LogNormal, Family::InvGaussian}) {
    const PriorSpec p = make_prior(f, 1.0, 0.58);
    CHECK(conditional_expectation(p.dist, WeightFn::identity()) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(variance(p.dist) == doctest::Approx(0.58).epsilon(1e-10));
  }
  CHECK(make_prior(Family::LogNormal, 1.0, 0.58).dist.shape == doctest::Approx(0.6763319059743341).epsilon(1e-12));
}

TEST_CASE("names round-trip") {
  for (Family f : kAllFamilies) CHECK(parse_family(family_name(f)) == f);
  CHECK(parse_link(link_name(Link::LogAdditive)) == Link::LogAdditive);
  CHECK_THROWS(parse_family("Cauchy"));
}
