#include "credsurr/dist.hpp"

#include "credsurr/error.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/math/distributions/inverse_gaussian.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace credsurr {

namespace {

constexpr Scalar kPi = boost::math::constants::pi<Scalar>();
constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

struct FamilyInfo {
  Family family;
  std::string_view name;
  bool discrete;
  int n_params;
};

constexpr std::array<FamilyInfo, 12> kFamilyTable = {{
    {Family::Poisson, "Poisson", true, 1},
    {Family::NegBinom, "NegBinom", true, 2},
    {Family::Logarithmic, "Logarithmic", true, 1},
    {Family::GammaCount, "GammaCount", true, 2},
    {Family::GenPoisson, "GenPoisson", true, 2},
    {Family::Gamma, "Gamma", false, 2},
    {Family::LogNormal, "LogNormal", false, 2},
    {Family::LogLogistic, "LogLogistic", false, 2},
    {Family::InvGaussian, "InvGaussian", false, 2},
    {Family::ParetoLomax, "ParetoLomax", false, 2},
    {Family::Burr, "Burr", false, 3},
    {Family::Weibull, "Weibull", false, 2},
}};

const FamilyInfo& info(Family f) { return kFamilyTable[static_cast<std::size_t>(f)]; }

Scalar floor_log(Scalar v) { return (v < kLogFloor || std::isnan(v)) ? kLogFloor : v; }

std::string describe(const Distribution& d) {
  std::ostringstream os;
  os << family_name(d.family) << "(mean=" << d.mean << ", shape=" << d.shape;
  if (param_count(d.family) > 2) os << ", shape2=" << d.shape2;
  os << ")";
  return os.str();
}

[[noreturn]] void bad_param(const Distribution& d, const char* why) {
  throw ParameterError("invalid parameters " + describe(d) + ": " + why);
}

// Log-series: t = -log(1 - p) solves expm1(t)/t = m + 1.
Scalar logarithmic_t(Scalar m) {
  const Scalar target = m + 1.0;
  auto f = [target](Scalar t) { return std::expm1(t) / t - target; };
  Scalar lo = 1e-12;
  Scalar hi = 1.0;
  while (f(hi) < 0.0) hi *= 2.0;
  boost::uintmax_t iters = 200;
  auto r = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<Scalar>(52),
                                             iters);
  return 0.5 * (r.first + r.second);
}

Scalar burr_scale(const Distribution& d) {
  const Scalar c = d.shape, k = d.shape2;
  return d.mean / (k * boost::math::beta(k - 1.0 / c, 1.0 + 1.0 / c));
}
Scalar loglogistic_scale(const Distribution& d) {
  return d.mean * std::sin(kPi / d.shape) * d.shape / kPi;
}
Scalar weibull_scale(const Distribution& d) { return d.mean / std::tgamma(1.0 + 1.0 / d.shape); }
Scalar pareto_scale(const Distribution& d) { return d.mean * (d.shape - 1.0); }
Scalar lognormal_mu(const Distribution& d) { return std::log(d.mean) - 0.5 * d.shape * d.shape; }

void check_support(const Distribution& d, Scalar y, bool allow_zero_continuous) {
  if (!std::isfinite(y)) throw DomainError("non-finite observation for " + describe(d));
  if (info(d.family).discrete) {
    if (y < 0.0 || y != std::floor(y)) {
      throw DomainError("observation " + std::to_string(y) + " outside the support of " + describe(d));
    }
  } else if (y < 0.0 || (y == 0.0 && !allow_zero_continuous)) {
    throw DomainError("observation " + std::to_string(y) + " outside the support of " + describe(d));
  }
}

Scalar gammacount_log_pmf(const Distribution& d, Scalar y) {
  using boost::math::gamma_p;
  using boost::math::gamma_q;
  const Scalar a = d.shape, beta = a * d.mean;
  const Scalar upper_p = (y == 0.0) ? 1.0 : gamma_p(a * y, beta);
  Scalar mass;
  if (upper_p > 0.5) {
    const Scalar q_lo = (y == 0.0) ? 0.0 : gamma_q(a * y, beta);
    mass = gamma_q(a * (y + 1.0), beta) - q_lo;
  } else {
    mass = upper_p - gamma_p(a * (y + 1.0), beta);
  }
  return mass > 0.0 ? std::log(mass) : -kInf;
}

// Unclamped log density; -inf where the mass underflows.
Scalar raw_log_density(const Distribution& d, Scalar y) {
  const Scalar m = d.mean;
  switch (d.family) {
    case Family::Poisson:
      if (m == 0.0) return y == 0.0 ? 0.0 : -kInf;
      return y * std::log(m) - m - std::lgamma(y + 1.0);
    case Family::NegBinom: {
      const Scalar r = d.shape;
      return std::lgamma(y + r) - std::lgamma(r) - std::lgamma(y + 1.0) + r * std::log(r / (r + m)) +
             y * std::log(m / (r + m));
    }
    case Family::Logarithmic: {
      const Scalar t = logarithmic_t(m);
      const Scalar log_p = std::log(-std::expm1(-t));
      return (y + 1.0) * log_p - std::log(y + 1.0) - std::log(t);
    }
    case Family::GammaCount:
      return gammacount_log_pmf(d, y);
    case Family::GenPoisson: {
      const Scalar lam = d.shape, theta = m * (1.0 - lam);
      return std::log(theta) + (y - 1.0) * std::log(theta + lam * y) - theta - lam * y - std::lgamma(y + 1.0);
    }
    case Family::Gamma: {
      const Scalar k = d.shape, s = m / k;
      return (k - 1.0) * std::log(y) - y / s - k * std::log(s) - std::lgamma(k);
    }
    case Family::LogNormal: {
      const Scalar sig = d.shape, z = (std::log(y) - lognormal_mu(d)) / sig;
      return -std::log(y) - std::log(sig) - 0.5 * std::log(2.0 * kPi) - 0.5 * z * z;
    }
    case Family::LogLogistic: {
      const Scalar b = d.shape, a = loglogistic_scale(d), lz = std::log(y / a);
      const Scalar u = b * lz;
      const Scalar softplus = u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
      return std::log(b) - std::log(a) + (b - 1.0) * lz - 2.0 * softplus;
    }
    case Family::InvGaussian: {
      const Scalar lam = d.shape;
      return 0.5 * (std::log(lam) - std::log(2.0 * kPi) - 3.0 * std::log(y)) - lam * (y - m) * (y - m) / (2.0 * m * m * y);
    }
    case Family::ParetoLomax: {
      const Scalar al = d.shape, s = pareto_scale(d);
      return std::log(al) - std::log(s) - (al + 1.0) * std::log1p(y / s);
    }
    case Family::Burr: {
      const Scalar c = d.shape, k = d.shape2, s = burr_scale(d), lz = std::log(y / s);
      return std::log(c) + std::log(k) - std::log(s) + (c - 1.0) * lz - (k + 1.0) * std::log1p(std::exp(c * lz));
    }
    case Family::Weibull: {
      const Scalar k = d.shape, s = weibull_scale(d), lz = std::log(y / s);
      return std::log(k) - std::log(s) + (k - 1.0) * lz - std::exp(k * lz);
    }
  }
  return -kInf;
}

// Discrete P(Y > y) by summation.
Scalar discrete_survival(const Distribution& d, Scalar y) {
  Scalar cdf = 0.0;
  for (Scalar k = 0.0; k <= y; k += 1.0) cdf += std::exp(raw_log_density(d, k));
  if (cdf < 0.5) return 1.0 - cdf;
  // Upper tail summed directly to keep relative precision.
  Scalar tail = 0.0;
  for (Scalar k = y + 1.0;; k += 1.0) {
    const Scalar term = std::exp(raw_log_density(d, k));
    tail += term;
    if (term <= 1e-17 * tail || (term == 0.0 && k > y + 1000.0) || k > y + 1e7) break;
  }
  return tail;
}

Scalar raw_log_survival(const Distribution& d, Scalar y) {
  const Scalar m = d.mean;
  switch (d.family) {
    case Family::Poisson:
      if (m == 0.0) return -kInf;
      return std::log(boost::math::gamma_p(y + 1.0, m));
    case Family::NegBinom: {
      const Scalar r = d.shape, p = r / (r + m);
      return std::log(boost::math::ibetac(r, y + 1.0, p));
    }
    case Family::Logarithmic:
    case Family::GenPoisson:
      return std::log(discrete_survival(d, y));
    case Family::GammaCount:
      return std::log(boost::math::gamma_p(d.shape * (y + 1.0), d.shape * m));
    case Family::Gamma:
      if (y == 0.0) return 0.0;
      return std::log(boost::math::gamma_q(d.shape, y * d.shape / m));
    case Family::LogNormal: {
      if (y == 0.0) return 0.0;
      const Scalar z = (std::log(y) - lognormal_mu(d)) / d.shape;
      return std::log(0.5 * boost::math::erfc(z / std::sqrt(2.0)));
    }
    case Family::LogLogistic:
      if (y == 0.0) return 0.0;
      return -std::log1p(std::pow(y / loglogistic_scale(d), d.shape));
    case Family::InvGaussian: {
      if (y == 0.0) return 0.0;
      boost::math::inverse_gaussian_distribution<Scalar> ig(m, d.shape);
      return std::log(boost::math::cdf(boost::math::complement(ig, y)));
    }
    case Family::ParetoLomax:
      return -d.shape * std::log1p(y / pareto_scale(d));
    case Family::Burr:
      if (y == 0.0) return 0.0;
      return -d.shape2 * std::log1p(std::pow(y / burr_scale(d), d.shape));
    case Family::Weibull:
      return -std::pow(y / weibull_scale(d), d.shape);
  }
  return -kInf;
}

bool mgf_diverges(const Distribution& d, Scalar a) {
  if (a <= 0.0) return false;
  const Scalar m = d.mean;
  switch (d.family) {
    case Family::Poisson:
    case Family::GammaCount:
      return false;
    case Family::NegBinom:
      return (m / (d.shape + m)) * std::exp(a) >= 1.0;
    case Family::Logarithmic:
      return -std::expm1(-logarithmic_t(m)) * std::exp(a) >= 1.0;
    case Family::GenPoisson: {
      const Scalar lam = d.shape;
      if (lam == 0.0) return false;
      return a >= lam - 1.0 - std::log(lam);
    }
    case Family::Gamma:
      return a * m / d.shape >= 1.0;
    case Family::InvGaussian:
      return a > d.shape / (2.0 * m * m);
    case Family::Weibull:
      if (d.shape > 1.0) return false;
      if (d.shape == 1.0) return a * weibull_scale(d) >= 1.0;
      return true;
    case Family::LogNormal:
    case Family::LogLogistic:
    case Family::ParetoLomax:
    case Family::Burr:
      return true;
  }
  return true;
}

[[noreturn]] void diverge(const Distribution& d, const WeightFn& w) {
  std::ostringstream os;
  os << "E[pi(Y)] diverges for " << describe(d) << " at alpha=" << w.alpha;
  throw DivergenceError(os.str());
}

// Raw r-th moment where it has a closed form; nullopt when it diverges.
std::optional<Scalar> continuous_moment2(const Distribution& d) {
  const Scalar m = d.mean;
  switch (d.family) {
    case Family::Gamma:
      return m * m * (1.0 + 1.0 / d.shape);
    case Family::LogNormal:
      return m * m * std::exp(d.shape * d.shape);
    case Family::LogLogistic: {
      const Scalar b = d.shape;
      if (b <= 2.0) return std::nullopt;
      const Scalar a = loglogistic_scale(d);
      return a * a * (2.0 * kPi / b) / std::sin(2.0 * kPi / b);
    }
    case Family::InvGaussian:
      return m * m + m * m * m / d.shape;
    case Family::ParetoLomax: {
      const Scalar al = d.shape;
      if (al <= 2.0) return std::nullopt;
      const Scalar s = pareto_scale(d);
      return 2.0 * s * s / ((al - 1.0) * (al - 2.0));
    }
    case Family::Burr: {
      const Scalar c = d.shape, k = d.shape2;
      if (c * k <= 2.0) return std::nullopt;
      const Scalar s = burr_scale(d);
      return s * s * k * boost::math::beta(k - 2.0 / c, 1.0 + 2.0 / c);
    }
    case Family::Weibull: {
      const Scalar s = weibull_scale(d);
      return s * s * std::tgamma(1.0 + 2.0 / d.shape);
    }
    default:
      return std::nullopt;
  }
}

Scalar numeric_discrete(const Distribution& d, const WeightFn& w) {
  Scalar mass = 0.0, sum = 0.0;
  const Scalar guard = std::max(1e6, 1000.0 * d.mean);
  for (Scalar y = 0.0;; y += 1.0) {
    const Scalar ld = raw_log_density(d, y);
    const Scalar p = std::exp(ld);
    mass += p;
    // Combine in log space so exp(alpha y) does not overflow on its own.
    Scalar term = 0.0;
    if (ld > -kInf) {
      switch (w.kind) {
        case WeightFn::Kind::Identity:
          term = y * p;
          break;
        case WeightFn::Kind::Square:
          term = y * y * p;
          break;
        case WeightFn::Kind::Exp:
          term = std::exp(ld + w.alpha * y);
          break;
        case WeightFn::Kind::YExp:
          term = y * std::exp(ld + w.alpha * y);
          break;
      }
    }
    sum += term;
    if (mass >= 1.0 - 1e-12 && y > d.mean && std::abs(term) <= 1e-14 * std::abs(sum)) break;
    if (y > guard) diverge(d, w);
  }
  return sum;
}

Scalar numeric_continuous(const Distribution& d, const WeightFn& w) {
  auto integrand = [&](Scalar y) {
    if (y <= 0.0) return 0.0;
    const Scalar ld = raw_log_density(d, y);
    if (!(ld > -kInf)) return 0.0;
    switch (w.kind) {
      case WeightFn::Kind::Identity:
        return y * std::exp(ld);
      case WeightFn::Kind::Square:
        return y * y * std::exp(ld);
      case WeightFn::Kind::Exp:
        return std::exp(ld + w.alpha * y);
      case WeightFn::Kind::YExp:
        return y * std::exp(ld + w.alpha * y);
    }
    return 0.0;
  };
  const Scalar split = d.mean;
  boost::math::quadrature::tanh_sinh<Scalar> head;
  boost::math::quadrature::exp_sinh<Scalar> tail;
  const Scalar a = head.integrate(integrand, 0.0, split, 1e-11);
  const Scalar b = tail.integrate([&](Scalar u) { return integrand(split + u); }, 0.0, kInf, 1e-11);
  const Scalar v = a + b;
  if (!std::isfinite(v)) diverge(d, w);
  return v;
}

}  // namespace

bool is_discrete(Family f) { return info(f).discrete; }
std::string_view family_name(Family f) { return info(f).name; }
int param_count(Family f) { return info(f).n_params; }

Family parse_family(std::string_view name) {
  for (const auto& fi : kFamilyTable) {
    if (fi.name == name) return fi.family;
  }
  // a few common aliases
  if (name == "Pareto") return Family::ParetoLomax;
  if (name == "Lognormal") return Family::LogNormal;
  if (name == "InverseGaussian" || name == "InvGauss") return Family::InvGaussian;
  if (name == "NegativeBinomial") return Family::NegBinom;
  throw ConfigError("unknown distribution family '" + std::string(name) + "'");
}

void validate(const Distribution& d) {
  const Scalar m = d.mean;
  if (!std::isfinite(m) || m < 0.0) bad_param(d, "mean must be finite and non-negative");
  if (m == 0.0 && d.family != Family::Poisson) bad_param(d, "mean must be positive");
  switch (d.family) {
    case Family::Poisson:
    case Family::Logarithmic:
      break;
    case Family::NegBinom:
    case Family::GammaCount:
    case Family::Gamma:
    case Family::LogNormal:
    case Family::InvGaussian:
    case Family::Weibull:
      if (!(d.shape > 0.0) || !std::isfinite(d.shape)) bad_param(d, "shape must be positive");
      break;
    case Family::GenPoisson:
      if (!(d.shape >= 0.0 && d.shape < 1.0)) bad_param(d, "lambda must lie in [0, 1)");
      break;
    case Family::LogLogistic:
    case Family::ParetoLomax:
      if (!(d.shape > 1.0) || !std::isfinite(d.shape)) bad_param(d, "shape must exceed 1 for a finite mean");
      break;
    case Family::Burr:
      if (!(d.shape > 0.0 && d.shape2 > 0.0)) bad_param(d, "shapes must be positive");
      if (!(d.shape * d.shape2 > 1.0)) bad_param(d, "c*k must exceed 1 for a finite mean");
      break;
  }
}

Distribution make_distribution(Family f, std::span<const Scalar> params) {
  const int n = param_count(f);
  if (static_cast<int>(params.size()) != n) {
    throw ParameterError(std::string(family_name(f)) + " expects " + std::to_string(n) + " parameters, got " +
                         std::to_string(params.size()));
  }
  Distribution d{f, params[0], n > 1 ? params[1] : 0.0, n > 2 ? params[2] : 0.0};
  validate(d);
  return d;
}

Scalar log_density(const Distribution& d, Scalar y) {
  check_support(d, y, false);
  return floor_log(raw_log_density(d, y));
}

Scalar log_survival(const Distribution& d, Scalar y) {
  check_support(d, y, true);
  return floor_log(std::min<Scalar>(0.0, raw_log_survival(d, y)));
}

Scalar quantile(const Distribution& d, Scalar p) {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError("quantile level must lie in (0, 1)");
  switch (d.family) {
    case Family::Gamma:
      return boost::math::gamma_p_inv(d.shape, p) * d.mean / d.shape;
    case Family::LogNormal:
      return std::exp(lognormal_mu(d) + d.shape * std::sqrt(2.0) * boost::math::erf_inv(2.0 * p - 1.0));
    case Family::LogLogistic:
      return loglogistic_scale(d) * std::pow(p / (1.0 - p), 1.0 / d.shape);
    case Family::InvGaussian:
      return boost::math::quantile(boost::math::inverse_gaussian_distribution<Scalar>(d.mean, d.shape), p);
    case Family::ParetoLomax:
      return pareto_scale(d) * std::expm1(-std::log1p(-p) / d.shape);
    case Family::Burr:
      return burr_scale(d) * std::pow(std::expm1(-std::log1p(-p) / d.shape2), 1.0 / d.shape);
    case Family::Weibull:
      return weibull_scale(d) * std::pow(-std::log1p(-p), 1.0 / d.shape);
    default:
      throw UnsupportedError("quantile is only provided for continuous families");
  }
}

Scalar sample(const Distribution& d, Rng& rng) {
  validate(d);
  boost::random::uniform_01<Scalar> unif;
  const Scalar m = d.mean;
  auto inverse_discrete = [&]() {
    const Scalar u = unif(rng);
    Scalar cdf = 0.0;
    for (Scalar y = 0.0;; y += 1.0) {
      cdf += std::exp(raw_log_density(d, y));
      if (u <= cdf || y > 1e7) return y;
    }
  };
  switch (d.family) {
    case Family::Poisson:
      if (m == 0.0) return 0.0;
      return static_cast<Scalar>(boost::random::poisson_distribution<long, Scalar>(m)(rng));
    case Family::NegBinom: {
      const Scalar lam = boost::random::gamma_distribution<Scalar>(d.shape, m / d.shape)(rng);
      if (lam <= 0.0) return 0.0;
      return static_cast<Scalar>(boost::random::poisson_distribution<long, Scalar>(lam)(rng));
    }
    case Family::Logarithmic:
    case Family::GenPoisson:
      return inverse_discrete();
    case Family::GammaCount: {
      boost::random::gamma_distribution<Scalar> gap(d.shape, 1.0 / (d.shape * m));
      Scalar t = 0.0, n = 0.0;
      while (true) {
        t += gap(rng);
        if (t > 1.0) return n;
        n += 1.0;
      }
    }
    case Family::Gamma:
      return boost::random::gamma_distribution<Scalar>(d.shape, m / d.shape)(rng);
    case Family::LogNormal:
      return std::exp(boost::random::normal_distribution<Scalar>(lognormal_mu(d), d.shape)(rng));
    case Family::InvGaussian: {
      const Scalar lam = d.shape;
      const Scalar nu = boost::random::normal_distribution<Scalar>(0.0, 1.0)(rng);
      const Scalar y = nu * nu;
      const Scalar x = m + m * m * y / (2.0 * lam) - (m / (2.0 * lam)) * std::sqrt(4.0 * m * lam * y + m * m * y * y);
      return unif(rng) <= m / (m + x) ? x : m * m / x;
    }
    case Family::LogLogistic:
    case Family::ParetoLomax:
    case Family::Burr:
    case Family::Weibull: {
      Scalar u = unif(rng);
      while (u <= 0.0) u = unif(rng);
      return quantile(d, u);
    }
  }
  return 0.0;
}

Scalar numeric_expectation(const Distribution& d, const WeightFn& w) {
  validate(d);
  if ((w.kind == WeightFn::Kind::Exp || w.kind == WeightFn::Kind::YExp) && mgf_diverges(d, w.alpha)) diverge(d, w);
  return info(d.family).discrete ? numeric_discrete(d, w) : numeric_continuous(d, w);
}

Scalar conditional_expectation(const Distribution& d, const WeightFn& w) {
  const Scalar m = d.mean;
  const Scalar a = w.alpha;
  using K = WeightFn::Kind;
  if ((w.kind == K::Exp || w.kind == K::YExp) && a == 0.0) {
    return w.kind == K::Exp ? 1.0 : conditional_expectation(d, WeightFn::identity());
  }
  if ((w.kind == K::Exp || w.kind == K::YExp) && mgf_diverges(d, a)) diverge(d, w);

  switch (d.family) {
    case Family::Poisson:
      switch (w.kind) {
        case K::Identity:
          return m;
        case K::Square:
          return m + m * m;
        case K::Exp:
          return std::exp(m * std::expm1(a));
        case K::YExp:
          return m * std::exp(a) * std::exp(m * std::expm1(a));
      }
      break;
    case Family::NegBinom: {
      const Scalar r = d.shape;
      switch (w.kind) {
        case K::Identity:
          return m;
        case K::Square:
          return m + m * m / r + m * m;
        case K::Exp:
        case K::YExp: {
          const Scalar q = m / (r + m);
          const Scalar denom = 1.0 - q * std::exp(a);
          const Scalar mgf = std::exp(r * (std::log1p(-q) - std::log1p(-q * std::exp(a))));
          if (w.kind == K::Exp) return mgf;
          return mgf * r * q * std::exp(a) / denom;
        }
      }
      break;
    }
    case Family::Logarithmic: {
      const Scalar t = logarithmic_t(m);
      const Scalar p = -std::expm1(-t);
      switch (w.kind) {
        case K::Identity:
          return m;
        case K::Square: {
          const Scalar el = m + 1.0;
          const Scalar el2 = p / ((1.0 - p) * (1.0 - p) * t);
          return el2 - 2.0 * el + 1.0;
        }
        case K::Exp:
        case K::YExp: {
          const Scalar pe = p * std::exp(a);
          const Scalar mgf = std::exp(-a) * std::log1p(-pe) / (-t);
          if (w.kind == K::Exp) return mgf;
          return -mgf + p / ((1.0 - pe) * t);
        }
      }
      break;
    }
    case Family::GenPoisson: {
      const Scalar lam = d.shape;
      if (w.kind == K::Identity) return m;
      if (w.kind == K::Square) return m / ((1.0 - lam) * (1.0 - lam)) + m * m;
      return numeric_discrete(d, w);
    }
    case Family::GammaCount:
      return numeric_discrete(d, w);
    case Family::Gamma: {
      const Scalar k = d.shape, s = m / k;
      switch (w.kind) {
        case K::Identity:
          return m;
        case K::Square:
          return m * m * (1.0 + 1.0 / k);
        case K::Exp:
          return std::exp(-k * std::log1p(-a * s));
        case K::YExp:
          return k * s * std::exp((-k - 1.0) * std::log1p(-a * s));
      }
      break;
    }
    case Family::InvGaussian: {
      const Scalar lam = d.shape;
      switch (w.kind) {
        case K::Identity:
          return m;
        case K::Square:
          return m * m + m * m * m / lam;
        case K::Exp:
        case K::YExp: {
          const Scalar x = 2.0 * m * m * a / lam;
          const Scalar root = std::sqrt(1.0 - x);
          const Scalar mgf = std::exp((lam / m) * x / (1.0 + root));  // 1 - root without cancellation
          if (w.kind == K::Exp) return mgf;
          return mgf * m / root;
        }
      }
      break;
    }
    default: {
      if (w.kind == K::Identity) return m;
      if (w.kind == K::Square) {
        if (auto v = continuous_moment2(d)) return *v;
        diverge(d, w);
      }
      return numeric_continuous(d, w);
    }
  }
  return numeric_expectation(d, w);
}

Scalar variance(const Distribution& d) {
  const Scalar m1 = conditional_expectation(d, WeightFn::identity());
  return conditional_expectation(d, WeightFn::square()) - m1 * m1;
}

bool is_prior_family(Family f) {
  return f == Family::Gamma || f == Family::LogNormal || f == Family::InvGaussian || f == Family::Weibull;
}

PriorSpec make_prior(Family f, Scalar mean, Scalar var, std::optional<Scalar> mean_constraint) {
  if (!is_prior_family(f)) {
    throw ConfigError("prior family must be one of Gamma, LogNormal, InvGaussian, Weibull; got " +
                      std::string(family_name(f)));
  }
  if (!(mean > 0.0) || !(var > 0.0)) throw ParameterError("prior mean and variance must be positive");
  Distribution d{f, mean, 0.0, 0.0};
  switch (f) {
    case Family::Gamma:
      d.shape = mean * mean / var;
      break;
    case Family::LogNormal:
      d.shape = std::sqrt(std::log1p(var / (mean * mean)));
      break;
    case Family::InvGaussian:
      d.shape = mean * mean * mean / var;
      break;
    case Family::Weibull: {
      const Scalar cv2 = var / (mean * mean);
      auto g = [cv2](Scalar log_k) {
        const Scalar k = std::exp(log_k);
        return std::exp(std::lgamma(1.0 + 2.0 / k) - 2.0 * std::lgamma(1.0 + 1.0 / k)) - 1.0 - cv2;
      };
      boost::uintmax_t iters = 200;
      auto r = boost::math::tools::toms748_solve(g, std::log(0.05), std::log(200.0),
                                                 boost::math::tools::eps_tolerance<Scalar>(50), iters);
      d.shape = std::exp(0.5 * (r.first + r.second));
      break;
    }
    default:
      break;
  }
  PriorSpec p{d, mean_constraint};
  validate(p);
  return p;
}

void validate(const PriorSpec& p) {
  if (!is_prior_family(p.dist.family)) {
    throw ConfigError("prior family must be one of Gamma, LogNormal, InvGaussian, Weibull");
  }
  validate(p.dist);
  if (!p.mean_constraint) return;
  // Mean recomputed from the implied scale/location, not read back.
  const Distribution& d = p.dist;
  Scalar implied = 0.0;
  switch (d.family) {
    case Family::Gamma:
      implied = d.shape * (d.mean / d.shape);
      break;
    case Family::LogNormal:
      implied = std::exp(lognormal_mu(d) + 0.5 * d.shape * d.shape);
      break;
    case Family::InvGaussian:
      implied = boost::math::mean(boost::math::inverse_gaussian_distribution<Scalar>(d.mean, d.shape));
      break;
    case Family::Weibull:
      implied = weibull_scale(d) * std::tgamma(1.0 + 1.0 / d.shape);
      break;
    default:
      break;
  }
  const Scalar c = *p.mean_constraint;
  if (std::abs(implied - c) > 1e-12 * std::max<Scalar>(1.0, std::abs(c))) {
    std::ostringstream os;
    os.precision(17);
    os << "prior mean " << implied << " violates the mean constraint " << c;
    throw ParameterError(os.str());
  }
}

}  // namespace credsurr

namespace credsurr {

std::string_view link_name(Link l) {
  return l == Link::LogAdditive ? "LogAdditive" : "MultiplicativeFrailty";
}

Link parse_link(std::string_view name) {
  if (name == "LogAdditive") return Link::LogAdditive;
  if (name == "MultiplicativeFrailty" || name == "Frailty") return Link::MultiplicativeFrailty;
  throw ConfigError("unknown link '" + std::string(name) + "'");
}

void validate(const ModelSpec& m) {
  if (m.dims.empty()) throw ConfigError("model needs at least one dimension");
  for (const auto& d : m.dims) validate(with_mean(d, 1.0));
  validate(m.prior);
}

}  // namespace credsurr
