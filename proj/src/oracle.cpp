#include "credsurr/oracle.hpp"

#include "credsurr/error.hpp"
#include "credsurr/util.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace credsurr {

PriorDraws draw_prior(const PriorSpec& prior, Index K, std::uint64_t seed) {
  if (K < 1) throw ConfigError("K must be at least 1");
  validate(prior);
  PriorDraws out;
  out.theta.resize(K);
  out.seed = seed;
  out.prior = prior;
  Rng rng(seed);
  for (Index k = 0; k < K; ++k) out.theta[k] = sample(prior.dist, rng);
  return out;
}

PriorDraws point_mass_draws(Scalar theta0, Index K) {
  PriorDraws out;
  out.theta = Vector::Constant(K, theta0);
  return out;
}

namespace {

struct PrincipleName {
  PrincipleKind kind;
  std::string_view name;
};
constexpr std::array<PrincipleName, 7> kPrincipleNames = {{
    {PrincipleKind::Net, "Net"},
    {PrincipleKind::ExpectedValue, "ExpectedValue"},
    {PrincipleKind::Utility, "Utility"},
    {PrincipleKind::StdDev, "StdDev"},
    {PrincipleKind::Variance, "Variance"},
    {PrincipleKind::Exponential, "Exponential"},
    {PrincipleKind::Esscher, "Esscher"},
}};

}  // namespace

std::string_view principle_name(PrincipleKind k) { return kPrincipleNames[static_cast<std::size_t>(k)].name; }

PrincipleKind parse_principle(std::string_view name) {
  for (const auto& p : kPrincipleNames) {
    if (p.name == name) return p.kind;
  }
  throw ConfigError("unknown premium principle '" + std::string(name) + "'");
}

void validate(const PremiumPrinciple& p) {
  switch (p.kind) {
    case PrincipleKind::Net:
      return;
    case PrincipleKind::ExpectedValue:
    case PrincipleKind::StdDev:
    case PrincipleKind::Variance:
      if (!(p.alpha >= 0.0) || !std::isfinite(p.alpha)) {
        throw ParameterError(std::string(principle_name(p.kind)) + " needs alpha >= 0");
      }
      return;
    case PrincipleKind::Utility:
    case PrincipleKind::Exponential:
    case PrincipleKind::Esscher:
      if (!(p.alpha > 0.0) || !std::isfinite(p.alpha)) {
        throw ParameterError(std::string(principle_name(p.kind)) + " needs alpha > 0");
      }
      return;
  }
}

Scalar log_likelihood(const Policyholder& ph, const ModelSpec& model, Scalar theta) {
  Scalar l = 0.0;
  for (const auto& o : ph.history) {
    if (o.censor == Censor::Missing) continue;
    const Distribution dist = conditional_dist(model, o.dim - 1, ph.mu[o.dim - 1], o.exposure, theta);
    l += o.censor == Censor::Exact ? log_density(dist, o.value) : log_survival(dist, o.value);
  }
  return l;
}

Vector log_likelihoods(const Policyholder& ph, const ModelSpec& model, const PriorDraws& draws) {
  const Index K = draws.K();
  Vector l = Vector::Zero(K);
  for (const auto& o : ph.history) {
    if (o.censor == Censor::Missing) continue;
    const Distribution& base = model.dims[static_cast<std::size_t>(o.dim - 1)];
    const Scalar mu = ph.mu[o.dim - 1];
    if (o.censor == Censor::Exact) {
      for (Index k = 0; k < K; ++k) {
        l[k] += log_density(with_mean(base, link_mean(model, mu, o.exposure, draws.theta[k])), o.value);
      }
    } else {
      for (Index k = 0; k < K; ++k) {
        l[k] += log_survival(with_mean(base, link_mean(model, mu, o.exposure, draws.theta[k])), o.value);
      }
    }
  }
  return l;
}

Scalar conditional_sum_expectation(const ModelSpec& model, ConstRef<Vector> mu, Scalar theta, const WeightFn& w) {
  const int D = model.D();
  auto dist = [&](int d) { return conditional_dist(model, d, mu[d], 1.0, theta); };
  if (D == 1) return conditional_expectation(dist(0), w);
  using K = WeightFn::Kind;
  switch (w.kind) {
    case K::Identity: {
      Scalar s = 0.0;
      for (int d = 0; d < D; ++d) s += conditional_expectation(dist(d), w);
      return s;
    }
    case K::Square: {
      // independent given theta: E[S^2] = sum Var_d + (sum E_d)^2
      Scalar m = 0.0, v = 0.0;
      for (int d = 0; d < D; ++d) {
        const Distribution dd = dist(d);
        const Scalar m1 = conditional_expectation(dd, WeightFn::identity());
        m += m1;
        v += conditional_expectation(dd, WeightFn::square()) - m1 * m1;
      }
      return v + m * m;
    }
    case K::Exp: {
      Scalar p = 1.0;
      for (int d = 0; d < D; ++d) p *= conditional_expectation(dist(d), w);
      return p;
    }
    case K::YExp: {
      std::vector<Scalar> mgf(static_cast<std::size_t>(D)), ye(static_cast<std::size_t>(D));
      for (int d = 0; d < D; ++d) {
        const Distribution dd = dist(d);
        mgf[static_cast<std::size_t>(d)] = conditional_expectation(dd, WeightFn::exp(w.alpha));
        ye[static_cast<std::size_t>(d)] = conditional_expectation(dd, w);
      }
      Scalar s = 0.0;
      for (int d = 0; d < D; ++d) {
        Scalar term = ye[static_cast<std::size_t>(d)];
        for (int e = 0; e < D; ++e) {
          if (e != d) term *= mgf[static_cast<std::size_t>(e)];
        }
        s += term;
      }
      return s;
    }
  }
  return 0.0;
}

namespace {

// Normalized weights and ESS from log-weights.
struct Weights {
  Vector w;  // sums to one
  Scalar ess = 0.0;
};

Weights normalize(ConstRef<Vector> log_w) {
  if (log_w.size() == 0) throw ConfigError("no prior draws");
  const Scalar mx = log_w.maxCoeff();
  if (!std::isfinite(mx)) throw DegenerateWeightsError("all importance weights underflow or are undefined");
  Weights out;
  out.w = (log_w.array() - mx).exp().matrix();
  const Scalar s = out.w.sum();
  out.ess = s * s / out.w.squaredNorm();
  out.w /= s;
  return out;
}

void ess_check(Scalar ess, Index K) {
  if (ess < 0.01 * static_cast<Scalar>(K)) {
    std::ostringstream os;
    os << "effective sample size " << ess << " is below 1% of K=" << K;
    diagnostic(os.str());
  }
}

// phi(E_1..E_J) with gradient; delta method over the per-draw moments.
template <int J, typename Phi>
PremiumEstimate delta_estimate(const Weights& wt, const std::array<Vector, J>& h, Phi phi) {
  const Index K = wt.w.size();
  std::array<Scalar, J> e{};
  for (int j = 0; j < J; ++j) {
    // anchored on the first draw so identical rows give an exact answer
    const Scalar ref = h[j][0];
    e[j] = ref + wt.w.dot((h[j].array() - ref).matrix());
  }
  std::array<Scalar, J> grad{};
  const Scalar value = phi(e, grad);
  Scalar var = 0.0;
  for (Index k = 0; k < K; ++k) {
    Scalar psi = 0.0;
    for (int j = 0; j < J; ++j) psi += grad[j] * (h[j][k] - e[j]);
    var += wt.w[k] * wt.w[k] * psi * psi;
  }
  if (!std::isfinite(value)) throw NumericError("premium estimate is not finite");
  return {value, std::sqrt(var), wt.ess};
}

Vector moments(const Policyholder& ph, const ModelSpec& model, const PriorDraws& draws, const WeightFn& w) {
  Vector h(draws.K());
  for (Index k = 0; k < draws.K(); ++k) h[k] = conditional_sum_expectation(model, ph.mu, draws.theta[k], w);
  return h;
}

}  // namespace

PremiumEstimate self_normalized_estimate(ConstRef<Vector> log_w, ConstRef<Vector> h) {
  if (log_w.size() != h.size()) throw ConfigError("weights and values differ in length");
  const Weights wt = normalize(log_w);
  return delta_estimate<1>(wt, {Vector(h)}, [](const std::array<Scalar, 1>& e, std::array<Scalar, 1>& g) {
    g[0] = 1.0;
    return e[0];
  });
}

PremiumEstimate predictive_expectation(const Policyholder& ph, const ModelSpec& model, const PriorDraws& draws,
                                       const WeightFn& w) {
  const Vector l = log_likelihoods(ph, model, draws);
  const Weights wt = normalize(l);
  ess_check(wt.ess, draws.K());
  return delta_estimate<1>(wt, {moments(ph, model, draws, w)},
                           [](const std::array<Scalar, 1>& e, std::array<Scalar, 1>& g) {
                             g[0] = 1.0;
                             return e[0];
                           });
}

PremiumEstimate premium_from_log_weights(ConstRef<Vector> log_w, const Policyholder& ph, const ModelSpec& model,
                                         const PriorDraws& draws, const PremiumPrinciple& pr) {
  validate(pr);
  if (log_w.size() != draws.K()) throw ConfigError("weights and draws differ in length");
  const Weights wt = normalize(log_w);
  ess_check(wt.ess, draws.K());
  const Scalar a = pr.alpha;
  using A1 = std::array<Scalar, 1>;
  using A2 = std::array<Scalar, 2>;
  switch (pr.kind) {
    case PrincipleKind::Net:
    case PrincipleKind::ExpectedValue: {
      const Scalar f = pr.kind == PrincipleKind::Net ? 1.0 : 1.0 + a;
      return delta_estimate<1>(wt, {moments(ph, model, draws, WeightFn::identity())},
                               [f](const A1& e, A1& g) {
                                 g[0] = f;
                                 return f * e[0];
                               });
    }
    case PrincipleKind::StdDev:
    case PrincipleKind::Variance: {
      const bool sd = pr.kind == PrincipleKind::StdDev;
      return delta_estimate<2>(
          wt, {moments(ph, model, draws, WeightFn::identity()), moments(ph, model, draws, WeightFn::square())},
          [a, sd](const A2& e, A2& g) {
            const Scalar var = std::max<Scalar>(0.0, e[1] - e[0] * e[0]);
            if (sd) {
              const Scalar s = std::sqrt(var);
              const Scalar ds = s > 0.0 ? 0.5 / s : 0.0;
              g[0] = 1.0 - a * ds * 2.0 * e[0];
              g[1] = a * ds;
              return e[0] + a * s;
            }
            g[0] = 1.0 - 2.0 * a * e[0];
            g[1] = a;
            return e[0] + a * var;
          });
    }
    case PrincipleKind::Exponential:
      return delta_estimate<1>(wt, {moments(ph, model, draws, WeightFn::exp(a))}, [a](const A1& e, A1& g) {
        g[0] = 1.0 / (a * e[0]);
        return std::log(e[0]) / a;
      });
    case PrincipleKind::Utility:
      // exponential utility u(y) = (exp(a y) - 1) / a
      return delta_estimate<1>(wt, {moments(ph, model, draws, WeightFn::exp(a))}, [a](const A1& e, A1& g) {
        g[0] = 1.0 / a;
        return (e[0] - 1.0) / a;
      });
    case PrincipleKind::Esscher:
      return delta_estimate<2>(
          wt, {moments(ph, model, draws, WeightFn::y_exp(a)), moments(ph, model, draws, WeightFn::exp(a))},
          [](const A2& e, A2& g) {
            g[0] = 1.0 / e[1];
            g[1] = -e[0] / (e[1] * e[1]);
            return e[0] / e[1];
          });
  }
  throw ConfigError("unhandled principle");
}

PremiumEstimate premium(const Policyholder& ph, const ModelSpec& model, const PriorDraws& draws,
                        const PremiumPrinciple& principle) {
  return premium_from_log_weights(log_likelihoods(ph, model, draws), ph, model, draws, principle);
}

PremiumEstimate manual_premium(const Policyholder& ph, const ModelSpec& model, const PriorDraws& draws,
                               const PremiumPrinciple& principle) {
  return premium_from_log_weights(Vector::Zero(draws.K()), ph, model, draws, principle);
}

Scalar conjugate_net_premium(Scalar a, Scalar b, Scalar mu, int n, Scalar sum_y) {
  if (!(a > 0.0 && b > 0.0 && mu > 0.0) || n < 0) throw ParameterError("conjugate premium needs a, b, mu > 0, n >= 0");
  return mu * (a + sum_y) / (b + mu * n);
}

Scalar conjugate_net_premium_credibility_form(Scalar a, Scalar b, Scalar mu, int n, Scalar sum_y) {
  if (n < 1) throw ParameterError("credibility form needs n >= 1");
  const Scalar z = mu * n / (b + mu * n);
  return z * (sum_y / n) + (1.0 - z) * mu * (a / b);
}

std::vector<PremiumEstimate> premiums(const Portfolio& p, const ModelSpec& model, const PriorDraws& draws,
                                      const PremiumPrinciple& principle, int threads) {
  std::vector<PremiumEstimate> out(p.size());
  parallel_for(p.size(), threads, [&](std::size_t i) { out[i] = premium(p.members[i], model, draws, principle); });
  return out;
}

std::vector<PremiumEstimate> manual_premiums(const Portfolio& p, const ModelSpec& model, const PriorDraws& draws,
                                             const PremiumPrinciple& principle, int threads) {
  std::vector<PremiumEstimate> out(p.size());
  parallel_for(p.size(), threads,
               [&](std::size_t i) { out[i] = manual_premium(p.members[i], model, draws, principle); });
  return out;
}

}  // namespace credsurr
