#include "credsurr/credindex.hpp"

#include "credsurr/error.hpp"
#include "credsurr/util.hpp"

#include <cmath>

namespace credsurr {

Scalar index_contribution(const Observation& obs, const Policyholder& ph, const ModelSpec& model, Scalar theta) {
  if (obs.censor == Censor::Missing) return 0.0;
  const int d = obs.dim - 1;
  const Scalar m = link_mean(model, ph.mu[d], obs.exposure, theta);
  if (!(m > 0.0) || !std::isfinite(m)) {
    throw ParameterError("theta " + format_double(theta) + " induces an invalid mean for policyholder '" + ph.id +
                         "'");
  }
  const Distribution dist = with_mean(model.dims[static_cast<std::size_t>(d)], m);
  return obs.censor == Censor::Exact ? log_density(dist, obs.value) : log_survival(dist, obs.value);
}

IndexValue credibility_index(const Policyholder& ph, const ModelSpec& model, Scalar theta_tilde) {
  IndexValue v;
  v.per_dim = Vector::Zero(model.D());
  v.theta_tilde = theta_tilde;
  v.n_per_dim = ph.n_per_dim;
  for (const auto& o : ph.history) v.per_dim[o.dim - 1] += index_contribution(o, ph, model, theta_tilde);
  v.total = v.per_dim.sum();
  return v;
}

Scalar EdfSpec::phi_at(int period) const {
  if (phi.size() == 1) return phi[0];
  if (period < 1 || static_cast<std::size_t>(period) > phi.size()) {
    throw ConfigError("no dispersion given for period " + std::to_string(period));
  }
  return phi[static_cast<std::size_t>(period - 1)];
}

void validate(const EdfSpec& e) {
  if (e.phi.empty()) throw ConfigError("EDF spec needs at least one dispersion");
  for (Scalar p : e.phi) {
    if (!(p > 0.0) || !std::isfinite(p)) throw ParameterError("EDF dispersions must be positive");
  }
}

Scalar edf_s(const EdfSpec& e, Scalar y) {
  if (e.s == EdfSpec::S::Identity) return y;
  if (!(y > 0.0)) throw DomainError("S(y) = log y needs y > 0");
  return std::log(y);
}

Scalar edf_c(const EdfSpec& e, Scalar theta) {
  switch (e.c) {
    case EdfSpec::C::Exp:
      return std::exp(theta);
    case EdfSpec::C::NegLog:
      if (!(theta < 0.0)) throw ParameterError("C(theta) = -log(-theta) needs theta < 0");
      return -std::log(-theta);
    case EdfSpec::C::HalfSquare:
      return 0.5 * theta * theta;
  }
  return 0.0;
}

namespace {

void require_exact(const Policyholder& ph) {
  for (const auto& o : ph.history) {
    if (o.censor == Censor::RightCensored) {
      throw UnsupportedError("refined index needs fully observed data; policyholder '" + ph.id +
                             "' has a censored observation");
    }
  }
}

}  // namespace

Scalar sufficient_statistic(const Policyholder& ph, const EdfSpec& edf) {
  validate(edf);
  require_exact(ph);
  Scalar t = 0.0;
  for (const auto& o : ph.history) {
    if (o.censor == Censor::Exact) t += edf_s(edf, o.value) / edf.phi_at(o.period);
  }
  return t;
}

Scalar refined_credibility_index(const Policyholder& ph, const EdfSpec& edf, Scalar theta_tilde) {
  if (std::abs(theta_tilde) < 1e-6) {
    throw ParameterError("refined index needs theta_tilde away from 0 (|theta| >= 1e-6)");
  }
  const Scalar t = sufficient_statistic(ph, edf);
  const Scalar c = edf_c(edf, theta_tilde);
  Scalar inv_phi = 0.0;
  for (const auto& o : ph.history) {
    if (o.censor == Censor::Exact) inv_phi += 1.0 / edf.phi_at(o.period);
  }
  return theta_tilde * t - c * inv_phi;
}

}  // namespace credsurr
