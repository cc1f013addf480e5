#include "credsurr/synth.hpp"

#include "credsurr/error.hpp"
#include "credsurr/util.hpp"

#include <boost/random/normal_distribution.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace credsurr {

std::vector<Scalar> default_shape(Family f) {
  switch (f) {
    case Family::Poisson:
    case Family::Logarithmic:
      return {};
    case Family::NegBinom:
      return {2.0};
    case Family::GammaCount:
      return {1.5};
    case Family::GenPoisson:
      return {0.2};
    case Family::Gamma:
      return {2.0};
    case Family::LogNormal:
      return {0.8};
    case Family::LogLogistic:
      return {4.0};
    case Family::InvGaussian:
      return {10.0};
    case Family::ParetoLomax:
      return {3.0};
    case Family::Burr:
      return {2.0, 3.0};
    case Family::Weibull:
      return {1.5};
  }
  return {};
}

std::pair<Scalar, Scalar> default_alpha_dist(Family f) {
  return is_discrete(f) ? std::pair<Scalar, Scalar>{std::log(0.3), 0.5} : std::pair<Scalar, Scalar>{std::log(5.0), 0.5};
}

Scenario default_scenario(Family model_family, Family prior_family, Index N, int n, std::uint64_t seed) {
  Scenario sc;
  std::vector<Scalar> params = {1.0};
  for (Scalar s : default_shape(model_family)) params.push_back(s);
  sc.model.dims.push_back(make_distribution(model_family, params));
  sc.model.link = Link::MultiplicativeFrailty;
  sc.model.prior = make_prior(prior_family, 1.0, 0.58, 1.0);
  sc.N = N;
  sc.n = n;
  sc.alpha_dist = {default_alpha_dist(model_family)};
  sc.seed = seed;
  return sc;
}

void validate(const Scenario& sc) {
  validate(sc.model);
  if (sc.N < 1 || sc.n < 1) throw ConfigError("scenario needs N >= 1 and n >= 1");
  if (static_cast<int>(sc.alpha_dist.size()) != sc.model.D()) {
    throw ConfigError("scenario needs one alpha distribution per dimension");
  }
  for (const auto& [m, s] : sc.alpha_dist) {
    if (!std::isfinite(m) || !(s >= 0.0)) throw ConfigError("alpha distribution needs a finite mean and sd >= 0");
  }
  for (const auto& p : sc.principles) validate(p);
}

SynthPortfolio generate_portfolio(const Scenario& sc) {
  validate(sc);
  const int D = sc.model.D();
  SynthPortfolio out;
  out.portfolio.D = D;
  out.alpha.resize(sc.N, D);
  out.theta.resize(sc.N);
  Rng rng(sc.seed);
  const std::size_t width = std::max<std::size_t>(6, std::to_string(sc.N).size());
  for (Index i = 0; i < sc.N; ++i) {
    Vector mu(D);
    for (int d = 0; d < D; ++d) {
      const auto [m, s] = sc.alpha_dist[static_cast<std::size_t>(d)];
      out.alpha(i, d) = s > 0.0 ? boost::random::normal_distribution<Scalar>(m, s)(rng) : m;
      mu[d] = std::exp(out.alpha(i, d));
    }
    const Scalar theta = sample(sc.model.prior.dist, rng);
    out.theta[i] = theta;
    std::string id = std::to_string(i + 1);
    id.insert(0, width - std::min(width, id.size()), '0');
    Policyholder ph = make_policyholder("P" + id, mu);
    for (int t = 1; t <= sc.n; ++t) {
      for (int d = 0; d < D; ++d) {
        const Distribution dist = conditional_dist(sc.model, d, mu[d], 1.0, theta);
        Observation o;
        o.period = t;
        o.dim = d + 1;
        o.exposure = 1.0;
        o.censor = Censor::Exact;
        o.value = sample(dist, rng);
        append_observation_inplace(ph, o);
      }
    }
    out.portfolio.members.push_back(std::move(ph));
  }
  validate(out.portfolio, sc.model);
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_test(std::size_t n, Scalar test_fraction,
                                                                               std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in [0, 1)");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed ^ 0x5851f42d4c957f2dULL);
  for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng() % k]);
  const std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<Scalar>(n)));
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

std::vector<StudyRow> run_study(const std::vector<Scenario>& scenarios, const StudyConfig& cfg) {
  std::vector<StudyRow> rows;
  for (const auto& sc : scenarios) {
    const std::string model_name(family_name(sc.model.dims[0].family));
    const std::string prior_name(family_name(sc.model.prior.dist.family));
    SynthPortfolio synth;
    PriorDraws draws;
    std::string setup_error;
    try {
      synth = generate_portfolio(sc);
      draws = draw_prior(sc.model.prior, cfg.K, sc.seed + 1);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (const auto& pr : sc.principles) {
      const auto t0 = std::chrono::steady_clock::now();
      StudyRow row;
      row.model = model_name;
      row.prior = prior_name;
      row.principle = std::string(principle_name(pr.kind));
      row.N = sc.N;
      row.K = cfg.K;
      row.seed = sc.seed;
      try {
        if (!setup_error.empty()) throw NumericError(setup_error);
        const Portfolio& p = synth.portfolio;
        const auto prem = premiums(p, sc.model, draws, pr, cfg.threads);
        const auto man = manual_premiums(p, sc.model, draws, pr, cfg.threads);
        const auto balance = cfg.balance_vars.empty() ? default_balance_vars(p.D) : cfg.balance_vars;
        const Subportfolio sub = select_subportfolio(p, cfg.fraction, balance, sc.seed + 2);
        // positions into the portfolio; without a held-out share of the
        // sub-portfolio the test set is everyone who was not sampled
        std::vector<std::size_t> tr, te;
        if (cfg.test_fraction > 0.0) {
          const auto split = split_train_test(sub.members.size(), cfg.test_fraction, sc.seed + 3);
          for (std::size_t k : split.first) tr.push_back(sub.members[k]);
          for (std::size_t k : split.second) te.push_back(sub.members[k]);
        } else {
          tr = sub.members;
          std::vector<char> in(p.size(), 0);
          for (std::size_t i : tr) in[i] = 1;
          for (std::size_t i = 0; i < p.size(); ++i) {
            if (!in[i]) te.push_back(i);
          }
        }
        auto rows_of = [&](const std::vector<std::size_t>& pos) {
          std::vector<TrainingRow> r;
          for (std::size_t i : pos) r.push_back({&p.members[i], prem[i].value, man[i].value});
          return r;
        };
        SurrogateConfig scfg = cfg.surrogate;
        scfg.seed = sc.seed + 4;
        scfg.threads = cfg.threads;
        SurrogateModel m = fit_surrogate(rows_of(tr), sc.model, p.attr_names, scfg);
        row.M = static_cast<Index>(tr.size());
        row.R2_train = m.train.R2;
        row.R2_test = te.size() >= 2 ? assess(m, rows_of(te)).R2 : std::numeric_limits<Scalar>::quiet_NaN();
        std::vector<Scalar> manuals(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) manuals[i] = man[i].value;
        const auto pred = predict_all(m, p, manuals, cfg.threads);
        Vector target(static_cast<Index>(p.size())), fitted(static_cast<Index>(p.size()));
        for (std::size_t i = 0; i < p.size(); ++i) {
          target[static_cast<Index>(i)] = prem[i].value;
          fitted[static_cast<Index>(i)] = pred[i].premium;
        }
        row.R2_full = compute_metrics(target, fitted).R2;
      } catch (const DivergenceError&) {
        row.status = "divergent";
      } catch (const std::exception& e) {
        row.status = std::string("error: ") + e.what();
      }
      row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rows.push_back(row);
    }
  }
  return rows;
}

std::string study_to_csv(const std::vector<StudyRow>& rows) {
  std::string out = "model,prior,principle,R2_train,R2_test,R2_full,M,N,K,seed,wall_seconds\n";
  for (const auto& r : rows) {
    std::vector<std::string> f = {r.model, r.prior, r.principle};
    if (r.status == "ok") {
      f.push_back(format_double(r.R2_train));
      f.push_back(format_double(r.R2_test));
      f.push_back(format_double(r.R2_full));
    } else {
      const std::string tag = r.status == "divergent" ? "divergent" : r.status;
      f.insert(f.end(), {tag, tag, tag});
    }
    f.push_back(std::to_string(r.M));
    f.push_back(std::to_string(r.N));
    f.push_back(std::to_string(r.K));
    f.push_back(std::to_string(r.seed));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", r.wall_seconds);
    f.emplace_back(buf);
    out += csv_join(f) + "\n";
  }
  return out;
}

std::string study_table(const std::vector<StudyRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %-14s %10s %10s %10s %8s\n", "Model-Prior", "Principle", "R2 train", "R2 test",
                "R2 full", "seconds");
  os << buf;
  for (const auto& r : rows) {
    const std::string cell = r.model + "-" + r.prior;
    if (r.status == "ok") {
      std::snprintf(buf, sizeof buf, "%-24s %-14s %9.2f%% %9.2f%% %9.2f%% %8.1f\n", cell.c_str(), r.principle.c_str(),
                    100.0 * r.R2_train, 100.0 * r.R2_test, 100.0 * r.R2_full, r.wall_seconds);
    } else {
      std::snprintf(buf, sizeof buf, "%-24s %-14s %s\n", cell.c_str(), r.principle.c_str(), r.status.c_str());
    }
    os << buf;
  }
  return os.str();
}

}  // namespace credsurr
