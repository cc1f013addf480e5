// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. Heavy; takes several minutes on one core.

#include "credsurr/balance.hpp"
#include "credsurr/config.hpp"
#include "credsurr/credindex.hpp"
#include "credsurr/oracle.hpp"
#include "credsurr/pipeline.hpp"
#include "credsurr/surrogate.hpp"
#include "credsurr/synth.hpp"
#include "credsurr/util.hpp"

#include <boost/math/distributions/binomial.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace credsurr;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void verdict(int id, const std::string& title, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("%s  %d  %s: %s\n", ok ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

Policyholder poisson_history(Scalar mu, const std::vector<int>& ys) {
  Vector v(1);
  v << mu;
  auto ph = make_policyholder("p", v);
  int t = 1;
  for (int y : ys) append_observation_inplace(ph, {t++, 1, static_cast<Scalar>(y), 1.0, Censor::Exact});
  return ph;
}

// every model fitted along the way, for the no-experience check
std::vector<SurrogateModel> fitted;

struct CellResult {
  Scalar R2_full = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar R2_train = std::numeric_limits<Scalar>::quiet_NaN();
  double secs = 0.0;
  std::string status = "ok";
};

// Oracle premiums on the whole portfolio, a balanced sub-portfolio for
// training, and R² of the surrogate against the oracle over everyone.
CellResult run_cell(const Scenario& sc, const PremiumPrinciple& pr, Index K, Scalar fraction) {
  CellResult r;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const SynthPortfolio sp = generate_portfolio(sc);
    const Portfolio& p = sp.portfolio;
    const PriorDraws draws = draw_prior(sc.model.prior, K, sc.seed + 1);
    const auto prem = premiums(p, sc.model, draws, pr, 1);
    const auto man = manual_premiums(p, sc.model, draws, pr, 1);
    const Subportfolio sub = select_subportfolio(p, fraction, default_balance_vars(p.D), sc.seed + 2);
    std::vector<TrainingRow> rows;
    for (std::size_t i : sub.members) rows.push_back({&p.members[i], prem[i].value, man[i].value});
    SurrogateConfig cfg;
    cfg.seed = sc.seed + 4;
    const SurrogateModel m = fit_surrogate(rows, sc.model, p.attr_names, cfg);
    std::vector<Scalar> manuals;
    for (const auto& e : man) manuals.push_back(e.value);
    const auto pred = predict_all(m, p, manuals, 1);
    Vector target(static_cast<Index>(p.size())), fit(static_cast<Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
      target[static_cast<Index>(i)] = prem[i].value;
      fit[static_cast<Index>(i)] = pred[i].premium;
    }
    r.R2_full = compute_metrics(target, fit).R2;
    r.R2_train = m.train.R2;
    fitted.push_back(m);
  } catch (const std::exception& e) {
    r.status = e.what();
  }
  r.secs = seconds_since(t0);
  return r;
}

void criterion1() {
  ModelSpec m;
  m.dims = {make_distribution(Family::Poisson, std::vector<Scalar>{1.0})};
  m.prior = make_prior(Family::Gamma, 1.0, 0.5);  // shape 2, rate 2
  const auto ph = poisson_history(0.3, {0, 1, 0, 1, 0});
  const Scalar truth = conjugate_net_premium(2.0, 2.0, 0.3, 5, 2.0);
  int good = 0;
  double slowest = 0.0;
  for (int run = 0; run < 200; ++run) {
    const auto t0 = std::chrono::steady_clock::now();
    const PriorDraws draws = draw_prior(m.prior, 200000, 10000 + static_cast<std::uint64_t>(run));
    const auto est = premium(ph, m, draws, {PrincipleKind::Net, 0.0});
    slowest = std::max(slowest, seconds_since(t0));
    const Scalar err = std::abs(est.value - truth);
    if (err / truth <= 0.01 && err <= 3.0 * est.std_error) ++good;
  }
  const bool ok = good >= 198 && slowest < 5.0 && std::abs(truth - 0.342857) < 5e-7;
  verdict(1, "conjugate oracle equivalence", ok,
          std::to_string(good) + "/200 runs within 1% and 3 se of " + num(truth, 8) + ", slowest run " +
              num(slowest, 3) + " s");
}

void criterion2and3() {
  const PremiumPrinciple ev{PrincipleKind::ExpectedValue, 0.05}, sd{PrincipleKind::StdDev, 0.1},
      ex{PrincipleKind::Exponential, 0.05};
  struct Cell {
    Family model, prior;
    PremiumPrinciple pr;
    Scalar bar;
  };
  const std::vector<Cell> table2 = {{Family::Poisson, Family::Gamma, ev, 0.95},
                                    {Family::Poisson, Family::Gamma, sd, 0.95},
                                    {Family::Poisson, Family::Gamma, ex, 0.95},
                                    {Family::Poisson, Family::LogNormal, ev, 0.95},
                                    {Family::Poisson, Family::LogNormal, sd, 0.95},
                                    {Family::Poisson, Family::LogNormal, ex, 0.95}};
  const std::vector<Cell> table3 = {{Family::Gamma, Family::Gamma, ev, 0.90},
                                    {Family::ParetoLomax, Family::Gamma, ev, 0.95}};
  auto run = [&](const std::vector<Cell>& cells, std::uint64_t seed0, int id, const std::string& title) {
    bool ok = true;
    std::string detail;
    std::uint64_t seed = seed0;
    for (const auto& c : cells) {
      const Scenario sc = default_scenario(c.model, c.prior, 5000, 5, seed++);
      const CellResult r = run_cell(sc, c.pr, 5000, 0.05);
      const bool cell_ok = r.status == "ok" && r.R2_full >= c.bar && r.secs < 600.0;
      ok = ok && cell_ok;
      if (!detail.empty()) detail += "; ";
      detail += std::string(family_name(c.model)) + "-" + std::string(family_name(c.prior)) + " " +
                std::string(principle_name(c.pr.kind)) + " ";
      detail += r.status == "ok" ? "R2 " + num(r.R2_full) + " (" + num(r.secs, 3) + " s)" : r.status;
    }
    verdict(id, title, ok, detail);
  };
  run(table2, 2000, 2, "frequency scenarios, full-portfolio R2 >= 0.95");
  run(table3, 3000, 3, "severity scenarios, R2 >= 0.90 / 0.95");
}

void criterion4() {
  EdfSpec e;  // Poisson
  std::vector<std::pair<Scalar, Scalar>> stats;
  for (int a = 0; a <= 4; ++a)
    for (int b = 0; b <= 4; ++b)
      for (int c = 0; c <= 4; ++c) {
        const auto ph = poisson_history(1.0, {a, b, c});
        stats.emplace_back(refined_credibility_index(ph, e, 0.37), sufficient_statistic(ph, e));
      }
  int violations = 0;
  for (const auto& x : stats)
    for (const auto& y : stats)
      if ((x.first == y.first) != (x.second == y.second)) ++violations;
  verdict(4, "sufficiency by enumeration", violations == 0 && stats.size() == 125,
          std::to_string(stats.size()) + " histories, " + std::to_string(violations) + " violations");
}

void criterion5() {
  std::mt19937_64 rng(515);
  std::uniform_real_distribution<Scalar> u(0.0, 1.0);
  int additivity = 0, neutrality = 0, decomposition = 0;
  auto close = [](Scalar a, Scalar b) { return std::abs(a - b) <= 1e-12 * (1.0 + std::max(std::abs(a), std::abs(b))); };
  for (int fx = 0; fx < 1000; ++fx) {
    const Family f = kAllFamilies[static_cast<std::size_t>(fx % 12)];
    const int D = 1 + (fx / 12) % 3;
    ModelSpec m;
    for (int d = 0; d < D; ++d) {
      const Family fam = d == 0 ? f : kAllFamilies[static_cast<std::size_t>((static_cast<int>(f) + 5 * d) % 12)];
      std::vector<Scalar> params{1.0};
      for (Scalar s : default_shape(fam)) params.push_back(s);
      m.dims.push_back(make_distribution(fam, params));
    }
    m.link = fx % 2 ? Link::LogAdditive : Link::MultiplicativeFrailty;
    m.prior = make_prior(Family::Gamma, 1.0, 0.58);
    Vector mu(D);
    for (int d = 0; d < D; ++d) mu[d] = 0.2 + 2.0 * u(rng);
    const Scalar theta = m.link == Link::LogAdditive ? u(rng) - 0.5 : 0.3 + u(rng);
    auto ph = make_policyholder("r", mu);
    auto plain = ph;
    const int periods = 1 + static_cast<int>(6.0 * u(rng));
    for (int t = 1; t <= periods; ++t) {
      for (int d = 0; d < D; ++d) {
        const Distribution cd = conditional_dist(m, d, mu[d], 1.0, theta);
        Observation obs{t, d + 1, sample(cd, rng), 1.0, Censor::Exact};
        if (!is_discrete(cd.family) && obs.value <= 0.0) obs.value = 1e-3;
        const Scalar r = u(rng);
        if (r < 0.15) obs.censor = Censor::RightCensored;
        const Scalar before = credibility_index(ph, m, theta).total;
        append_observation_inplace(ph, obs);
        const Scalar after = credibility_index(ph, m, theta).total;
        if (!close(after - before, index_contribution(obs, ph, m, theta))) ++additivity;
        append_observation_inplace(plain, obs);
        if (r > 0.8) {
          auto with_missing = plain;
          if (d + 1 < D) {
            append_observation_inplace(with_missing, {t, d + 2, 0.0, 1.0, Censor::Missing});
          } else {
            append_observation_inplace(with_missing, {t + 1, 1, 0.0, 1.0, Censor::Missing});
          }
          const auto a = credibility_index(with_missing, m, theta), b = credibility_index(plain, m, theta);
          if (a.total != b.total || a.per_dim != b.per_dim) ++neutrality;
        }
      }
    }
    const auto idx = credibility_index(ph, m, theta);
    if (std::abs(idx.total - idx.per_dim.sum()) > 1e-12 * std::max<Scalar>(1.0, std::abs(idx.total))) ++decomposition;
    for (int d = 0; d < D; ++d) {
      Scalar s = 0.0;
      for (const auto& o : ph.history)
        if (o.dim == d + 1) s += index_contribution(o, ph, m, theta);
      if (!close(idx.per_dim[d], s)) ++decomposition;
    }
  }
  verdict(5, "index algebra on 1000 fixtures", additivity + neutrality + decomposition == 0,
          "violations: additivity " + std::to_string(additivity) + ", missing " + std::to_string(neutrality) +
              ", decomposition " + std::to_string(decomposition));
}

void criterion6() {
  const Scenario sc = default_scenario(Family::Poisson, Family::Gamma, 10000, 5, 6);
  const Portfolio p = generate_portfolio(sc).portfolio;
  const Scalar pi = 0.05;
  const int runs = 200;
  std::vector<int> count(p.size(), 0);
  int balanced = 0;
  Scalar worst = 0.0;
  for (int r = 0; r < runs; ++r) {
    const Subportfolio sub = select_subportfolio(p, pi, default_balance_vars(p.D), 60000 + static_cast<std::uint64_t>(r));
    const Scalar gap = sub.result.balance_gaps.cwiseAbs().maxCoeff();
    worst = std::max(worst, gap);
    if (gap <= 0.02) ++balanced;
    for (std::size_t i : sub.members) ++count[i];
  }
  // Per-unit frequencies against 3 binomial standard errors. Even an exact
  // sampler leaves some of 10,000 units outside, so the count of such units
  // is compared with its own binomial expectation.
  const Scalar se = std::sqrt(pi * (1.0 - pi) / runs);
  int outside = 0;
  for (int c : count)
    if (std::abs(static_cast<Scalar>(c) / runs - pi) > 3.0 * se) ++outside;
  const boost::math::binomial_distribution<Scalar> bin(runs, pi);
  Scalar p_out = 0.0;
  for (int k = 0; k <= runs; ++k)
    if (std::abs(static_cast<Scalar>(k) / runs - pi) > 3.0 * se) p_out += boost::math::pdf(bin, k);
  const Scalar n = static_cast<Scalar>(p.size());
  const Scalar allowed = n * p_out + 3.0 * std::sqrt(n * p_out * (1.0 - p_out));
  const bool ok = balanced >= 190 && outside <= allowed;
  verdict(6, "balanced sampling", ok,
          std::to_string(balanced) + "/200 samples with all HT gaps <= 2% (worst " + num(100.0 * worst, 3) +
              "%); " + std::to_string(outside) + " of 10000 units outside 3 se, exact-binomial expectation " +
              num(n * p_out, 3) + ", allowed " + num(allowed, 3));
}

SurrogateModel injected(const ModelSpec& model, Scalar factor) {
  SurrogateModel m;
  m.model = model;
  m.g.form = GForm::RatingFactorAdditive;
  m.g.n_inputs = 2 * model.D() + 1;
  m.g.used = {0};
  m.g.bases = {make_basis(-50.0, 0.0, {-20.0, -5.0}, 3)};
  m.g.coef = Vector::Constant(m.g.bases[0].size(), std::log(factor));
  Tree leaf;
  leaf.feature = {-1};
  leaf.threshold = {0.0};
  leaf.left = {-1};
  leaf.right = {-1};
  leaf.value = {1.0};
  m.h.forest.n_features = model.D();
  m.h.forest.trees = {leaf};
  m.h.features = default_h_features(model.D());
  m.theta_lo = 0.1;
  m.theta_hi = 3.0;
  return m;
}

void criterion7() {
  const ModelSpec model = default_scenario(Family::Poisson, Family::Gamma, 10, 5, 0).model;
  const auto ph = poisson_history(0.3, {0, 1, 0});
  auto three = [](Scalar v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
  };
  const std::string a = three(predict_premium(injected(model, 0.854), ph, 0.253));
  const std::string b = three(predict_premium(injected(model, 1.696), ph, 0.253));
  int checked = 0, off = 0;
  for (const auto& m : fitted) {
    Vector mu = Vector::Constant(m.model.D(), 0.4);
    auto empty = make_policyholder("new", mu);
    auto missing = empty;
    for (int d = 1; d <= m.model.D(); ++d) append_observation_inplace(missing, {1, d, 0.0, 1.0, Censor::Missing});
    for (Scalar manual : {0.253, 1.0, 7.5}) {
      checked += 2;
      if (predict_premium(m, empty, manual) != manual) ++off;
      if (predict_premium(m, missing, manual) != manual) ++off;
    }
  }
  verdict(7, "rating-factor arithmetic", a == "0.216" && b == "0.429" && checked > 0 && off == 0,
          "0.253 x 0.854 -> " + a + ", 0.253 x 1.696 -> " + b + "; " + std::to_string(checked - off) + "/" +
              std::to_string(checked) + " no-experience predictions equal the manual premium over " +
              std::to_string(fitted.size()) + " fitted models");
}

void criterion8() {
  const int runs = 50;
  int parity = 0;
  Scalar worst = 0.0;
  double total = 0.0;
  std::vector<Scalar> gaps;
  for (int r = 0; r < runs; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = 8000 + 10 * static_cast<std::uint64_t>(r);
    const Scenario sc = default_scenario(Family::Poisson, Family::Gamma, 4000, 5, seed);
    const SynthPortfolio sp = generate_portfolio(sc);
    const PriorDraws draws = draw_prior(sc.model.prior, 5000, seed + 1);
    const PremiumPrinciple ev{PrincipleKind::ExpectedValue, 0.05};
    const auto prem = premiums(sp.portfolio, sc.model, draws, ev, 1);
    const auto man = manual_premiums(sp.portfolio, sc.model, draws, ev, 1);
    const auto [tr, te] = split_train_test(sp.portfolio.size(), 0.5, seed + 3);
    auto rows_of = [&](const std::vector<std::size_t>& pos) {
      std::vector<TrainingRow> v;
      for (std::size_t i : pos) v.push_back({&sp.portfolio.members[i], prem[i].value, man[i].value});
      return v;
    };
    SurrogateConfig cfg;
    cfg.seed = seed + 4;
    const SurrogateModel m = fit_surrogate(rows_of(tr), sc.model, sp.portfolio.attr_names, cfg);
    const Scalar gap = std::abs(m.train.R2 - assess(m, rows_of(te)).R2);
    gaps.push_back(gap);
    worst = std::max(worst, gap);
    if (gap <= 0.02) ++parity;
    if (r < 5) fitted.push_back(m);
    total += seconds_since(t0);
  }
  std::sort(gaps.begin(), gaps.end());
  verdict(8, "in/out-of-sample parity, M=2000", parity >= 45,
          std::to_string(parity) + "/50 runs with |R2 train - R2 test| <= 0.02 (median " + num(gaps[gaps.size() / 2], 3) +
              ", worst " + num(worst, 3) + ", " + num(total, 3) + " s)");
}

void criterion9() {
  std::vector<fs::path> dirs;
  std::ostringstream log;
  for (const char* tag : {"a", "b"}) {
    const fs::path dir = fs::temp_directory_path() / (std::string("credsurr_acceptance_") + tag);
    fs::remove_all(dir);
    Json j = parse_json(read_file(std::string(CREDSURR_SOURCE_DIR) + "/tools/configs/poisson_gamma.json"), "config");
    j["out_dir"] = dir.string();
    j["threads"] = 1;
    cmd_pipeline(config_from_json(j, "config"), log);
    dirs.push_back(dir);
    fitted.push_back(load_surrogate((dir / "surrogate.json").string()));
  }
  int same = 0, files = 0;
  std::string differing;
  for (const char* f : {"portfolio.csv", "premiums.csv", "manuals.csv", "sample.csv", "surrogate.json",
                        "predictions.csv", "index.csv", "assessment.json"}) {
    ++files;
    if (read_file((dirs[0] / f).string()) == read_file((dirs[1] / f).string())) {
      ++same;
    } else {
      differing += std::string(" ") + f;
    }
  }
  verdict(9, "determinism", same == files,
          std::to_string(same) + "/" + std::to_string(files) + " output files byte-identical" +
              (differing.empty() ? "" : ", differing:" + differing));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion1();
  criterion2and3();
  criterion4();
  criterion5();
  criterion6();
  criterion8();
  criterion9();
  // last, so it covers every model fitted above
  criterion7();
  std::printf("%d criteria failed, %.0f s\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
