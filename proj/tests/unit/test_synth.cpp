#include "credsurr/json_io.hpp"
#include "credsurr/synth.hpp"
#include "credsurr/util.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>

using namespace credsurr;

TEST_CASE("generator is seeded") {
  const Scenario sc = default_scenario(Family::Gamma, Family::LogNormal, 1, 5, 99);
  const auto a = generate_portfolio(sc), b = generate_portfolio(sc);
  CHECK(portfolio_to_csv(a.portfolio) == portfolio_to_csv(b.portfolio));
  Scenario other = sc;
  other.seed = 100;
  CHECK(portfolio_to_csv(generate_portfolio(other).portfolio) != portfolio_to_csv(a.portfolio));
}

TEST_CASE("histories and the claim mean") {
  const Scenario sc = default_scenario(Family::Poisson, Family::Gamma, 50000, 5, 3);
  const auto sp = generate_portfolio(sc);
  validate(sp.portfolio, sc.model);
  Scalar total = 0.0;
  Index count = 0;
  for (const auto& ph : sp.portfolio.members) {
    CHECK(ph.history.size() == 5);
    CHECK(ph.n_per_dim[0] == 5);
    for (const auto& o : ph.history) {
      CHECK(o.censor == Censor::Exact);
      total += o.value;
      ++count;
    }
  }
  // E[Y] = E[exp(alpha)] E[Theta] with alpha ~ N(log 0.3, 0.5^2) and E[Theta] = 1
  const Scalar implied = std::exp(std::log(0.3) + 0.5 * 0.25);
  CHECK(std::abs(total / count - implied) / implied < 0.02);
  CHECK(sp.theta.size() == 50000);
  CHECK(std::abs(sp.theta.mean() - 1.0) < 0.02);
}

TEST_CASE("shipped family defaults match the generator") {
  const Json j = parse_json(read_file(std::string(CREDSURR_SOURCE_DIR) + "/tools/configs/family_defaults.json"), "defaults");
  for (Family f : kAllFamilies) {
    CAPTURE(family_name(f));
    CHECK(j.at(std::string(family_name(f))).get<std::vector<Scalar>>() == default_shape(f));
  }
  CHECK(default_alpha_dist(Family::Poisson).first == doctest::Approx(std::log(0.3)));
  CHECK(default_alpha_dist(Family::Gamma).first == doctest::Approx(std::log(5.0)));
  CHECK(default_alpha_dist(Family::Gamma).second == 0.5);
}

TEST_CASE("train/test split") {
  const auto [train, test] = split_train_test(100, 0.2, 7);
  CHECK(train.size() == 80);
  CHECK(test.size() == 20);
  std::vector<int> seen(100, 0);
  for (auto i : train) ++seen[i];
  for (auto i : test) ++seen[i];
  for (int s : seen) CHECK(s == 1);
  CHECK(split_train_test(100, 0.2, 7) == split_train_test(100, 0.2, 7));
}

TEST_CASE("small study grid") {
  Scenario a = default_scenario(Family::Poisson, Family::Gamma, 100, 5, 1);
  a.principles = {{PrincipleKind::ExpectedValue, 0.05}};
  Scenario b = default_scenario(Family::ParetoLomax, Family::Gamma, 100, 5, 2);
  b.principles = {{PrincipleKind::Exponential, 0.05}};
  StudyConfig cfg;
  cfg.K = 500;
  cfg.fraction = 0.6;
  cfg.seed = 4;
  cfg.surrogate.forest.n_trees = 30;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_study({a}, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].status == "ok");
  CHECK(rows[0].N == 100);
  CHECK(std::isfinite(rows[0].R2_full));
  CHECK(secs < 10.0);

  const auto again = run_study({a, b}, cfg);
  REQUIRE(again.size() == 2);
  CHECK(again[0].R2_full == rows[0].R2_full);
  CHECK(again[0].R2_train == rows[0].R2_train);
  CHECK(again[1].status == "divergent");
  const std::string csv = study_to_csv(again);
  CHECK(csv.rfind("model,prior,principle,R2_train,R2_test,R2_full,M,N,K,seed,wall_seconds\n", 0) == 0);
  CHECK(study_table(again).find("divergent") != std::string::npos);
}
