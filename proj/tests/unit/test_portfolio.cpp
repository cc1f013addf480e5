#include "credsurr/credindex.hpp"
#include "credsurr/error.hpp"
#include "credsurr/portfolio.hpp"
#include "credsurr/util.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>

using namespace credsurr;

namespace {

ModelSpec poisson_gamma() {
  ModelSpec m;
  m.dims = {make_distribution(Family::Poisson, std::vector<Scalar>{1.0}),
            make_distribution(Family::Gamma, std::vector<Scalar>{1.0, 2.0})};
  m.prior = make_prior(Family::Gamma, 1.0, 0.58);
  return m;
}

Portfolio fixture() {
  Portfolio p;
  p.D = 2;
  p.attr_names = {"region", "age"};
  Vector mu(2);
  mu << 0.1 / 3.0, 1234.5678901234567;
  auto a = make_policyholder("Zoë-001", mu, {"north, coast", "41"});
  append_observation_inplace(a, {1, 1, 2.0, 1.0, Censor::Exact});
  append_observation_inplace(a, {1, 2, 0.1 + 0.2, 1.0, Censor::Exact});
  append_observation_inplace(a, {2, 1, 0.0, 0.5, Censor::Exact});
  append_observation_inplace(a, {2, 2, 0.0, 0.5, Censor::Missing});
  mu << 0.7, 3.0;
  auto b = make_policyholder("b\"q", mu, {"", "x"});
  append_observation_inplace(b, {1, 1, 0.0, 1.0, Censor::Missing});
  append_observation_inplace(b, {1, 2, 5.25, 1.0, Censor::RightCensored});
  mu << 1e-300, 1e300;
  auto c = make_policyholder("c", mu, {"s", "1"});
  for (int t = 1; t <= 3; ++t) append_observation_inplace(c, {t, 1, static_cast<Scalar>(t), 1.0, Censor::Exact});
  p.members = {a, b, c};
  return p;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("credsurr_portfolio_" + name)).string();
}

}  // namespace

TEST_CASE("empty body gives an empty portfolio") {
  const Portfolio p = portfolio_from_csv("id,period,dim,value,exposure,censor,mu_1\n", "mem", nullptr);
  CHECK(p.size() == 0);
  CHECK(p.D == 1);
}

TEST_CASE("missing rows add nothing to n") {
  const Portfolio p = portfolio_from_csv("id,period,dim,value,exposure,censor,mu_1\nx,1,1,,1,missing,0.3\n", "mem",
                                         nullptr);
  REQUIRE(p.size() == 1);
  CHECK(p.members[0].n_per_dim[0] == 0);
  CHECK(p.members[0].history.size() == 1);
}

TEST_CASE("save then load is the identity") {
  const Portfolio p = fixture();
  validate(p, poisson_gamma());
  const std::string path = tmp_path("roundtrip.csv");
  save_portfolio(p, path);
  const Portfolio q = load_portfolio(path, poisson_gamma());
  CHECK(q == p);
  CHECK(q.members[0].id == "Zoë-001");
  CHECK(q.members[0].mu[0] == p.members[0].mu[0]);  // bit-exact through 17 digits
  CHECK(q.members[0].history[1].value == 0.1 + 0.2);
  CHECK(portfolio_to_csv(q) == portfolio_to_csv(p));
  std::filesystem::remove(path);
}

TEST_CASE("parse errors name the row and column") {
  const std::string head = "id,period,dim,value,exposure,censor,mu_1\n";
  try {
    portfolio_from_csv(head + "a,1,1,0,1,exact,0.3\na,2,1,zz,1,exact,0.3\n", "f.csv", nullptr);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    const std::string w = e.what();
    CHECK(w.find("f.csv") != std::string::npos);
    CHECK(w.find("3") != std::string::npos);
    CHECK(w.find("value") != std::string::npos);
  }
  CHECK_THROWS_AS(portfolio_from_csv(head + "a,1,1,0,1,censored,0.3\n", "f", nullptr), ParseError);
  CHECK_THROWS_AS(portfolio_from_csv(head + "a,1,1,,1,exact,0.3\n", "f", nullptr), ParseError);
  CHECK_THROWS_AS(portfolio_from_csv("id,period\n", "f", nullptr), ParseError);
  // a value outside the model support
  ModelSpec m = poisson_gamma();
  m.dims.pop_back();
  CHECK_THROWS_AS(portfolio_from_csv(head + "a,1,1,1.5,1,exact,0.3\n", "f", &m), DomainError);
}

TEST_CASE("append observation") {
  Vector mu(2);
  mu << 0.3, 2.0;
  const auto ph = make_policyholder("p", mu);
  const auto a = append_observation(ph, {1, 1, 1.0, 1.0, Censor::Exact});
  CHECK(a.n_per_dim[0] == 1);
  CHECK(a.n_per_dim[1] == 0);
  CHECK(ph.history.empty());  // the original is untouched
  const auto b = append_observation(a, {1, 2, 0.0, 1.0, Censor::Missing});
  CHECK(b.n_per_dim == a.n_per_dim);
  const auto c = append_observation(b, {2, 2, 3.0, 1.0, Censor::RightCensored});
  CHECK(c.n_per_dim[1] == 1);
  CHECK(count_observed(c) == c.n_per_dim);

  CHECK_THROWS_AS(append_observation(c, {4, 1, 0.0, 1.0, Censor::Exact}), SequencingError);
  CHECK_THROWS_AS(append_observation(c, {2, 2, 0.0, 1.0, Censor::Exact}), SequencingError);
  CHECK_THROWS_AS(append_observation(c, {1, 1, 0.0, 1.0, Censor::Exact}), SequencingError);
}

TEST_CASE("append then index adds the single contribution") {
  const ModelSpec m = poisson_gamma();
  Vector mu(2);
  mu << 0.4, 2.5;
  auto ph = make_policyholder("p", mu);
  const Scalar theta = 1.3;
  for (int t = 1; t <= 5; ++t) {
    for (int d = 1; d <= 2; ++d) {
      const Observation obs{t, d, d == 1 ? static_cast<Scalar>(t % 3) : 0.5 * t, t == 3 ? 0.5 : 1.0,
                            t == 4 && d == 2 ? Censor::RightCensored : Censor::Exact};
      const Scalar before = credibility_index(ph, m, theta).total;
      const auto next = append_observation(ph, obs);
      const Scalar after = credibility_index(next, m, theta).total;
      CHECK(after - before == doctest::Approx(index_contribution(obs, next, m, theta)).epsilon(1e-12));
      ph = next;
    }
  }
}

TEST_CASE("observed and expected claims") {
  const Portfolio p = fixture();
  const Vector obs = observed_claims(p.members[0]);
  CHECK(obs[0] == 2.0);
  CHECK(obs[1] == 0.1 + 0.2);
  const Vector exp = expected_claims(p.members[0]);
  CHECK(exp[0] == doctest::Approx(1.5 * p.members[0].mu[0]));
  CHECK(exp[1] == doctest::Approx(p.members[0].mu[1]));
  CHECK(numeric_attr(p, p.members[0], "age") == 41.0);
  CHECK(std::isnan(numeric_attr(p, p.members[0], "region")));
  CHECK(std::isnan(numeric_attr(p, p.members[0], "nope")));
}
