#include "credsurr/pipeline.hpp"

#include "credsurr/balance.hpp"
#include "credsurr/credindex.hpp"
#include "credsurr/error.hpp"
#include "credsurr/oracle.hpp"
#include "credsurr/portfolio.hpp"
#include "credsurr/surrogate.hpp"
#include "credsurr/synth.hpp"
#include "credsurr/util.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <ostream>

namespace credsurr {

namespace {

namespace fs = std::filesystem;

// offsets added to the run seed per stage
constexpr std::uint64_t kDrawSeed = 1, kSampleSeed = 2, kSplitSeed = 3, kFitSeed = 4;

Portfolio load(const RunConfig& c) { return load_portfolio(c.paths.portfolio, require_model(c)); }

std::vector<Scalar> lookup(const Portfolio& p, const std::map<std::string, PremiumEstimate>& m, const std::string& path) {
  std::vector<Scalar> out;
  out.reserve(p.size());
  for (const auto& ph : p.members) {
    const auto it = m.find(ph.id);
    if (it == m.end()) throw ParseError(path + ": no premium for policyholder '" + ph.id + "'");
    out.push_back(it->second.value);
  }
  return out;
}

std::size_t column(const CsvTable& t, const std::string& name, const std::string& path) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw ParseError(path + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

std::string fmt(Scalar v) { return format_double(v); }

Json metrics_json(const Metrics& m) {
  Json j;
  j["n"] = m.n;
  j["R2"] = m.R2;
  j["MSE"] = m.MSE;
  j["ME"] = m.ME;
  j["MAE"] = m.MAE;
  j["MAPE"] = m.MAPE;
  return j;
}

// Policyholders with experience drawn from the sample, split as configured.
struct TrainSplit {
  std::vector<std::size_t> train, test;
};

TrainSplit split_sample(const RunConfig& c, const Portfolio& p, const std::vector<std::string>& sample) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < p.size(); ++i) pos[p.members[i].id] = i;
  std::vector<std::size_t> members;
  for (const auto& id : sample) {
    const auto it = pos.find(id);
    if (it == pos.end()) throw ParseError(c.paths.sample + ": unknown policyholder '" + id + "'");
    members.push_back(it->second);
  }
  TrainSplit s;
  if (c.test_fraction > 0.0) {
    const auto [tr, te] = split_train_test(members.size(), c.test_fraction, c.seed + kSplitSeed);
    for (std::size_t k : tr) s.train.push_back(members[k]);
    for (std::size_t k : te) s.test.push_back(members[k]);
  } else {
    s.train = members;
  }
  return s;
}

std::vector<TrainingRow> rows_of(const Portfolio& p, const std::vector<std::size_t>& pos,
                                 const std::vector<Scalar>& prem, const std::vector<Scalar>& man) {
  std::vector<TrainingRow> r;
  for (std::size_t i : pos) r.push_back({&p.members[i], prem[i], man[i]});
  return r;
}

Scalar median(std::vector<Scalar> v) {
  if (v.empty()) return 0.0;
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h), v.end());
  Scalar m = v[h];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h)));
  return m;
}

}  // namespace

std::string premiums_to_csv(const std::vector<std::string>& ids, const std::vector<PremiumEstimate>& est,
                            const PremiumPrinciple& pr, Index K, std::uint64_t seed) {
  if (ids.size() != est.size()) throw ConfigError("ids and estimates differ in length");
  std::string out = "id,principle,alpha,value,std_error,ess,K,seed\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out += csv_join({ids[i], std::string(principle_name(pr.kind)), fmt(pr.alpha), fmt(est[i].value), fmt(est[i].std_error),
                     fmt(est[i].ess), std::to_string(K), std::to_string(seed)}) +
           "\n";
  }
  return out;
}

std::map<std::string, PremiumEstimate> read_premiums(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t ci = column(t, "id", path), cv = column(t, "value", path), cs = column(t, "std_error", path),
                    ce = column(t, "ess", path);
  std::map<std::string, PremiumEstimate> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    PremiumEstimate e;
    try {
      e.value = parse_double(row.at(cv));
      e.std_error = parse_double(row.at(cs));
      e.ess = parse_double(row.at(ce));
    } catch (const std::exception& ex) {
      throw ParseError(path + ":" + std::to_string(t.lines.at(r)) + ": " + ex.what());
    }
    if (!out.emplace(row.at(ci), e).second) throw ParseError(path + ": duplicate id '" + row.at(ci) + "'");
  }
  return out;
}

std::vector<std::string> read_sample(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t ci = column(t, "id", path), cs = column(t, "selected", path);
  std::vector<std::string> ids;
  for (const auto& row : t.rows) {
    if (row.at(cs) == "1") ids.push_back(row.at(ci));
    else if (row.at(cs) != "0") throw ParseError(path + ": selected must be 0 or 1");
  }
  return ids;
}

std::string qq_csv(std::vector<Scalar> a, std::vector<Scalar> b) {
  if (a.size() != b.size()) throw ConfigError("QQ data needs samples of equal size");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::string out = "p,oracle,surrogate\n";
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar p = (static_cast<Scalar>(i) + 0.5) / static_cast<Scalar>(n);
    out += csv_join({fmt(p), fmt(a[i]), fmt(b[i])}) + "\n";
  }
  return out;
}

std::string histogram_csv(const std::vector<Scalar>& v, int bins) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  std::string out = "bin_lo,bin_hi,count\n";
  if (v.empty()) return out;
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const Scalar lo = *mn;
  const Scalar hi = *mx > *mn ? *mx : *mn + 1.0;
  std::vector<Index> count(static_cast<std::size_t>(bins), 0);
  for (Scalar x : v) {
    auto b = static_cast<std::size_t>(std::floor((x - lo) / (hi - lo) * bins));
    count[std::min(b, count.size() - 1)]++;
  }
  for (int b = 0; b < bins; ++b) {
    out += csv_join({fmt(lo + (hi - lo) * b / bins), fmt(lo + (hi - lo) * (b + 1) / bins),
                     std::to_string(count[static_cast<std::size_t>(b)])}) +
           "\n";
  }
  return out;
}

std::string g_curve_csv(const GComponent& g, int j, ConstRef<Vector> at, int points) {
  if (at.size() != g.n_inputs) throw ConfigError("g curve needs a full input vector");
  const auto it = std::find(g.used.begin(), g.used.end(), j);
  if (it == g.used.end()) throw ConfigError("input " + std::to_string(j) + " carries no basis");
  const auto& b = g.bases[static_cast<std::size_t>(it - g.used.begin())];
  std::string out = "x,g,factor\n";
  Vector x = at;
  const int P = std::max(2, points);
  for (int k = 0; k < P; ++k) {
    x[j] = k == P - 1 ? b.hi : b.lo + (b.hi - b.lo) * k / (P - 1);
    const Scalar v = eval_g(g, x);
    out += csv_join({fmt(x[j]), fmt(v), fmt(std::exp(v))}) + "\n";
  }
  return out;
}

void cmd_generate(const RunConfig& c, std::ostream& log) {
  const Scenario sc = scenario_of(c);
  const SynthPortfolio s = generate_portfolio(sc);
  save_portfolio(s.portfolio, c.paths.portfolio);
  std::vector<std::string> head = {"id"};
  for (int d = 1; d <= s.portfolio.D; ++d) head.push_back("alpha_" + std::to_string(d));
  head.push_back("theta");
  std::string truths = csv_join(head) + "\n";
  for (std::size_t i = 0; i < s.portfolio.size(); ++i) {
    std::vector<std::string> f = {s.portfolio.members[i].id};
    for (int d = 0; d < s.portfolio.D; ++d) f.push_back(fmt(s.alpha(static_cast<Index>(i), d)));
    f.push_back(fmt(s.theta[static_cast<Index>(i)]));
    truths += csv_join(f) + "\n";
  }
  write_file_atomic(c.paths.truths, truths);
  log << "generate: " << s.portfolio.size() << " policyholders -> " << c.paths.portfolio << "\n";
}

void cmd_oracle(const RunConfig& c, std::ostream& log) {
  validate(c, {"portfolio"});
  const ModelSpec& model = require_model(c);
  const Portfolio p = load(c);
  const PriorDraws draws = draw_prior(model.prior, c.K, c.seed + kDrawSeed);
  std::vector<std::string> ids;
  for (const auto& ph : p.members) ids.push_back(ph.id);
  const auto prem = premiums(p, model, draws, c.principle, c.threads);
  const auto man = manual_premiums(p, model, draws, c.principle, c.threads);
  write_file_atomic(c.paths.premiums, premiums_to_csv(ids, prem, c.principle, c.K, c.seed + kDrawSeed));
  write_file_atomic(c.paths.manuals, premiums_to_csv(ids, man, c.principle, c.K, c.seed + kDrawSeed));
  Index weak = 0;
  for (const auto& e : prem) weak += e.ess < 0.01 * static_cast<Scalar>(c.K);
  log << "oracle: " << p.size() << " premiums (" << principle_name(c.principle.kind) << ", K=" << c.K << ")";
  if (weak) log << ", " << weak << " with ESS below 1% of K";
  log << " -> " << c.paths.premiums << "\n";
}

void cmd_sample(const RunConfig& c, std::ostream& log) {
  validate(c, {"portfolio"});
  const Portfolio p = load(c);
  const auto vars = c.balance_vars.empty() ? default_balance_vars(p.D) : c.balance_vars;
  const Subportfolio sub = select_subportfolio(p, c.fraction, vars, c.seed + kSampleSeed);
  std::string out = "id,selected\n";
  for (std::size_t i = 0; i < p.size(); ++i) {
    out += csv_join({p.members[i].id, sub.result.indicator[static_cast<Index>(i)] ? "1" : "0"}) + "\n";
  }
  write_file_atomic(c.paths.sample, out);
  // balance report: population and Horvitz-Thompson totals per variable
  const Matrix V = balance_matrix(p, vars);
  std::string rep = "variable,population_total,ht_total,relative_gap\n";
  rep += csv_join({"size", fmt(static_cast<Scalar>(p.size())), fmt(static_cast<Scalar>(sub.members.size()) / c.fraction),
                   fmt(p.size() ? (static_cast<Scalar>(sub.members.size()) / c.fraction - static_cast<Scalar>(p.size())) /
                                      static_cast<Scalar>(p.size())
                                : 0.0)}) +
         "\n";
  for (Index k = 0; k < V.cols(); ++k) {
    const Scalar total = V.col(k).sum();
    Scalar ht = 0.0;
    for (std::size_t i : sub.members) ht += V(static_cast<Index>(i), k) / c.fraction;
    const Scalar gap = total != 0.0 ? (ht - total) / std::abs(total) : ht - total;
    rep += csv_join({vars[static_cast<std::size_t>(k)], fmt(total), fmt(ht), fmt(gap)}) + "\n";
  }
  write_file_atomic(c.paths.balance, rep);
  log << "sample: " << sub.members.size() << " of " << p.size() << " selected -> " << c.paths.sample << "\n";
}

void cmd_fit(const RunConfig& c, std::ostream& log) {
  validate(c, {"portfolio", "premiums", "manuals", "sample"});
  const ModelSpec& model = require_model(c);
  const Portfolio p = load(c);
  const auto prem = lookup(p, read_premiums(c.paths.premiums), c.paths.premiums);
  const auto man = lookup(p, read_premiums(c.paths.manuals), c.paths.manuals);
  const TrainSplit s = split_sample(c, p, read_sample(c.paths.sample));
  SurrogateConfig sc = c.surrogate;
  sc.seed = c.seed + kFitSeed;
  sc.threads = c.threads;
  SurrogateModel m = fit_surrogate(rows_of(p, s.train, prem, man), model, p.attr_names, sc);
  if (s.test.size() >= 2) m.test = assess(m, rows_of(p, s.test, prem, man));
  save_surrogate(m, c.paths.surrogate);
  log << "fit: " << gform_name(m.g.form) << " on " << m.train.n << " policyholders, R2 train " << m.train.R2;
  if (m.test) log << ", test " << m.test->R2;
  log << ", " << m.iterations_used << " iteration(s) -> " << c.paths.surrogate << "\n";
}

void cmd_predict(const RunConfig& c, std::ostream& log) {
  validate(c, {"portfolio", "manuals", "surrogate"});
  const Portfolio p = load(c);
  const SurrogateModel m = load_surrogate(c.paths.surrogate);
  const auto man = lookup(p, read_premiums(c.paths.manuals), c.paths.manuals);
  const auto pred = predict_all(m, p, man, c.threads);
  std::string out = "id,manual,factor,premium\n";
  std::vector<std::string> head = {"id", "theta_tilde", "index_total"};
  for (int d = 1; d <= p.D; ++d) head.push_back("index_dim_" + std::to_string(d));
  for (int d = 1; d <= p.D; ++d) head.push_back("n_dim_" + std::to_string(d));
  std::string idx = csv_join(head) + "\n";
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& ph = p.members[i];
    out += csv_join({ph.id, fmt(man[i]), fmt(pred[i].factor), fmt(pred[i].premium)}) + "\n";
    if (ph.n_total() == 0) continue;
    const IndexValue v = credibility_index(ph, m.model, pred[i].theta_tilde);
    std::vector<std::string> f = {ph.id, fmt(pred[i].theta_tilde), fmt(v.total)};
    for (int d = 0; d < p.D; ++d) f.push_back(fmt(v.per_dim[d]));
    for (int d = 0; d < p.D; ++d) f.push_back(std::to_string(v.n_per_dim[d]));
    idx += csv_join(f) + "\n";
  }
  write_file_atomic(c.paths.predictions, out);
  write_file_atomic(c.paths.index, idx);
  log << "predict: " << p.size() << " premiums -> " << c.paths.predictions << "\n";
}

void cmd_assess(const RunConfig& c, std::ostream& log) {
  validate(c, {"portfolio", "premiums", "sample", "surrogate", "predictions"});
  const Portfolio p = load(c);
  const SurrogateModel m = load_surrogate(c.paths.surrogate);
  const auto prem = lookup(p, read_premiums(c.paths.premiums), c.paths.premiums);
  const CsvTable pt = read_csv(c.paths.predictions);
  const std::size_t ci = column(pt, "id", c.paths.predictions), cp = column(pt, "premium", c.paths.predictions),
                    cm = column(pt, "manual", c.paths.predictions), cf = column(pt, "factor", c.paths.predictions);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < p.size(); ++i) pos[p.members[i].id] = i;
  Vector fitted = Vector::Constant(static_cast<Index>(p.size()), std::numeric_limits<Scalar>::quiet_NaN());
  Scalar worst_arith = 0.0;
  for (const auto& row : pt.rows) {
    const auto it = pos.find(row.at(ci));
    if (it == pos.end()) throw ParseError(c.paths.predictions + ": unknown policyholder '" + row.at(ci) + "'");
    const Scalar premium = parse_double(row.at(cp));
    fitted[static_cast<Index>(it->second)] = premium;
    const Scalar replay = parse_double(row.at(cm)) * parse_double(row.at(cf));
    worst_arith = std::max(worst_arith, std::abs(replay - premium) / std::max<Scalar>(1.0, std::abs(premium)));
  }
  if (!fitted.allFinite()) throw ParseError(c.paths.predictions + ": not every policyholder has a prediction");
  Vector target(static_cast<Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) target[static_cast<Index>(i)] = prem[i];

  const auto sample = read_sample(c.paths.sample);
  const TrainSplit s = split_sample(c, p, sample);
  std::vector<char> in_sample(p.size(), 0);
  for (std::size_t i : s.train) in_sample[i] = 1;
  for (std::size_t i : s.test) in_sample[i] = 1;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!in_sample[i]) rest.push_back(i);
  }
  auto subset = [&](const std::vector<std::size_t>& idx) -> Json {
    if (idx.size() < 2) return nullptr;
    Vector t(static_cast<Index>(idx.size())), f(static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      t[static_cast<Index>(k)] = target[static_cast<Index>(idx[k])];
      f[static_cast<Index>(k)] = fitted[static_cast<Index>(idx[k])];
    }
    try {
      return metrics_json(compute_metrics(t, f));
    } catch (const NumericError&) {
      return nullptr;
    }
  };
  Json j;
  j["surrogate"] = {{"form", std::string(gform_name(m.g.form))},
                    {"iterations", m.iterations_used},
                    {"converged", m.converged},
                    {"mse_history", m.mse_history}};
  j["train"] = subset(s.train);
  j["test"] = subset(s.test);
  j["out_of_sample"] = subset(rest);
  std::vector<std::size_t> all(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) all[i] = i;
  j["full"] = subset(all);
  j["factor_arithmetic_max_rel_error"] = worst_arith;
  if (fs::exists(c.paths.balance)) {
    const CsvTable b = read_csv(c.paths.balance);
    Json bal = Json::array();
    for (const auto& row : b.rows) {
      bal.push_back({{"variable", row.at(0)}, {"relative_gap", parse_double(row.at(3))}});
    }
    j["balance"] = bal;
  }
  write_file_atomic(c.paths.assessment, j.dump(2) + "\n");
  log << "assess:";
  for (const char* k : {"train", "test", "out_of_sample", "full"}) {
    if (!j[k].is_null()) log << " R2 " << k << " " << j[k]["R2"].get<Scalar>();
  }
  log << " -> " << c.paths.assessment << "\n";
}

void cmd_report(const RunConfig& c, std::ostream& log) {
  validate(c, {"portfolio", "surrogate", "predictions"});
  const Portfolio p = load(c);
  const SurrogateModel m = load_surrogate(c.paths.surrogate);
  const std::string dir = c.paths.report_dir;
  const int D = p.D;
  const CsvTable pt = read_csv(c.paths.predictions);
  const std::size_t ci = column(pt, "id", c.paths.predictions), cp = column(pt, "premium", c.paths.predictions),
                    cm = column(pt, "manual", c.paths.predictions);
  std::map<std::string, std::pair<Scalar, Scalar>> pred;  // manual, premium
  for (const auto& row : pt.rows) pred[row.at(ci)] = {parse_double(row.at(cm)), parse_double(row.at(cp))};

  // sub-indexes against standardized claim frequency
  std::string ivf = "id,dim,index,standardized_frequency\n";
  std::vector<std::vector<Scalar>> by_dim(static_cast<std::size_t>(D));
  std::vector<Vector> inputs;
  for (const auto& ph : p.members) {
    if (ph.n_total() == 0) continue;
    const auto it = pred.find(ph.id);
    if (it == pred.end()) throw ParseError(c.paths.predictions + ": no prediction for '" + ph.id + "'");
    const Prediction q = predict(m, ph, it->second.first);
    const IndexValue v = credibility_index(ph, m.model, q.theta_tilde);
    const Vector freq = standardized_frequency(ph);
    for (int d = 0; d < D; ++d) {
      if (v.n_per_dim[d] == 0) continue;
      ivf += csv_join({ph.id, std::to_string(d + 1), fmt(v.per_dim[d]), fmt(freq[d])}) + "\n";
      by_dim[static_cast<std::size_t>(d)].push_back(v.per_dim[d]);
    }
    inputs.push_back(g_inputs(v, it->second.first));
  }
  write_file_atomic((fs::path(dir) / "index_vs_frequency.csv").string(), ivf);
  for (int d = 0; d < D; ++d) {
    write_file_atomic((fs::path(dir) / ("index_hist_dim_" + std::to_string(d + 1) + ".csv")).string(),
                      histogram_csv(by_dim[static_cast<std::size_t>(d)], 40));
  }

  // fitted g along each input, the others at their medians
  if (!inputs.empty() && m.g.size() > 0) {
    Vector at(m.g.n_inputs);
    for (int k = 0; k < m.g.n_inputs; ++k) {
      std::vector<Scalar> col;
      for (const auto& x : inputs) col.push_back(x[k]);
      at[k] = median(std::move(col));
    }
    const auto names = g_input_names(D);
    for (int j : m.g.used) {
      write_file_atomic((fs::path(dir) / ("g_curve_" + names[static_cast<std::size_t>(j)] + ".csv")).string(),
                        g_curve_csv(m.g, j, at, 101));
    }
  }

  // premium pairs and QQ data when oracle premiums exist
  std::vector<Scalar> factors;
  for (const auto& [id, v] : pred) factors.push_back(v.second / v.first);
  write_file_atomic((fs::path(dir) / "factor_hist.csv").string(), histogram_csv(factors, 40));
  if (fs::exists(c.paths.premiums)) {
    const auto oracle = read_premiums(c.paths.premiums);
    std::string pairs = "id,oracle,surrogate,manual\n";
    std::vector<Scalar> a, b;
    for (const auto& ph : p.members) {
      const auto it = oracle.find(ph.id);
      const auto jt = pred.find(ph.id);
      if (it == oracle.end() || jt == pred.end()) continue;
      pairs += csv_join({ph.id, fmt(it->second.value), fmt(jt->second.second), fmt(jt->second.first)}) + "\n";
      a.push_back(it->second.value);
      b.push_back(jt->second.second);
    }
    write_file_atomic((fs::path(dir) / "premium_pairs.csv").string(), pairs);
    write_file_atomic((fs::path(dir) / "premium_qq.csv").string(), qq_csv(a, b));
  }
  log << "report: plot data -> " << dir << "\n";
}

void cmd_study(const RunConfig& c, std::ostream& log) {
  validate(c);
  if (!c.study) throw ConfigError("config has no study block");
  std::vector<Scenario> scenarios;
  for (std::size_t k = 0; k < c.study->cells.size(); ++k) {
    const auto& cell = c.study->cells[k];
    Scenario sc = default_scenario(cell.model, cell.prior, c.study->N, c.study->periods, c.seed + 1000 * k);
    sc.principles = cell.principles;
    scenarios.push_back(std::move(sc));
  }
  StudyConfig sc;
  sc.K = c.K;
  sc.fraction = c.fraction;
  sc.test_fraction = c.test_fraction;
  sc.balance_vars = c.balance_vars;
  sc.surrogate = c.surrogate;
  sc.threads = c.threads;
  sc.seed = c.seed;
  const auto rows = run_study(scenarios, sc);
  write_file_atomic(c.paths.study, study_to_csv(rows));
  log << study_table(rows);
  log << "study: " << rows.size() << " cell(s) -> " << c.paths.study << "\n";
}

void cmd_validate(const RunConfig& c, std::ostream& log) {
  validate(c);
  log << "config ok";
  if (!c.source.empty()) log << ": " << c.source;
  log << "\n";
}

void cmd_pipeline(const RunConfig& c, std::ostream& log) {
  validate(c);
  auto stage = [&](const char* name, void (*fn)(const RunConfig&, std::ostream&)) {
    try {
      fn(c, log);
    } catch (const Error& e) {
      throw Error(e.error_class(), std::string(name) + ": " + e.what());
    }
  };
  if (c.generate) stage("generate", cmd_generate);
  stage("sample", cmd_sample);
  stage("oracle", cmd_oracle);
  stage("fit", cmd_fit);
  stage("predict", cmd_predict);
  stage("assess", cmd_assess);
  stage("report", cmd_report);
}

}  // namespace credsurr
