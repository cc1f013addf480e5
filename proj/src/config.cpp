#include "credsurr/config.hpp"

#include "credsurr/error.hpp"
#include "credsurr/util.hpp"

#include <filesystem>

namespace credsurr {

namespace {

namespace fs = std::filesystem;

std::string resolve(const std::string& out_dir, const std::string& p, const char* fallback) {
  const std::string name = p.empty() ? std::string(fallback) : p;
  const fs::path path(name);
  if (path.is_absolute()) return name;
  return (fs::path(out_dir) / path).lexically_normal().string();
}

std::vector<std::pair<Scalar, Scalar>> alpha_pairs(const Json& j) {
  std::vector<std::pair<Scalar, Scalar>> out;
  if (!j.is_array()) throw ConfigError("alpha_dist must be a list of [mean, sd] pairs");
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
      throw ConfigError("alpha_dist entries must be [mean, sd]");
    }
    out.emplace_back(e[0].get<Scalar>(), e[1].get<Scalar>());
  }
  return out;
}

SurrogateConfig surrogate_from_json(const Json& j) {
  SurrogateConfig s;
  if (j.is_null()) return s;
  if (!j.is_object()) throw ConfigError("surrogate must be an object");
  s.form = parse_gform(get_or<std::string>(j, "form", std::string(gform_name(s.form))));
  s.lambda = get_or<Scalar>(j, "lambda", s.lambda);
  s.spline.interior_knots = get_or<int>(j, "interior_knots", s.spline.interior_knots);
  s.spline.degree = get_or<int>(j, "degree", s.spline.degree);
  s.spline.smoothing = get_or<Scalar>(j, "smoothing", s.spline.smoothing);
  s.spline.gcv_tolerance = get_or<Scalar>(j, "gcv_tolerance", s.spline.gcv_tolerance);
  s.max_iter = get_or<int>(j, "max_iter", s.max_iter);
  s.tol = get_or<Scalar>(j, "tol", s.tol);
  s.grid_points = get_or<int>(j, "grid_points", s.grid_points);
  s.starts = get_or<int>(j, "starts", s.starts);
  s.features = get_or<std::vector<std::string>>(j, "features", {});
  if (j.contains("theta_bounds") && !j.at("theta_bounds").is_null()) {
    const auto b = j.at("theta_bounds");
    if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number()) {
      throw ConfigError("theta_bounds must be [lo, hi]");
    }
    s.theta_bounds = std::make_pair(b[0].get<Scalar>(), b[1].get<Scalar>());
  }
  if (j.contains("forest")) {
    const auto& f = j.at("forest");
    s.forest.n_trees = get_or<int>(f, "n_trees", s.forest.n_trees);
    s.forest.max_depth = get_or<int>(f, "max_depth", s.forest.max_depth);
    s.forest.min_leaf = get_or<int>(f, "min_leaf", s.forest.min_leaf);
    s.forest.mtry = get_or<int>(f, "mtry", s.forest.mtry);
  }
  return s;
}

Json surrogate_to_json_cfg(const SurrogateConfig& s) {
  Json j;
  j["form"] = std::string(gform_name(s.form));
  j["lambda"] = s.lambda;
  j["interior_knots"] = s.spline.interior_knots;
  j["degree"] = s.spline.degree;
  j["smoothing"] = s.spline.smoothing;
  j["gcv_tolerance"] = s.spline.gcv_tolerance;
  j["max_iter"] = s.max_iter;
  j["tol"] = s.tol;
  j["grid_points"] = s.grid_points;
  j["starts"] = s.starts;
  j["features"] = s.features;
  if (s.theta_bounds) j["theta_bounds"] = {s.theta_bounds->first, s.theta_bounds->second};
  j["forest"] = {{"n_trees", s.forest.n_trees},
                 {"max_depth", s.forest.max_depth},
                 {"min_leaf", s.forest.min_leaf},
                 {"mtry", s.forest.mtry}};
  return j;
}

}  // namespace

RunConfig config_from_json(const Json& j, const std::string& source) {
  if (!j.is_object()) throw ConfigError(source + ": configuration must be a JSON object");
  RunConfig c;
  c.source = source;
  try {
    if (!j.contains("seed")) throw ConfigError("missing field 'seed' (runs are never seeded from the clock)");
    c.seed = require<std::uint64_t>(j, "seed");
    c.threads = get_or<int>(j, "threads", 1);
    c.out_dir = get_or<std::string>(j, "out_dir", "out");
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    if (j.contains("principle")) c.principle = principle_from_json(j.at("principle"));
    c.K = get_or<Index>(j, "K", c.K);
    c.fraction = get_or<Scalar>(j, "fraction", c.fraction);
    c.test_fraction = get_or<Scalar>(j, "test_fraction", c.test_fraction);
    c.balance_vars = get_or<std::vector<std::string>>(j, "balance_vars", {});
    c.surrogate = surrogate_from_json(j.contains("surrogate") ? j.at("surrogate") : Json());
    if (j.contains("generate")) {
      const auto& g = j.at("generate");
      GenerateConfig gc;
      gc.N = get_or<Index>(g, "N", gc.N);
      gc.periods = get_or<int>(g, "periods", gc.periods);
      if (g.contains("alpha_dist")) gc.alpha_dist = alpha_pairs(g.at("alpha_dist"));
      c.generate = gc;
    }
    if (j.contains("study")) {
      const auto& s = j.at("study");
      StudyGrid sg;
      sg.N = get_or<Index>(s, "N", sg.N);
      sg.periods = get_or<int>(s, "periods", sg.periods);
      if (!s.contains("cells") || !s.at("cells").is_array()) throw ConfigError("study needs a list of cells");
      for (const auto& cell : s.at("cells")) {
        StudyCell sc;
        sc.model = parse_family(require<std::string>(cell, "model"));
        sc.prior = parse_family(require<std::string>(cell, "prior"));
        if (cell.contains("principles")) {
          for (const auto& p : cell.at("principles")) sc.principles.push_back(principle_from_json(p));
        }
        if (sc.principles.empty()) sc.principles.push_back(c.principle);
        sg.cells.push_back(std::move(sc));
      }
      c.study = std::move(sg);
    }
    const Json paths = j.contains("paths") ? j.at("paths") : Json::object();
    auto path = [&](const char* key, const char* fallback) {
      return resolve(c.out_dir, get_or<std::string>(paths, key, ""), fallback);
    };
    c.paths.portfolio = path("portfolio", "portfolio.csv");
    c.paths.premiums = path("premiums", "premiums.csv");
    c.paths.manuals = path("manuals", "manuals.csv");
    c.paths.sample = path("sample", "sample.csv");
    c.paths.balance = path("balance", "balance.csv");
    c.paths.surrogate = path("surrogate", "surrogate.json");
    c.paths.predictions = path("predictions", "predictions.csv");
    c.paths.index = path("index", "index.csv");
    c.paths.assessment = path("assessment", "assessment.json");
    c.paths.report_dir = path("report_dir", "report");
    c.paths.study = path("study", "study.csv");
    c.paths.truths = path("truths", "truths.csv");
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const Error& e) {
    // parameter problems in the model block are configuration problems here
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  RunConfig c = config_from_json(parse_json(text, path), path);
  validate(c);
  return c;
}

Json config_to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out_dir"] = c.out_dir;
  if (c.model) j["model"] = to_json(*c.model);
  j["principle"] = to_json(c.principle);
  j["K"] = c.K;
  j["fraction"] = c.fraction;
  j["test_fraction"] = c.test_fraction;
  j["balance_vars"] = c.balance_vars;
  j["surrogate"] = surrogate_to_json_cfg(c.surrogate);
  if (c.generate) {
    Json g;
    g["N"] = c.generate->N;
    g["periods"] = c.generate->periods;
    Json a = Json::array();
    for (const auto& [m, s] : c.generate->alpha_dist) a.push_back({m, s});
    g["alpha_dist"] = a;
    j["generate"] = g;
  }
  if (c.study) {
    Json s;
    s["N"] = c.study->N;
    s["periods"] = c.study->periods;
    Json cells = Json::array();
    for (const auto& cell : c.study->cells) {
      Json e;
      e["model"] = std::string(family_name(cell.model));
      e["prior"] = std::string(family_name(cell.prior));
      Json ps = Json::array();
      for (const auto& p : cell.principles) ps.push_back(to_json(p));
      e["principles"] = ps;
      cells.push_back(e);
    }
    s["cells"] = cells;
    j["study"] = s;
  }
  j["paths"] = {{"portfolio", c.paths.portfolio},     {"premiums", c.paths.premiums},
                {"manuals", c.paths.manuals},         {"sample", c.paths.sample},
                {"balance", c.paths.balance},         {"surrogate", c.paths.surrogate},
                {"predictions", c.paths.predictions}, {"index", c.paths.index},
                {"assessment", c.paths.assessment},   {"report_dir", c.paths.report_dir},
                {"study", c.paths.study},             {"truths", c.paths.truths}};
  return j;
}

void validate(const RunConfig& c, const std::vector<std::string>& inputs) {
  const std::string at = c.source.empty() ? std::string("config") : c.source;
  auto fail = [&](const std::string& msg) { throw ConfigError(at + ": " + msg); };
  if (c.threads < 1) fail("threads must be >= 1");
  if (c.out_dir.empty()) fail("out_dir must not be empty");
  if (c.K < 1) fail("K must be >= 1");
  if (!(c.fraction > 0.0 && c.fraction <= 1.0)) fail("fraction must lie in (0, 1]");
  if (!(c.test_fraction >= 0.0 && c.test_fraction < 1.0)) fail("test_fraction must lie in [0, 1)");
  try {
    validate(c.principle);
    if (c.model) validate(*c.model);
  } catch (const Error& e) {
    fail(e.what());
  }
  const auto& s = c.surrogate;
  if (!(s.lambda >= 0.0)) fail("surrogate.lambda must be >= 0");
  if (s.spline.degree < 1 || s.spline.degree > 10) fail("surrogate.degree must lie in [1, 10]");
  if (s.spline.interior_knots < 0) fail("surrogate.interior_knots must be >= 0");
  if (s.max_iter < 0) fail("surrogate.max_iter must be >= 0");
  if (!(s.tol >= 0.0)) fail("surrogate.tol must be >= 0");
  if (s.grid_points < 3) fail("surrogate.grid_points must be >= 3");
  if (s.starts < 1) fail("surrogate.starts must be >= 1");
  if (!(s.spline.gcv_tolerance >= 0.0)) fail("surrogate.gcv_tolerance must be >= 0");
  if (s.forest.n_trees < 1 || s.forest.max_depth < 1 || s.forest.min_leaf < 1 || s.forest.mtry < 0) {
    fail("surrogate.forest needs n_trees, max_depth, min_leaf >= 1 and mtry >= 0");
  }
  if (s.theta_bounds && !(s.theta_bounds->first < s.theta_bounds->second)) fail("theta_bounds must satisfy lo < hi");
  if (c.generate) {
    if (!c.model) fail("generate needs a model");
    if (c.generate->N < 1 || c.generate->periods < 1) fail("generate needs N >= 1 and periods >= 1");
    if (!c.generate->alpha_dist.empty() && static_cast<int>(c.generate->alpha_dist.size()) != c.model->D()) {
      fail("generate.alpha_dist needs one [mean, sd] per model dimension");
    }
    for (const auto& [m, sd] : c.generate->alpha_dist) {
      if (!std::isfinite(m) || !(sd >= 0.0)) fail("generate.alpha_dist needs finite means and sd >= 0");
    }
  }
  if (c.study) {
    if (c.study->N < 1 || c.study->periods < 1) fail("study needs N >= 1 and periods >= 1");
    if (c.study->cells.empty()) fail("study needs at least one cell");
    for (const auto& cell : c.study->cells) {
      if (!is_prior_family(cell.prior)) fail("study prior '" + std::string(family_name(cell.prior)) + "' is not a prior family");
    }
  }
  for (const auto& key : inputs) {
    const std::string* p = nullptr;
    if (key == "portfolio") p = &c.paths.portfolio;
    else if (key == "premiums") p = &c.paths.premiums;
    else if (key == "manuals") p = &c.paths.manuals;
    else if (key == "sample") p = &c.paths.sample;
    else if (key == "surrogate") p = &c.paths.surrogate;
    else if (key == "predictions") p = &c.paths.predictions;
    else fail("unknown input '" + key + "'");
    if (!fs::exists(*p)) fail("input '" + key + "' not found: " + *p);
  }
}

const ModelSpec& require_model(const RunConfig& c) {
  if (!c.model) throw ConfigError((c.source.empty() ? std::string("config") : c.source) + ": missing field 'model'");
  return *c.model;
}

Scenario scenario_of(const RunConfig& c) {
  if (!c.generate) throw ConfigError("config has no generate block");
  Scenario sc;
  sc.model = require_model(c);
  sc.principles = {c.principle};
  sc.N = c.generate->N;
  sc.n = c.generate->periods;
  sc.alpha_dist = c.generate->alpha_dist;
  if (sc.alpha_dist.empty()) {
    for (const auto& d : sc.model.dims) sc.alpha_dist.push_back(default_alpha_dist(d.family));
  }
  sc.seed = c.seed;
  validate(sc);
  return sc;
}

}  // namespace credsurr
