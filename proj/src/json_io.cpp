#include "credsurr/json_io.hpp"

#include "credsurr/error.hpp"

namespace credsurr {

Json to_json(const Distribution& d) {
  Json j;
  j["family"] = std::string(family_name(d.family));
  Json shape = Json::array();
  const int n = param_count(d.family);
  if (n > 1) shape.push_back(d.shape);
  if (n > 2) shape.push_back(d.shape2);
  j["shape"] = shape;
  return j;
}

Distribution distribution_from_json(const Json& j) {
  const Family f = parse_family(require<std::string>(j, "family"));
  std::vector<Scalar> params = {1.0};
  for (Scalar s : get_or<std::vector<Scalar>>(j, "shape", {})) params.push_back(s);
  return make_distribution(f, params);
}

Json to_json(const PriorSpec& p) {
  Json j;
  j["family"] = std::string(family_name(p.dist.family));
  j["mean"] = p.dist.mean;
  j["shape"] = p.dist.shape;
  if (p.mean_constraint) j["mean_constraint"] = *p.mean_constraint;
  return j;
}

PriorSpec prior_from_json(const Json& j) {
  const Family f = parse_family(require<std::string>(j, "family"));
  const Scalar mean = require<Scalar>(j, "mean");
  std::optional<Scalar> c;
  if (j.contains("mean_constraint") && !j.at("mean_constraint").is_null()) c = require<Scalar>(j, "mean_constraint");
  if (j.contains("shape")) {
    PriorSpec p{Distribution{f, mean, require<Scalar>(j, "shape"), 0.0}, c};
    validate(p);
    return p;
  }
  return make_prior(f, mean, require<Scalar>(j, "variance"), c);
}

Json to_json(const ModelSpec& m) {
  Json j;
  j["link"] = std::string(link_name(m.link));
  Json dims = Json::array();
  for (const auto& d : m.dims) dims.push_back(to_json(d));
  j["dims"] = dims;
  j["prior"] = to_json(m.prior);
  return j;
}

ModelSpec model_from_json(const Json& j) {
  ModelSpec m;
  m.link = parse_link(get_or<std::string>(j, "link", "MultiplicativeFrailty"));
  if (!j.contains("dims") || !j.at("dims").is_array()) throw ConfigError("model needs a 'dims' array");
  for (const auto& d : j.at("dims")) m.dims.push_back(distribution_from_json(d));
  if (!j.contains("prior")) throw ConfigError("model needs a 'prior'");
  m.prior = prior_from_json(j.at("prior"));
  validate(m);
  return m;
}

Json to_json(const PremiumPrinciple& p) {
  Json j;
  j["kind"] = std::string(principle_name(p.kind));
  j["alpha"] = p.alpha;
  return j;
}

PremiumPrinciple principle_from_json(const Json& j) {
  PremiumPrinciple p;
  if (j.is_string()) {
    p.kind = parse_principle(j.get<std::string>());
  } else {
    p.kind = parse_principle(require<std::string>(j, "kind"));
    p.alpha = get_or<Scalar>(j, "alpha", 0.0);
  }
  validate(p);
  return p;
}

Json parse_json(std::string_view text, const std::string& source) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

}  // namespace credsurr
