#pragma once

#include "credsurr/dist.hpp"
#include "credsurr/error.hpp"
#include "credsurr/oracle.hpp"

#include "json.hpp"

namespace credsurr {

using Json = nlohmann::ordered_json;

// Model dimensions are {"family": ..., "shape": [...]} with the mean left to
// the link. Priors accept {"family", "mean", "variance"} or the raw
// {"family", "mean", "shape"}; they are written in the raw form.
Json to_json(const Distribution& d);
Json to_json(const PriorSpec& p);
Json to_json(const ModelSpec& m);
Json to_json(const PremiumPrinciple& p);

Distribution distribution_from_json(const Json& j);
PriorSpec prior_from_json(const Json& j);
ModelSpec model_from_json(const Json& j);
PremiumPrinciple principle_from_json(const Json& j);

Json parse_json(std::string_view text, const std::string& source);

// Typed field access with ConfigError on mismatch.
template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace credsurr
