#pragma once

// Run configuration: one JSON file drives every subcommand.
//
//   {
//     "seed": 42,                          required
//     "threads": 1,
//     "out_dir": "out",
//     "model": {"link": ..., "dims": [...], "prior": {...}},
//     "principle": {"kind": "ExpectedValue", "alpha": 0.05},
//     "K": 5000,
//     "fraction": 0.05,
//     "test_fraction": 0.0,
//     "balance_vars": ["claims_1", "mu_1"],
//     "surrogate": {"form", "lambda", "interior_knots", "degree", "smoothing", "gcv_tolerance",
//                   "max_iter", "tol", "grid_points", "starts", "features",
//                   "theta_bounds": [lo, hi],
//                   "forest": {"n_trees", "max_depth", "min_leaf", "mtry"}},
//     "generate": {"N": 5000, "periods": 5, "alpha_dist": [[mean, sd], ...]},
//     "paths": {"portfolio", "premiums", "manuals", "sample", "surrogate",
//               "predictions", "index", "assessment", "report_dir", "study",
//               "truths"},
//     "study": {"N": 5000, "periods": 5,
//               "cells": [{"model": "Poisson", "prior": "Gamma",
//                          "principles": ["ExpectedValue", ...]}]}
//   }
//
// Relative paths resolve against out_dir. Missing paths take default file
// names inside out_dir.

#include "credsurr/json_io.hpp"
#include "credsurr/synth.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace credsurr {

struct GenerateConfig {
  Index N = 5000;
  int periods = 5;
  std::vector<std::pair<Scalar, Scalar>> alpha_dist;  // empty: family defaults
};

struct StudyCell {
  Family model = Family::Poisson;
  Family prior = Family::Gamma;
  std::vector<PremiumPrinciple> principles;
};

struct StudyGrid {
  Index N = 5000;
  int periods = 5;
  std::vector<StudyCell> cells;
};

struct Paths {
  std::string portfolio;
  std::string premiums;
  std::string manuals;
  std::string sample;
  std::string balance;
  std::string surrogate;
  std::string predictions;
  std::string index;
  std::string assessment;
  std::string report_dir;
  std::string study;
  std::string truths;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = "out";
  std::optional<ModelSpec> model;
  PremiumPrinciple principle{PrincipleKind::ExpectedValue, 0.05};
  Index K = 5000;
  Scalar fraction = 0.05;
  Scalar test_fraction = 0.0;
  std::vector<std::string> balance_vars;
  SurrogateConfig surrogate;
  std::optional<GenerateConfig> generate;
  std::optional<StudyGrid> study;
  Paths paths;
  std::string source;  // file the config came from, for messages
};

// Parses and fills defaults. Throws ConfigError.
RunConfig config_from_json(const Json& j, const std::string& source);
RunConfig load_config(const std::string& path);
Json config_to_json(const RunConfig& c);

// Structural checks; `inputs` lists the path fields a command reads, which
// must exist unless an earlier stage of the same run writes them.
void validate(const RunConfig& c, const std::vector<std::string>& inputs = {});

const ModelSpec& require_model(const RunConfig& c);
// The scenario behind the generate block.
Scenario scenario_of(const RunConfig& c);

}  // namespace credsurr
