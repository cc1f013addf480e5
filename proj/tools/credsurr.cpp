// credsurr: command-line front end. Every subcommand reads one JSON config;
// --seed, --threads and --out override the matching config fields.

#include "credsurr/config.hpp"
#include "credsurr/error.hpp"
#include "credsurr/pipeline.hpp"
#include "credsurr/util.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace {

using namespace credsurr;

int exit_code(ErrorClass c) {
  switch (c) {
    case ErrorClass::Config: return 2;
    case ErrorClass::Data: return 3;
    case ErrorClass::Numeric: return 4;
  }
  return 1;
}

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
};

// Overrides are applied to the JSON before parsing so that paths resolve
// against the final out_dir.
RunConfig load(const Overrides& o) {
  std::string text;
  try {
    text = read_file(o.config);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  Json j = parse_json(text, o.config);
  if (!j.is_object()) throw ConfigError(o.config + ": configuration must be a JSON object");
  if (o.seed) j["seed"] = *o.seed;
  if (o.threads) j["threads"] = *o.threads;
  if (o.out) j["out_dir"] = *o.out;
  RunConfig c = config_from_json(j, o.config);
  validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surrogate credibility premiums for large portfolios"};
  app.require_subcommand(1);
  Overrides o;

  using Cmd = std::function<void(const RunConfig&, std::ostream&)>;
  const std::vector<std::tuple<std::string, std::string, Cmd>> commands{
      {"generate", "simulate a synthetic portfolio", cmd_generate},
      {"oracle", "importance-sampling premiums for every policyholder", cmd_oracle},
      {"sample", "select a balanced sub-portfolio", cmd_sample},
      {"fit", "fit the surrogate on the sub-portfolio", cmd_fit},
      {"predict", "surrogate premiums for the whole portfolio", cmd_predict},
      {"assess", "goodness of fit and balance diagnostics", cmd_assess},
      {"study", "simulation study grid", cmd_study},
      {"report", "plot-ready CSV data", cmd_report},
      {"validate", "check the configuration", cmd_validate},
      {"pipeline", "sample, oracle, fit, predict, assess and report in order", cmd_pipeline},
  };
  Cmd chosen;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "JSON configuration file")->required();
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--threads", o.threads, "cap on worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "override out_dir");
    sub->callback([&chosen, f = fn] { chosen = f; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  set_diagnostic_sink([](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; });
  try {
    const RunConfig c = load(o);
    chosen(c, std::cerr);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
