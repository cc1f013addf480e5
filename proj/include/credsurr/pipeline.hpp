#pragma once

// Subcommand bodies. Each reads and writes the files named in the config
// (atomically) and reports progress on `log`.

#include "credsurr/config.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace credsurr {

void cmd_generate(const RunConfig& c, std::ostream& log);
void cmd_oracle(const RunConfig& c, std::ostream& log);
void cmd_sample(const RunConfig& c, std::ostream& log);
void cmd_fit(const RunConfig& c, std::ostream& log);
void cmd_predict(const RunConfig& c, std::ostream& log);
void cmd_assess(const RunConfig& c, std::ostream& log);
void cmd_report(const RunConfig& c, std::ostream& log);
void cmd_study(const RunConfig& c, std::ostream& log);
void cmd_validate(const RunConfig& c, std::ostream& log);
// generate (when configured), sample, oracle, fit, predict, assess, report.
// A failing stage rethrows with its name prefixed, keeping the error class.
void cmd_pipeline(const RunConfig& c, std::ostream& log);

// Premium files: id,principle,alpha,value,std_error,ess,K,seed
std::string premiums_to_csv(const std::vector<std::string>& ids, const std::vector<PremiumEstimate>& est,
                            const PremiumPrinciple& pr, Index K, std::uint64_t seed);
std::map<std::string, PremiumEstimate> read_premiums(const std::string& path);

// sample.csv: id,selected
std::vector<std::string> read_sample(const std::string& path);

// Plot data helpers, exposed for tests.
std::string qq_csv(std::vector<Scalar> a, std::vector<Scalar> b);
std::string histogram_csv(const std::vector<Scalar>& v, int bins);
// g on a grid over input `j` with the other raw inputs held at `at`.
std::string g_curve_csv(const GComponent& g, int j, ConstRef<Vector> at, int points);

}  // namespace credsurr
