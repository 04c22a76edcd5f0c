#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "msinv/config.hpp"
#include "msinv/inversion.hpp"

namespace msinv {

struct RunSummary {
  ObjectiveTerms initial_terms;
  ObjectiveTerms final_terms;
  int iterations = 0;
  bool any_rejection = false;
  Real wall_seconds = 0;
  ErrorReport report;
};

// Full pipeline: truth mesh and fine reference solve, synthetic
// observations, prior space and coarse system, inversion, error report.
// Writes history.csv, errors.csv, observations.csv, eigenvalues.csv and
// report.txt into config.output_dir (created if missing). Progress lines go
// to `log`.
RunSummary run_case(const ExperimentConfig& config, std::ostream& log);

// Static diagnostics without running: resolved cell sets, fracture snap
// residuals, predicted problem sizes.
void validate_config(const ExperimentConfig& config, std::ostream& out);

// Runs once per value with `key` overridden, each into the subdirectory
// <output_dir>/<key>_<value>.
void sweep(const ExperimentConfig& base, const std::string& key,
           const std::vector<std::string>& values, std::ostream& log);

} // namespace msinv
