#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qrec/trainer.hpp"

namespace qrec {

// One completed run, reconstructed from its on-disk artifacts (manifest +
// metrics CSV); everything a report needs, nothing more.
struct RunSummary {
  std::string dir;
  std::string method;
  std::uint64_t seed = 0;
  std::string env_echo;  // canonical env.* block, used to require matching setups
  std::vector<int> eval_ts;
  std::vector<double> final_eval;  // last evaluated row of the metrics CSV
};

RunSummary load_run_summary(const std::string& run_dir);

// Accepts run directories or parents of run directories; expands to each
// directory that holds a metrics.csv.
std::vector<std::string> expand_run_dirs(const std::vector<std::string>& dirs);

std::string format_eval_table(const EvalResult& result);

// Side-by-side table over shared seeds plus per-seed win/loss/tie counts of
// every method against the first one.
std::string compare_runs(const std::vector<std::string>& dirs);

}  // namespace qrec
