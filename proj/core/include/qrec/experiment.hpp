#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qrec/kvfile.hpp"
#include "qrec/simulator.hpp"
#include "qrec/trainer.hpp"

namespace qrec {

// Shortest round-trip decimal form of a double (repeatable byte-for-byte).
std::string format_double(double v);

// Fully resolved experiment description. Every run artifact (metrics CSV,
// checkpoint) is attributable to a manifest produced from one of these plus
// a seed.
struct ExperimentConfig {
  std::string env_path;            // empty = built-in defaults
  SimulatorConfig env;
  Method method = Method::rar_a;
  double alpha = 0.5;
  double beta = 0.5;
  double psi = 0.1;
  double omega = 5.0;
  int m = 4;
  ReprVariant variant = ReprVariant::additive;
  double gamma = 0.99;
  double lr = 1e-3;
  int batch = 32;
  int iterations = 2000;
  int horizon = 30;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir = "runs";
  int eval_every = 200;
  int eval_students = 200;
  std::vector<int> eval_ts = {10, 30};
  int jobs = 1;

  // Parses and validates a flat key-value config; rejects unknown keys and
  // names the offending field in every error. `env.*` keys inline the
  // simulator config (they override an `env = <path>` file).
  static ExperimentConfig resolve(const KeyValueFile& kv);

  // Canonical single-seed manifest: enough to re-run this exact run.
  std::string manifest_text(std::uint64_t seed) const;

  SimulatorConfig resolved_env() const;  // env with the horizon applied
  TrainConfig to_train_config(std::uint64_t seed) const;
};

struct RunArtifacts {
  std::string dir;
  Method method = Method::random;
  std::uint64_t seed = 0;
  std::vector<int> eval_ts;
  std::vector<double> final_eval;
};

// Trains one run per seed (fanning out across `jobs` threads; each run is
// internally single-threaded) and writes per-run directories containing
// manifest.cfg, metrics.csv and checkpoint.ckpt.
std::vector<RunArtifacts> run_experiment(const ExperimentConfig& config, bool quiet = false);

// Runs a single seed into `run_dir` (creating it). Exposed for re-running a
// manifest into a fresh directory.
RunArtifacts run_single(const ExperimentConfig& config, std::uint64_t seed,
                        const std::string& run_dir, bool quiet = false);

std::string run_dir_name(const ExperimentConfig& config, std::uint64_t seed);

std::string metrics_csv_header(const std::vector<int>& eval_ts);
std::string metrics_csv_row(const IterationStats& stats);

}  // namespace qrec
