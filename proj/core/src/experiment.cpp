#include "qrec/experiment.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "qrec/checkpoint.hpp"

namespace qrec {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

ReprVariant variant_from_string(const std::string& s) {
  if (s == "rar_s" || s == "sequential") return ReprVariant::sequential;
  if (s == "rar_a" || s == "additive") return ReprVariant::additive;
  throw std::invalid_argument("key `variant`: expected rar_s or rar_a, got `" + s + "`");
}

std::string variant_to_config_string(ReprVariant v) {
  return v == ReprVariant::sequential ? "rar_s" : "rar_a";
}

const std::set<std::string> kAllowedKeys = {
    "env",        "method",     "alpha",         "beta",    "psi",     "omega",
    "m",          "variant",    "gamma",         "lr",      "batch",   "iterations",
    "horizon",    "seeds",      "seed",          "out",     "eval_every",
    "eval_students", "eval_ts", "jobs",          "config_hash",
    "env.seed",   "env.horizon", "env.k_targets", "env.gain", "env.gain_wrong",
    "env.slope",  "env.offset", "env.init_mastery_max",      "env.graph",
};

void apply_env_overrides(const KeyValueFile& kv, SimulatorConfig& env) {
  env.seed = static_cast<std::uint64_t>(kv.get_int("env.seed", static_cast<std::int64_t>(env.seed)));
  env.horizon = static_cast<int>(kv.get_int("env.horizon", env.horizon));
  env.k_targets = static_cast<int>(kv.get_int("env.k_targets", env.k_targets));
  env.gain = kv.get_double("env.gain", env.gain);
  env.gain_wrong = kv.get_double("env.gain_wrong", env.gain_wrong);
  env.slope = kv.get_double("env.slope", env.slope);
  env.offset = kv.get_double("env.offset", env.offset);
  env.init_mastery_max = kv.get_double("env.init_mastery_max", env.init_mastery_max);
  env.graph_path = kv.get_string("env.graph", env.graph_path);
}

}  // namespace

ExperimentConfig ExperimentConfig::resolve(const KeyValueFile& kv) {
  const auto unknown = kv.unknown_keys(kAllowedKeys);
  if (!unknown.empty()) {
    throw std::invalid_argument(kv.origin() + ": unknown key `" + unknown.front() + "`");
  }

  ExperimentConfig cfg;
  cfg.env_path = kv.get_string("env", "");
  if (!cfg.env_path.empty()) cfg.env = SimulatorConfig::from_file(cfg.env_path);
  apply_env_overrides(kv, cfg.env);

  cfg.method = method_from_string(kv.get_string("method", "rar_a"));
  cfg.alpha = kv.get_double("alpha", cfg.alpha);
  cfg.beta = kv.get_double("beta", cfg.beta);
  cfg.psi = kv.get_double("psi", cfg.psi);
  cfg.omega = kv.get_double("omega", cfg.omega);
  cfg.m = static_cast<int>(kv.get_int("m", cfg.m));
  cfg.gamma = kv.get_double("gamma", cfg.gamma);
  cfg.lr = kv.get_double("lr", cfg.lr);
  cfg.batch = static_cast<int>(kv.get_int("batch", cfg.batch));
  cfg.iterations = static_cast<int>(kv.get_int("iterations", cfg.iterations));
  cfg.horizon = static_cast<int>(kv.get_int("horizon", cfg.env.horizon));
  cfg.out_dir = kv.get_string("out", cfg.out_dir);
  cfg.eval_every = static_cast<int>(kv.get_int("eval_every", cfg.eval_every));
  cfg.eval_students = static_cast<int>(kv.get_int("eval_students", cfg.eval_students));
  if (kv.has("eval_ts")) {
    cfg.eval_ts.clear();
    for (auto t : kv.get_int_list("eval_ts")) cfg.eval_ts.push_back(static_cast<int>(t));
  }
  cfg.jobs = static_cast<int>(kv.get_int("jobs", cfg.jobs));
  if (cfg.jobs < 1) throw std::invalid_argument("key `jobs`: must be >= 1");

  if (kv.has("seed") && kv.has("seeds")) {
    throw std::invalid_argument(kv.origin() + ": give either `seed` or `seeds`, not both");
  }
  if (kv.has("seed")) {
    cfg.seeds = {static_cast<std::uint64_t>(kv.get_int("seed"))};
  } else if (kv.has("seeds")) {
    cfg.seeds.clear();
    for (auto s : kv.get_int_list("seeds")) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (cfg.seeds.empty()) throw std::invalid_argument("key `seeds`: empty seed list");

  // Variant defaults follow the method; an explicit value must agree.
  const bool has_variant = kv.has("variant");
  if (has_variant) cfg.variant = variant_from_string(kv.get_string("variant"));
  switch (cfg.method) {
    case Method::rar_s:
      if (has_variant && cfg.variant != ReprVariant::sequential) {
        throw std::invalid_argument("key `variant`: method rar_s requires variant rar_s");
      }
      cfg.variant = ReprVariant::sequential;
      break;
    case Method::rar_a:
      if (has_variant && cfg.variant != ReprVariant::additive) {
        throw std::invalid_argument("key `variant`: method rar_a requires variant rar_a");
      }
      cfg.variant = ReprVariant::additive;
      break;
    default:
      if (!has_variant) cfg.variant = ReprVariant::additive;
      break;
  }

  // Manifests carry a hash of their canonical text; verify it survived.
  if (kv.has("config_hash") && cfg.seeds.size() == 1) {
    const std::string expect = kv.get_string("config_hash");
    const KeyValueFile manifest =
        KeyValueFile::parse_text(cfg.manifest_text(cfg.seeds.front()), "<manifest>");
    if (manifest.get_string("config_hash") != expect) {
      throw std::invalid_argument(kv.origin() +
                                  ": key `config_hash` does not match the configuration "
                                  "(manifest edited?)");
    }
  }

  // Trainer- and simulator-level validation now, so failures precede any
  // filesystem writes.
  SimulatorConfig env = cfg.resolved_env();
  auto graph = load_graph_for(env);
  env.validate(graph->num_concepts());
  cfg.to_train_config(cfg.seeds.front()).validate(env.horizon);
  return cfg;
}

SimulatorConfig ExperimentConfig::resolved_env() const {
  SimulatorConfig env = this->env;
  env.horizon = horizon;
  return env;
}

TrainConfig ExperimentConfig::to_train_config(std::uint64_t seed) const {
  TrainConfig tc;
  tc.method = method;
  tc.alpha = alpha;
  tc.beta = beta;
  tc.rank.psi = psi;
  tc.rank.omega = omega;
  tc.rank.peer_count = m;
  tc.variant = variant;
  tc.gamma = gamma;
  tc.lr = lr;
  tc.batch = batch;
  tc.iterations = iterations;
  tc.eval_every = eval_every;
  tc.eval_students = eval_students;
  tc.eval_ts = eval_ts;
  tc.seed = seed;
  return tc;
}

std::string ExperimentConfig::manifest_text(std::uint64_t seed) const {
  KeyValueFile kv;
  kv.set("method", to_string(method));
  kv.set("alpha", format_double(alpha));
  kv.set("beta", format_double(beta));
  kv.set("psi", format_double(psi));
  kv.set("omega", format_double(omega));
  kv.set("m", std::to_string(m));
  kv.set("variant", variant_to_config_string(variant));
  kv.set("gamma", format_double(gamma));
  kv.set("lr", format_double(lr));
  kv.set("batch", std::to_string(batch));
  kv.set("iterations", std::to_string(iterations));
  kv.set("horizon", std::to_string(horizon));
  kv.set("seed", std::to_string(seed));
  kv.set("eval_every", std::to_string(eval_every));
  kv.set("eval_students", std::to_string(eval_students));
  {
    std::string ts;
    for (std::size_t i = 0; i < eval_ts.size(); ++i) {
      if (i) ts += ",";
      ts += std::to_string(eval_ts[i]);
    }
    kv.set("eval_ts", ts);
  }
  const SimulatorConfig resolved = resolved_env();
  kv.set("env.seed", std::to_string(resolved.seed));
  kv.set("env.horizon", std::to_string(resolved.horizon));
  kv.set("env.k_targets", std::to_string(resolved.k_targets));
  kv.set("env.gain", format_double(resolved.gain));
  kv.set("env.gain_wrong", format_double(resolved.gain_wrong));
  kv.set("env.slope", format_double(resolved.slope));
  kv.set("env.offset", format_double(resolved.offset));
  kv.set("env.init_mastery_max", format_double(resolved.init_mastery_max));
  if (!resolved.graph_path.empty()) kv.set("env.graph", resolved.graph_path);

  char hash[20];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a(kv.canonical_text())));
  kv.set("config_hash", hash);
  return kv.canonical_text();
}

std::string metrics_csv_header(const std::vector<int>& eval_ts) {
  std::string header = "iteration,mean_reward,L_p,L_k,L_r,total";
  for (int t : eval_ts) header += ",eval_delta_t" + std::to_string(t);
  return header + "\n";
}

std::string metrics_csv_row(const IterationStats& stats) {
  std::string row = std::to_string(stats.iteration);
  row += "," + format_double(stats.mean_reward);
  row += "," + format_double(stats.losses.policy);
  row += "," + format_double(stats.losses.kt);
  row += "," + format_double(stats.losses.rank);
  row += "," + format_double(stats.losses.total);
  if (stats.evaluated) {
    for (double v : stats.eval_values) row += "," + format_double(v);
  } else {
    for (std::size_t i = 0; i < stats.eval_ts.size(); ++i) row += ",";
  }
  return row + "\n";
}

std::string run_dir_name(const ExperimentConfig& config, std::uint64_t seed) {
  return (fs::path(config.out_dir) / (to_string(config.method) + "_seed" + std::to_string(seed)))
      .string();
}

RunArtifacts run_single(const ExperimentConfig& config, std::uint64_t seed,
                        const std::string& run_dir, bool quiet) {
  const SimulatorConfig env = config.resolved_env();
  auto graph = load_graph_for(env);
  Trainer trainer(graph, env, config.to_train_config(seed));

  fs::create_directories(run_dir);
  {
    std::ofstream manifest(fs::path(run_dir) / "manifest.cfg", std::ios::trunc);
    if (!manifest) throw std::runtime_error("cannot write manifest in " + run_dir);
    manifest << config.manifest_text(seed);
  }

  RunArtifacts artifacts;
  artifacts.dir = run_dir;
  artifacts.method = config.method;
  artifacts.seed = seed;
  artifacts.eval_ts = config.eval_ts;

  std::ofstream csv(fs::path(run_dir) / "metrics.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write metrics.csv in " + run_dir);
  csv << metrics_csv_header(config.eval_ts);
  // IterationStats carries eval_ts only when evaluated; stash for empty rows.
  trainer.run([&](const IterationStats& stats) {
    IterationStats row = stats;
    row.eval_ts = config.eval_ts;
    csv << metrics_csv_row(row);
    if (stats.evaluated) artifacts.final_eval = stats.eval_values;
  });
  csv.close();
  if (!csv) throw std::runtime_error("failed writing metrics.csv in " + run_dir);

  save_checkpoint((fs::path(run_dir) / "checkpoint.ckpt").string(), trainer.model().params());
  if (!quiet) {
    std::ostringstream line;
    line << to_string(config.method) << " seed " << seed << " done:";
    for (std::size_t i = 0; i < artifacts.final_eval.size(); ++i) {
      line << " t" << config.eval_ts[i] << "=" << artifacts.final_eval[i];
    }
    std::cout << line.str() << std::endl;
  }
  return artifacts;
}

std::vector<RunArtifacts> run_experiment(const ExperimentConfig& config, bool quiet) {
  std::vector<RunArtifacts> results(config.seeds.size());
  if (config.jobs <= 1 || config.seeds.size() <= 1) {
    for (std::size_t i = 0; i < config.seeds.size(); ++i) {
      results[i] = run_single(config, config.seeds[i], run_dir_name(config, config.seeds[i]),
                              quiet);
    }
    return results;
  }
  std::mutex next_mutex;
  std::size_t next = 0;
  auto worker = [&]() {
    while (true) {
      std::size_t i;
      {
        std::lock_guard lock(next_mutex);
        if (next >= config.seeds.size()) return;
        i = next++;
      }
      results[i] =
          run_single(config, config.seeds[i], run_dir_name(config, config.seeds[i]), quiet);
    }
  };
  std::vector<std::thread> threads;
  const int n = std::min<int>(config.jobs, static_cast<int>(config.seeds.size()));
  threads.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return results;
}

}  // namespace qrec
