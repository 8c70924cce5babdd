#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "qrec/checkpoint.hpp"
#include "qrec/experiment.hpp"
#include "qrec/report.hpp"

namespace fs = std::filesystem;

namespace {

struct FlagSet {
  CLI::App* cmd;
  std::map<std::string, std::string> values;

  void option(const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { values[key] = v; }, help);
  }
};

qrec::ExperimentConfig config_from(const std::string& config_path,
                                   const std::map<std::string, std::string>& overrides) {
  qrec::KeyValueFile kv = config_path.empty()
                              ? qrec::KeyValueFile::parse_text("", "<flags>")
                              : qrec::KeyValueFile::parse_file(config_path);
  for (const auto& [k, v] : overrides) kv.set(k, v);
  return qrec::ExperimentConfig::resolve(kv);
}

int cmd_train(const std::string& config_path, const std::map<std::string, std::string>& overrides,
              bool quiet) {
  const qrec::ExperimentConfig cfg = config_from(config_path, overrides);
  qrec::run_experiment(cfg, quiet);
  return 0;
}

int cmd_evaluate(const std::string& run_dir, std::string checkpoint, std::string method_name,
                 const std::string& env_path, int horizon, int students,
                 std::vector<int> ts) {
  qrec::SimulatorConfig env;
  if (!run_dir.empty()) {
    const qrec::KeyValueFile manifest =
        qrec::KeyValueFile::parse_file((fs::path(run_dir) / "manifest.cfg").string());
    qrec::ExperimentConfig cfg = qrec::ExperimentConfig::resolve(manifest);
    env = cfg.resolved_env();
    if (method_name.empty()) method_name = qrec::to_string(cfg.method);
    if (checkpoint.empty()) checkpoint = (fs::path(run_dir) / "checkpoint.ckpt").string();
  } else {
    if (!env_path.empty()) env = qrec::SimulatorConfig::from_file(env_path);
    if (horizon > 0) env.horizon = horizon;
    if (method_name.empty()) {
      throw std::invalid_argument("evaluate: give --run or --method");
    }
  }
  const qrec::Method method = qrec::method_from_string(method_name);
  auto graph = qrec::load_graph_for(env);
  env.validate(graph->num_concepts());
  qrec::RuleBasedEnv eval_env(graph, env);
  if (ts.empty()) ts = {10, 30};

  qrec::EvalResult result;
  if (method == qrec::Method::random) {
    qrec::RandomPolicy policy;
    result = qrec::evaluate_policy(policy, eval_env, students, ts);
  } else {
    if (checkpoint.empty()) {
      throw std::invalid_argument("evaluate: a trained method needs --run or --checkpoint");
    }
    qrec::RecommenderConfig model_cfg;
    model_cfg.num_questions = graph->num_questions();
    qrec::Recommender model(model_cfg);
    qrec::load_checkpoint(checkpoint, model.params());
    if (method == qrec::Method::value_based || method == qrec::Method::value_based_ram) {
      qrec::ValueGreedyPolicy policy(model);
      result = qrec::evaluate_policy(policy, eval_env, students, ts);
    } else {
      qrec::RecommenderPolicy policy(model);
      result = qrec::evaluate_policy(policy, eval_env, students, ts);
    }
  }
  std::cout << qrec::format_eval_table(result);
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out_path) {
  const std::string report = qrec::compare_runs(dirs);
  std::cout << report;
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write report to " + out_path);
    out << report;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"question recommendation lab: train, evaluate and compare recommenders"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train one or more seeded runs");
  std::string train_config;
  bool quiet = false;
  train->add_option("--config", train_config, "flat key-value config file");
  train->add_flag("--quiet", quiet, "suppress per-run progress lines");
  FlagSet tf{train};
  tf.option("--method", "method",
            "rar_s | rar_a | reinforce | epsilon_greedy | random | value_based | value_based+ram");
  tf.option("--env", "env", "simulator config file");
  tf.option("--seeds", "seeds", "comma-separated run seeds");
  tf.option("--seed", "seed", "single run seed");
  tf.option("--out", "out", "output directory");
  tf.option("--alpha", "alpha", "KT loss weight");
  tf.option("--beta", "beta", "rank loss weight (0 disables ranking alignment)");
  tf.option("--psi", "psi", "rank loss margin scale");
  tf.option("--omega", "omega", "rank loss clip ceiling");
  tf.option("--m", "m", "peers sampled per student");
  tf.option("--variant", "variant", "recommendation-difference variant: rar_s | rar_a");
  tf.option("--gamma", "gamma", "return discount");
  tf.option("--lr", "lr", "Adam learning rate");
  tf.option("--batch", "batch", "students per iteration");
  tf.option("--iterations", "iterations", "training iterations");
  tf.option("--horizon", "horizon", "episode length");
  tf.option("--eval-every", "eval_every", "evaluate every N iterations (0 = final only)");
  tf.option("--eval-students", "eval_students", "held-out students per evaluation");
  tf.option("--eval-ts", "eval_ts", "comma-separated evaluation checkpoints");
  tf.option("--jobs", "jobs", "parallel runs (each run stays single-threaded)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on held-out students");
  std::string run_dir, checkpoint, method_name, env_path;
  int horizon = 0, students = 200;
  std::vector<int> ts;
  evaluate->add_option("--run", run_dir, "run directory (manifest.cfg + checkpoint.ckpt)");
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file");
  evaluate->add_option("--method", method_name, "method the checkpoint was trained with");
  evaluate->add_option("--env", env_path, "simulator config file");
  evaluate->add_option("--horizon", horizon, "episode length override");
  evaluate->add_option("--students", students, "held-out students to evaluate");
  evaluate->add_option("--t", ts, "checkpoints t (comma-separated)")->delimiter(',');

  // compare
  auto* compare = app.add_subcommand("compare", "side-by-side report over completed runs");
  std::vector<std::string> dirs;
  std::string report_out;
  compare->add_option("dirs", dirs, "run directories (or parents of them)")->required();
  compare->add_option("--out", report_out, "also write the report to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_config, tf.values, quiet);
    if (evaluate->parsed()) {
      return cmd_evaluate(run_dir, checkpoint, method_name, env_path, horizon, students, ts);
    }
    if (compare->parsed()) return cmd_compare(dirs, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
