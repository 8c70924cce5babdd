#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qrec/ranking_alignment.hpp"
#include "qrec/simulator.hpp"
#include "qrec/training.hpp"

namespace qrec {

enum class Method {
  rar_s,
  rar_a,
  reinforce,        // beta = 0 ablation of the rar_* methods
  epsilon_greedy,   // REINFORCE with epsilon-random action replacement
  random,
  value_based,      // Q-learning on the same state encoder
  value_based_ram,  // value_based plus the rank loss
};

Method method_from_string(const std::string& s);
std::string to_string(Method m);
bool method_uses_rank_loss(Method m);

struct TrainConfig {
  Method method = Method::rar_a;
  double alpha = 0.5;               // KT loss weight
  double beta = 0.5;                // rank loss weight; 0 disables the module
  RankLossConfig rank;              // psi, omega, peer count
  ReprVariant variant = ReprVariant::additive;
  int seq_repr_dim = 128;           // width of the sequential representation
  double gamma = 0.99;
  double lr = 1e-3;
  int batch = 32;
  int iterations = 2000;
  int eval_every = 200;             // 0 = evaluate only after the last iteration
  int eval_students = 200;
  std::vector<int> eval_ts = {10, 30};
  std::uint64_t seed = 1;
  double eps_start = 0.1;           // epsilon-greedy exploration schedule
  double eps_end = 0.01;
  bool mean_baseline = false;       // optional return baseline, off by default
  RecommenderConfig model;          // num_questions/init_seed filled by the trainer

  void validate(int horizon) const;
};

struct EvalResult {
  std::vector<int> ts;
  std::vector<double> mean;
  std::vector<double> stddev;
  int students = 0;
};

struct IterationStats {
  int iteration = 0;
  double mean_reward = 0.0;
  LossBundle losses;
  bool evaluated = false;
  std::vector<int> eval_ts;
  std::vector<double> eval_values;
};

// Fixed held-out evaluation streams, shared by every method and run seed so
// comparisons are paired. Disjoint from training streams by stream tag.
std::uint64_t eval_env_seed(int student);
std::uint64_t eval_action_seed(int student);

// Rolls `students` episodes and reports the mean/stddev learning effect at
// each checkpoint in `ts` (0 allowed). Must run without an active tape.
EvalResult evaluate_policy(Policy& policy, Environment& env, int students,
                           std::span<const int> ts);

class Trainer {
 public:
  Trainer(std::shared_ptr<const KnowledgeGraph> graph, SimulatorConfig env_config,
          TrainConfig config);

  using IterationSink = std::function<void(const IterationStats&)>;

  // Full training loop: rollout batch -> losses -> backward -> Adam step,
  // reporting one IterationStats per iteration (plus a final one for the
  // untrained random baseline).
  void run(const IterationSink& sink = {});

  // One iteration's loss graph without the optimizer update. `forced`
  // replays fixed per-student action sequences (smooth in the parameters,
  // for gradient checks); `captured` receives the actions taken.
  ad::Tensor iteration_loss(int iteration, LossBundle* bundle = nullptr,
                            const std::vector<std::vector<int>>* forced = nullptr,
                            std::vector<std::vector<int>>* captured = nullptr,
                            double* mean_reward = nullptr);

  EvalResult evaluate();

  Recommender& model() { return *model_; }
  const Recommender& model() const { return *model_; }
  SequenceReprEncoder* sequence_encoder() { return seq_.get(); }
  const TrainConfig& config() const { return cfg_; }
  const SimulatorConfig& env_config() const { return env_cfg_; }

 private:
  ad::Tensor pg_iteration_loss(int iteration, LossBundle* bundle,
                               const std::vector<std::vector<int>>* forced,
                               std::vector<std::vector<int>>* captured, double* mean_reward);
  ad::Tensor value_iteration_loss(int iteration, LossBundle* bundle,
                                  const std::vector<std::vector<int>>* forced,
                                  std::vector<std::vector<int>>* captured,
                                  double* mean_reward);
  ad::Tensor rank_loss_from_probs(std::span<const ad::Tensor> prob_rows,
                                  std::span<const LearningTarget> targets, int iteration);
  double epsilon_at(int iteration) const;

  std::shared_ptr<const KnowledgeGraph> graph_;
  SimulatorConfig env_cfg_;
  TrainConfig cfg_;
  std::unique_ptr<Recommender> model_;
  std::unique_ptr<SequenceReprEncoder> seq_;
  std::unique_ptr<ad::Adam> model_opt_;
  std::unique_ptr<ad::Adam> seq_opt_;
  std::vector<std::unique_ptr<RuleBasedEnv>> envs_;
  std::unique_ptr<RuleBasedEnv> eval_env_;
};

// Augments a trainable baseline with the ranking alignment module: its loss
// gains +beta * L_r, everything else is unchanged.
TrainConfig attach_ranking_alignment(TrainConfig base, double beta, ReprVariant variant,
                                     RankLossConfig rank);

}  // namespace qrec
