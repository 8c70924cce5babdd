#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "qrec/autodiff.hpp"
#include "qrec/domain.hpp"
#include "qrec/recommender.hpp"
#include "qrec/rng.hpp"
#include "qrec/simulator.hpp"

namespace qrec {

// Everything one episode contributes to the losses. The tensors are
// graph-connected when the rollout ran under a tape; plain values otherwise.
struct Trajectory {
  std::uint64_t seed = 0;
  int student_id = 0;
  LearningTarget target;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<int> correctness;
  std::vector<ad::Tensor> log_probs;    // scalar log p_t(action)
  std::vector<ad::Tensor> probs;        // full per-step distributions
  std::vector<ad::Tensor> predictions;  // scalar KT outputs, empty if unavailable
  std::vector<std::vector<double>> states;

  std::size_t length() const { return actions.size(); }
  void validate() const;  // all per-step sequences share one length
};

// r_hat_t = r_t + gamma * r_hat_{t+1}, with r_hat beyond the end = 0.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

// L_p = -sum_t r_hat_t * log p_t. Returns are constants; gradients flow
// through the recorded log-probabilities only.
ad::Tensor policy_loss(const Trajectory& traj, double gamma);

// L_k = -sum_t [ y_t ln yhat_t + (1 - y_t) ln(1 - yhat_t) ]. Every
// prediction must lie strictly inside (0, 1).
ad::Tensor kt_loss(const Trajectory& traj, std::span<const ad::Tensor> predictions);

// L = L_p + alpha * L_k + beta * L_r.
ad::Tensor total_loss(const ad::Tensor& policy, const ad::Tensor& kt, const ad::Tensor& rank,
                      double alpha, double beta);

struct LossBundle {
  double policy = 0.0;
  double kt = 0.0;
  double rank = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

// What a policy produces for one recommendation step.
struct PolicyStep {
  PolicyOutput dist;
  ad::Tensor probs;       // same distribution as a tensor (graph-connected when training)
  ad::Tensor prediction;  // optional scalar correctness prediction
  std::vector<double> state;  // optional encoded state snapshot
};

// Interface every recommender-or-baseline exposes to rollouts: all of them
// emit a full distribution so the ranking alignment machinery can attach
// uniformly.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode(const LearningTarget& target, int num_questions) = 0;
  virtual PolicyStep step(const HistoricalRecord& record) = 0;
  // Default: sample from the distribution.
  virtual QuestionId choose(const PolicyOutput& dist, Rng& rng);
  virtual void observe(QuestionId q, int correctness) {}
};

// Alternates policy -> sample -> env.step for `horizon` steps (or until the
// environment reports done). The environment must be freshly reset.
Trajectory rollout(Environment& env, Policy& policy, int horizon, Rng& action_rng);

// Uniform distribution over all questions; never learns.
class RandomPolicy final : public Policy {
 public:
  void begin_episode(const LearningTarget&, int num_questions) override;
  PolicyStep step(const HistoricalRecord&) override;

 private:
  int num_questions_ = 0;
};

// Wraps a Recommender for sequential use: keeps the incremental history
// state and the per-episode target representation.
class RecommenderPolicy : public Policy {
 public:
  explicit RecommenderPolicy(const Recommender& model);

  void begin_episode(const LearningTarget& target, int num_questions) override;
  PolicyStep step(const HistoricalRecord& record) override;
  void observe(QuestionId q, int correctness) override;

 protected:
  const Recommender* model_;
  Recommender::QuestionContext ctx_;
  ad::Tensor hidden_;
  ad::Tensor target_repr_;
  std::optional<QuestionId> prev_;
};

// Same encoder, but the head is read as Q-values: acts greedily (lowest
// index wins ties) and still emits softmax(Q) as its distribution.
class ValueGreedyPolicy final : public RecommenderPolicy {
 public:
  explicit ValueGreedyPolicy(const Recommender& model) : RecommenderPolicy(model) {}
  QuestionId choose(const PolicyOutput& dist, Rng& rng) override;
};

}  // namespace qrec
