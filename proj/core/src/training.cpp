#include "qrec/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qrec {

using ad::Tensor;

void Trajectory::validate() const {
  const std::size_t n = actions.size();
  auto check = [&](std::size_t got, const char* what) {
    if (got != n) {
      throw std::logic_error(std::string("Trajectory: ") + what + " has length " +
                             std::to_string(got) + ", expected " + std::to_string(n));
    }
  };
  check(rewards.size(), "rewards");
  check(correctness.size(), "correctness");
  if (!log_probs.empty()) check(log_probs.size(), "log_probs");
  if (!probs.empty()) check(probs.size(), "probs");
  if (!predictions.empty()) check(predictions.size(), "predictions");
  if (!states.empty()) check(states.size(), "states");
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  if (rewards.empty()) throw std::invalid_argument("discounted_returns: empty reward sequence");
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("discounted_returns: gamma must be in [0, 1]");
  }
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    out[i] = acc;
  }
  return out;
}

Tensor policy_loss(const Trajectory& traj, double gamma) {
  traj.validate();
  if (traj.log_probs.empty()) {
    throw std::invalid_argument("policy_loss: trajectory has no recorded log-probabilities");
  }
  const auto returns = discounted_returns(traj.rewards, gamma);
  std::vector<double> weights(returns.size());
  for (std::size_t i = 0; i < returns.size(); ++i) weights[i] = -returns[i];
  return ad::linear_combination(traj.log_probs, weights);
}

Tensor kt_loss(const Trajectory& traj, std::span<const Tensor> predictions) {
  traj.validate();
  if (predictions.size() != traj.length()) {
    throw std::invalid_argument("kt_loss: prediction count " + std::to_string(predictions.size()) +
                                " does not match trajectory length " +
                                std::to_string(traj.length()));
  }
  std::vector<Tensor> terms;
  terms.reserve(predictions.size());
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    const double yhat = predictions[t].scalar_value();
    if (!(yhat > 0.0 && yhat < 1.0)) {
      throw std::invalid_argument("kt_loss: prediction at step " + std::to_string(t) +
                                  " is outside (0, 1): " + std::to_string(yhat));
    }
    terms.push_back(traj.correctness[t] == 1
                        ? ad::log_t(predictions[t])
                        : ad::log_t(ad::rsub_scalar(1.0, predictions[t])));
  }
  const std::vector<double> weights(terms.size(), -1.0);
  return ad::linear_combination(terms, weights);
}

Tensor total_loss(const Tensor& policy, const Tensor& kt, const Tensor& rank, double alpha,
                  double beta) {
  const Tensor parts[] = {policy, kt, rank};
  const double weights[] = {1.0, alpha, beta};
  return ad::linear_combination(parts, weights);
}

QuestionId Policy::choose(const PolicyOutput& dist, Rng& rng) {
  return sample_action(dist, rng);
}

Trajectory rollout(Environment& env, Policy& policy, int horizon, Rng& action_rng) {
  if (env.steps_taken() != 0) {
    throw std::invalid_argument("rollout: environment must be freshly reset");
  }
  if (horizon < 1 || horizon > env.horizon()) {
    throw std::invalid_argument("rollout: horizon " + std::to_string(horizon) +
                                " outside [1, " + std::to_string(env.horizon()) + "]");
  }
  Trajectory traj;
  traj.target = env.observe_target();
  policy.begin_episode(traj.target, env.num_questions());
  for (int t = 0; t < horizon && !env.done(); ++t) {
    PolicyStep ps = policy.step(env.observe_record());
    validate_policy_output(ps.dist);
    const QuestionId action = policy.choose(ps.dist, action_rng);
    const StepOutcome outcome = env.step(action);
    policy.observe(action, outcome.correctness);

    traj.actions.push_back(action.index);
    traj.rewards.push_back(outcome.reward);
    traj.correctness.push_back(outcome.correctness);
    if (ps.probs.valid()) {
      traj.probs.push_back(ps.probs);
      traj.log_probs.push_back(
          ad::log_t(ad::pick(ps.probs, static_cast<std::size_t>(action.index))));
    }
    if (ps.prediction.valid()) traj.predictions.push_back(ps.prediction);
    if (!ps.state.empty()) traj.states.push_back(std::move(ps.state));
  }
  traj.validate();
  return traj;
}

void RandomPolicy::begin_episode(const LearningTarget&, int num_questions) {
  num_questions_ = num_questions;
}

PolicyStep RandomPolicy::step(const HistoricalRecord&) {
  PolicyStep ps;
  ps.dist.probs.assign(static_cast<std::size_t>(num_questions_),
                       1.0 / static_cast<double>(num_questions_));
  ps.probs = Tensor::vec(ps.dist.probs);
  return ps;
}

RecommenderPolicy::RecommenderPolicy(const Recommender& model) : model_(&model) {}

void RecommenderPolicy::begin_episode(const LearningTarget& target, int num_questions) {
  if (num_questions != model_->config().num_questions) {
    throw std::invalid_argument("RecommenderPolicy: model covers " +
                                std::to_string(model_->config().num_questions) +
                                " questions, environment has " + std::to_string(num_questions));
  }
  ctx_ = model_->build_question_context();
  hidden_ = model_->encode_history(HistoricalRecord{});
  target_repr_ = model_->encode_target(target, ctx_);
  prev_.reset();
}

PolicyStep RecommenderPolicy::step(const HistoricalRecord&) {
  PolicyStep ps;
  ps.prediction = model_->predict_correctness(hidden_);
  const Tensor state = model_->blend_state(prev_, target_repr_, hidden_, ctx_);
  ps.probs = model_->policy(state);
  ps.dist.probs = ps.probs.values();
  ps.state = state.values();
  return ps;
}

void RecommenderPolicy::observe(QuestionId q, int correctness) {
  const int action = q.index;
  const int y = correctness;
  Tensor h = ad::reshape(hidden_, {1, hidden_.size()});
  h = model_->history_step(h, std::span<const int>(&action, 1), std::span<const int>(&y, 1),
                           ctx_);
  hidden_ = ad::reshape(h, {h.size()});
  prev_ = q;
}

QuestionId ValueGreedyPolicy::choose(const PolicyOutput& dist, Rng&) {
  const auto it = std::max_element(dist.probs.begin(), dist.probs.end());
  return QuestionId{static_cast<std::int32_t>(it - dist.probs.begin())};
}

}  // namespace qrec
