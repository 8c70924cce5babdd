#include "qrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qrec {

using ad::Tensor;

namespace {

const std::uint64_t kTagInit = fnv1a("init");
const std::uint64_t kTagInitSeq = fnv1a("init-seq");
const std::uint64_t kTagTrainEnv = fnv1a("train-env");
const std::uint64_t kTagTrainAct = fnv1a("train-act");
const std::uint64_t kTagPeer = fnv1a("peer");
const std::uint64_t kTagEvalEnv = fnv1a("eval-env");
const std::uint64_t kTagEvalAct = fnv1a("eval-act");

int sample_from_row(const double* probs, int n, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (int i = 0; i < n; ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  return n - 1;
}

int argmax_row(const double* values, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace

Method method_from_string(const std::string& s) {
  if (s == "rar_s") return Method::rar_s;
  if (s == "rar_a") return Method::rar_a;
  if (s == "reinforce") return Method::reinforce;
  if (s == "epsilon_greedy") return Method::epsilon_greedy;
  if (s == "random") return Method::random;
  if (s == "value_based") return Method::value_based;
  if (s == "value_based+ram" || s == "value_based_ram") return Method::value_based_ram;
  throw std::invalid_argument(
      "unknown method `" + s +
      "` (expected rar_s, rar_a, reinforce, epsilon_greedy, random, value_based, "
      "value_based+ram)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::rar_s: return "rar_s";
    case Method::rar_a: return "rar_a";
    case Method::reinforce: return "reinforce";
    case Method::epsilon_greedy: return "epsilon_greedy";
    case Method::random: return "random";
    case Method::value_based: return "value_based";
    case Method::value_based_ram: return "value_based+ram";
  }
  return "?";
}

bool method_uses_rank_loss(Method m) {
  return m != Method::random && m != Method::reinforce && m != Method::value_based;
}

void TrainConfig::validate(int horizon) const {
  if (alpha < 0.0 || beta < 0.0) {
    throw std::invalid_argument("train config: alpha and beta must be nonnegative");
  }
  if (method == Method::reinforce && beta != 0.0) {
    throw std::invalid_argument(
        "train config: reinforce is the beta = 0 ablation; use rar_s or rar_a for beta > 0");
  }
  if (method == Method::value_based && beta != 0.0) {
    throw std::invalid_argument(
        "train config: value_based ignores the rank loss; use value_based+ram for beta > 0");
  }
  if (method == Method::rar_s && variant != ReprVariant::sequential) {
    throw std::invalid_argument("train config: method rar_s requires variant rar_s");
  }
  if (method == Method::rar_a && variant != ReprVariant::additive) {
    throw std::invalid_argument("train config: method rar_a requires variant rar_a");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("train config: gamma must be in [0, 1]");
  }
  if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
  if (batch < 1) throw std::invalid_argument("train config: batch must be >= 1");
  if (iterations < 0) throw std::invalid_argument("train config: iterations must be >= 0");
  if (eval_every < 0) throw std::invalid_argument("train config: eval_every must be >= 0");
  if (eval_students < 1) throw std::invalid_argument("train config: eval_students must be >= 1");
  if (eval_ts.empty()) throw std::invalid_argument("train config: eval_ts must be non-empty");
  for (int t : eval_ts) {
    if (t < 0 || t > horizon) {
      throw std::invalid_argument("train config: eval checkpoint t=" + std::to_string(t) +
                                  " outside [0, horizon=" + std::to_string(horizon) + "]");
    }
  }
  if (rank.psi <= 0.0 || rank.omega <= 0.0) {
    throw std::invalid_argument("train config: psi and omega must be positive");
  }
  if (rank.peer_count < 1) {
    throw std::invalid_argument("train config: peer count m must be >= 1");
  }
  if (seq_repr_dim < 1) throw std::invalid_argument("train config: seq_repr_dim must be >= 1");
  if (!(eps_start >= 0.0 && eps_start <= 1.0 && eps_end >= 0.0 && eps_end <= 1.0)) {
    throw std::invalid_argument("train config: epsilon schedule must stay in [0, 1]");
  }
}

std::uint64_t eval_env_seed(int student) {
  return derive_seed(0, kTagEvalEnv, static_cast<std::uint64_t>(student));
}

std::uint64_t eval_action_seed(int student) {
  return derive_seed(0, kTagEvalAct, static_cast<std::uint64_t>(student));
}

EvalResult evaluate_policy(Policy& policy, Environment& env, int students,
                           std::span<const int> ts) {
  if (students < 1) throw std::invalid_argument("evaluate_policy: need at least one student");
  if (ts.empty()) throw std::invalid_argument("evaluate_policy: need at least one checkpoint t");
  int max_t = 0;
  for (int t : ts) {
    if (t < 0 || t > env.horizon()) {
      throw std::invalid_argument("evaluate_policy: t=" + std::to_string(t) +
                                  " outside [0, horizon=" + std::to_string(env.horizon()) + "]");
    }
    max_t = std::max(max_t, t);
  }

  EvalResult result;
  result.ts.assign(ts.begin(), ts.end());
  result.students = students;
  std::vector<std::vector<double>> deltas(ts.size());

  for (int i = 0; i < students; ++i) {
    env.reset(eval_env_seed(i));
    Rng action_rng(eval_action_seed(i));
    policy.begin_episode(env.observe_target(), env.num_questions());
    for (std::size_t k = 0; k < ts.size(); ++k) {
      if (ts[k] == 0) deltas[k].push_back(0.0);
    }
    for (int t = 1; t <= max_t; ++t) {
      PolicyStep ps = policy.step(env.observe_record());
      const QuestionId action = policy.choose(ps.dist, action_rng);
      const StepOutcome outcome = env.step(action);
      policy.observe(action, outcome.correctness);
      for (std::size_t k = 0; k < ts.size(); ++k) {
        if (ts[k] == t) deltas[k].push_back(learning_effect(env.snapshot()));
      }
    }
  }

  for (std::size_t k = 0; k < ts.size(); ++k) {
    double mean = 0.0;
    for (double d : deltas[k]) mean += d;
    mean /= static_cast<double>(students);
    double var = 0.0;
    for (double d : deltas[k]) var += (d - mean) * (d - mean);
    var = students > 1 ? var / static_cast<double>(students - 1) : 0.0;
    result.mean.push_back(mean);
    result.stddev.push_back(std::sqrt(var));
  }
  return result;
}

Trainer::Trainer(std::shared_ptr<const KnowledgeGraph> graph, SimulatorConfig env_config,
                 TrainConfig config)
    : graph_(std::move(graph)), env_cfg_(std::move(env_config)), cfg_(std::move(config)) {
  if (!graph_) throw std::invalid_argument("Trainer: null knowledge graph");
  env_cfg_.validate(graph_->num_concepts());
  cfg_.validate(env_cfg_.horizon);

  cfg_.model.num_questions = graph_->num_questions();
  cfg_.model.init_seed = derive_seed(cfg_.seed, kTagInit);
  model_ = std::make_unique<Recommender>(cfg_.model);

  const bool sequential_rank = cfg_.beta > 0.0 && cfg_.variant == ReprVariant::sequential &&
                               method_uses_rank_loss(cfg_.method);
  if (sequential_rank) {
    seq_ = std::make_unique<SequenceReprEncoder>(graph_->num_questions(), cfg_.seq_repr_dim,
                                                 derive_seed(cfg_.seed, kTagInitSeq));
  }

  ad::AdamConfig adam_cfg;
  adam_cfg.lr = cfg_.lr;
  model_opt_ = std::make_unique<ad::Adam>(model_->params(), adam_cfg);
  if (seq_) seq_opt_ = std::make_unique<ad::Adam>(seq_->params(), adam_cfg);

  envs_.reserve(static_cast<std::size_t>(cfg_.batch));
  for (int u = 0; u < cfg_.batch; ++u) {
    envs_.push_back(std::make_unique<RuleBasedEnv>(graph_, env_cfg_));
  }
  eval_env_ = std::make_unique<RuleBasedEnv>(graph_, env_cfg_);
}

double Trainer::epsilon_at(int iteration) const {
  if (cfg_.iterations <= 1) return cfg_.eps_start;
  const double f = static_cast<double>(iteration) / static_cast<double>(cfg_.iterations - 1);
  return cfg_.eps_start + (cfg_.eps_end - cfg_.eps_start) * f;
}

Tensor Trainer::rank_loss_from_probs(std::span<const Tensor> prob_rows,
                                     std::span<const LearningTarget> targets, int iteration) {
  std::vector<RecommendationRepr> reprs(targets.size());
  if (cfg_.variant == ReprVariant::sequential) {
    const Tensor encoded = seq_->encode_batch(prob_rows);
    for (std::size_t u = 0; u < targets.size(); ++u) {
      reprs[u] = RecommendationRepr{ReprVariant::sequential, ad::row(encoded, u)};
    }
  } else {
    const std::vector<double> ones(prob_rows.size(), 1.0);
    const Tensor summed = ad::linear_combination(prob_rows, ones);
    for (std::size_t u = 0; u < targets.size(); ++u) {
      reprs[u] = RecommendationRepr{ReprVariant::additive, ad::row(summed, u)};
    }
  }
  RankLossConfig rank = cfg_.rank;
  rank.peer_count = std::min(rank.peer_count, cfg_.batch - 1);
  Rng peer_rng(derive_seed(cfg_.seed, kTagPeer, static_cast<std::uint64_t>(iteration)));
  return rank_loss(reprs, targets, rank, peer_rng);
}

Tensor Trainer::iteration_loss(int iteration, LossBundle* bundle,
                               const std::vector<std::vector<int>>* forced,
                               std::vector<std::vector<int>>* captured, double* mean_reward) {
  switch (cfg_.method) {
    case Method::random:
      throw std::logic_error("iteration_loss: the random baseline has no training loss");
    case Method::value_based:
    case Method::value_based_ram:
      return value_iteration_loss(iteration, bundle, forced, captured, mean_reward);
    default:
      return pg_iteration_loss(iteration, bundle, forced, captured, mean_reward);
  }
}

Tensor Trainer::pg_iteration_loss(int iteration, LossBundle* bundle,
                                  const std::vector<std::vector<int>>* forced,
                                  std::vector<std::vector<int>>* captured,
                                  double* mean_reward) {
  const int batch = cfg_.batch;
  const int horizon = env_cfg_.horizon;
  const int num_q = graph_->num_questions();
  const double eps =
      cfg_.method == Method::epsilon_greedy ? epsilon_at(iteration) : -1.0;

  if (captured) captured->assign(static_cast<std::size_t>(batch), {});

  std::vector<LearningTarget> targets(static_cast<std::size_t>(batch));
  std::vector<Rng> action_rngs;
  action_rngs.reserve(static_cast<std::size_t>(batch));
  for (int u = 0; u < batch; ++u) {
    const auto episode = static_cast<std::uint64_t>(iteration) *
                             static_cast<std::uint64_t>(batch) +
                         static_cast<std::uint64_t>(u);
    envs_[static_cast<std::size_t>(u)]->reset(derive_seed(cfg_.seed, kTagTrainEnv, episode));
    targets[static_cast<std::size_t>(u)] = envs_[static_cast<std::size_t>(u)]->observe_target();
    action_rngs.emplace_back(derive_seed(cfg_.seed, kTagTrainAct, episode));
  }

  const auto ctx = model_->build_question_context();
  const Tensor target_reprs = model_->encode_targets(targets, ctx);
  const Tensor target_proj = model_->target_projection(target_reprs);
  Tensor hidden = model_->initial_hidden(static_cast<std::size_t>(batch));

  std::vector<Tensor> prob_mats, logp_steps, kt_steps;
  prob_mats.reserve(static_cast<std::size_t>(horizon));
  logp_steps.reserve(static_cast<std::size_t>(horizon));
  kt_steps.reserve(static_cast<std::size_t>(horizon));
  std::vector<std::vector<double>> rewards(static_cast<std::size_t>(batch));
  std::vector<int> last_actions;

  for (int t = 0; t < horizon; ++t) {
    const Tensor prev = t == 0 ? model_->start_token_rows(static_cast<std::size_t>(batch))
                               : model_->previous_reprs(last_actions, ctx);
    const Tensor states = model_->blend_states(prev, target_proj, hidden);
    const Tensor probs = ad::softmax_rows(model_->policy_logits_rows(states));
    prob_mats.push_back(probs);
    const Tensor kt_out = model_->kt_outputs(hidden);  // (B, 1)

    std::vector<int> actions(static_cast<std::size_t>(batch));
    std::vector<int> ys(static_cast<std::size_t>(batch));
    for (int u = 0; u < batch; ++u) {
      const double* prob_row = probs.values().data() + static_cast<std::size_t>(u) * num_q;
      int a;
      if (forced) {
        a = (*forced)[static_cast<std::size_t>(u)][static_cast<std::size_t>(t)];
      } else if (eps >= 0.0 && action_rngs[static_cast<std::size_t>(u)].uniform() < eps) {
        a = action_rngs[static_cast<std::size_t>(u)].below(num_q);
      } else {
        a = sample_from_row(prob_row, num_q, action_rngs[static_cast<std::size_t>(u)]);
      }
      const StepOutcome outcome = envs_[static_cast<std::size_t>(u)]->step(QuestionId{a});
      actions[static_cast<std::size_t>(u)] = a;
      ys[static_cast<std::size_t>(u)] = outcome.correctness;
      rewards[static_cast<std::size_t>(u)].push_back(outcome.reward);
      if (captured) (*captured)[static_cast<std::size_t>(u)].push_back(a);
    }

    logp_steps.push_back(ad::log_t(ad::gather_cols(probs, actions)));

    const Tensor kt_flat = ad::reshape(kt_out, {static_cast<std::size_t>(batch)});
    for (double yh : kt_flat.values()) {
      if (!(yh > 0.0 && yh < 1.0)) {
        throw std::runtime_error("training aborted: KT prediction left (0, 1) at iteration " +
                                 std::to_string(iteration));
      }
    }
    std::vector<double> w1(static_cast<std::size_t>(batch)), w0(static_cast<std::size_t>(batch));
    for (int u = 0; u < batch; ++u) {
      w1[static_cast<std::size_t>(u)] = static_cast<double>(ys[static_cast<std::size_t>(u)]);
      w0[static_cast<std::size_t>(u)] = 1.0 - w1[static_cast<std::size_t>(u)];
    }
    const Tensor step_ll = ad::add(ad::mul_const(ad::log_t(kt_flat), w1),
                                   ad::mul_const(ad::log_t(ad::rsub_scalar(1.0, kt_flat)), w0));
    kt_steps.push_back(ad::sum(step_ll));

    hidden = model_->history_step(hidden, actions, ys, ctx);
    last_actions = std::move(actions);
  }

  // Discounted returns per student; optional batch-mean baseline per step.
  std::vector<std::vector<double>> returns(static_cast<std::size_t>(batch));
  for (int u = 0; u < batch; ++u) {
    returns[static_cast<std::size_t>(u)] =
        discounted_returns(rewards[static_cast<std::size_t>(u)], cfg_.gamma);
  }
  if (cfg_.mean_baseline) {
    for (int t = 0; t < horizon; ++t) {
      double mean = 0.0;
      for (int u = 0; u < batch; ++u) mean += returns[static_cast<std::size_t>(u)][t];
      mean /= static_cast<double>(batch);
      for (int u = 0; u < batch; ++u) returns[static_cast<std::size_t>(u)][t] -= mean;
    }
  }

  std::vector<Tensor> lp_terms;
  lp_terms.reserve(static_cast<std::size_t>(horizon));
  std::vector<double> step_returns(static_cast<std::size_t>(batch));
  for (int t = 0; t < horizon; ++t) {
    for (int u = 0; u < batch; ++u) {
      step_returns[static_cast<std::size_t>(u)] = returns[static_cast<std::size_t>(u)][t];
    }
    lp_terms.push_back(ad::dot_const(logp_steps[static_cast<std::size_t>(t)], step_returns));
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const std::vector<double> neg_inv(static_cast<std::size_t>(horizon), -inv_batch);
  const Tensor loss_policy = ad::linear_combination(lp_terms, neg_inv);
  const Tensor loss_kt = ad::linear_combination(kt_steps, neg_inv);

  Tensor loss_rank = Tensor::scalar(0.0);
  if (cfg_.beta > 0.0) {
    loss_rank = rank_loss_from_probs(prob_mats, targets, iteration);
  }
  const Tensor total = total_loss(loss_policy, loss_kt, loss_rank, cfg_.alpha, cfg_.beta);

  if (bundle) {
    bundle->policy = loss_policy.scalar_value();
    bundle->kt = loss_kt.scalar_value();
    bundle->rank = loss_rank.scalar_value();
    bundle->total = total.scalar_value();
    bundle->alpha = cfg_.alpha;
    bundle->beta = cfg_.beta;
  }
  if (mean_reward) {
    double mr = 0.0;
    for (int u = 0; u < batch; ++u) {
      for (double r : rewards[static_cast<std::size_t>(u)]) mr += r;
    }
    *mean_reward = mr * inv_batch;
  }
  return total;
}

Tensor Trainer::value_iteration_loss(int iteration, LossBundle* bundle,
                                     const std::vector<std::vector<int>>* forced,
                                     std::vector<std::vector<int>>* captured,
                                     double* mean_reward) {
  const int batch = cfg_.batch;
  const int horizon = env_cfg_.horizon;
  const int num_q = graph_->num_questions();
  const double eps = epsilon_at(iteration);

  if (captured) captured->assign(static_cast<std::size_t>(batch), {});

  std::vector<LearningTarget> targets(static_cast<std::size_t>(batch));
  std::vector<Rng> action_rngs;
  action_rngs.reserve(static_cast<std::size_t>(batch));
  for (int u = 0; u < batch; ++u) {
    const auto episode = static_cast<std::uint64_t>(iteration) *
                             static_cast<std::uint64_t>(batch) +
                         static_cast<std::uint64_t>(u);
    envs_[static_cast<std::size_t>(u)]->reset(derive_seed(cfg_.seed, kTagTrainEnv, episode));
    targets[static_cast<std::size_t>(u)] = envs_[static_cast<std::size_t>(u)]->observe_target();
    action_rngs.emplace_back(derive_seed(cfg_.seed, kTagTrainAct, episode));
  }

  const auto ctx = model_->build_question_context();
  const Tensor target_reprs = model_->encode_targets(targets, ctx);
  const Tensor target_proj = model_->target_projection(target_reprs);
  Tensor hidden = model_->initial_hidden(static_cast<std::size_t>(batch));

  std::vector<Tensor> prob_mats, q_picks;
  std::vector<std::vector<double>> q_values;  // detached copies for TD targets
  prob_mats.reserve(static_cast<std::size_t>(horizon));
  q_picks.reserve(static_cast<std::size_t>(horizon));
  q_values.reserve(static_cast<std::size_t>(horizon));
  std::vector<std::vector<double>> rewards(static_cast<std::size_t>(batch));
  std::vector<int> last_actions;

  for (int t = 0; t < horizon; ++t) {
    const Tensor prev = t == 0 ? model_->start_token_rows(static_cast<std::size_t>(batch))
                               : model_->previous_reprs(last_actions, ctx);
    const Tensor states = model_->blend_states(prev, target_proj, hidden);
    const Tensor q_logits = model_->policy_logits_rows(states);
    prob_mats.push_back(ad::softmax_rows(q_logits));
    q_values.push_back(q_logits.values());

    std::vector<int> actions(static_cast<std::size_t>(batch));
    std::vector<int> ys(static_cast<std::size_t>(batch));
    for (int u = 0; u < batch; ++u) {
      const double* q_row = q_logits.values().data() + static_cast<std::size_t>(u) * num_q;
      int a;
      if (forced) {
        a = (*forced)[static_cast<std::size_t>(u)][static_cast<std::size_t>(t)];
      } else if (action_rngs[static_cast<std::size_t>(u)].uniform() < eps) {
        a = action_rngs[static_cast<std::size_t>(u)].below(num_q);
      } else {
        a = argmax_row(q_row, num_q);
      }
      const StepOutcome outcome = envs_[static_cast<std::size_t>(u)]->step(QuestionId{a});
      actions[static_cast<std::size_t>(u)] = a;
      ys[static_cast<std::size_t>(u)] = outcome.correctness;
      rewards[static_cast<std::size_t>(u)].push_back(outcome.reward);
      if (captured) (*captured)[static_cast<std::size_t>(u)].push_back(a);
    }
    q_picks.push_back(ad::gather_cols(q_logits, actions));

    hidden = model_->history_step(hidden, actions, ys, ctx);
    last_actions = std::move(actions);
  }

  // One-step TD targets; the episode is terminal at the horizon.
  std::vector<Tensor> td_terms;
  td_terms.reserve(static_cast<std::size_t>(horizon));
  for (int t = 0; t < horizon; ++t) {
    std::vector<double> target_vals(static_cast<std::size_t>(batch));
    for (int u = 0; u < batch; ++u) {
      double target = rewards[static_cast<std::size_t>(u)][t];
      if (t + 1 < horizon) {
        const double* next_row =
            q_values[static_cast<std::size_t>(t) + 1].data() + static_cast<std::size_t>(u) * num_q;
        target += cfg_.gamma * next_row[argmax_row(next_row, num_q)];
      }
      target_vals[static_cast<std::size_t>(u)] = target;
    }
    const Tensor diff =
        ad::sub(q_picks[static_cast<std::size_t>(t)], Tensor::vec(std::move(target_vals)));
    td_terms.push_back(ad::sum(ad::mul(diff, diff)));
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const std::vector<double> inv(static_cast<std::size_t>(horizon), inv_batch);
  const Tensor loss_q = ad::linear_combination(td_terms, inv);

  Tensor loss_rank = Tensor::scalar(0.0);
  if (cfg_.method == Method::value_based_ram && cfg_.beta > 0.0) {
    loss_rank = rank_loss_from_probs(prob_mats, targets, iteration);
  }
  const Tensor loss_kt = Tensor::scalar(0.0);
  const Tensor total = total_loss(loss_q, loss_kt, loss_rank, cfg_.alpha, cfg_.beta);

  if (bundle) {
    bundle->policy = loss_q.scalar_value();
    bundle->kt = 0.0;
    bundle->rank = loss_rank.scalar_value();
    bundle->total = total.scalar_value();
    bundle->alpha = cfg_.alpha;
    bundle->beta = cfg_.beta;
  }
  if (mean_reward) {
    double mr = 0.0;
    for (int u = 0; u < batch; ++u) {
      for (double r : rewards[static_cast<std::size_t>(u)]) mr += r;
    }
    *mean_reward = mr * inv_batch;
  }
  return total;
}

EvalResult Trainer::evaluate() {
  if (cfg_.method == Method::random) {
    RandomPolicy policy;
    return evaluate_policy(policy, *eval_env_, cfg_.eval_students, cfg_.eval_ts);
  }
  if (cfg_.method == Method::value_based || cfg_.method == Method::value_based_ram) {
    ValueGreedyPolicy policy(*model_);
    return evaluate_policy(policy, *eval_env_, cfg_.eval_students, cfg_.eval_ts);
  }
  RecommenderPolicy policy(*model_);
  return evaluate_policy(policy, *eval_env_, cfg_.eval_students, cfg_.eval_ts);
}

void Trainer::run(const IterationSink& sink) {
  if (cfg_.method == Method::random || cfg_.iterations == 0) {
    IterationStats stats;
    stats.iteration = 0;
    stats.evaluated = true;
    stats.eval_ts = cfg_.eval_ts;
    const EvalResult eval = evaluate();
    stats.eval_values = eval.mean;
    if (sink) sink(stats);
    return;
  }

  for (int it = 0; it < cfg_.iterations; ++it) {
    IterationStats stats;
    stats.iteration = it;
    {
      ad::Tape tape;
      const Tensor loss = iteration_loss(it, &stats.losses, nullptr, nullptr,
                                         &stats.mean_reward);
      if (!std::isfinite(stats.losses.total)) {
        throw std::runtime_error("training aborted: non-finite total loss at iteration " +
                                 std::to_string(it));
      }
      tape.backward(loss);
      model_opt_->step();
      if (seq_opt_) seq_opt_->step();
    }
    const bool last = it + 1 == cfg_.iterations;
    if (last || (cfg_.eval_every > 0 && (it + 1) % cfg_.eval_every == 0)) {
      const EvalResult eval = evaluate();
      stats.evaluated = true;
      stats.eval_ts = cfg_.eval_ts;
      stats.eval_values = eval.mean;
    }
    if (sink) sink(stats);
  }
}

TrainConfig attach_ranking_alignment(TrainConfig base, double beta, ReprVariant variant,
                                     RankLossConfig rank) {
  if (base.method == Method::random) {
    throw std::invalid_argument(
        "attach_ranking_alignment: the random baseline has no training loss to augment");
  }
  base.beta = beta;
  base.variant = variant;
  base.rank = rank;
  if (base.method == Method::value_based) base.method = Method::value_based_ram;
  if (beta > 0.0) {
    if (base.method == Method::reinforce) {
      base.method = variant == ReprVariant::sequential ? Method::rar_s : Method::rar_a;
    }
  }
  return base;
}

}  // namespace qrec
