#include "qrec/recommender.hpp"

#include <cmath>
#include <stdexcept>

namespace qrec {

using ad::Tensor;

void RecommenderConfig::validate() const {
  if (num_questions < 1) throw std::invalid_argument("recommender config: num_questions must be >= 1");
  if (embed_dim < 1 || repr_dim < 1 || interaction_dim < 1 || history_dim < 1 || state_dim < 1) {
    throw std::invalid_argument("recommender config: all widths must be >= 1");
  }
  if (repr_dim % 2 != 0) {
    throw std::invalid_argument("recommender config: repr_dim must be even, got " +
                                std::to_string(repr_dim));
  }
  if (attention_heads < 1 || (repr_dim / 2) % attention_heads != 0) {
    throw std::invalid_argument("recommender config: attention_heads must divide repr_dim/2");
  }
}

void validate_policy_output(const PolicyOutput& p, double tol) {
  double sum = 0.0;
  for (double v : p.probs) {
    if (!(v >= 0.0)) throw std::invalid_argument("PolicyOutput: negative probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw std::invalid_argument("PolicyOutput: probabilities sum to " + std::to_string(sum));
  }
}

QuestionId sample_action(const PolicyOutput& p, Rng& rng) {
  if (p.probs.empty()) throw std::invalid_argument("sample_action: empty distribution");
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    cum += p.probs[i];
    if (u < cum) return QuestionId{static_cast<std::int32_t>(i)};
  }
  return QuestionId{static_cast<std::int32_t>(p.probs.size() - 1)};
}

Tensor Recommender::Affine::apply_vec(const Tensor& v) const {
  return ad::add(ad::matmul(v, w->tensor()), b->tensor());
}

Tensor Recommender::Affine::apply_rows(const Tensor& m) const {
  return ad::add_rowvec(ad::matmul(m, w->tensor()), b->tensor());
}

Recommender::Affine Recommender::make_affine(const std::string& name, std::size_t in,
                                             std::size_t out) {
  Affine a;
  a.w = &params_.add(name + ".w", {in, out});
  a.b = &params_.add(name + ".b", {out});
  ad::init_xavier_uniform(*a.w, derive_seed(config_.init_seed, fnv1a(a.w->name())));
  return a;
}

Recommender::Recommender(RecommenderConfig config) : config_(config) {
  config_.validate();
  const auto q = static_cast<std::size_t>(config_.num_questions);
  const auto de = static_cast<std::size_t>(config_.embed_dim);
  const auto dr = static_cast<std::size_t>(config_.repr_dim);
  const auto dv = static_cast<std::size_t>(config_.interaction_dim);
  const auto dh = static_cast<std::size_t>(config_.history_dim);
  const auto ds = static_cast<std::size_t>(config_.state_dim);
  const std::size_t half = dr / 2;

  embeddings_ = &params_.add("embed", {q, de});
  ad::init_xavier_uniform(*embeddings_, derive_seed(config_.init_seed, fnv1a("embed")));

  query_proj_ = make_affine("attn.query", de, half);
  key_proj_ = make_affine("attn.key", de, half);
  value_proj_ = make_affine("attn.value", de, half);
  out_proj_ = make_affine("attn.out", half, half);

  interaction_proj_ = make_affine("f_v", de + 1, dv);
  history_cell_ = ad::make_gru_cell(params_, "history", dv, dh, config_.init_seed);
  initial_hidden_ = &params_.add("history.h0", {dh});
  start_token_ = &params_.add("start_token", {dr});
  init_uniform(*start_token_, -0.1, 0.1, derive_seed(config_.init_seed, fnv1a("start_token")));

  if (config_.attention_pooling) {
    pool_query_ = &params_.add("target_pool.query", {dr});
    init_uniform(*pool_query_, -0.1, 0.1,
                 derive_seed(config_.init_seed, fnv1a("target_pool.query")));
  }

  blend_prev_ = make_affine("f_1", dr, ds);
  // Zero start for the target pathway: the policy begins target-blind, and
  // any target sensitivity it develops is driven by the losses rather than
  // by init noise.
  blend_target_ = make_affine("f_2", dr, ds);
  for (double& v : blend_target_.w->values()) v = 0.0;
  blend_history_ = make_affine("f_3", dh, ds);
  policy_head_ = make_affine("f_p", ds, q);
  kt_head_ = make_affine("f_k", dh, 1);
}

Recommender::QuestionContext Recommender::build_question_context() const {
  QuestionContext ctx;
  ctx.embeddings = embeddings_->tensor();
  const Tensor projected = query_proj_.apply_rows(ctx.embeddings);  // (|Q|, half)
  const Tensor keys = key_proj_.apply_rows(ctx.embeddings);
  const Tensor values = value_proj_.apply_rows(ctx.embeddings);
  const Tensor attended = ad::scaled_dot_attention_rows(
      projected, keys, values, static_cast<std::size_t>(config_.attention_heads));
  const Tensor attn_out = out_proj_.apply_rows(attended);
  ctx.reprs = ad::hstack(attn_out, projected);  // Attn(f_r(e), E, E) ++ f_r(e)
  return ctx;
}

Tensor Recommender::encode_question(QuestionId q) const {
  return ad::row(embeddings_->tensor(), static_cast<std::size_t>(q.index));
}

Tensor Recommender::attentive_representation(QuestionId q) const {
  return attentive_representation(q, build_question_context());
}

Tensor Recommender::attentive_representation(QuestionId q, const QuestionContext& ctx) const {
  return ad::row(ctx.reprs, static_cast<std::size_t>(q.index));
}

Tensor Recommender::encode_history(const HistoricalRecord& record) const {
  Tensor h = initial_hidden_->tensor();
  for (const Interaction& step : record.steps) {
    const Tensor e = encode_question(step.question);
    const Tensor x = ad::concat(e, Tensor::vec({static_cast<double>(step.correctness)}));
    const Tensor v = interaction_proj_.apply_vec(x);
    h = ad::gru_cell(history_cell_, v, h);
  }
  return h;
}

Tensor Recommender::encode_target(const LearningTarget& target, const QuestionContext& ctx) const {
  if (target.questions.empty()) {
    throw std::invalid_argument("encode_target: learning target is empty");
  }
  std::vector<int> idx;
  idx.reserve(target.questions.size());
  for (QuestionId q : target.questions) idx.push_back(q.index);
  const Tensor stacked = ad::rows(ctx.reprs, idx);
  if (!config_.attention_pooling) return ad::mean_rows(stacked);
  return ad::scaled_dot_attention(pool_query_->tensor(), stacked, stacked,
                                  static_cast<std::size_t>(config_.attention_heads));
}

Tensor Recommender::blend_state(std::optional<QuestionId> prev_question,
                                const Tensor& target_repr, const Tensor& history_repr,
                                const QuestionContext& ctx) const {
  const Tensor prev = prev_question
                          ? attentive_representation(*prev_question, ctx)
                          : start_token_->tensor();
  const Tensor s1 = blend_prev_.apply_vec(prev);
  const Tensor s2 = blend_target_.apply_vec(target_repr);
  const Tensor s3 = blend_history_.apply_vec(history_repr);
  return ad::add(ad::add(s1, s2), s3);
}

Tensor Recommender::policy_logits(const Tensor& state) const {
  return policy_head_.apply_vec(state);
}

Tensor Recommender::policy(const Tensor& state) const {
  return ad::softmax(policy_logits(state));
}

Tensor Recommender::predict_correctness(const Tensor& history_repr) const {
  const Tensor logit = kt_head_.apply_vec(history_repr);  // (1)
  return ad::pick(ad::sigmoid_t(logit), 0);
}

PolicyOutput Recommender::policy_output(const Tensor& state) const {
  return PolicyOutput{policy(state).values()};
}

Tensor Recommender::initial_hidden(std::size_t batch) const {
  return ad::repeat_row(initial_hidden_->tensor(), batch);
}

Tensor Recommender::history_step(const Tensor& hidden, std::span<const int> actions,
                                 std::span<const int> correctness,
                                 const QuestionContext& ctx) const {
  if (actions.size() != correctness.size() || actions.size() != hidden.shape()[0]) {
    throw std::invalid_argument("history_step: batch sizes disagree");
  }
  const std::size_t batch = correctness.size();
  std::vector<double> ys(batch);
  for (std::size_t i = 0; i < batch; ++i) ys[i] = static_cast<double>(correctness[i]);
  const Tensor e = ad::rows(ctx.embeddings, actions);
  const Tensor x = ad::hstack(e, Tensor::mat(batch, 1, std::move(ys)));
  const Tensor v = interaction_proj_.apply_rows(x);
  return ad::gru_cell(history_cell_, v, hidden);
}

Tensor Recommender::encode_targets(std::span<const LearningTarget> targets,
                                   const QuestionContext& ctx) const {
  if (targets.empty()) throw std::invalid_argument("encode_targets: empty batch");
  if (config_.attention_pooling) {
    std::vector<Tensor> rows;
    rows.reserve(targets.size());
    for (const LearningTarget& t : targets) rows.push_back(encode_target(t, ctx));
    return ad::vstack(rows);
  }
  // Mean pooling as one constant selection matrix times R.
  const auto q = static_cast<std::size_t>(config_.num_questions);
  std::vector<double> sel(targets.size() * q, 0.0);
  for (std::size_t u = 0; u < targets.size(); ++u) {
    if (targets[u].questions.empty()) {
      throw std::invalid_argument("encode_targets: learning target is empty");
    }
    const double w = 1.0 / static_cast<double>(targets[u].questions.size());
    for (QuestionId qq : targets[u].questions) {
      sel[u * q + static_cast<std::size_t>(qq.index)] = w;
    }
  }
  return ad::matmul(Tensor::mat(targets.size(), q, std::move(sel)), ctx.reprs);
}

Tensor Recommender::start_token_rows(std::size_t batch) const {
  return ad::repeat_row(start_token_->tensor(), batch);
}

Tensor Recommender::previous_reprs(std::span<const int> prev_actions,
                                   const QuestionContext& ctx) const {
  return ad::rows(ctx.reprs, prev_actions);
}

Tensor Recommender::blend_states(const Tensor& prev_reprs, const Tensor& target_proj,
                                 const Tensor& hidden) const {
  const Tensor s1 = blend_prev_.apply_rows(prev_reprs);
  const Tensor s3 = blend_history_.apply_rows(hidden);
  return ad::add(ad::add(s1, target_proj), s3);
}

Tensor Recommender::target_projection(const Tensor& target_reprs) const {
  return blend_target_.apply_rows(target_reprs);
}

Tensor Recommender::policy_logits_rows(const Tensor& states) const {
  return policy_head_.apply_rows(states);
}

Tensor Recommender::kt_outputs(const Tensor& hidden) const {
  return ad::sigmoid_t(kt_head_.apply_rows(hidden));
}

}  // namespace qrec
