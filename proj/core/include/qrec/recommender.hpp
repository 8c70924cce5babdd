#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrec/autodiff.hpp"
#include "qrec/domain.hpp"
#include "qrec/rng.hpp"

namespace qrec {

struct RecommenderConfig {
  int num_questions = 0;
  int embed_dim = 48;         // question embedding width
  int repr_dim = 128;         // attentive representation width (even; halves concatenate)
  int interaction_dim = 128;  // encoded (question, correctness) width
  int history_dim = 128;      // history hidden state width
  int state_dim = 128;        // blended state width
  int attention_heads = 1;
  bool attention_pooling = false;  // target pooling: mean (default) or attention
  std::uint64_t init_seed = 0;

  void validate() const;
};

// Probability vector over the question set; nonnegative, sums to 1.
struct PolicyOutput {
  std::vector<double> probs;
};

void validate_policy_output(const PolicyOutput& p, double tol = 1e-6);

// Samples an index according to the probabilities; deterministic given the
// rng state.
QuestionId sample_action(const PolicyOutput& p, Rng& rng);

// Encoder stack + policy head. One instance is single-threaded during
// forward/backward; the same parameters serve both the per-student vector
// path (evaluation, tests) and the batched matrix path (training).
class Recommender {
 public:
  explicit Recommender(RecommenderConfig config);

  const RecommenderConfig& config() const { return config_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

  // Cached per-forward question representations: the embedding matrix and
  // the attentive representation matrix R (one row per question). Rebuild
  // once per tape; every use shares the same graph nodes.
  struct QuestionContext {
    ad::Tensor embeddings;  // (|Q|, embed_dim)
    ad::Tensor reprs;       // (|Q|, repr_dim)
  };
  QuestionContext build_question_context() const;

  // --- per-student path ---
  ad::Tensor encode_question(QuestionId q) const;  // embedding row
  ad::Tensor attentive_representation(QuestionId q) const;
  ad::Tensor attentive_representation(QuestionId q, const QuestionContext& ctx) const;
  ad::Tensor encode_history(const HistoricalRecord& record) const;
  ad::Tensor encode_target(const LearningTarget& target, const QuestionContext& ctx) const;
  ad::Tensor blend_state(std::optional<QuestionId> prev_question, const ad::Tensor& target_repr,
                         const ad::Tensor& history_repr, const QuestionContext& ctx) const;
  ad::Tensor policy_logits(const ad::Tensor& state) const;
  ad::Tensor policy(const ad::Tensor& state) const;       // softmax over questions
  ad::Tensor predict_correctness(const ad::Tensor& history_repr) const;  // scalar in (0,1)

  PolicyOutput policy_output(const ad::Tensor& state) const;

  // --- batched path (one row per student) ---
  ad::Tensor initial_hidden(std::size_t batch) const;
  // Appends one interaction per student: h' = cell(f_v(e_q ++ y), h).
  ad::Tensor history_step(const ad::Tensor& hidden, std::span<const int> actions,
                          std::span<const int> correctness, const QuestionContext& ctx) const;
  ad::Tensor encode_targets(std::span<const LearningTarget> targets,
                            const QuestionContext& ctx) const;
  ad::Tensor start_token_rows(std::size_t batch) const;
  ad::Tensor previous_reprs(std::span<const int> prev_actions, const QuestionContext& ctx) const;
  // s = f1(r_prev) + f2(a) + f3(h); pass f2(a) precomputed, it is constant
  // within an episode.
  ad::Tensor blend_states(const ad::Tensor& prev_reprs, const ad::Tensor& target_proj,
                          const ad::Tensor& hidden) const;
  ad::Tensor target_projection(const ad::Tensor& target_reprs) const;  // f2 rows
  ad::Tensor policy_logits_rows(const ad::Tensor& states) const;
  ad::Tensor kt_outputs(const ad::Tensor& hidden) const;  // sigmoid(f_k(h)), (B, 1)

  std::uint64_t history_cell_applications() const { return history_cell_.applications; }

 private:
  struct Affine {
    ad::Parameter* w = nullptr;
    ad::Parameter* b = nullptr;
    ad::Tensor apply_vec(const ad::Tensor& v) const;
    ad::Tensor apply_rows(const ad::Tensor& m) const;
  };
  Affine make_affine(const std::string& name, std::size_t in, std::size_t out);

  RecommenderConfig config_;
  ad::ParameterSet params_;
  ad::Parameter* embeddings_ = nullptr;
  Affine query_proj_, key_proj_, value_proj_, out_proj_;
  Affine interaction_proj_;  // f_v
  ad::GruCellParams history_cell_;
  ad::Parameter* initial_hidden_ = nullptr;
  ad::Parameter* start_token_ = nullptr;
  ad::Parameter* pool_query_ = nullptr;  // only with attention pooling
  Affine blend_prev_, blend_target_, blend_history_;  // f_1, f_2, f_3
  Affine policy_head_;  // f_p
  Affine kt_head_;      // f_k
};

}  // namespace qrec
