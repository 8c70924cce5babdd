#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qrec/autodiff.hpp"
#include "qrec/domain.hpp"
#include "qrec/rng.hpp"

namespace qrec {

// How a recommendation sequence is represented for difference computation:
// a learned sequential encoding of the per-step probability vectors, or
// their elementwise sum.
enum class ReprVariant { sequential, additive };

std::string to_string(ReprVariant v);

struct RecommendationRepr {
  ReprVariant variant = ReprVariant::additive;
  ad::Tensor vector;  // rank-1; differentiable w.r.t. the probability inputs
};

struct RankLossConfig {
  double psi = 0.1;    // scale on the student distance
  double omega = 5.0;  // clip ceiling per pair
  int peer_count = 4;  // peers sampled per student (capped at batch-1)
};

// Cardinality of the symmetric difference of the two learning targets.
int student_distance(const LearningTarget& tu, const LearningTarget& tv);

// Learned sequence encoder over probability vectors (one GRU cell); owns
// its parameters so it can be attached to any policy that emits
// distributions.
class SequenceReprEncoder {
 public:
  SequenceReprEncoder(int num_questions, int repr_dim, std::uint64_t init_seed);

  // probs: per-step rank-1 probability vectors for one student.
  RecommendationRepr encode(std::span<const ad::Tensor> probs) const;

  // prob_rows: per-step (batch, |Q|) matrices; returns the final hidden
  // state matrix (batch, repr_dim).
  ad::Tensor encode_batch(std::span<const ad::Tensor> prob_rows) const;

  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }
  int repr_dim() const { return repr_dim_; }

 private:
  int num_questions_;
  int repr_dim_;
  ad::ParameterSet params_;
  ad::GruCellParams cell_;
  ad::Parameter* initial_hidden_ = nullptr;
};

// Elementwise sum of the per-step probability vectors.
RecommendationRepr additive_repr(std::span<const ad::Tensor> probs);

// Euclidean distance between two representations of the same variant and
// dimension; errors name any mismatch.
ad::Tensor recommendation_distance(const RecommendationRepr& bu, const RecommendationRepr& bv);

// m distinct peers for student u, uniform without replacement from the
// batch excluding u.
std::vector<int> select_peers(int batch_size, int u, int m, Rng& rng);

// Sum over students and their sampled peers of
// clip(psi * d_target - d_repr, 0, omega). Gradients flow through the
// representations only; target distances are constants.
ad::Tensor rank_loss(std::span<const RecommendationRepr> reprs,
                     std::span<const LearningTarget> targets, const RankLossConfig& config,
                     Rng& peer_rng);

}  // namespace qrec
