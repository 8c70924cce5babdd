#include "qrec/ranking_alignment.hpp"

#include <algorithm>
#include <stdexcept>

namespace qrec {

using ad::Tensor;

std::string to_string(ReprVariant v) {
  return v == ReprVariant::sequential ? "sequential" : "additive";
}

int student_distance(const LearningTarget& tu, const LearningTarget& tv) {
  if (tu.questions.empty() || tv.questions.empty()) {
    throw std::invalid_argument("student_distance: learning targets must be non-empty");
  }
  std::size_t common = 0;
  for (QuestionId q : tu.questions) common += tv.questions.count(q);
  return static_cast<int>(tu.questions.size() + tv.questions.size() - 2 * common);
}

SequenceReprEncoder::SequenceReprEncoder(int num_questions, int repr_dim,
                                         std::uint64_t init_seed)
    : num_questions_(num_questions), repr_dim_(repr_dim) {
  if (num_questions < 1 || repr_dim < 1) {
    throw std::invalid_argument("SequenceReprEncoder: widths must be >= 1");
  }
  cell_ = ad::make_gru_cell(params_, "f_s", static_cast<std::size_t>(num_questions),
                            static_cast<std::size_t>(repr_dim), init_seed);
  initial_hidden_ = &params_.add("f_s.h0", {static_cast<std::size_t>(repr_dim)});
}

RecommendationRepr SequenceReprEncoder::encode(std::span<const Tensor> probs) const {
  if (probs.empty()) {
    throw std::invalid_argument("sequential_repr: empty probability sequence");
  }
  Tensor h = initial_hidden_->tensor();
  for (const Tensor& p : probs) {
    if (p.rank() != 1 || p.size() != static_cast<std::size_t>(num_questions_)) {
      throw std::invalid_argument("sequential_repr: expected probability vectors of length " +
                                  std::to_string(num_questions_) + ", got " +
                                  ad::shape_str(p.shape()));
    }
    h = ad::gru_cell(cell_, p, h);
  }
  return RecommendationRepr{ReprVariant::sequential, h};
}

Tensor SequenceReprEncoder::encode_batch(std::span<const Tensor> prob_rows) const {
  if (prob_rows.empty()) {
    throw std::invalid_argument("sequential_repr: empty probability sequence");
  }
  const std::size_t batch = prob_rows[0].shape()[0];
  Tensor h = ad::repeat_row(initial_hidden_->tensor(), batch);
  for (const Tensor& p : prob_rows) h = ad::gru_cell(cell_, p, h);
  return h;
}

RecommendationRepr additive_repr(std::span<const Tensor> probs) {
  if (probs.empty()) {
    throw std::invalid_argument("additive_repr: empty probability sequence");
  }
  std::vector<double> weights(probs.size(), 1.0);
  return RecommendationRepr{ReprVariant::additive, ad::linear_combination(probs, weights)};
}

Tensor recommendation_distance(const RecommendationRepr& bu, const RecommendationRepr& bv) {
  if (bu.variant != bv.variant) {
    throw std::invalid_argument("recommendation_distance: variant mismatch (" +
                                to_string(bu.variant) + " vs " + to_string(bv.variant) + ")");
  }
  if (bu.vector.shape() != bv.vector.shape()) {
    throw std::invalid_argument("recommendation_distance: dimension mismatch " +
                                ad::shape_str(bu.vector.shape()) + " vs " +
                                ad::shape_str(bv.vector.shape()));
  }
  return ad::l2_distance(bu.vector, bv.vector);
}

std::vector<int> select_peers(int batch_size, int u, int m, Rng& rng) {
  if (u < 0 || u >= batch_size) {
    throw std::invalid_argument("select_peers: student index out of range");
  }
  if (m < 0 || m > batch_size - 1) {
    throw std::invalid_argument("select_peers: peer count " + std::to_string(m) +
                                " exceeds batch size minus one (" +
                                std::to_string(batch_size - 1) + ")");
  }
  const auto drawn = rng.sample_without_replacement(batch_size - 1, m);
  std::vector<int> peers;
  peers.reserve(drawn.size());
  for (int d : drawn) peers.push_back(d < u ? d : d + 1);  // skip u
  return peers;
}

Tensor rank_loss(std::span<const RecommendationRepr> reprs,
                 std::span<const LearningTarget> targets, const RankLossConfig& config,
                 Rng& peer_rng) {
  if (reprs.size() != targets.size() || reprs.empty()) {
    throw std::invalid_argument("rank_loss: need matching, non-empty repr and target lists");
  }
  if (config.psi <= 0.0 || config.omega <= 0.0) {
    throw std::invalid_argument("rank_loss: psi and omega must be positive");
  }
  const int batch = static_cast<int>(reprs.size());
  const int m = std::min(config.peer_count, batch - 1);
  std::vector<Tensor> terms;
  terms.reserve(static_cast<std::size_t>(batch) * static_cast<std::size_t>(std::max(m, 0)));
  for (int u = 0; u < batch; ++u) {
    for (int v : select_peers(batch, u, m, peer_rng)) {
      const double dt = static_cast<double>(
          student_distance(targets[static_cast<std::size_t>(u)],
                           targets[static_cast<std::size_t>(v)]));
      const Tensor dp = recommendation_distance(reprs[static_cast<std::size_t>(u)],
                                                reprs[static_cast<std::size_t>(v)]);
      terms.push_back(ad::clip(ad::rsub_scalar(config.psi * dt, dp), 0.0, config.omega));
    }
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  const std::vector<double> ones(terms.size(), 1.0);
  return ad::linear_combination(terms, ones);
}

}  // namespace qrec
