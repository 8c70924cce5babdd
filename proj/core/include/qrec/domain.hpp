#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

namespace qrec {

// Dense question index in [0, num_questions). Probability vectors, one-hot
// encodings and embedding rows are all indexed by this value.
struct QuestionId {
  std::int32_t index = 0;
  friend auto operator<=>(const QuestionId&, const QuestionId&) = default;
};

// One answered question: (q, y) with y in {0, 1}.
struct Interaction {
  QuestionId question;
  int correctness = 0;
};

// Ordered, append-only log of a student's interactions.
struct HistoricalRecord {
  std::vector<Interaction> steps;

  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
};

// The set of questions a student aims to master. Never empty.
struct LearningTarget {
  std::set<QuestionId> questions;

  bool contains(QuestionId q) const { return questions.count(q) != 0; }
  std::size_t size() const { return questions.size(); }
  friend bool operator==(const LearningTarget&, const LearningTarget&) = default;
};

// Mastery of the learning target at episode begin/end plus its supremum.
struct MasterySnapshot {
  double begin = 0.0;
  double end = 0.0;
  double supremum = 0.0;
};

// Normalized mastery gain (m_e - m_b) / (m_sup - m_b). 1 means the target
// was fully mastered, 0 means no progress; negative values are possible.
// Throws std::invalid_argument on a degenerate denominator (m_sup <= m_b)
// or non-finite inputs.
double learning_effect(const MasterySnapshot& snapshot);

using ConceptId = std::int32_t;
using ConceptQuestionMap = std::map<ConceptId, std::set<QuestionId>>;

// Union of the question sets of the given concepts. Throws on an unknown
// concept id (naming it) and on an empty concept set.
LearningTarget target_from_concepts(const std::set<ConceptId>& concepts,
                                    const ConceptQuestionMap& concept_map);

// Returns a copy of `record` with (q, y) appended. y must be 0 or 1.
HistoricalRecord append_interaction(const HistoricalRecord& record, QuestionId q, int y);

}  // namespace qrec
