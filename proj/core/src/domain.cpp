#include "qrec/domain.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qrec {

double learning_effect(const MasterySnapshot& snapshot) {
  if (!std::isfinite(snapshot.begin) || !std::isfinite(snapshot.end) ||
      !std::isfinite(snapshot.supremum)) {
    throw std::invalid_argument("learning_effect: mastery values must be finite");
  }
  const double denom = snapshot.supremum - snapshot.begin;
  if (!(denom > 0.0)) {
    throw std::invalid_argument(
        "learning_effect: degenerate denominator, supremum (" +
        std::to_string(snapshot.supremum) + ") must exceed begin (" +
        std::to_string(snapshot.begin) + ")");
  }
  return (snapshot.end - snapshot.begin) / denom;
}

LearningTarget target_from_concepts(const std::set<ConceptId>& concepts,
                                    const ConceptQuestionMap& concept_map) {
  if (concepts.empty()) {
    throw std::invalid_argument("target_from_concepts: concept set is empty, target would be empty");
  }
  LearningTarget target;
  for (ConceptId c : concepts) {
    auto it = concept_map.find(c);
    if (it == concept_map.end()) {
      throw std::invalid_argument("target_from_concepts: unknown concept id " + std::to_string(c));
    }
    target.questions.insert(it->second.begin(), it->second.end());
  }
  if (target.questions.empty()) {
    throw std::invalid_argument("target_from_concepts: resulting target is empty");
  }
  return target;
}

HistoricalRecord append_interaction(const HistoricalRecord& record, QuestionId q, int y) {
  if (y != 0 && y != 1) {
    throw std::invalid_argument("append_interaction: correctness must be 0 or 1, got " + std::to_string(y));
  }
  HistoricalRecord out = record;
  out.steps.push_back(Interaction{q, y});
  return out;
}

}  // namespace qrec
