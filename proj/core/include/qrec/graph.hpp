#pragma once

#include <string>
#include <vector>

#include "qrec/domain.hpp"

namespace qrec {

// Concept DAG plus the question -> concept tagging. Validated at
// construction: prerequisite edges must be acyclic, every question maps to
// one concept in range, and every concept owns at least one question.
class KnowledgeGraph {
 public:
  KnowledgeGraph(int num_concepts, std::vector<std::pair<ConceptId, ConceptId>> edges,
                 std::vector<ConceptId> question_concept);

  int num_concepts() const { return num_concepts_; }
  int num_questions() const { return static_cast<int>(question_concept_.size()); }
  ConceptId concept_of(QuestionId q) const;
  const std::vector<QuestionId>& questions_of(ConceptId c) const;
  const std::vector<ConceptId>& prerequisites_of(ConceptId c) const;
  const std::vector<std::pair<ConceptId, ConceptId>>& edges() const { return edges_; }
  ConceptQuestionMap concept_question_map() const;

  // Built-in default: 10 concepts with 5 questions each, arranged in two
  // layers where each second-layer concept has two first-layer
  // prerequisites. Identical to data/default_graph.txt.
  static KnowledgeGraph layered_default();

  static KnowledgeGraph load(const std::string& path);
  std::string to_text() const;

 private:
  int num_concepts_ = 0;
  std::vector<std::pair<ConceptId, ConceptId>> edges_;
  std::vector<ConceptId> question_concept_;
  std::vector<std::vector<QuestionId>> concept_questions_;
  std::vector<std::vector<ConceptId>> prerequisites_;
};

}  // namespace qrec
