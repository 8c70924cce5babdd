#include "qrec/graph.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace qrec {

KnowledgeGraph::KnowledgeGraph(int num_concepts,
                               std::vector<std::pair<ConceptId, ConceptId>> edges,
                               std::vector<ConceptId> question_concept)
    : num_concepts_(num_concepts),
      edges_(std::move(edges)),
      question_concept_(std::move(question_concept)) {
  if (num_concepts_ <= 0) throw std::invalid_argument("KnowledgeGraph: need at least one concept");
  if (question_concept_.empty()) {
    throw std::invalid_argument("KnowledgeGraph: need at least one question");
  }

  prerequisites_.resize(num_concepts_);
  std::vector<int> indegree(num_concepts_, 0);
  std::vector<std::vector<int>> dependents(num_concepts_);
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  for (const auto& [pre, dep] : edges_) {
    if (pre < 0 || pre >= num_concepts_ || dep < 0 || dep >= num_concepts_) {
      throw std::invalid_argument("KnowledgeGraph: edge (" + std::to_string(pre) + ", " +
                                  std::to_string(dep) + ") references an unknown concept");
    }
    if (pre == dep) {
      throw std::invalid_argument("KnowledgeGraph: self-edge on concept " + std::to_string(pre));
    }
    prerequisites_[dep].push_back(pre);
    dependents[pre].push_back(dep);
    ++indegree[dep];
  }

  // Kahn's algorithm; anything left over sits on a cycle.
  std::queue<int> ready;
  for (int c = 0; c < num_concepts_; ++c) {
    if (indegree[c] == 0) ready.push(c);
  }
  int visited = 0;
  while (!ready.empty()) {
    const int c = ready.front();
    ready.pop();
    ++visited;
    for (int d : dependents[c]) {
      if (--indegree[d] == 0) ready.push(d);
    }
  }
  if (visited != num_concepts_) {
    throw std::invalid_argument("KnowledgeGraph: prerequisite edges contain a cycle");
  }

  concept_questions_.resize(num_concepts_);
  for (std::size_t q = 0; q < question_concept_.size(); ++q) {
    const ConceptId c = question_concept_[q];
    if (c < 0 || c >= num_concepts_) {
      throw std::invalid_argument("KnowledgeGraph: question " + std::to_string(q) +
                                  " maps to unknown concept " + std::to_string(c));
    }
    concept_questions_[c].push_back(QuestionId{static_cast<std::int32_t>(q)});
  }
  for (int c = 0; c < num_concepts_; ++c) {
    if (concept_questions_[c].empty()) {
      throw std::invalid_argument("KnowledgeGraph: concept " + std::to_string(c) +
                                  " has no questions");
    }
  }
}

ConceptId KnowledgeGraph::concept_of(QuestionId q) const {
  if (q.index < 0 || q.index >= num_questions()) {
    throw std::out_of_range("KnowledgeGraph: question " + std::to_string(q.index) +
                            " out of range [0, " + std::to_string(num_questions()) + ")");
  }
  return question_concept_[static_cast<std::size_t>(q.index)];
}

const std::vector<QuestionId>& KnowledgeGraph::questions_of(ConceptId c) const {
  if (c < 0 || c >= num_concepts_) {
    throw std::out_of_range("KnowledgeGraph: concept " + std::to_string(c) + " out of range");
  }
  return concept_questions_[static_cast<std::size_t>(c)];
}

const std::vector<ConceptId>& KnowledgeGraph::prerequisites_of(ConceptId c) const {
  if (c < 0 || c >= num_concepts_) {
    throw std::out_of_range("KnowledgeGraph: concept " + std::to_string(c) + " out of range");
  }
  return prerequisites_[static_cast<std::size_t>(c)];
}

ConceptQuestionMap KnowledgeGraph::concept_question_map() const {
  ConceptQuestionMap map;
  for (int c = 0; c < num_concepts_; ++c) {
    auto& qs = map[c];
    for (QuestionId q : concept_questions_[static_cast<std::size_t>(c)]) qs.insert(q);
  }
  return map;
}

KnowledgeGraph KnowledgeGraph::layered_default() {
  const int concepts = 10;
  const int per_concept = 5;
  std::vector<std::pair<ConceptId, ConceptId>> edges;
  for (int i = 0; i < 5; ++i) {
    const ConceptId dep = 5 + i;
    edges.emplace_back(i, dep);
    edges.emplace_back((i + 1) % 5, dep);
  }
  std::vector<ConceptId> qc;
  qc.reserve(concepts * per_concept);
  for (int c = 0; c < concepts; ++c) {
    for (int j = 0; j < per_concept; ++j) qc.push_back(c);
  }
  return KnowledgeGraph(concepts, std::move(edges), std::move(qc));
}

KnowledgeGraph KnowledgeGraph::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file: " + path);
  std::string line;
  int lineno = 0;
  int num_concepts = -1, num_questions = -1;
  std::vector<std::pair<ConceptId, ConceptId>> edges;
  std::vector<ConceptId> qc;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    if (word == "concepts") {
      std::string qword;
      if (!(ls >> num_concepts >> qword >> num_questions) || qword != "questions") {
        fail("expected `concepts N questions M`");
      }
      qc.assign(static_cast<std::size_t>(num_questions), -1);
    } else if (word == "edge") {
      int pre, dep;
      if (!(ls >> pre >> dep)) fail("expected `edge <pre> <dep>`");
      edges.emplace_back(pre, dep);
    } else if (word == "question") {
      int q, c;
      if (!(ls >> q >> c)) fail("expected `question <qid> <concept>`");
      if (num_questions < 0) fail("`question` line before the header");
      if (q < 0 || q >= num_questions) fail("question id " + std::to_string(q) + " out of range");
      if (qc[static_cast<std::size_t>(q)] != -1) fail("duplicate question id " + std::to_string(q));
      qc[static_cast<std::size_t>(q)] = c;
    } else {
      fail("unknown directive `" + word + "`");
    }
  }
  if (num_concepts < 0) throw std::runtime_error(path + ": missing `concepts ... questions ...` header");
  for (std::size_t q = 0; q < qc.size(); ++q) {
    if (qc[q] == -1) {
      throw std::runtime_error(path + ": question " + std::to_string(q) + " has no concept line");
    }
  }
  return KnowledgeGraph(num_concepts, std::move(edges), std::move(qc));
}

std::string KnowledgeGraph::to_text() const {
  std::ostringstream out;
  out << "concepts " << num_concepts_ << " questions " << num_questions() << "\n";
  for (const auto& [pre, dep] : edges_) out << "edge " << pre << " " << dep << "\n";
  for (int q = 0; q < num_questions(); ++q) {
    out << "question " << q << " " << question_concept_[static_cast<std::size_t>(q)] << "\n";
  }
  return out.str();
}

}  // namespace qrec
