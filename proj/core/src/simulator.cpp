#include "qrec/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "qrec/kvfile.hpp"

namespace qrec {

SimulatorConfig SimulatorConfig::from_file(const std::string& path) {
  const KeyValueFile kv = KeyValueFile::parse_file(path);
  const std::set<std::string> allowed = {"seed",  "horizon", "k_targets",        "gain",
                                         "gain_wrong", "slope",   "offset",
                                         "init_mastery_max", "graph"};
  const auto unknown = kv.unknown_keys(allowed);
  if (!unknown.empty()) {
    throw std::invalid_argument(path + ": unknown simulator config key `" + unknown.front() + "`");
  }
  SimulatorConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  cfg.horizon = static_cast<int>(kv.get_int("horizon", cfg.horizon));
  cfg.k_targets = static_cast<int>(kv.get_int("k_targets", cfg.k_targets));
  cfg.gain = kv.get_double("gain", cfg.gain);
  cfg.gain_wrong = kv.get_double("gain_wrong", cfg.gain_wrong);
  cfg.slope = kv.get_double("slope", cfg.slope);
  cfg.offset = kv.get_double("offset", cfg.offset);
  cfg.init_mastery_max = kv.get_double("init_mastery_max", cfg.init_mastery_max);
  cfg.graph_path = kv.get_string("graph", "");
  if (!cfg.graph_path.empty()) {
    std::filesystem::path g(cfg.graph_path);
    if (g.is_relative()) {
      cfg.graph_path = (std::filesystem::path(path).parent_path() / g).string();
    }
  }
  return cfg;
}

void SimulatorConfig::validate(int num_concepts) const {
  if (horizon <= 0) throw std::invalid_argument("simulator config: horizon must be positive");
  if (k_targets < 1 || k_targets > num_concepts) {
    throw std::invalid_argument("simulator config: k_targets must be in [1, " +
                                std::to_string(num_concepts) + "], got " +
                                std::to_string(k_targets));
  }
  if (!(gain > 0.0 && gain <= 1.0)) {
    throw std::invalid_argument("simulator config: gain must be in (0, 1]");
  }
  if (!(gain_wrong >= 0.0 && gain_wrong < gain)) {
    throw std::invalid_argument("simulator config: gain_wrong must be in [0, gain)");
  }
  if (!std::isfinite(slope) || !std::isfinite(offset)) {
    throw std::invalid_argument("simulator config: slope and offset must be finite");
  }
  if (!(init_mastery_max >= 0.0 && init_mastery_max < 1.0)) {
    throw std::invalid_argument("simulator config: init_mastery_max must be in [0, 1)");
  }
}

std::string SimulatorConfig::canonical_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "gain = " << gain << "\n";
  out << "gain_wrong = " << gain_wrong << "\n";
  if (!graph_path.empty()) out << "graph = " << graph_path << "\n";
  out << "horizon = " << horizon << "\n";
  out << "init_mastery_max = " << init_mastery_max << "\n";
  out << "k_targets = " << k_targets << "\n";
  out << "offset = " << offset << "\n";
  out << "seed = " << seed << "\n";
  out << "slope = " << slope << "\n";
  return out.str();
}

std::shared_ptr<const KnowledgeGraph> load_graph_for(const SimulatorConfig& config) {
  if (config.graph_path.empty()) {
    return std::make_shared<const KnowledgeGraph>(KnowledgeGraph::layered_default());
  }
  return std::make_shared<const KnowledgeGraph>(KnowledgeGraph::load(config.graph_path));
}

double logistic_response(double mastery, double slope, double offset) {
  const double z = slope * (mastery - offset);
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

RuleBasedEnv::RuleBasedEnv(std::shared_ptr<const KnowledgeGraph> graph, SimulatorConfig config)
    : graph_(std::move(graph)), config_(std::move(config)) {
  if (!graph_) throw std::invalid_argument("RuleBasedEnv: null knowledge graph");
  config_.validate(graph_->num_concepts());
}

void RuleBasedEnv::reset(std::uint64_t seed) {
  student_ = SimStudent{};
  student_.rng = Rng(seed);
  const int concepts = graph_->num_concepts();
  student_.mastery.resize(static_cast<std::size_t>(concepts));
  for (double& m : student_.mastery) {
    m = student_.rng.uniform(0.0, config_.init_mastery_max);
  }
  const auto chosen = student_.rng.sample_without_replacement(concepts, config_.k_targets);
  std::set<ConceptId> concept_set(chosen.begin(), chosen.end());
  student_.target = target_from_concepts(concept_set, graph_->concept_question_map());
  has_student_ = true;
  begin_mastery_ = target_mastery();
  const double m_sup = static_cast<double>(student_.target.size());
  if (!(m_sup > begin_mastery_)) {
    throw std::logic_error("RuleBasedEnv::reset: initial target mastery already at supremum");
  }
}

double RuleBasedEnv::answer_probability(QuestionId q) const {
  if (!has_student_) throw std::logic_error("RuleBasedEnv: reset() before answer_probability()");
  const ConceptId c = graph_->concept_of(q);
  return logistic_response(student_.mastery[static_cast<std::size_t>(c)], config_.slope,
                           config_.offset);
}

StepOutcome RuleBasedEnv::step(QuestionId q) {
  if (!has_student_) throw std::logic_error("RuleBasedEnv: reset() before step()");
  if (done()) {
    throw std::runtime_error("RuleBasedEnv::step: episode already finished after " +
                             std::to_string(student_.steps_taken) + " steps");
  }
  const ConceptId c = graph_->concept_of(q);
  const double p = answer_probability(q);
  const int y = student_.rng.bernoulli(p) ? 1 : 0;

  double gate = 1.0;
  for (ConceptId pre : graph_->prerequisites_of(c)) {
    gate = std::min(gate, student_.mastery[static_cast<std::size_t>(pre)]);
  }

  const double before = target_mastery();
  double& m = student_.mastery[static_cast<std::size_t>(c)];
  const double g = (y == 1 ? config_.gain : config_.gain_wrong) * gate * (1.0 - m);
  m = std::clamp(m + g, 0.0, 1.0);
  const double after = target_mastery();

  const double m_sup = static_cast<double>(student_.target.size());
  const double reward = (after - before) / (m_sup - begin_mastery_);

  student_.record.steps.push_back(Interaction{q, y});
  ++student_.steps_taken;
  return StepOutcome{y, reward, done()};
}

const HistoricalRecord& RuleBasedEnv::observe_record() const { return student_.record; }

const LearningTarget& RuleBasedEnv::observe_target() const {
  if (!has_student_) throw std::logic_error("RuleBasedEnv: reset() before observe_target()");
  return student_.target;
}

double RuleBasedEnv::target_mastery() const {
  if (!has_student_) throw std::logic_error("RuleBasedEnv: reset() before target_mastery()");
  double sum = 0.0;
  for (QuestionId q : student_.target.questions) {
    sum += student_.mastery[static_cast<std::size_t>(graph_->concept_of(q))];
  }
  return sum;
}

MasterySnapshot RuleBasedEnv::snapshot() const {
  return MasterySnapshot{begin_mastery_, target_mastery(),
                         static_cast<double>(student_.target.size())};
}

}  // namespace qrec
