#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "qrec/domain.hpp"
#include "qrec/graph.hpp"
#include "qrec/rng.hpp"

namespace qrec {

struct SimulatorConfig {
  std::uint64_t seed = 0;        // base seed used when the caller gives none
  int horizon = 30;
  int k_targets = 2;             // concepts per sampled learning target
  double gain = 0.3;             // mastery gain factor on a correct answer
  double gain_wrong = 0.05;      // smaller gain on an incorrect answer
  double slope = 10.0;           // logistic response slope
  double offset = 0.5;           // logistic response midpoint
  double init_mastery_max = 0.3; // initial mastery ~ U[0, init_mastery_max]
  std::string graph_path;        // empty -> KnowledgeGraph::layered_default()

  // Parses the flat key-value format; unknown keys are rejected. A relative
  // `graph` path is resolved against the config file's directory.
  static SimulatorConfig from_file(const std::string& path);
  void validate(int num_concepts) const;
  std::string canonical_text() const;
};

// Latent per-student state the environment evolves.
struct SimStudent {
  std::vector<double> mastery;   // one entry per concept, clamped to [0, 1]
  LearningTarget target;
  HistoricalRecord record;
  Rng rng{0};
  int steps_taken = 0;
};

struct StepOutcome {
  int correctness = 0;
  double reward = 0.0;
  bool done = false;
};

// Reset/step contract every trainable environment implements.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual void reset(std::uint64_t seed) = 0;
  virtual StepOutcome step(QuestionId q) = 0;
  virtual const HistoricalRecord& observe_record() const = 0;
  virtual const LearningTarget& observe_target() const = 0;
  virtual double target_mastery() const = 0;
  virtual MasterySnapshot snapshot() const = 0;  // begin / current / supremum
  virtual int num_questions() const = 0;
  virtual int horizon() const = 0;
  virtual int steps_taken() const = 0;
  virtual bool done() const = 0;
};

// Rule-based simulated student. Correctness is Bernoulli with a logistic
// response in the concept's mastery; a correct (or incorrect) answer grows
// mastery by gain (or gain_wrong) scaled by the weakest prerequisite and the
// remaining headroom. The per-step reward is the normalized target-mastery
// gain, so rewards telescope to the episode's learning effect.
class RuleBasedEnv final : public Environment {
 public:
  RuleBasedEnv(std::shared_ptr<const KnowledgeGraph> graph, SimulatorConfig config);

  void reset(std::uint64_t seed) override;
  StepOutcome step(QuestionId q) override;
  const HistoricalRecord& observe_record() const override;
  const LearningTarget& observe_target() const override;
  double target_mastery() const override;
  MasterySnapshot snapshot() const override;
  int num_questions() const override { return graph_->num_questions(); }
  int horizon() const override { return config_.horizon; }
  int steps_taken() const override { return student_.steps_taken; }
  bool done() const override { return student_.steps_taken >= config_.horizon; }

  double answer_probability(QuestionId q) const;

  const KnowledgeGraph& graph() const { return *graph_; }
  const SimulatorConfig& config() const { return config_; }
  const SimStudent& student() const { return student_; }
  SimStudent& student() { return student_; }

 private:
  std::shared_ptr<const KnowledgeGraph> graph_;
  SimulatorConfig config_;
  SimStudent student_;
  double begin_mastery_ = 0.0;
  bool has_student_ = false;
};

// Convenience: load (or default) the graph named by the config.
std::shared_ptr<const KnowledgeGraph> load_graph_for(const SimulatorConfig& config);

double logistic_response(double mastery, double slope, double offset);

}  // namespace qrec
