#include <benchmark/benchmark.h>

#include "qrec/trainer.hpp"

using namespace qrec;

namespace {

std::shared_ptr<const KnowledgeGraph> graph() {
  static auto g = std::make_shared<const KnowledgeGraph>(KnowledgeGraph::layered_default());
  return g;
}

TrainConfig default_train(Method method) {
  TrainConfig cfg;
  cfg.method = method;
  cfg.beta = method == Method::reinforce ? 0.0 : 0.5;
  cfg.variant = method == Method::rar_s ? ReprVariant::sequential : ReprVariant::additive;
  cfg.seed = 1;
  cfg.eval_students = 16;
  return cfg;
}

void BM_training_iteration(benchmark::State& state, Method method) {
  Trainer trainer(graph(), SimulatorConfig{}, default_train(method));
  int it = 0;
  for (auto _ : state) {
    ad::Tape tape;
    LossBundle bundle;
    const ad::Tensor loss = trainer.iteration_loss(it++, &bundle);
    tape.backward(loss);
    benchmark::DoNotOptimize(bundle.total);
  }
}

void BM_rollout_single(benchmark::State& state) {
  RuleBasedEnv env(graph(), SimulatorConfig{});
  RecommenderConfig mc;
  mc.num_questions = graph()->num_questions();
  mc.init_seed = 1;
  Recommender model(mc);
  RecommenderPolicy policy(model);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    env.reset(derive_seed(7, 7, seed));
    Rng rng(derive_seed(8, 8, seed++));
    const Trajectory traj = rollout(env, policy, env.horizon(), rng);
    benchmark::DoNotOptimize(traj.rewards.back());
  }
}

void BM_rank_loss(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng(3);
  std::vector<RecommendationRepr> reprs;
  std::vector<LearningTarget> targets;
  for (int u = 0; u < batch; ++u) {
    std::vector<double> v(50);
    for (double& x : v) x = rng.uniform(0.0, 1.0);
    reprs.push_back({ReprVariant::additive, ad::Tensor::vec(v)});
    LearningTarget t;
    for (int j = 0; j < 10; ++j) t.questions.insert(QuestionId{rng.below(50)});
    targets.push_back(t);
  }
  RankLossConfig cfg;
  std::uint64_t it = 0;
  for (auto _ : state) {
    Rng peer_rng(derive_seed(1, 2, it++));
    benchmark::DoNotOptimize(rank_loss(reprs, targets, cfg, peer_rng).scalar_value());
  }
}

void BM_env_step(benchmark::State& state) {
  RuleBasedEnv env(graph(), SimulatorConfig{});
  Rng rng(5);
  std::uint64_t seed = 0;
  env.reset(seed);
  for (auto _ : state) {
    if (env.done()) env.reset(++seed);
    benchmark::DoNotOptimize(env.step(QuestionId{rng.below(env.num_questions())}).reward);
  }
}

}  // namespace

BENCHMARK_CAPTURE(BM_training_iteration, reinforce, Method::reinforce)
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_training_iteration, rar_a, Method::rar_a)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_training_iteration, rar_s, Method::rar_s)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_rollout_single)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_rank_loss)->Arg(32);
BENCHMARK(BM_env_step);
BENCHMARK_MAIN();
