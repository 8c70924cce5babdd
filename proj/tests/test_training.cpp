#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "qrec/checkpoint.hpp"
#include "qrec/trainer.hpp"
#include "test_util.hpp"

using namespace qrec;
using ad::Tensor;

namespace {

std::shared_ptr<const KnowledgeGraph> toy_graph_ptr() {
  return std::make_shared<const KnowledgeGraph>(test::toy_graph());
}

TrainConfig small_train_config(Method method, double beta) {
  TrainConfig cfg;
  cfg.method = method;
  cfg.beta = beta;
  cfg.variant = method == Method::rar_s ? ReprVariant::sequential : ReprVariant::additive;
  // Margins wide enough that freshly initialized policies still violate
  // them, so the rank loss is active in these tests.
  cfg.rank.psi = 2.0;
  cfg.rank.omega = 50.0;
  cfg.alpha = 0.1;
  cfg.batch = 4;
  cfg.iterations = 3;
  cfg.eval_every = 0;
  cfg.eval_students = 8;
  cfg.eval_ts = {2, 6};
  cfg.seed = 5;
  cfg.model.embed_dim = 6;
  cfg.model.repr_dim = 8;
  cfg.model.interaction_dim = 8;
  cfg.model.history_dim = 8;
  cfg.model.state_dim = 8;
  cfg.seq_repr_dim = 8;
  return cfg;
}

SimulatorConfig small_env_config() {
  SimulatorConfig cfg;
  cfg.horizon = 6;
  cfg.k_targets = 2;
  return cfg;
}

}  // namespace

TEST_CASE("discounted returns follow the backward recursion") {
  const std::vector<double> rewards = {1.0, 0.0, 1.0};
  CHECK(discounted_returns(rewards, 0.0) == rewards);
  const auto half = discounted_returns(rewards, 0.5);
  CHECK(half[0] == doctest::Approx(1.25));
  CHECK(half[1] == doctest::Approx(0.5));
  CHECK(half[2] == doctest::Approx(1.0));
  const std::vector<double> zeros(5, 0.0);
  CHECK(discounted_returns(zeros, 0.9) == zeros);
  CHECK_THROWS_AS(discounted_returns(std::vector<double>{}, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(discounted_returns(rewards, 1.5), std::invalid_argument);
}

TEST_CASE("discounted returns equal the quadratic direct summation") {
  Rng rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + rng.below(40);
    const double gamma = rng.uniform(0.0, 1.0);
    std::vector<double> rewards(static_cast<std::size_t>(n));
    for (double& r : rewards) r = rng.uniform(-1.0, 1.0);
    const auto fast = discounted_returns(rewards, gamma);
    for (int t = 0; t < n; ++t) {
      double direct = 0.0;
      for (int k = t; k < n; ++k) direct += std::pow(gamma, k - t) * rewards[k];
      CHECK(std::abs(fast[static_cast<std::size_t>(t)] - direct) <= 1e-12);
    }
  }
}

TEST_CASE("policy loss on a single step is the negative log probability") {
  Trajectory traj;
  traj.actions = {0};
  traj.rewards = {1.0};
  traj.correctness = {1};
  Tensor probs = Tensor::vec({0.5, 0.5});
  traj.probs = {probs};
  traj.log_probs = {ad::log_t(ad::pick(probs, 0))};
  const Tensor loss = policy_loss(traj, 0.99);
  CHECK(loss.scalar_value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("zero returns give zero policy loss and zero gradient") {
  ad::ParameterSet params;
  auto& logits = params.add("logits", {3});
  logits.values() = {0.3, -0.2, 0.9};
  ad::Tape tape;
  Trajectory traj;
  traj.actions = {1, 2};
  traj.rewards = {0.0, 0.0};
  traj.correctness = {0, 1};
  for (int t = 0; t < 2; ++t) {
    Tensor p = ad::softmax(logits.tensor());
    traj.probs.push_back(p);
    traj.log_probs.push_back(
        ad::log_t(ad::pick(p, static_cast<std::size_t>(traj.actions[t]))));
  }
  const Tensor loss = policy_loss(traj, 0.99);
  CHECK(loss.scalar_value() == 0.0);
  tape.backward(loss);
  for (double g : logits.grad()) CHECK(g == 0.0);
}

TEST_CASE("policy gradient raises the probability of rewarded actions") {
  ad::ParameterSet params;
  auto& logits = params.add("logits", {3});
  logits.values() = {0.1, 0.2, 0.3};
  ad::Tape tape;
  Trajectory traj;
  traj.actions = {1};
  traj.rewards = {1.0};
  traj.correctness = {1};
  Tensor p = ad::softmax(logits.tensor());
  traj.probs = {p};
  traj.log_probs = {ad::log_t(ad::pick(p, 1))};
  tape.backward(policy_loss(traj, 0.99));
  // Gradient descent moves logits against the gradient: the taken action's
  // logit must rise, so its loss gradient is negative.
  CHECK(logits.grad()[1] < 0.0);
  CHECK(logits.grad()[0] > 0.0);
  CHECK(logits.grad()[2] > 0.0);
}

TEST_CASE("kt loss reproduces the binary cross entropy examples") {
  Trajectory traj;
  traj.actions = {0, 1, 2};
  traj.rewards = {0, 0, 0};
  traj.correctness = {1, 0, 1};
  std::vector<Tensor> preds = {Tensor::scalar(0.5), Tensor::scalar(0.5), Tensor::scalar(0.5)};
  CHECK(kt_loss(traj, preds).scalar_value() ==
        doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-12));

  Trajectory one;
  one.actions = {0};
  one.rewards = {0};
  one.correctness = {1};
  std::vector<Tensor> p9 = {Tensor::scalar(0.9)};
  CHECK(kt_loss(one, p9).scalar_value() == doctest::Approx(-std::log(0.9)).epsilon(1e-12));

  // Permuting the steps leaves the sum unchanged.
  Trajectory perm;
  perm.actions = {2, 0, 1};
  perm.rewards = {0, 0, 0};
  perm.correctness = {1, 1, 0};
  std::vector<Tensor> preds_a = {Tensor::scalar(0.7), Tensor::scalar(0.2), Tensor::scalar(0.6)};
  Trajectory perm2;
  perm2.actions = {1, 2, 0};
  perm2.rewards = {0, 0, 0};
  perm2.correctness = {0, 1, 1};
  std::vector<Tensor> preds_b = {Tensor::scalar(0.6), Tensor::scalar(0.7), Tensor::scalar(0.2)};
  CHECK(kt_loss(perm, preds_a).scalar_value() ==
        doctest::Approx(kt_loss(perm2, preds_b).scalar_value()).epsilon(1e-12));
}

TEST_CASE("kt loss rejects predictions outside the open unit interval") {
  Trajectory traj;
  traj.actions = {0};
  traj.rewards = {0};
  traj.correctness = {1};
  std::vector<Tensor> bad = {Tensor::scalar(1.0)};
  CHECK_THROWS_AS(kt_loss(traj, bad), std::invalid_argument);
  std::vector<Tensor> bad0 = {Tensor::scalar(0.0)};
  CHECK_THROWS_AS(kt_loss(traj, bad0), std::invalid_argument);
}

TEST_CASE("total loss is the weighted sum of its parts") {
  const Tensor lp = Tensor::scalar(1.0);
  const Tensor lk = Tensor::scalar(2.0);
  const Tensor lr = Tensor::scalar(3.0);
  CHECK(total_loss(lp, lk, lr, 0.5, 0.1).scalar_value() == doctest::Approx(2.3).epsilon(1e-15));
  CHECK(total_loss(lp, lk, lr, 0.0, 0.0).scalar_value() == doctest::Approx(1.0));
  CHECK(total_loss(lp, lk, lr, 0.5, 0.0).scalar_value() == doctest::Approx(2.0));
}

TEST_CASE("rollout fills a full-horizon trajectory deterministically") {
  auto graph = std::make_shared<const KnowledgeGraph>(KnowledgeGraph::layered_default());
  RuleBasedEnv env(graph, SimulatorConfig{});
  RandomPolicy policy;

  env.reset(4);
  Rng rng(9);
  const Trajectory traj = rollout(env, policy, 30, rng);
  CHECK(traj.length() == 30);
  CHECK(traj.probs.size() == 30);
  CHECK(traj.log_probs.size() == 30);

  env.reset(4);
  Rng rng2(9);
  const Trajectory again = rollout(env, policy, 30, rng2);
  CHECK(traj.actions == again.actions);
  CHECK(traj.rewards == again.rewards);

  double reward_sum = 0.0;
  for (double r : traj.rewards) reward_sum += r;
  env.reset(4);
  Rng rng3(9);
  rollout(env, policy, 30, rng3);
  CHECK(std::abs(reward_sum - learning_effect(env.snapshot())) <= 1e-9);

  CHECK_THROWS_AS(rollout(env, policy, 30, rng), std::invalid_argument);  // not freshly reset
}

TEST_CASE("recommender policy records tensors usable by the losses") {
  auto graph = toy_graph_ptr();
  SimulatorConfig env_cfg = small_env_config();
  RuleBasedEnv env(graph, env_cfg);
  RecommenderConfig mc;
  mc.num_questions = graph->num_questions();
  mc.embed_dim = 6;
  mc.repr_dim = 8;
  mc.interaction_dim = 8;
  mc.history_dim = 8;
  mc.state_dim = 8;
  mc.init_seed = 3;
  Recommender model(mc);
  RecommenderPolicy policy(model);

  env.reset(11);
  Rng rng(2);
  ad::Tape tape;
  const Trajectory traj = rollout(env, policy, env_cfg.horizon, rng);
  REQUIRE(traj.length() == static_cast<std::size_t>(env_cfg.horizon));
  REQUIRE(traj.predictions.size() == traj.length());
  REQUIRE(traj.states.size() == traj.length());

  const Tensor lp = policy_loss(traj, 0.99);
  const Tensor lk = kt_loss(traj, traj.predictions);
  const Tensor lr = Tensor::scalar(0.0);
  const Tensor total = total_loss(lp, lk, lr, 0.5, 0.0);
  CHECK(std::isfinite(total.scalar_value()));
  tape.backward(total);
  double grad_norm = 0.0;
  for (const auto& p : model.params().all()) {
    for (double g : p->grad()) grad_norm += std::abs(g);
  }
  CHECK(grad_norm > 0.0);
}

TEST_CASE("trainer logs bundles whose total is exactly the weighted sum") {
  Trainer trainer(toy_graph_ptr(), small_env_config(), small_train_config(Method::rar_a, 0.5));
  std::vector<IterationStats> stats;
  trainer.run([&](const IterationStats& s) { stats.push_back(s); });
  REQUIRE(stats.size() == 3);
  for (const auto& s : stats) {
    CHECK(std::isfinite(s.losses.total));
    CHECK(s.losses.total ==
          s.losses.policy + s.losses.alpha * s.losses.kt + s.losses.beta * s.losses.rank);
  }
  // The rank loss actually appears when the module is attached.
  bool any_rank = false;
  for (const auto& s : stats) any_rank = any_rank || s.losses.rank != 0.0;
  CHECK(any_rank);
}

TEST_CASE("beta zero disables ranking alignment and reproduces reinforce bitwise") {
  auto run = [&](Method method) {
    Trainer trainer(toy_graph_ptr(), small_env_config(), small_train_config(method, 0.0));
    std::vector<double> history;
    trainer.run([&](const IterationStats& s) {
      history.push_back(s.losses.total);
      if (s.evaluated) {
        for (double v : s.eval_values) history.push_back(v);
      }
    });
    return history;
  };
  const auto rar_s = run(Method::rar_s);
  const auto rar_a = run(Method::rar_a);
  const auto reinforce = run(Method::reinforce);
  CHECK(rar_s == reinforce);
  CHECK(rar_a == reinforce);
}

TEST_CASE("forced replay reproduces a sampled iteration bitwise") {
  const auto cfg = small_train_config(Method::rar_a, 0.5);
  std::vector<std::vector<int>> captured;
  LossBundle sampled;
  {
    Trainer trainer(toy_graph_ptr(), small_env_config(), cfg);
    ad::Tape tape;
    trainer.iteration_loss(0, &sampled, nullptr, &captured);
  }
  LossBundle replayed;
  {
    Trainer trainer(toy_graph_ptr(), small_env_config(), cfg);
    ad::Tape tape;
    trainer.iteration_loss(0, &replayed, &captured);
  }
  CHECK(sampled.total == replayed.total);
  CHECK(sampled.policy == replayed.policy);
  CHECK(sampled.kt == replayed.kt);
  CHECK(sampled.rank == replayed.rank);
}

TEST_CASE("value-based learner trains and value_based_ram adds the rank loss") {
  TrainConfig cfg = small_train_config(Method::value_based, 0.0);
  Trainer trainer(toy_graph_ptr(), small_env_config(), cfg);
  std::vector<IterationStats> stats;
  trainer.run([&](const IterationStats& s) { stats.push_back(s); });
  REQUIRE(stats.size() == 3);
  for (const auto& s : stats) {
    CHECK(std::isfinite(s.losses.total));
    CHECK(s.losses.kt == 0.0);
    CHECK(s.losses.rank == 0.0);
  }

  TrainConfig ram =
      attach_ranking_alignment(cfg, 0.5, ReprVariant::additive, RankLossConfig{2.0, 50.0, 4});
  CHECK(ram.method == Method::value_based_ram);
  Trainer trainer2(toy_graph_ptr(), small_env_config(), ram);
  std::vector<IterationStats> stats2;
  trainer2.run([&](const IterationStats& s) { stats2.push_back(s); });
  bool any_rank = false;
  for (const auto& s : stats2) any_rank = any_rank || s.losses.rank != 0.0;
  CHECK(any_rank);
}

TEST_CASE("attach_ranking_alignment with beta zero leaves the learner unchanged") {
  TrainConfig base = small_train_config(Method::value_based, 0.0);
  TrainConfig same = attach_ranking_alignment(base, 0.0, ReprVariant::additive, RankLossConfig{});
  auto run = [&](const TrainConfig& cfg) {
    Trainer trainer(toy_graph_ptr(), small_env_config(), cfg);
    std::vector<double> history;
    trainer.run([&](const IterationStats& s) { history.push_back(s.losses.total); });
    return history;
  };
  CHECK(run(base) == run(same));
  CHECK_THROWS_AS(
      attach_ranking_alignment(small_train_config(Method::random, 0.0), 0.5,
                               ReprVariant::additive, RankLossConfig{}),
      std::invalid_argument);
}

TEST_CASE("evaluation is deterministic and zero at t = 0") {
  auto graph = toy_graph_ptr();
  RuleBasedEnv env(graph, small_env_config());
  RandomPolicy policy;
  const std::vector<int> ts = {0, 3};
  const EvalResult a = evaluate_policy(policy, env, 16, ts);
  const EvalResult b = evaluate_policy(policy, env, 16, ts);
  CHECK(a.mean == b.mean);
  CHECK(a.stddev == b.stddev);
  CHECK(a.mean[0] == 0.0);
  CHECK(a.stddev[0] == 0.0);
}

TEST_CASE("checkpoint round-trip reproduces evaluation exactly") {
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "qrec_train_ckpt.ckpt").string();
  TrainConfig cfg = small_train_config(Method::rar_a, 0.5);
  Trainer trainer(toy_graph_ptr(), small_env_config(), cfg);
  trainer.run();
  const EvalResult before = trainer.evaluate();
  save_checkpoint(path, trainer.model().params());

  RecommenderConfig mc = cfg.model;
  mc.num_questions = 5;
  mc.init_seed = 999;  // different init; the checkpoint must overwrite it
  Recommender restored(mc);
  load_checkpoint(path, restored.params());
  RuleBasedEnv env(toy_graph_ptr(), small_env_config());
  RecommenderPolicy policy(restored);
  const EvalResult after = evaluate_policy(policy, env, cfg.eval_students, cfg.eval_ts);
  CHECK(before.mean == after.mean);
  CHECK(before.stddev == after.stddev);
  fs::remove(path);
}

TEST_CASE("trainer validates method and variant consistency") {
  TrainConfig cfg = small_train_config(Method::reinforce, 0.5);
  CHECK_THROWS_AS(Trainer(toy_graph_ptr(), small_env_config(), cfg), std::invalid_argument);
  cfg = small_train_config(Method::rar_s, 0.5);
  cfg.variant = ReprVariant::additive;
  CHECK_THROWS_AS(Trainer(toy_graph_ptr(), small_env_config(), cfg), std::invalid_argument);
  cfg = small_train_config(Method::rar_a, 0.5);
  cfg.eval_ts = {40};  // beyond the horizon
  CHECK_THROWS_AS(Trainer(toy_graph_ptr(), small_env_config(), cfg), std::invalid_argument);
}
