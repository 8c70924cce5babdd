#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>

#include "qrec/domain.hpp"
#include "qrec/rng.hpp"

using namespace qrec;

TEST_CASE("learning_effect on the worked cases") {
  CHECK(learning_effect({0.3, 0.3, 1.0}) == doctest::Approx(0.0));
  CHECK(learning_effect({0.0, 1.0, 1.0}) == doctest::Approx(1.0));
  CHECK(learning_effect({0.2, 0.6, 1.0}) == doctest::Approx(0.5));
}

TEST_CASE("learning_effect can be negative and is capped at one") {
  CHECK(learning_effect({0.5, 0.2, 1.0}) < 0.0);
  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    const double b = rng.uniform(-5.0, 5.0);
    const double sup = b + rng.uniform(0.1, 5.0);
    const double e = rng.uniform(-5.0, 1.0) * (sup - b) + b;
    const double v = learning_effect({b, std::min(e, sup), sup});
    CHECK(v <= 1.0 + 1e-12);
  }
  CHECK(learning_effect({0.25, 1.5, 1.5}) == doctest::Approx(1.0));
}

TEST_CASE("learning_effect rejects a degenerate denominator") {
  CHECK_THROWS_AS(learning_effect({1.0, 1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(learning_effect({2.0, 0.5, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(learning_effect({0.0, 0.5, std::nan("")}), std::invalid_argument);
}

TEST_CASE("learning_effect is invariant under affine rescaling") {
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    const double b = rng.uniform(-2.0, 2.0);
    const double sup = b + rng.uniform(0.05, 3.0);
    const double e = rng.uniform(b - 1.0, sup);
    const double scale = rng.uniform(0.1, 10.0);
    const double shift = rng.uniform(-5.0, 5.0);
    const double base = learning_effect({b, e, sup});
    const double scaled =
        learning_effect({scale * b + shift, scale * e + shift, scale * sup + shift});
    CHECK(scaled == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("target_from_concepts unions question sets") {
  const ConceptQuestionMap map = {
      {1, {QuestionId{1}, QuestionId{2}}},
      {2, {QuestionId{2}, QuestionId{3}}},
  };
  const auto single = target_from_concepts({1}, map);
  CHECK(single.questions == std::set<QuestionId>{QuestionId{1}, QuestionId{2}});

  const auto both = target_from_concepts({1, 2}, map);
  CHECK(both.questions == std::set<QuestionId>{QuestionId{1}, QuestionId{2}, QuestionId{3}});
}

TEST_CASE("target_from_concepts rejects empty and unknown inputs") {
  const ConceptQuestionMap map = {{1, {QuestionId{0}}}};
  CHECK_THROWS_AS(target_from_concepts({}, map), std::invalid_argument);
  try {
    target_from_concepts({1, 9}, map);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("9") != std::string::npos);
  }
}

TEST_CASE("target_from_concepts does not depend on insertion order") {
  ConceptQuestionMap map;
  for (int c = 0; c < 6; ++c) {
    for (int q = 0; q < 3; ++q) map[c].insert(QuestionId{c * 3 + q});
  }
  std::set<ConceptId> forward = {0, 2, 4};
  std::set<ConceptId> backward;
  backward.insert(4);
  backward.insert(0);
  backward.insert(2);
  CHECK(target_from_concepts(forward, map) == target_from_concepts(backward, map));
}

TEST_CASE("append_interaction appends without touching the original") {
  HistoricalRecord empty;
  const auto one = append_interaction(empty, QuestionId{3}, 1);
  REQUIRE(one.size() == 1);
  CHECK(one.steps[0].question == QuestionId{3});
  CHECK(one.steps[0].correctness == 1);
  CHECK(empty.empty());

  const auto two = append_interaction(one, QuestionId{0}, 0);
  REQUIRE(two.size() == 2);
  CHECK(two.steps[0].question == QuestionId{3});
  CHECK(two.steps[1].question == QuestionId{0});
  CHECK(two.steps[1].correctness == 0);
  CHECK(one.size() == 1);
}

TEST_CASE("append_interaction length grows by one per call") {
  HistoricalRecord record;
  Rng rng(11);
  for (int n = 1; n <= 64; ++n) {
    record = append_interaction(record, QuestionId{rng.below(10)}, rng.below(2));
    CHECK(record.size() == static_cast<std::size_t>(n));
  }
}

TEST_CASE("append_interaction validates correctness") {
  CHECK_THROWS_AS(append_interaction(HistoricalRecord{}, QuestionId{0}, 2),
                  std::invalid_argument);
}
