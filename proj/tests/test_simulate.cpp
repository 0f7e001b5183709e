#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hmt/hmt.hpp"
#include "support/test_models.hpp"

using namespace hmt;
using Catch::Matchers::WithinAbs;

TEST_CASE("full_tree shapes") {
  const Tree t = full_tree(5, 2);
  CHECK(t.node_count() == 31);
  CHECK(t.leaf_count() == 16);
  CHECK(t.children[0] == std::vector<int>{1, 2});
  CHECK(t.depth[30] == 4);

  const Tree t3 = full_tree(3, 3);
  CHECK(t3.node_count() == 13);

  CHECK(full_tree(1, 2).node_count() == 1);
}

TEST_CASE("seed determinism") {
  const HmtModel m = hmt::testing::m1_gaussian();
  SimConfig cfg;
  cfg.tree_count = 5;
  cfg.depth = 4;
  cfg.branching = 2;
  cfg.seed = 42;
  const auto a = sample_forest(m, cfg);
  const auto b = sample_forest(m, cfg);
  REQUIRE(a.forest.trees.size() == b.forest.trees.size());
  for (size_t k = 0; k < a.forest.trees.size(); ++k) {
    CHECK(a.hidden[k] == b.hidden[k]);
    for (size_t v = 0; v < a.forest.trees[k].obs.size(); ++v)
      CHECK(a.forest.trees[k].obs[v].value == b.forest.trees[k].obs[v].value);
  }
  cfg.seed = 43;
  const auto c = sample_forest(m, cfg);
  CHECK(a.forest.trees[0].obs[0].value != c.forest.trees[0].obs[0].value);
}

TEST_CASE("perfect coupling yields identical sibling states in every draw") {
  const HmtModel m = hmt::testing::m1_categorical();
  SimConfig cfg;
  cfg.tree_count = 50;
  cfg.depth = 4;
  cfg.branching = 2;
  cfg.seed = 7;
  const auto sim = sample_forest(m, cfg);
  for (size_t k = 0; k < sim.forest.trees.size(); ++k) {
    const Tree& t = sim.forest.trees[k].tree;
    for (int v = 0; v < t.node_count(); ++v) {
      const auto& kids = t.children[static_cast<size_t>(v)];
      for (size_t i = 1; i < kids.size(); ++i)
        CHECK(sim.hidden[k][static_cast<size_t>(kids[i])] ==
              sim.hidden[k][static_cast<size_t>(kids[0])]);
    }
  }
}

TEST_CASE("deterministic cycle marches through the levels") {
  const HmtModel m = hmt::testing::cycle3_gaussian();
  SimConfig cfg;
  cfg.tree_count = 3;
  cfg.depth = 3;
  cfg.branching = 2;
  cfg.seed = 11;
  const auto sim = sample_forest(m, cfg);
  for (const auto& states : sim.hidden) {
    CHECK(states[0] == 0);
    for (size_t v = 1; v <= 2; ++v) CHECK(states[v] == 1);
    for (size_t v = 3; v <= 6; ++v) CHECK(states[v] == 2);
  }
}

TEST_CASE("empirical tuple frequencies match the tensor row") {
  // One interior node, many draws; every tuple frequency within 3 standard
  // errors of its entry.
  HmtModel m;
  m.state_count = 2;
  m.pi = {1.0, 0.0};
  TransitionTensor t(2, 2);
  t.at(0, tuple_pack({0, 0}, 2)) = 0.55;
  t.at(0, tuple_pack({0, 1}, 2)) = 0.25;
  t.at(0, tuple_pack({1, 0}, 2)) = 0.15;
  t.at(0, tuple_pack({1, 1}, 2)) = 0.05;
  t.at(1, tuple_pack({0, 0}, 2)) = 1.0;
  m.transitions[2] = t;
  GaussianEmission em;
  em.means = {0.0, 1.0};
  em.stds = {1.0, 1.0};
  m.emission = em;

  const Tree cherry = hmt::testing::tree_from_parents({-1, 0, 0});
  const int draws = 100000;
  std::vector<int> counts(4, 0);
  std::mt19937_64 g(2718);
  for (int i = 0; i < draws; ++i) {
    const auto states = sample_states(m, cherry, g);
    ++counts[static_cast<size_t>(tuple_pack({states[1], states[2]}, 2))];
  }
  for (int tup = 0; tup < 4; ++tup) {
    const double p = t.at(0, tup);
    const double freq = static_cast<double>(counts[static_cast<size_t>(tup)]) / draws;
    const double se = std::sqrt(p * (1 - p) / draws);
    CHECK_THAT(freq, WithinAbs(p, 3.0 * se));
  }
}

TEST_CASE("gaussian observations have the right moments") {
  HmtModel m = hmt::testing::m1_gaussian(1.5, 1.5, 2.0);
  std::mt19937_64 g(5);
  double sum = 0.0, sq = 0.0;
  const int draws = 50000;
  for (int i = 0; i < draws; ++i) {
    const double x = sample_observation(m, 0, g).value;
    sum += x;
    sq += x * x;
  }
  const double mean = sum / draws;
  CHECK_THAT(mean, WithinAbs(1.5, 0.05));
  CHECK_THAT(std::sqrt(sq / draws - mean * mean), WithinAbs(2.0, 0.05));
}

TEST_CASE("missing tensor for the requested branching factor") {
  const HmtModel m = hmt::testing::m1_categorical();  // only n=2
  SimConfig cfg;
  cfg.tree_count = 1;
  cfg.depth = 2;
  cfg.branching = 3;
  CHECK_THROWS_MATCHES(sample_forest(m, cfg), Error,
                       Catch::Matchers::MessageMatches(Catch::Matchers::StartsWith(
                           "MissingTensorForBranchingFactor")));
}
