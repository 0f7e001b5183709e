#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "hmt/hmt.hpp"
#include "support/test_models.hpp"

using namespace hmt;
using Catch::Matchers::WithinAbs;
using hmt::testing::cat_obs;
using hmt::testing::tree_from_parents;

TEST_CASE("single node enumeration is the direct marginalization") {
  HmtModel m;
  m.state_count = 2;
  m.pi = {0.5, 0.5};
  CategoricalEmission em;
  em.probs = {{1.0, 0.0}, {0.0, 1.0}};  // state 0 emits A surely, state 1 never
  m.emission = em;

  const Tree t = tree_from_parents({-1});
  const auto res = enumerate_assignments(m, t, cat_obs({0}));
  CHECK_THAT(res.likelihood, WithinAbs(0.5, 1e-15));
  CHECK(res.map_assignment == std::vector<int>{0});
  CHECK_THAT(res.map_score, WithinAbs(0.5, 1e-15));
  CHECK_THAT(res.gamma[0][0], WithinAbs(1.0, 1e-15));
}

TEST_CASE("three-node coupled example: the 8-term sum") {
  // All three observations are symbol A. With deterministic emissions only
  // assignments (0,0,0) and the tuple factor 0.9 survive: 0.5 * 0.9 = 0.45.
  const HmtModel m = hmt::testing::m1_categorical();
  const Tree t = tree_from_parents({-1, 0, 0});
  const auto res = enumerate_assignments(m, t, cat_obs({0, 0, 0}));
  CHECK_THAT(res.likelihood, WithinAbs(0.45, 1e-15));
  CHECK(res.map_assignment == std::vector<int>{0, 0, 0});
  CHECK_THAT(res.map_score, WithinAbs(0.45, 1e-15));
  for (int v = 0; v < 3; ++v) CHECK_THAT(res.gamma[static_cast<size_t>(v)][0], WithinAbs(1.0, 1e-15));
  // xi at the root concentrates on (rho=0, tuple=(0,0)).
  CHECK_THAT(res.xi[0][0 * 4 + tuple_pack({0, 0}, 2)], WithinAbs(1.0, 1e-15));

  // Mixed observations are impossible under perfect coupling.
  const auto zero = enumerate_assignments(m, t, cat_obs({0, 0, 1}));
  CHECK(zero.likelihood == 0.0);
  CHECK(zero.map_score == 0.0);
}

TEST_CASE("posterior tables normalize on random instances") {
  std::mt19937_64 g(2025);
  for (int rep = 0; rep < 20; ++rep) {
    const auto inst = hmt::testing::random_instance(g, rep % 2 == 0);
    const auto res = enumerate_assignments(inst.model, inst.tree, inst.obs);
    REQUIRE(res.likelihood > 0.0);
    for (int v = 0; v < inst.tree.node_count(); ++v) {
      double sum = 0.0;
      for (double x : res.gamma[static_cast<size_t>(v)]) sum += x;
      CHECK_THAT(sum, WithinAbs(1.0, 1e-12));
      if (!inst.tree.is_leaf(v)) {
        double xi_sum = 0.0;
        for (double x : res.xi[static_cast<size_t>(v)]) xi_sum += x;
        CHECK_THAT(xi_sum, WithinAbs(1.0, 1e-12));
      }
    }
    // The MAP assignment's joint really is its score.
    CHECK_THAT(std::exp(joint_log_probability(inst.model, inst.tree, inst.obs,
                                              res.map_assignment)),
               WithinAbs(res.map_score, 1e-12 + 1e-9 * res.map_score));
  }
}

TEST_CASE("enumeration budget") {
  const HmtModel m = hmt::testing::m1_categorical();
  const Tree t = full_tree(3, 2);
  CHECK_THROWS_MATCHES(
      enumerate_assignments(m, t, cat_obs({0, 0, 0, 0, 0, 0, 0}), 100), Error,
      Catch::Matchers::MessageMatches(Catch::Matchers::StartsWith("BudgetExceeded")));
  CHECK_NOTHROW(enumerate_assignments(m, t, cat_obs({0, 0, 0, 0, 0, 0, 0}), 128));
}
