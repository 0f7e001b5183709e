#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "hmt/hmt.hpp"
#include "support/test_models.hpp"

using namespace hmt;
using hmt::testing::tree_from_parents;

TEST_CASE("build_tree handles the smallest trees") {
  const Tree single = tree_from_parents({-1});
  CHECK(single.node_count() == 1);
  CHECK(single.root == 0);
  CHECK(single.children[0].empty());

  const Tree cherry = tree_from_parents({-1, 0, 0});
  CHECK(cherry.root == 0);
  CHECK(cherry.children[0] == std::vector<int>{1, 2});
  CHECK(cherry.parent[1] == 0);

  const Tree chain = tree_from_parents({-1, 0, 1});
  CHECK(chain.children[0] == std::vector<int>{1});
  CHECK(chain.children[1] == std::vector<int>{2});
  CHECK(chain.depth[2] == 2);
}

TEST_CASE("build_tree rejects malformed parent arrays") {
  CHECK_THROWS_MATCHES(tree_from_parents({-1, -1, 0}), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::StartsWith("MultipleRoots")));
  CHECK_THROWS_MATCHES(tree_from_parents({-1, 7}), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::StartsWith("DanglingParent")));
  // 1 <-> 2 form a 2-cycle detached from the root.
  CHECK_THROWS_MATCHES(tree_from_parents({-1, 2, 1}), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::StartsWith("CycleDetected")));
  CHECK_THROWS_AS(tree_from_parents({0, 1}), Error);  // no root at all
}

TEST_CASE("upward and downward orders") {
  const Tree single = tree_from_parents({-1});
  CHECK(upward_order(single) == std::vector<int>{0});
  CHECK(downward_order(single) == std::vector<int>{0});

  const Tree cherry = tree_from_parents({-1, 0, 0});
  CHECK(upward_order(cherry) == std::vector<int>{1, 2, 0});
  CHECK(downward_order(cherry) == std::vector<int>{0, 1, 2});

  const Tree full = full_tree(3, 2);  // 7 nodes
  const auto up = upward_order(full);
  CHECK(up == std::vector<int>{3, 4, 5, 6, 1, 2, 0});
}

TEST_CASE("orders satisfy the ancestor partial order on random trees") {
  std::mt19937_64 g(20240811);
  for (int rep = 0; rep < 50; ++rep) {
    const Tree t = hmt::testing::random_tree(g, 16);
    const auto up = upward_order(t);
    const auto down = downward_order(t);

    // Both are permutations of the node ids.
    CHECK(std::set<int>(up.begin(), up.end()).size() == static_cast<size_t>(t.node_count()));
    CHECK(std::set<int>(down.begin(), down.end()).size() == static_cast<size_t>(t.node_count()));

    std::vector<int> pos_up(up.size()), pos_down(down.size());
    for (size_t i = 0; i < up.size(); ++i) pos_up[static_cast<size_t>(up[i])] = static_cast<int>(i);
    for (size_t i = 0; i < down.size(); ++i)
      pos_down[static_cast<size_t>(down[i])] = static_cast<int>(i);

    // Brute-force ancestor test: walk each node's parent chain.
    for (int v = 0; v < t.node_count(); ++v)
      for (int a = t.parent[static_cast<size_t>(v)]; a >= 0; a = t.parent[static_cast<size_t>(a)]) {
        CHECK(pos_up[static_cast<size_t>(v)] < pos_up[static_cast<size_t>(a)]);
        CHECK(pos_down[static_cast<size_t>(a)] < pos_down[static_cast<size_t>(v)]);
      }

    // reverse(upward) is a valid downward order.
    std::vector<int> rev(up.rbegin(), up.rend());
    std::vector<int> pos_rev(rev.size());
    for (size_t i = 0; i < rev.size(); ++i) pos_rev[static_cast<size_t>(rev[i])] = static_cast<int>(i);
    for (int v = 0; v < t.node_count(); ++v)
      if (t.parent[static_cast<size_t>(v)] >= 0)
        CHECK(pos_rev[static_cast<size_t>(t.parent[static_cast<size_t>(v)])] <
              pos_rev[static_cast<size_t>(v)]);

    // Leaf/interior partition.
    int leaves = 0, interior = 0;
    for (int v = 0; v < t.node_count(); ++v) (t.is_leaf(v) ? leaves : interior)++;
    CHECK(leaves + interior == t.node_count());
    CHECK(leaves == t.leaf_count());
  }
}

TEST_CASE("lineage_distance basics") {
  const Tree full = full_tree(3, 2);
  CHECK(lineage_distance(full, 3, 3) == std::pair<int, int>{0, 0});
  CHECK(lineage_distance(full, 1, 2) == std::pair<int, int>{1, 1});   // siblings
  CHECK(lineage_distance(full, 0, 1) == std::pair<int, int>{0, 1});   // parent-child
  CHECK(lineage_distance(full, 3, 5) == std::pair<int, int>{2, 2});   // cousins
  CHECK(lineage_distance(full, 3, 2) == std::pair<int, int>{1, 2});   // nephew
  CHECK(lineage_distance(full, 0, 6) == std::pair<int, int>{0, 2});
}

TEST_CASE("lineage_distance agrees with brute-force path enumeration") {
  std::mt19937_64 g(7);
  for (int rep = 0; rep < 20; ++rep) {
    const Tree t = hmt::testing::random_tree(g, 14);
    for (int u = 0; u < t.node_count(); ++u)
      for (int v = 0; v < t.node_count(); ++v) {
        // Collect u's ancestor chain, then walk v upward to the first hit.
        std::vector<int> chain;
        for (int a = u; a >= 0; a = t.parent[static_cast<size_t>(a)]) chain.push_back(a);
        int n_steps = 0, mrca = -1;
        for (int b = v; b >= 0; b = t.parent[static_cast<size_t>(b)]) {
          const auto it = std::find(chain.begin(), chain.end(), b);
          if (it != chain.end()) {
            mrca = b;
            break;
          }
          ++n_steps;
        }
        int m_steps = 0;
        for (int a = u; a != mrca; a = t.parent[static_cast<size_t>(a)]) ++m_steps;
        const auto expected = std::minmax(m_steps, n_steps);
        CHECK(lineage_distance(t, u, v) == std::pair<int, int>(expected.first, expected.second));
        CHECK(lineage_distance(t, u, v) == lineage_distance(t, v, u));
      }
  }
}

TEST_CASE("forest construction validates shapes and kinds") {
  TreeData td;
  td.tree = tree_from_parents({-1, 0, 0});
  td.obs = hmt::testing::scalar_obs({1.0, 2.0, 3.0});
  CHECK_NOTHROW(make_forest({td}));

  TreeData bad = td;
  bad.obs.pop_back();
  CHECK_THROWS_AS(make_forest({bad}), Error);

  TreeData mixed = td;
  mixed.obs[1] = Observation::categorical(1);
  CHECK_THROWS_AS(make_forest({mixed}), Error);

  CHECK_THROWS_AS(make_forest({}), Error);
}
