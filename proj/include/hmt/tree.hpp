#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "hmt/error.hpp"

namespace hmt {

// Outward directed rooted tree over dense node ids 0..node_count-1.
// Children lists are ordered; the position of a child in its parent's list is
// the tensor axis used by the coupled-branch recursions, so sibling order is
// structural and preserved everywhere.
struct Tree {
  std::vector<int> parent;                 // -1 at the root
  std::vector<std::vector<int>> children;  // ordered child ids per node
  std::vector<int> depth;                  // edge count from the root
  int root = 0;

  int node_count() const { return static_cast<int>(parent.size()); }
  bool is_leaf(int v) const { return children[static_cast<size_t>(v)].empty(); }
  int leaf_count() const {
    int k = 0;
    for (int v = 0; v < node_count(); ++v) k += is_leaf(v) ? 1 : 0;
    return k;
  }
};

// Builds a tree from a parent array (one entry absent: the root). Children
// lists come out ordered by child id ascending.
inline Tree build_tree(const std::vector<std::optional<int>>& parent_of) {
  const int n = static_cast<int>(parent_of.size());
  if (n == 0) throw Error(errc::dangling_parent, "empty parent array");

  Tree t;
  t.parent.assign(static_cast<size_t>(n), -1);
  t.children.assign(static_cast<size_t>(n), {});
  t.root = -1;
  for (int v = 0; v < n; ++v) {
    if (!parent_of[static_cast<size_t>(v)].has_value()) {
      if (t.root >= 0)
        throw Error(errc::multiple_roots,
                    "nodes " + std::to_string(t.root) + " and " + std::to_string(v) +
                        " both lack a parent");
      t.root = v;
      continue;
    }
    const int p = *parent_of[static_cast<size_t>(v)];
    if (p < 0 || p >= n)
      throw Error(errc::dangling_parent,
                  "node " + std::to_string(v) + " has out-of-range parent " + std::to_string(p),
                  v);
    if (p == v)
      throw Error(errc::cycle_detected, "node " + std::to_string(v) + " is its own parent", v);
    t.parent[static_cast<size_t>(v)] = p;
    t.children[static_cast<size_t>(p)].push_back(v);
  }
  if (t.root < 0) throw Error(errc::multiple_roots, "no root: every node has a parent");

  // Reachability from the root doubles as the cycle check.
  t.depth.assign(static_cast<size_t>(n), -1);
  std::vector<int> stack{t.root};
  t.depth[static_cast<size_t>(t.root)] = 0;
  int seen = 0;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    ++seen;
    for (int c : t.children[static_cast<size_t>(v)]) {
      t.depth[static_cast<size_t>(c)] = t.depth[static_cast<size_t>(v)] + 1;
      stack.push_back(c);
    }
  }
  if (seen != n)
    throw Error(errc::cycle_detected,
                "only " + std::to_string(seen) + " of " + std::to_string(n) +
                    " nodes reachable from the root");
  return t;
}

// Leaves-to-root order: every node appears after all of its descendants.
// Canonical choice: deepest level first, ids ascending within a level.
inline std::vector<int> upward_order(const Tree& t) {
  std::vector<int> order(static_cast<size_t>(t.node_count()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return t.depth[static_cast<size_t>(a)] > t.depth[static_cast<size_t>(b)];
  });
  return order;
}

// Root-to-leaves order: every node appears before all of its descendants.
inline std::vector<int> downward_order(const Tree& t) {
  std::vector<int> order(static_cast<size_t>(t.node_count()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return t.depth[static_cast<size_t>(a)] < t.depth[static_cast<size_t>(b)];
  });
  return order;
}

// Edge counts (m, n) from u and v to their most recent common ancestor,
// canonicalized so m <= n.
inline std::pair<int, int> lineage_distance(const Tree& t, int u, int v) {
  int du = t.depth[static_cast<size_t>(u)];
  int dv = t.depth[static_cast<size_t>(v)];
  int a = u, b = v;
  int m = 0, n = 0;
  while (du > dv) {
    a = t.parent[static_cast<size_t>(a)];
    --du;
    ++m;
  }
  while (dv > du) {
    b = t.parent[static_cast<size_t>(b)];
    --dv;
    ++n;
  }
  while (a != b) {
    a = t.parent[static_cast<size_t>(a)];
    b = t.parent[static_cast<size_t>(b)];
    ++m;
    ++n;
  }
  if (m > n) std::swap(m, n);
  return {m, n};
}

// One observation per node: a categorical symbol id or a real scalar. All
// observations in a forest share one kind.
enum class ObsKind { categorical, scalar };

struct Observation {
  ObsKind kind = ObsKind::scalar;
  int symbol = 0;
  double value = 0.0;

  static Observation categorical(int s) {
    Observation o;
    o.kind = ObsKind::categorical;
    o.symbol = s;
    return o;
  }
  static Observation scalar(double v) {
    Observation o;
    o.kind = ObsKind::scalar;
    o.value = v;
    return o;
  }
};

struct TreeData {
  Tree tree;
  std::vector<Observation> obs;
};

struct Forest {
  ObsKind kind = ObsKind::scalar;
  std::vector<TreeData> trees;

  std::size_t tree_count() const { return trees.size(); }
  std::size_t node_count() const {
    std::size_t n = 0;
    for (const auto& td : trees) n += static_cast<std::size_t>(td.tree.node_count());
    return n;
  }
};

inline Forest make_forest(std::vector<TreeData> trees) {
  if (trees.empty()) throw Error(errc::invalid_forest, "forest has no trees");
  Forest f;
  f.kind = trees.front().obs.empty() ? ObsKind::scalar : trees.front().obs.front().kind;
  for (size_t i = 0; i < trees.size(); ++i) {
    const auto& td = trees[i];
    if (td.obs.size() != static_cast<size_t>(td.tree.node_count()))
      throw Error(errc::invalid_forest,
                  "tree " + std::to_string(i) + ": " + std::to_string(td.obs.size()) +
                      " observations for " + std::to_string(td.tree.node_count()) + " nodes");
    for (const auto& o : td.obs)
      if (o.kind != f.kind)
        throw Error(errc::kind_mismatch,
                    "tree " + std::to_string(i) + " mixes observation kinds");
  }
  f.trees = std::move(trees);
  return f;
}

}  // namespace hmt
