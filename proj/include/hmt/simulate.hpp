#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "hmt/error.hpp"
#include "hmt/model.hpp"
#include "hmt/tree.hpp"

namespace hmt {

// All sampling goes through explicit mappings of raw mt19937_64 output, so a
// seed pins the result bit-for-bit across standard libraries.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double normal(std::mt19937_64& g, double mean, double std) {
  // Box-Muller; the second variate is discarded.
  double u1 = uniform01(g);
  while (u1 == 0.0) u1 = uniform01(g);
  const double u2 = uniform01(g);
  return mean + std * std::sqrt(-2.0 * std::log(u1)) *
                    std::cos(2.0 * std::numbers::pi * u2);
}

// Inverse-CDF draw from an unnormalized weight vector.
inline int categorical(std::mt19937_64& g, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = uniform01(g) * total;
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

}  // namespace rng

struct SimConfig {
  int tree_count = 1;
  int depth = 1;  // number of node levels; depth d full n-ary tree has (n^d-1)/(n-1) nodes
  int branching = 2;
  std::uint64_t seed = 0;
  bool emit_hidden = false;
};

// Full n-ary tree with depth levels, nodes numbered level by level from the
// root; children of node v are v*n+1 .. v*n+n.
inline Tree full_tree(int depth, int branching) {
  if (depth < 1) throw Error(errc::invalid_forest, "depth must be at least 1");
  std::int64_t nodes = 1, level = 1;
  for (int d = 1; d < depth; ++d) {
    level *= branching;
    nodes += level;
    if (nodes > (std::int64_t{1} << 26))
      throw Error(errc::invalid_forest, "tree too large at depth " + std::to_string(depth));
  }
  std::vector<std::optional<int>> parent_of(static_cast<size_t>(nodes));
  parent_of[0] = std::nullopt;
  for (std::int64_t v = 1; v < nodes; ++v)
    parent_of[static_cast<size_t>(v)] = static_cast<int>((v - 1) / branching);
  return build_tree(parent_of);
}

inline Observation sample_observation(const HmtModel& m, int state, std::mt19937_64& g) {
  if (const auto* cat = std::get_if<CategoricalEmission>(&m.emission))
    return Observation::categorical(rng::categorical(g, cat->probs[static_cast<size_t>(state)]));
  const auto& gauss = std::get<GaussianEmission>(m.emission);
  return Observation::scalar(rng::normal(g, gauss.means[static_cast<size_t>(state)],
                                         gauss.stds[static_cast<size_t>(state)]));
}

// Hidden states down a fixed tree shape. Each interior node draws its whole
// child tuple in one categorical draw from the tensor row, which is what
// preserves the sibling coupling; per-child draws would destroy it.
inline std::vector<int> sample_states(const HmtModel& m, const Tree& t, std::mt19937_64& g) {
  std::vector<int> states(static_cast<size_t>(t.node_count()), 0);
  states[static_cast<size_t>(t.root)] = rng::categorical(g, m.pi);
  std::vector<int> digits;
  for (int v : downward_order(t)) {
    const auto& kids = t.children[static_cast<size_t>(v)];
    if (kids.empty()) continue;
    const int n = static_cast<int>(kids.size());
    const auto& tensor = m.tensor_for(n);
    const int tuples = tensor.tuple_count();
    const int parent_state = states[static_cast<size_t>(v)];
    std::vector<double> row(static_cast<size_t>(tuples));
    for (int tup = 0; tup < tuples; ++tup) row[static_cast<size_t>(tup)] = tensor.at(parent_state, tup);
    tuple_unpack(rng::categorical(g, row), n, m.state_count, digits);
    for (size_t i = 0; i < kids.size(); ++i)
      states[static_cast<size_t>(kids[i])] = digits[i];
  }
  return states;
}

struct SimulatedForest {
  Forest forest;
  std::vector<std::vector<int>> hidden;  // per tree, per node
};

// Samples trees independently, each from a seed derived per tree index, so a
// forest is reproducible and trees may be drawn concurrently.
inline SimulatedForest sample_forest(const HmtModel& m, const SimConfig& cfg) {
  require_valid(m);
  const Tree shape = full_tree(cfg.depth, cfg.branching);
  if (shape.node_count() > 1) m.tensor_for(cfg.branching);

  SimulatedForest out;
  out.forest.kind = emission_kind(m.emission);
  for (int k = 0; k < cfg.tree_count; ++k) {
    std::mt19937_64 g(rng::splitmix64(cfg.seed + 0x51ED270B * static_cast<std::uint64_t>(k)));
    TreeData td;
    td.tree = shape;
    const std::vector<int> states = sample_states(m, shape, g);
    td.obs.reserve(static_cast<size_t>(shape.node_count()));
    for (int v = 0; v < shape.node_count(); ++v)
      td.obs.push_back(sample_observation(m, states[static_cast<size_t>(v)], g));
    out.forest.trees.push_back(std::move(td));
    out.hidden.push_back(states);
  }
  return out;
}

// Re-simulates states and observations on the exact tree shapes of an
// existing forest; used by the self-consistency check.
inline SimulatedForest sample_on_shapes(const HmtModel& m, const Forest& data, std::uint64_t seed) {
  require_valid(m);
  SimulatedForest out;
  out.forest.kind = emission_kind(m.emission);
  for (size_t k = 0; k < data.trees.size(); ++k) {
    std::mt19937_64 g(rng::splitmix64(seed + 0x51ED270B * static_cast<std::uint64_t>(k)));
    TreeData td;
    td.tree = data.trees[k].tree;
    const std::vector<int> states = sample_states(m, td.tree, g);
    td.obs.reserve(static_cast<size_t>(td.tree.node_count()));
    for (int v = 0; v < td.tree.node_count(); ++v)
      td.obs.push_back(sample_observation(m, states[static_cast<size_t>(v)], g));
    out.forest.trees.push_back(std::move(td));
    out.hidden.push_back(states);
  }
  return out;
}

}  // namespace hmt
