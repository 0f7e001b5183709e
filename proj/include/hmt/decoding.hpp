#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hmt/error.hpp"
#include "hmt/inference.hpp"
#include "hmt/model.hpp"
#include "hmt/tree.hpp"

namespace hmt {

struct DecodeResult {
  std::vector<int> states;
  double log_score = 0.0;  // log joint probability of `states` with the data
};

// Upward max-product table: delta_log[C][rho] is the log of the best joint of
// C's observed subtree over all descendant assignments, given C in state rho.
// argmax_tuple stores, per (interior node, state), the maximizing child-state
// tuple for the later downward backtrack; ties go to the lexicographically
// smallest tuple.
struct BestScoreTable {
  StateTable delta_log;
  std::vector<std::vector<int>> argmax_tuple;  // -1 at leaves
};

inline BestScoreTable viterbi_table(const HmtModel& m, const Tree& t,
                                    const std::vector<Observation>& obs) {
  const int N = m.state_count;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  BestScoreTable table;
  table.delta_log = detail::zero_table(t.node_count(), N);
  table.argmax_tuple.assign(static_cast<size_t>(t.node_count()),
                            std::vector<int>(static_cast<size_t>(N), -1));

  std::vector<int> digits;
  for (int v : upward_order(t)) {
    const auto& kids = t.children[static_cast<size_t>(v)];
    auto& column = table.delta_log[static_cast<size_t>(v)];
    if (kids.empty()) {
      for (int s = 0; s < N; ++s)
        column[static_cast<size_t>(s)] =
            std::log(emission_density(m, s, obs[static_cast<size_t>(v)]));
    } else {
      const int n = static_cast<int>(kids.size());
      const auto& tensor = m.tensor_for(n);
      const int tuples = tensor.tuple_count();
      for (int s = 0; s < N; ++s) {
        double best = neg_inf;
        int best_tup = -1;
        for (int tup = 0; tup < tuples; ++tup) {
          const double a = tensor.at(s, tup);
          if (a == 0.0) continue;
          tuple_unpack(tup, n, N, digits);
          double score = std::log(a);
          for (int i = 0; i < n; ++i)
            score += table.delta_log[static_cast<size_t>(kids[static_cast<size_t>(i)])]
                                    [static_cast<size_t>(digits[static_cast<size_t>(i)])];
          if (score > best) {
            best = score;
            best_tup = tup;
          }
        }
        column[static_cast<size_t>(s)] =
            std::log(emission_density(m, s, obs[static_cast<size_t>(v)])) + best;
        table.argmax_tuple[static_cast<size_t>(v)][static_cast<size_t>(s)] = best_tup;
      }
    }
    bool all_impossible = true;
    for (int s = 0; s < N; ++s)
      if (column[static_cast<size_t>(s)] > neg_inf) all_impossible = false;
    if (all_impossible)
      throw Error(errc::all_zero_likelihood,
                  "node " + std::to_string(v) + ": every state has score 0", v);
  }
  return table;
}

// MAP state tree. Picks the best root state (smallest id on ties) and follows
// the stored argmax tuples down the tree.
inline DecodeResult viterbi_decode(const HmtModel& m, const Tree& t,
                                   const std::vector<Observation>& obs) {
  const int N = m.state_count;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  const BestScoreTable table = viterbi_table(m, t, obs);

  DecodeResult res;
  res.states.assign(static_cast<size_t>(t.node_count()), 0);
  double best = neg_inf;
  int best_state = -1;
  for (int s = 0; s < N; ++s) {
    const double score = table.delta_log[static_cast<size_t>(t.root)][static_cast<size_t>(s)] +
                         std::log(m.pi[static_cast<size_t>(s)]);
    if (score > best) {
      best = score;
      best_state = s;
    }
  }
  if (best_state < 0)
    throw Error(errc::all_zero_likelihood, "no root state has positive probability", t.root);
  res.log_score = best;
  res.states[static_cast<size_t>(t.root)] = best_state;

  std::vector<int> digits;
  for (int v : downward_order(t)) {
    const auto& kids = t.children[static_cast<size_t>(v)];
    if (kids.empty()) continue;
    const int state = res.states[static_cast<size_t>(v)];
    const int tup = table.argmax_tuple[static_cast<size_t>(v)][static_cast<size_t>(state)];
    tuple_unpack(tup, static_cast<int>(kids.size()), N, digits);
    for (size_t i = 0; i < kids.size(); ++i)
      res.states[static_cast<size_t>(kids[i])] = digits[i];
  }
  return res;
}

// Per-node argmax of the state posterior; ties break toward the lowest state
// id. May produce an assignment no model trajectory can generate.
inline std::vector<int> posterior_decode(const StateTable& gamma) {
  std::vector<int> states(gamma.size(), 0);
  for (size_t v = 0; v < gamma.size(); ++v) {
    int best = 0;
    for (size_t s = 1; s < gamma[v].size(); ++s)
      if (gamma[v][s] > gamma[v][best]) best = static_cast<int>(s);
    states[v] = best;
  }
  return states;
}

// Log joint probability of a full assignment with the observations; -inf when
// any factor vanishes.
inline double joint_log_probability(const HmtModel& m, const Tree& t,
                                    const std::vector<Observation>& obs,
                                    const std::vector<int>& states) {
  double log_joint = std::log(m.pi[static_cast<size_t>(states[static_cast<size_t>(t.root)])]);
  std::vector<int> child_states;
  for (int v = 0; v < t.node_count(); ++v) {
    log_joint += std::log(
        emission_density(m, states[static_cast<size_t>(v)], obs[static_cast<size_t>(v)]));
    const auto& kids = t.children[static_cast<size_t>(v)];
    if (kids.empty()) continue;
    child_states.clear();
    for (int c : kids) child_states.push_back(states[static_cast<size_t>(c)]);
    const auto& tensor = m.tensor_for(static_cast<int>(kids.size()));
    log_joint += std::log(tensor.at(states[static_cast<size_t>(v)],
                                    tuple_pack(child_states, m.state_count)));
  }
  return log_joint;
}

}  // namespace hmt
