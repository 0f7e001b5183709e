#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmt/error.hpp"
#include "hmt/model.hpp"
#include "hmt/tree.hpp"

namespace hmt {

// Ground truth by full enumeration over all N^|T| hidden-state assignments.
// Everything is evaluated in linear space directly from the joint
// factorization, independently of the recursive passes it cross-checks.
struct EnumerationResult {
  double likelihood = 0.0;
  std::vector<int> map_assignment;  // lexicographically smallest among ties
  double map_score = 0.0;           // joint probability of the MAP assignment
  std::vector<std::vector<double>> gamma;  // [node][state], normalized when likelihood > 0
  std::vector<std::vector<double>> xi;     // [node][parent_state * tuples + tuple]; empty rows at leaves
};

inline EnumerationResult enumerate_assignments(const HmtModel& m, const Tree& t,
                                               const std::vector<Observation>& obs,
                                               std::uint64_t assignment_budget = 10'000'000) {
  const int n_nodes = t.node_count();
  const int N = m.state_count;

  double total_assignments = 1.0;
  for (int i = 0; i < n_nodes; ++i) total_assignments *= N;
  if (total_assignments > static_cast<double>(assignment_budget))
    throw Error(errc::budget_exceeded,
                std::to_string(total_assignments) + " assignments exceed budget " +
                    std::to_string(assignment_budget));

  EnumerationResult res;
  res.gamma.assign(static_cast<size_t>(n_nodes), std::vector<double>(static_cast<size_t>(N), 0.0));
  res.xi.assign(static_cast<size_t>(n_nodes), {});
  for (int v = 0; v < n_nodes; ++v)
    if (!t.is_leaf(v)) {
      const auto& tensor = m.tensor_for(static_cast<int>(t.children[static_cast<size_t>(v)].size()));
      res.xi[static_cast<size_t>(v)].assign(
          static_cast<size_t>(N) * static_cast<size_t>(tensor.tuple_count()), 0.0);
    }

  std::vector<int> assign(static_cast<size_t>(n_nodes), 0);
  std::vector<int> child_states;
  res.map_score = -1.0;
  while (true) {
    // Joint of this assignment: root prior, one tensor factor per interior
    // node, one emission factor per node.
    double joint = m.pi[static_cast<size_t>(assign[static_cast<size_t>(t.root)])];
    for (int v = 0; v < n_nodes && joint > 0.0; ++v) {
      joint *= emission_density(m, assign[static_cast<size_t>(v)], obs[static_cast<size_t>(v)]);
      const auto& kids = t.children[static_cast<size_t>(v)];
      if (!kids.empty()) {
        child_states.clear();
        for (int c : kids) child_states.push_back(assign[static_cast<size_t>(c)]);
        const auto& tensor = m.tensor_for(static_cast<int>(kids.size()));
        joint *= tensor.at(assign[static_cast<size_t>(v)], tuple_pack(child_states, N));
      }
    }

    res.likelihood += joint;
    if (joint > res.map_score) {
      res.map_score = joint;
      res.map_assignment = assign;
    }
    if (joint > 0.0) {
      for (int v = 0; v < n_nodes; ++v)
        res.gamma[static_cast<size_t>(v)][static_cast<size_t>(assign[static_cast<size_t>(v)])] +=
            joint;
      for (int v = 0; v < n_nodes; ++v) {
        const auto& kids = t.children[static_cast<size_t>(v)];
        if (kids.empty()) continue;
        child_states.clear();
        for (int c : kids) child_states.push_back(assign[static_cast<size_t>(c)]);
        const int tuples = m.tensor_for(static_cast<int>(kids.size())).tuple_count();
        res.xi[static_cast<size_t>(v)][static_cast<size_t>(
            assign[static_cast<size_t>(v)] * tuples + tuple_pack(child_states, N))] += joint;
      }
    }

    // Next assignment in lexicographic order (node 0 most significant), so
    // the first maximum seen is the lexicographically smallest MAP.
    int pos = n_nodes - 1;
    while (pos >= 0 && assign[static_cast<size_t>(pos)] == N - 1) {
      assign[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++assign[static_cast<size_t>(pos)];
  }

  if (res.likelihood > 0.0) {
    for (auto& row : res.gamma)
      for (double& v : row) v /= res.likelihood;
    for (auto& row : res.xi)
      for (double& v : row) v /= res.likelihood;
  }
  return res;
}

}  // namespace hmt
