#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hmt/error.hpp"
#include "hmt/inference.hpp"
#include "hmt/model.hpp"
#include "hmt/parallel.hpp"
#include "hmt/simulate.hpp"
#include "hmt/tree.hpp"

namespace hmt {

// Expected sufficient statistics of one E-step over a forest. Per-tree
// contributions are reduced in tree order, so the result does not depend on
// how many workers computed them.
struct EStepStats {
  double log_likelihood = 0.0;
  std::size_t tree_count = 0;
  std::map<int, std::vector<double>> xi_sums;  // branching -> [rho * tuples + tuple]
  std::vector<double> root_gamma_sum;          // per state
  std::vector<double> gamma_totals;            // per state, all nodes
  std::vector<std::vector<double>> symbol_gamma;        // [state][symbol], categorical only
  std::vector<double> gamma_obs_sum, gamma_obs_sq_sum;  // per state, scalar only
};

inline EStepStats e_step(const HmtModel& m, const Forest& forest, int threads = 1) {
  const int N = m.state_count;
  const bool categorical = std::holds_alternative<CategoricalEmission>(m.emission);
  const int alphabet =
      categorical ? std::get<CategoricalEmission>(m.emission).alphabet_size() : 0;

  struct TreeStats {
    double log_likelihood = 0.0;
    std::map<int, std::vector<double>> xi_sums;
    std::vector<double> root_gamma, gamma_totals, obs_sum, obs_sq_sum;
    std::vector<std::vector<double>> symbol_gamma;
  };
  std::vector<TreeStats> per_tree(forest.trees.size());

  parallel_for(forest.trees.size(), threads, [&](std::size_t k) {
    const Tree& t = forest.trees[k].tree;
    const auto& obs = forest.trees[k].obs;
    const ScaledPasses p = run_scaled_passes(m, t, obs);
    const auto xi = xi_scaled(m, t, obs, p.alpha, p.beta, p.marginals);

    TreeStats& s = per_tree[k];
    s.log_likelihood = p.log_likelihood;
    s.root_gamma = p.gamma[static_cast<size_t>(t.root)];
    s.gamma_totals.assign(static_cast<size_t>(N), 0.0);
    if (categorical)
      s.symbol_gamma.assign(static_cast<size_t>(N),
                            std::vector<double>(static_cast<size_t>(alphabet), 0.0));
    else {
      s.obs_sum.assign(static_cast<size_t>(N), 0.0);
      s.obs_sq_sum.assign(static_cast<size_t>(N), 0.0);
    }
    for (int v = 0; v < t.node_count(); ++v) {
      for (int st = 0; st < N; ++st) {
        const double g = p.gamma[static_cast<size_t>(v)][static_cast<size_t>(st)];
        s.gamma_totals[static_cast<size_t>(st)] += g;
        if (categorical)
          s.symbol_gamma[static_cast<size_t>(st)]
                        [static_cast<size_t>(obs[static_cast<size_t>(v)].symbol)] += g;
        else {
          const double x = obs[static_cast<size_t>(v)].value;
          s.obs_sum[static_cast<size_t>(st)] += g * x;
          s.obs_sq_sum[static_cast<size_t>(st)] += g * x * x;
        }
      }
      if (!xi[static_cast<size_t>(v)].empty()) {
        const int n = static_cast<int>(t.children[static_cast<size_t>(v)].size());
        auto& acc = s.xi_sums[n];
        const auto& row = xi[static_cast<size_t>(v)];
        if (acc.empty()) acc.assign(row.size(), 0.0);
        for (size_t i = 0; i < row.size(); ++i) acc[i] += row[i];
      }
    }
  });

  EStepStats out;
  out.tree_count = forest.trees.size();
  out.root_gamma_sum.assign(static_cast<size_t>(N), 0.0);
  out.gamma_totals.assign(static_cast<size_t>(N), 0.0);
  if (categorical)
    out.symbol_gamma.assign(static_cast<size_t>(N),
                            std::vector<double>(static_cast<size_t>(alphabet), 0.0));
  else {
    out.gamma_obs_sum.assign(static_cast<size_t>(N), 0.0);
    out.gamma_obs_sq_sum.assign(static_cast<size_t>(N), 0.0);
  }
  for (const TreeStats& s : per_tree) {
    out.log_likelihood += s.log_likelihood;
    for (int st = 0; st < N; ++st) {
      out.root_gamma_sum[static_cast<size_t>(st)] += s.root_gamma[static_cast<size_t>(st)];
      out.gamma_totals[static_cast<size_t>(st)] += s.gamma_totals[static_cast<size_t>(st)];
      if (categorical)
        for (int v = 0; v < alphabet; ++v)
          out.symbol_gamma[static_cast<size_t>(st)][static_cast<size_t>(v)] +=
              s.symbol_gamma[static_cast<size_t>(st)][static_cast<size_t>(v)];
      else {
        out.gamma_obs_sum[static_cast<size_t>(st)] += s.obs_sum[static_cast<size_t>(st)];
        out.gamma_obs_sq_sum[static_cast<size_t>(st)] += s.obs_sq_sum[static_cast<size_t>(st)];
      }
    }
    for (const auto& [n, acc] : s.xi_sums) {
      auto& dst = out.xi_sums[n];
      if (dst.empty()) dst.assign(acc.size(), 0.0);
      for (size_t i = 0; i < acc.size(); ++i) dst[i] += acc[i];
    }
  }
  return out;
}

// Updated tensors: each row is the node-summed xi mass renormalized by the
// same sums, so rows normalize exactly. Rows that collected no mass keep the
// previous iteration's values.
inline std::map<int, TransitionTensor> m_step_transitions(
    const std::map<int, std::vector<double>>& xi_sums,
    const std::map<int, TransitionTensor>& previous,
    std::vector<std::string>* warnings = nullptr) {
  std::map<int, TransitionTensor> out = previous;
  for (const auto& [n, sums] : xi_sums) {
    auto it = out.find(n);
    if (it == out.end())
      throw Error(errc::missing_tensor_for_branching_factor,
                  "no previous tensor for branching factor " + std::to_string(n));
    TransitionTensor& tensor = it->second;
    const int tuples = tensor.tuple_count();
    for (int p = 0; p < tensor.state_count; ++p) {
      double row_sum = 0.0;
      for (int tup = 0; tup < tuples; ++tup)
        row_sum += sums[static_cast<size_t>(p * tuples + tup)];
      if (row_sum == 0.0) {
        if (warnings)
          warnings->push_back("a" + std::to_string(n) + " row " + std::to_string(p) +
                              ": no expected mass, keeping previous row");
        continue;
      }
      for (int tup = 0; tup < tuples; ++tup)
        tensor.at(p, tup) = sums[static_cast<size_t>(p * tuples + tup)] / row_sum;
    }
  }
  return out;
}

inline Emission m_step_emission_categorical(const std::vector<std::vector<double>>& symbol_gamma,
                                            const std::vector<double>& gamma_totals,
                                            const Emission& previous,
                                            std::vector<std::string>* warnings = nullptr) {
  CategoricalEmission out = std::get<CategoricalEmission>(previous);
  for (size_t s = 0; s < symbol_gamma.size(); ++s) {
    if (gamma_totals[s] == 0.0) {
      if (warnings)
        warnings->push_back("emission row " + std::to_string(s) +
                            ": zero state occupancy, keeping previous row");
      continue;
    }
    for (size_t v = 0; v < symbol_gamma[s].size(); ++v)
      out.probs[s][v] = symbol_gamma[s][v] / gamma_totals[s];
  }
  return out;
}

inline Emission m_step_emission_gaussian(const std::vector<double>& gamma_totals,
                                         const std::vector<double>& obs_sum,
                                         const std::vector<double>& obs_sq_sum,
                                         const Emission& previous, double std_floor = 1e-6,
                                         std::vector<std::string>* warnings = nullptr) {
  GaussianEmission out = std::get<GaussianEmission>(previous);
  for (size_t s = 0; s < gamma_totals.size(); ++s) {
    if (gamma_totals[s] == 0.0) {
      if (warnings)
        warnings->push_back("emission state " + std::to_string(s) +
                            ": zero state occupancy, keeping previous parameters");
      continue;
    }
    const double mean = obs_sum[s] / gamma_totals[s];
    const double var = obs_sq_sum[s] / gamma_totals[s] - mean * mean;
    out.means[s] = mean;
    out.stds[s] = std::max(std::sqrt(std::max(var, 0.0)), std_floor);
  }
  return out;
}

// Root distribution: mean of the root posteriors across trees.
inline std::vector<double> m_step_pi(const std::vector<double>& root_gamma_sum,
                                     std::size_t tree_count) {
  std::vector<double> pi(root_gamma_sum.size());
  for (size_t s = 0; s < pi.size(); ++s)
    pi[s] = root_gamma_sum[s] / static_cast<double>(tree_count);
  return pi;
}

struct FitConfig {
  int max_iterations = 500;
  double log_likelihood_tolerance = 1e-6;
  std::uint64_t seed = 0;
  std::optional<HmtModel> init_model;  // when absent, data-driven init with `states`
  int states = 0;
  double std_floor = 1e-6;
  int threads = 1;
};

struct FitIteration {
  double log_likelihood;  // of the model entering this iteration
  HmtModel model;         // after this iteration's update
};

struct FitTrace {
  std::vector<FitIteration> iterations;
  HmtModel final_model;
  double final_log_likelihood = 0.0;
  bool converged = false;
  std::string stop_reason;
  std::vector<std::string> warnings;
};

// One update of every parameter block from accumulated statistics.
inline HmtModel m_step(const HmtModel& m, const EStepStats& stats, double std_floor,
                       std::vector<std::string>* warnings) {
  HmtModel next = m;
  next.pi = m_step_pi(stats.root_gamma_sum, stats.tree_count);
  next.transitions = m_step_transitions(stats.xi_sums, m.transitions, warnings);
  if (std::holds_alternative<CategoricalEmission>(m.emission))
    next.emission = m_step_emission_categorical(stats.symbol_gamma, stats.gamma_totals,
                                                m.emission, warnings);
  else
    next.emission = m_step_emission_gaussian(stats.gamma_totals, stats.gamma_obs_sum,
                                             stats.gamma_obs_sq_sum, m.emission, std_floor,
                                             warnings);
  for (const Violation& v : validate(next))
    throw Error(errc::non_finite_parameter, "after update, " + v.where + ": " + v.what);
  return next;
}

// Data-driven initialization for scalar observations: pool every observed
// value, run Lloyd clustering seeded at N evenly spaced quantiles, then read
// off hard-count estimates. Cluster labels are sorted by mean so the
// initialization is canonical. Counts get add-one smoothing.
inline HmtModel init_kmeans_style(const Forest& forest, int N, std::uint64_t seed,
                                  double std_floor = 1e-6) {
  if (forest.kind != ObsKind::scalar)
    throw Error(errc::kind_mismatch, "k-means style init needs scalar observations");

  std::vector<double> pooled;
  for (const auto& td : forest.trees)
    for (const auto& o : td.obs) pooled.push_back(o.value);
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  if (std::set<double>(sorted.begin(), sorted.end()).size() < static_cast<size_t>(N))
    throw Error(errc::degenerate_data,
                "fewer than " + std::to_string(N) + " distinct observation values");

  std::vector<double> centers(static_cast<size_t>(N));
  for (int c = 0; c < N; ++c) {
    const size_t idx = std::min(
        sorted.size() - 1,
        static_cast<size_t>((static_cast<double>(c) + 0.5) / N * static_cast<double>(sorted.size())));
    centers[static_cast<size_t>(c)] = sorted[idx];
  }

  std::mt19937_64 g(rng::splitmix64(seed));
  std::vector<int> assign(pooled.size(), -1);
  for (int round = 0; round < 100; ++round) {
    bool changed = false;
    for (size_t i = 0; i < pooled.size(); ++i) {
      int best = 0;
      for (int c = 1; c < N; ++c)
        if (std::abs(pooled[i] - centers[static_cast<size_t>(c)]) <
            std::abs(pooled[i] - centers[static_cast<size_t>(best)]))
          best = c;
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    std::vector<double> sums(static_cast<size_t>(N), 0.0);
    std::vector<std::size_t> counts(static_cast<size_t>(N), 0);
    for (size_t i = 0; i < pooled.size(); ++i) {
      sums[static_cast<size_t>(assign[i])] += pooled[i];
      ++counts[static_cast<size_t>(assign[i])];
    }
    for (int c = 0; c < N; ++c) {
      if (counts[static_cast<size_t>(c)] > 0)
        centers[static_cast<size_t>(c)] =
            sums[static_cast<size_t>(c)] / static_cast<double>(counts[static_cast<size_t>(c)]);
      else  // re-seed an empty cluster at a random pooled value
        centers[static_cast<size_t>(c)] = pooled[g() % pooled.size()];
    }
    if (!changed && round > 0) break;
  }

  // Canonical labels: clusters ordered by center.
  std::vector<int> order(static_cast<size_t>(N));
  for (int c = 0; c < N; ++c) order[static_cast<size_t>(c)] = c;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return centers[static_cast<size_t>(a)] < centers[static_cast<size_t>(b)]; });
  std::vector<int> relabel(static_cast<size_t>(N));
  for (int rank = 0; rank < N; ++rank) relabel[static_cast<size_t>(order[static_cast<size_t>(rank)])] = rank;
  for (int& a : assign) a = relabel[static_cast<size_t>(a)];

  // Hard-count estimates with add-one smoothing.
  HmtModel m;
  m.state_count = N;
  std::vector<double> root_counts(static_cast<size_t>(N), 1.0);
  std::vector<double> mean_sum(static_cast<size_t>(N), 0.0), sq_sum(static_cast<size_t>(N), 0.0);
  std::vector<std::size_t> counts(static_cast<size_t>(N), 0);
  std::map<int, std::vector<double>> tuple_counts;

  size_t cursor = 0;
  for (const auto& td : forest.trees) {
    const int offset = static_cast<int>(cursor);
    root_counts[static_cast<size_t>(assign[static_cast<size_t>(offset + td.tree.root)])] += 1.0;
    for (int v = 0; v < td.tree.node_count(); ++v) {
      const int cluster = assign[static_cast<size_t>(offset + v)];
      mean_sum[static_cast<size_t>(cluster)] += td.obs[static_cast<size_t>(v)].value;
      sq_sum[static_cast<size_t>(cluster)] +=
          td.obs[static_cast<size_t>(v)].value * td.obs[static_cast<size_t>(v)].value;
      ++counts[static_cast<size_t>(cluster)];
      const auto& kids = td.tree.children[static_cast<size_t>(v)];
      if (kids.empty()) continue;
      const int n = static_cast<int>(kids.size());
      auto& tc = tuple_counts[n];
      const int tuples = tuple_count_for(N, n);
      if (tc.empty()) tc.assign(static_cast<size_t>(N) * static_cast<size_t>(tuples), 1.0);
      std::vector<int> child_states;
      for (int c : kids) child_states.push_back(assign[static_cast<size_t>(offset + c)]);
      tc[static_cast<size_t>(cluster * tuples + tuple_pack(child_states, N))] += 1.0;
    }
    cursor += static_cast<size_t>(td.tree.node_count());
  }

  double root_total = 0.0;
  for (double v : root_counts) root_total += v;
  m.pi.assign(static_cast<size_t>(N), 0.0);
  for (int s = 0; s < N; ++s) m.pi[static_cast<size_t>(s)] = root_counts[static_cast<size_t>(s)] / root_total;

  GaussianEmission em;
  em.means.assign(static_cast<size_t>(N), 0.0);
  em.stds.assign(static_cast<size_t>(N), std_floor);
  for (int s = 0; s < N; ++s) {
    const double cnt = static_cast<double>(counts[static_cast<size_t>(s)]);
    if (cnt > 0) {
      const double mean = mean_sum[static_cast<size_t>(s)] / cnt;
      const double var = sq_sum[static_cast<size_t>(s)] / cnt - mean * mean;
      em.means[static_cast<size_t>(s)] = mean;
      em.stds[static_cast<size_t>(s)] = std::max(std::sqrt(std::max(var, 0.0)), std_floor);
    }
  }
  m.emission = em;

  for (auto& [n, tc] : tuple_counts) {
    TransitionTensor tensor(N, n);
    tensor.rows = tc;
    m.transitions[n] = renormalized(std::move(tensor));
  }
  return m;
}

// Initialization for categorical observations: perturbed empirical symbol
// frequencies per state, uniform root distribution, jittered uniform tensors.
inline HmtModel init_empirical_categorical(const Forest& forest, int N, std::uint64_t seed) {
  if (forest.kind != ObsKind::categorical)
    throw Error(errc::kind_mismatch, "empirical categorical init needs categorical observations");
  int alphabet = 0;
  for (const auto& td : forest.trees)
    for (const auto& o : td.obs) alphabet = std::max(alphabet, o.symbol + 1);
  if (alphabet < 1) throw Error(errc::degenerate_data, "no symbols observed");

  std::vector<double> freq(static_cast<size_t>(alphabet), 1.0);  // add-one
  for (const auto& td : forest.trees)
    for (const auto& o : td.obs) freq[static_cast<size_t>(o.symbol)] += 1.0;

  std::mt19937_64 g(rng::splitmix64(seed));
  auto jitter = [&] { return 1.0 + 0.5 * static_cast<double>(g() >> 11) * 0x1.0p-53; };

  HmtModel m;
  m.state_count = N;
  m.pi.assign(static_cast<size_t>(N), 1.0 / N);
  CategoricalEmission em;
  em.probs.assign(static_cast<size_t>(N), std::vector<double>(static_cast<size_t>(alphabet), 0.0));
  for (int s = 0; s < N; ++s)
    for (int v = 0; v < alphabet; ++v) em.probs[static_cast<size_t>(s)][static_cast<size_t>(v)] = freq[static_cast<size_t>(v)] * jitter();
  m.emission = em;

  std::set<int> branchings;
  for (const auto& td : forest.trees)
    for (int v = 0; v < td.tree.node_count(); ++v)
      if (!td.tree.is_leaf(v)) branchings.insert(static_cast<int>(td.tree.children[static_cast<size_t>(v)].size()));
  for (int n : branchings) {
    TransitionTensor tensor(N, n);
    for (double& e : tensor.rows) e = jitter();
    m.transitions[n] = renormalized(std::move(tensor));
  }
  return renormalized(std::move(m));
}

inline HmtModel init_for_data(const Forest& forest, int N, std::uint64_t seed,
                              double std_floor = 1e-6) {
  return forest.kind == ObsKind::scalar ? init_kmeans_style(forest, N, seed, std_floor)
                                        : init_empirical_categorical(forest, N, seed);
}

// EM until the total log-likelihood moves less than the tolerance or the
// iteration cap is hit. The likelihood trace is checked for monotonicity as
// it is produced; a decrease past the slack aborts with a diagnostic.
inline FitTrace fit(const Forest& forest, const FitConfig& config) {
  constexpr double kMonotonicitySlack = 1e-8;
  HmtModel model = config.init_model.has_value()
                       ? *config.init_model
                       : init_for_data(forest, config.states, config.seed, config.std_floor);
  require_valid(model);

  FitTrace trace;
  double prev_ll = 0.0;
  bool have_prev = false;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    EStepStats stats;
    try {
      stats = e_step(model, forest, config.threads);
    } catch (const Error& e) {
      if (e.code() == errc::impossible_observation && iter == 0)
        throw Error(errc::impossible_observation,
                    std::string("initial model assigns the data probability 0 (") + e.what() + ")");
      throw;
    }
    if (!std::isfinite(stats.log_likelihood))
      throw Error(errc::non_finite_parameter, "log-likelihood became non-finite");
    if (have_prev && stats.log_likelihood < prev_ll - kMonotonicitySlack)
      throw Error(errc::monotonicity_violation,
                  "log-likelihood fell from " + std::to_string(prev_ll) + " to " +
                      std::to_string(stats.log_likelihood) + " at iteration " +
                      std::to_string(iter));

    model = m_step(model, stats, config.std_floor, &trace.warnings);
    trace.iterations.push_back({stats.log_likelihood, model});

    if (have_prev && std::abs(stats.log_likelihood - prev_ll) < config.log_likelihood_tolerance) {
      trace.converged = true;
      trace.stop_reason = "log-likelihood change below tolerance at iteration " +
                          std::to_string(iter);
      break;
    }
    prev_ll = stats.log_likelihood;
    have_prev = true;
  }
  if (!trace.converged)
    trace.stop_reason = "reached max_iterations = " + std::to_string(config.max_iterations);
  trace.final_model = model;
  trace.final_log_likelihood = log_likelihood_scaled(model, forest);
  return trace;
}

}  // namespace hmt
