#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hmt/error.hpp"
#include "hmt/model.hpp"
#include "hmt/tree.hpp"

namespace hmt {

using StateTable = std::vector<std::vector<double>>;  // [node][state]

struct UnscaledPasses {
  StateTable beta_tilde;
  StateTable alpha_tilde;
};

// State posterior per node plus the parent/children joint posterior per
// interior node; everything the M-step consumes.
struct Posteriors {
  StateTable gamma;
  std::vector<std::vector<double>> xi;  // [node][parent_state * tuples + tuple]
};

// Scaled quantities for one tree. beta rows are normalized to 1; gamma is the
// exact state posterior; the per-node log normalizers sum to the tree
// log-likelihood.
struct ScaledPasses {
  StateTable marginals;  // prior state marginal per node
  StateTable beta;
  StateTable alpha;
  StateTable gamma;
  std::vector<double> node_log_normalizer;
  double log_likelihood = 0.0;
};

// Counts innermost child-tuple visits of the scaled upward pass: one tick per
// (interior node, parent state, tuple) triple.
struct OpCounter {
  std::uint64_t tuple_ops = 0;
};

namespace detail {

inline StateTable zero_table(int nodes, int states) {
  return StateTable(static_cast<size_t>(nodes), std::vector<double>(static_cast<size_t>(states), 0.0));
}

// beta / prior-marginal ratio with the 0/0 := 0 convention. A zero marginal
// under a nonzero beta would divide probability mass by zero and is reported.
inline double scaled_ratio(double beta, double marginal, int node, int state) {
  if (marginal > 0.0) return beta / marginal;
  if (beta == 0.0) return 0.0;
  throw Error(errc::zero_marginal_division,
              "node " + std::to_string(node) + ", state " + std::to_string(state) +
                  ": posterior mass on a state with zero prior marginal",
              node, state);
}

// Leave-one-out products over one tuple's per-child factors:
// loo[j] = prod_{i != j} x[i].
inline void leave_one_out(const std::vector<double>& x, std::vector<double>& pre,
                          std::vector<double>& loo) {
  const size_t n = x.size();
  pre.assign(n + 1, 1.0);
  for (size_t i = 0; i < n; ++i) pre[i + 1] = pre[i] * x[i];
  double suffix = 1.0;
  loo.assign(n, 0.0);
  for (size_t j = n; j-- > 0;) {
    loo[j] = pre[j] * suffix;
    suffix *= x[j];
  }
}

}  // namespace detail

// Upward pass: beta_tilde[C][rho] = P(observed subtree rooted at C | state of
// C is rho). Leaves carry their emission density; an interior node sums its
// tensor row against the product of the children's values.
inline StateTable backward_unscaled(const HmtModel& m, const Tree& t,
                                    const std::vector<Observation>& obs) {
  const int N = m.state_count;
  StateTable beta = detail::zero_table(t.node_count(), N);
  std::vector<int> digits;
  for (int v : upward_order(t)) {
    const auto& kids = t.children[static_cast<size_t>(v)];
    if (kids.empty()) {
      for (int s = 0; s < N; ++s)
        beta[static_cast<size_t>(v)][static_cast<size_t>(s)] =
            emission_density(m, s, obs[static_cast<size_t>(v)]);
      continue;
    }
    const int n = static_cast<int>(kids.size());
    const auto& tensor = m.tensor_for(n);
    const int tuples = tensor.tuple_count();
    for (int s = 0; s < N; ++s) {
      double sum = 0.0;
      for (int tup = 0; tup < tuples; ++tup) {
        const double a = tensor.at(s, tup);
        if (a == 0.0) continue;
        tuple_unpack(tup, n, N, digits);
        double prod = a;
        for (int i = 0; i < n; ++i)
          prod *= beta[static_cast<size_t>(kids[static_cast<size_t>(i)])]
                      [static_cast<size_t>(digits[static_cast<size_t>(i)])];
        sum += prod;
      }
      beta[static_cast<size_t>(v)][static_cast<size_t>(s)] =
          emission_density(m, s, obs[static_cast<size_t>(v)]) * sum;
    }
  }
  return beta;
}

// Downward pass: alpha_tilde[C][rho] = P(observations outside C's subtree,
// state of C is rho). The root is initialized with the prior; every child
// receives its parent's value spread through the tensor against the siblings'
// beta_tilde.
inline StateTable forward_unscaled(const HmtModel& m, const Tree& t,
                                   const std::vector<Observation>& obs,
                                   const StateTable& beta_tilde) {
  const int N = m.state_count;
  StateTable alpha = detail::zero_table(t.node_count(), N);
  alpha[static_cast<size_t>(t.root)] = m.pi;

  std::vector<int> digits;
  std::vector<double> x, pre, loo;
  for (int p : downward_order(t)) {
    const auto& kids = t.children[static_cast<size_t>(p)];
    if (kids.empty()) continue;
    const int n = static_cast<int>(kids.size());
    const auto& tensor = m.tensor_for(n);
    const int tuples = tensor.tuple_count();
    for (int mu0 = 0; mu0 < N; ++mu0) {
      const double w =
          alpha[static_cast<size_t>(p)][static_cast<size_t>(mu0)] *
          emission_density(m, mu0, obs[static_cast<size_t>(p)]);
      if (w == 0.0) continue;
      for (int tup = 0; tup < tuples; ++tup) {
        const double a = tensor.at(mu0, tup);
        if (a == 0.0) continue;
        tuple_unpack(tup, n, N, digits);
        x.assign(static_cast<size_t>(n), 0.0);
        for (int i = 0; i < n; ++i)
          x[static_cast<size_t>(i)] = beta_tilde[static_cast<size_t>(kids[static_cast<size_t>(i)])]
                                                [static_cast<size_t>(digits[static_cast<size_t>(i)])];
        detail::leave_one_out(x, pre, loo);
        for (int j = 0; j < n; ++j)
          alpha[static_cast<size_t>(kids[static_cast<size_t>(j)])]
               [static_cast<size_t>(digits[static_cast<size_t>(j)])] +=
              w * a * loo[static_cast<size_t>(j)];
      }
    }
  }
  return alpha;
}

// Tree likelihood from the upward pass alone: sum_rho beta_tilde_root * pi.
inline double likelihood_unscaled(const HmtModel& m, const Tree& t,
                                  const std::vector<Observation>& obs) {
  const StateTable beta = backward_unscaled(m, t, obs);
  double sum = 0.0;
  for (int s = 0; s < m.state_count; ++s)
    sum += beta[static_cast<size_t>(t.root)][static_cast<size_t>(s)] * m.pi[static_cast<size_t>(s)];
  return sum;
}

// Prior state marginals P(h(C) = rho), propagated root-to-leaves through the
// per-branch tensor marginals. No observations involved.
inline StateTable state_marginals(const HmtModel& m, const Tree& t) {
  const int N = m.state_count;
  StateTable marg = detail::zero_table(t.node_count(), N);
  marg[static_cast<size_t>(t.root)] = m.pi;
  for (int p : downward_order(t)) {
    const auto& kids = t.children[static_cast<size_t>(p)];
    if (kids.empty()) continue;
    const auto& tensor = m.tensor_for(static_cast<int>(kids.size()));
    for (size_t j = 0; j < kids.size(); ++j)
      for (int s = 0; s < N; ++s) {
        double sum = 0.0;
        for (int mu0 = 0; mu0 < N; ++mu0) {
          const double pm = marg[static_cast<size_t>(p)][static_cast<size_t>(mu0)];
          if (pm == 0.0) continue;
          sum += pm * child_tuple_marginal(tensor, mu0, static_cast<int>(j), s);
        }
        marg[static_cast<size_t>(kids[j])][static_cast<size_t>(s)] = sum;
      }
  }
  return marg;
}

struct ScaledBackwardResult {
  StateTable beta;                          // rows sum to 1
  std::vector<double> node_log_normalizer;  // logs sum to the log-likelihood
};

// Scaled upward pass. Each node's unnormalized column is
//   q_C(rho) = b_rho(O(C)) * P(h(C)=rho) * sum_tuples a * prod_i beta_i/P_i
// (the tuple sum is empty at leaves) and the column is divided by its own
// sum, which is the node's normalizer. A zero normalizer means the observed
// data has probability zero under the model at this node.
inline ScaledBackwardResult backward_scaled(const HmtModel& m, const Tree& t,
                                            const std::vector<Observation>& obs,
                                            const StateTable& marginals,
                                            OpCounter* counter = nullptr) {
  const int N = m.state_count;
  ScaledBackwardResult res;
  res.beta = detail::zero_table(t.node_count(), N);
  res.node_log_normalizer.assign(static_cast<size_t>(t.node_count()), 0.0);

  std::vector<int> digits;
  std::vector<double> q(static_cast<size_t>(N), 0.0);
  std::vector<std::vector<double>> ratio;  // per child slot, per state
  for (int v : upward_order(t)) {
    const auto& kids = t.children[static_cast<size_t>(v)];
    const int n = static_cast<int>(kids.size());
    if (n == 0) {
      for (int s = 0; s < N; ++s)
        q[static_cast<size_t>(s)] = emission_density(m, s, obs[static_cast<size_t>(v)]) *
                                    marginals[static_cast<size_t>(v)][static_cast<size_t>(s)];
    } else {
      ratio.assign(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(N), 0.0));
      for (int i = 0; i < n; ++i) {
        const int c = kids[static_cast<size_t>(i)];
        for (int s = 0; s < N; ++s)
          ratio[static_cast<size_t>(i)][static_cast<size_t>(s)] =
              detail::scaled_ratio(res.beta[static_cast<size_t>(c)][static_cast<size_t>(s)],
                                   marginals[static_cast<size_t>(c)][static_cast<size_t>(s)], c, s);
      }
      const auto& tensor = m.tensor_for(n);
      const int tuples = tensor.tuple_count();
      for (int s = 0; s < N; ++s) {
        double sum = 0.0;
        for (int tup = 0; tup < tuples; ++tup) {
          if (counter) ++counter->tuple_ops;
          const double a = tensor.at(s, tup);
          if (a == 0.0) continue;
          tuple_unpack(tup, n, N, digits);
          double prod = a;
          for (int i = 0; i < n; ++i)
            prod *= ratio[static_cast<size_t>(i)][static_cast<size_t>(digits[static_cast<size_t>(i)])];
          sum += prod;
        }
        q[static_cast<size_t>(s)] = emission_density(m, s, obs[static_cast<size_t>(v)]) *
                                    marginals[static_cast<size_t>(v)][static_cast<size_t>(s)] * sum;
      }
    }

    double norm = 0.0;
    for (int s = 0; s < N; ++s) norm += q[static_cast<size_t>(s)];
    if (norm <= 0.0)
      throw Error(errc::impossible_observation,
                  "node " + std::to_string(v) + ": observed data has probability 0 under the model",
                  v);
    for (int s = 0; s < N; ++s)
      res.beta[static_cast<size_t>(v)][static_cast<size_t>(s)] = q[static_cast<size_t>(s)] / norm;
    res.node_log_normalizer[static_cast<size_t>(v)] = std::log(norm);
  }
  return res;
}

// Log-likelihood as the sum of the per-node log normalizers; the per-subtree
// likelihoods telescope across the tree. Returns -inf for data the model
// assigns probability zero.
inline double log_likelihood_scaled(const HmtModel& m, const Tree& t,
                                    const std::vector<Observation>& obs) {
  try {
    const ScaledBackwardResult b = backward_scaled(m, t, obs, state_marginals(m, t));
    double sum = 0.0;
    for (double v : b.node_log_normalizer) sum += v;
    return sum;
  } catch (const Error& e) {
    if (e.code() == errc::impossible_observation)
      return -std::numeric_limits<double>::infinity();
    throw;
  }
}

inline double log_likelihood_scaled(const HmtModel& m, const Forest& forest) {
  double total = 0.0;
  for (const auto& td : forest.trees) total += log_likelihood_scaled(m, td.tree, td.obs);
  return total;
}

struct ScaledForwardResult {
  StateTable alpha;
  StateTable gamma;  // alpha * beta, rows sum to 1
};

// Scaled downward pass. For each interior parent p and parent state rho0 we
// form the tuple sum D(rho0) over all children's beta/marginal ratios and,
// per child slot j, the partial sums S_j(rho0, s) that fix slot j to state s.
// Then
//   alpha_c(s) = 1/P(h(c)=s) * sum_rho0 S_j(rho0,s)/D(rho0) * alpha_p * beta_p
// and gamma = alpha * beta throughout, with gamma at the root equal to beta.
inline ScaledForwardResult forward_scaled(const HmtModel& m, const Tree& t,
                                          const std::vector<Observation>& obs,
                                          const StateTable& beta, const StateTable& marginals) {
  (void)obs;  // observations enter only through beta
  const int N = m.state_count;
  ScaledForwardResult res;
  res.alpha = detail::zero_table(t.node_count(), N);
  res.gamma = detail::zero_table(t.node_count(), N);
  for (int s = 0; s < N; ++s) {
    res.alpha[static_cast<size_t>(t.root)][static_cast<size_t>(s)] = 1.0;
    res.gamma[static_cast<size_t>(t.root)][static_cast<size_t>(s)] =
        beta[static_cast<size_t>(t.root)][static_cast<size_t>(s)];
  }

  std::vector<int> digits;
  std::vector<double> x, pre, loo;
  std::vector<std::vector<double>> ratio;
  for (int p : downward_order(t)) {
    const auto& kids = t.children[static_cast<size_t>(p)];
    if (kids.empty()) continue;
    const int n = static_cast<int>(kids.size());
    const auto& tensor = m.tensor_for(n);
    const int tuples = tensor.tuple_count();

    ratio.assign(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(N), 0.0));
    for (int i = 0; i < n; ++i) {
      const int c = kids[static_cast<size_t>(i)];
      for (int s = 0; s < N; ++s)
        ratio[static_cast<size_t>(i)][static_cast<size_t>(s)] =
            detail::scaled_ratio(beta[static_cast<size_t>(c)][static_cast<size_t>(s)],
                                 marginals[static_cast<size_t>(c)][static_cast<size_t>(s)], c, s);
    }

    for (int rho0 = 0; rho0 < N; ++rho0) {
      const double parent_weight = res.alpha[static_cast<size_t>(p)][static_cast<size_t>(rho0)] *
                                   beta[static_cast<size_t>(p)][static_cast<size_t>(rho0)];
      if (parent_weight == 0.0) continue;
      double d = 0.0;
      std::vector<std::vector<double>> s_slot(
          static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(N), 0.0));
      for (int tup = 0; tup < tuples; ++tup) {
        const double a = tensor.at(rho0, tup);
        if (a == 0.0) continue;
        tuple_unpack(tup, n, N, digits);
        x.assign(static_cast<size_t>(n), 0.0);
        for (int i = 0; i < n; ++i)
          x[static_cast<size_t>(i)] =
              ratio[static_cast<size_t>(i)][static_cast<size_t>(digits[static_cast<size_t>(i)])];
        detail::leave_one_out(x, pre, loo);
        d += a * pre[static_cast<size_t>(n)];
        for (int j = 0; j < n; ++j)
          s_slot[static_cast<size_t>(j)][static_cast<size_t>(digits[static_cast<size_t>(j)])] +=
              a * loo[static_cast<size_t>(j)];
      }
      // beta_p(rho0) > 0 implies d > 0 (the same tuple sum is a factor of
      // beta_p's numerator); the guard covers subnormal flush in the
      // recomputed product order.
      if (d == 0.0) continue;
      const double scale = parent_weight / d;
      for (int j = 0; j < n; ++j) {
        const int c = kids[static_cast<size_t>(j)];
        for (int s = 0; s < N; ++s)
          res.alpha[static_cast<size_t>(c)][static_cast<size_t>(s)] +=
              scale * s_slot[static_cast<size_t>(j)][static_cast<size_t>(s)];
      }
    }

    for (int j = 0; j < n; ++j) {
      const int c = kids[static_cast<size_t>(j)];
      for (int s = 0; s < N; ++s) {
        double& av = res.alpha[static_cast<size_t>(c)][static_cast<size_t>(s)];
        const double pm = marginals[static_cast<size_t>(c)][static_cast<size_t>(s)];
        if (pm > 0.0)
          av /= pm;
        else if (av != 0.0)
          throw Error(errc::zero_marginal_division,
                      "node " + std::to_string(c) + ", state " + std::to_string(s) +
                          ": forward mass on a state with zero prior marginal",
                      c, s);
        res.gamma[static_cast<size_t>(c)][static_cast<size_t>(s)] =
            av * beta[static_cast<size_t>(c)][static_cast<size_t>(s)];
      }
    }
  }
  return res;
}

// Joint posterior of (parent state, child tuple) per interior node, laid out
// like a tensor row block: [rho * tuple_count + tuple]. Entries of one node
// sum to 1; summing a rho block over tuples gives gamma[C][rho].
inline std::vector<std::vector<double>> xi_scaled(const HmtModel& m, const Tree& t,
                                                  const std::vector<Observation>& obs,
                                                  const StateTable& alpha, const StateTable& beta,
                                                  const StateTable& marginals) {
  const int N = m.state_count;
  std::vector<std::vector<double>> xi(static_cast<size_t>(t.node_count()));
  std::vector<int> digits;
  for (int v = 0; v < t.node_count(); ++v) {
    const auto& kids = t.children[static_cast<size_t>(v)];
    if (kids.empty()) continue;
    const int n = static_cast<int>(kids.size());
    const auto& tensor = m.tensor_for(n);
    const int tuples = tensor.tuple_count();
    auto& row = xi[static_cast<size_t>(v)];
    row.assign(static_cast<size_t>(N) * static_cast<size_t>(tuples), 0.0);

    double total = 0.0;
    for (int rho = 0; rho < N; ++rho) {
      const double w = alpha[static_cast<size_t>(v)][static_cast<size_t>(rho)] *
                       marginals[static_cast<size_t>(v)][static_cast<size_t>(rho)] *
                       emission_density(m, rho, obs[static_cast<size_t>(v)]);
      if (w == 0.0) continue;
      for (int tup = 0; tup < tuples; ++tup) {
        const double a = tensor.at(rho, tup);
        if (a == 0.0) continue;
        tuple_unpack(tup, n, N, digits);
        double prod = w * a;
        for (int i = 0; i < n; ++i) {
          const int c = kids[static_cast<size_t>(i)];
          prod *= detail::scaled_ratio(
              beta[static_cast<size_t>(c)][static_cast<size_t>(digits[static_cast<size_t>(i)])],
              marginals[static_cast<size_t>(c)][static_cast<size_t>(digits[static_cast<size_t>(i)])],
              c, digits[static_cast<size_t>(i)]);
        }
        row[static_cast<size_t>(rho * tuples + tup)] = prod;
        total += prod;
      }
    }
    if (total <= 0.0)
      throw Error(errc::impossible_observation,
                  "node " + std::to_string(v) + ": no parent/children configuration has mass", v);
    for (double& e : row) e /= total;
  }
  return xi;
}

inline UnscaledPasses run_unscaled_passes(const HmtModel& m, const Tree& t,
                                          const std::vector<Observation>& obs) {
  UnscaledPasses p;
  p.beta_tilde = backward_unscaled(m, t, obs);
  p.alpha_tilde = forward_unscaled(m, t, obs, p.beta_tilde);
  return p;
}

inline ScaledPasses run_scaled_passes(const HmtModel& m, const Tree& t,
                                      const std::vector<Observation>& obs) {
  ScaledPasses p;
  p.marginals = state_marginals(m, t);
  ScaledBackwardResult b = backward_scaled(m, t, obs, p.marginals);
  p.beta = std::move(b.beta);
  p.node_log_normalizer = std::move(b.node_log_normalizer);
  p.log_likelihood = 0.0;
  for (double v : p.node_log_normalizer) p.log_likelihood += v;
  ScaledForwardResult f = forward_scaled(m, t, obs, p.beta, p.marginals);
  p.alpha = std::move(f.alpha);
  p.gamma = std::move(f.gamma);
  return p;
}

inline Posteriors compute_posteriors(const HmtModel& m, const Tree& t,
                                     const std::vector<Observation>& obs) {
  const ScaledPasses p = run_scaled_passes(m, t, obs);
  Posteriors out;
  out.gamma = p.gamma;
  out.xi = xi_scaled(m, t, obs, p.alpha, p.beta, p.marginals);
  return out;
}

}  // namespace hmt
