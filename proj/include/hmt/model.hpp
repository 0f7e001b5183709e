#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "hmt/error.hpp"
#include "hmt/tree.hpp"

namespace hmt {

inline constexpr double kStochasticTolerance = 1e-12;

// Number of child-state tuples N^n, guarded against overflow.
inline int tuple_count_for(int state_count, int branching) {
  std::int64_t c = 1;
  for (int i = 0; i < branching; ++i) {
    c *= state_count;
    if (c > (std::int64_t{1} << 30))
      throw Error(errc::dimension_mismatch,
                  "tuple space too large: N=" + std::to_string(state_count) +
                      ", n=" + std::to_string(branching));
  }
  return static_cast<int>(c);
}

// Tuples are indexed lexicographically: child 1 is the most significant
// digit, so (mu_1..mu_n) -> sum_i mu_i * N^(n-i).
inline int tuple_pack(const std::vector<int>& states, int state_count) {
  int idx = 0;
  for (int s : states) idx = idx * state_count + s;
  return idx;
}

inline void tuple_unpack(int index, int branching, int state_count, std::vector<int>& out) {
  out.assign(static_cast<size_t>(branching), 0);
  for (int i = branching - 1; i >= 0; --i) {
    out[static_cast<size_t>(i)] = index % state_count;
    index /= state_count;
  }
}

// Joint distribution of an ordered child-state tuple given the parent state,
// one tensor per branching factor. Rows need not factorize across children;
// that coupling is the whole point.
struct TransitionTensor {
  int state_count = 0;
  int branching = 0;
  std::vector<double> rows;  // [parent * tuple_count() + tuple]

  TransitionTensor() = default;
  TransitionTensor(int states, int n)
      : state_count(states),
        branching(n),
        rows(static_cast<size_t>(states) * static_cast<size_t>(tuple_count_for(states, n)), 0.0) {}

  int tuple_count() const { return tuple_count_for(state_count, branching); }
  double at(int parent_state, int tuple) const {
    return rows[static_cast<size_t>(parent_state) * static_cast<size_t>(tuple_count()) +
                static_cast<size_t>(tuple)];
  }
  double& at(int parent_state, int tuple) {
    return rows[static_cast<size_t>(parent_state) * static_cast<size_t>(tuple_count()) +
                static_cast<size_t>(tuple)];
  }
};

struct CategoricalEmission {
  std::vector<std::vector<double>> probs;  // [state][symbol]
  int alphabet_size() const { return probs.empty() ? 0 : static_cast<int>(probs[0].size()); }
};

struct GaussianEmission {
  std::vector<double> means;
  std::vector<double> stds;
};

using Emission = std::variant<CategoricalEmission, GaussianEmission>;

inline ObsKind emission_kind(const Emission& e) {
  return std::holds_alternative<CategoricalEmission>(e) ? ObsKind::categorical : ObsKind::scalar;
}

// The full parameter triple: root distribution, transition tensors keyed by
// branching factor, and the per-state emission law.
struct HmtModel {
  int state_count = 0;
  std::vector<double> pi;
  std::map<int, TransitionTensor> transitions;
  Emission emission;

  const TransitionTensor& tensor_for(int branching) const {
    auto it = transitions.find(branching);
    if (it == transitions.end())
      throw Error(errc::missing_tensor_for_branching_factor,
                  "no transition tensor for branching factor " + std::to_string(branching));
    return it->second;
  }
};

struct Violation {
  std::string where;
  std::string what;
};

// Collects every constraint violation; an empty result means the model is
// valid. Violations are data, not exceptions.
inline std::vector<Violation> validate(const HmtModel& m) {
  std::vector<Violation> out;
  auto check_row = [&](const std::string& where, const std::vector<double>& row) {
    double sum = 0.0;
    for (size_t i = 0; i < row.size(); ++i) {
      if (!std::isfinite(row[i]))
        out.push_back({where + "[" + std::to_string(i) + "]", "non-finite entry"});
      else if (row[i] < 0.0)
        out.push_back({where + "[" + std::to_string(i) + "]", "negative entry"});
      sum += row[i];
    }
    if (std::abs(sum - 1.0) > kStochasticTolerance)
      out.push_back({where, "row sums to " + std::to_string(sum) + ", not 1"});
  };

  if (m.state_count <= 0) out.push_back({"state_count", "must be positive"});
  if (static_cast<int>(m.pi.size()) != m.state_count)
    out.push_back({"pi", "length " + std::to_string(m.pi.size()) + " != N"});
  else
    check_row("pi", m.pi);

  for (const auto& [n, tensor] : m.transitions) {
    const std::string tag = "a" + std::to_string(n);
    if (n <= 0) {
      out.push_back({tag, "branching factor must be positive"});
      continue;
    }
    if (tensor.state_count != m.state_count || tensor.branching != n) {
      out.push_back({tag, "tensor dimensions do not match the model"});
      continue;
    }
    const int tuples = tensor.tuple_count();
    if (tensor.rows.size() !=
        static_cast<size_t>(m.state_count) * static_cast<size_t>(tuples)) {
      out.push_back({tag, "flat storage has the wrong size"});
      continue;
    }
    for (int p = 0; p < m.state_count; ++p) {
      std::vector<double> row(tensor.rows.begin() + static_cast<long>(p) * tuples,
                              tensor.rows.begin() + static_cast<long>(p + 1) * tuples);
      check_row(tag + "[" + std::to_string(p) + "]", row);
    }
  }

  if (const auto* cat = std::get_if<CategoricalEmission>(&m.emission)) {
    if (static_cast<int>(cat->probs.size()) != m.state_count)
      out.push_back({"emission", "needs one symbol row per state"});
    for (size_t s = 0; s < cat->probs.size(); ++s) {
      if (cat->probs[s].size() != cat->probs[0].size())
        out.push_back({"emission[" + std::to_string(s) + "]", "ragged alphabet"});
      check_row("emission[" + std::to_string(s) + "]", cat->probs[s]);
    }
  } else {
    const auto& g = std::get<GaussianEmission>(m.emission);
    if (static_cast<int>(g.means.size()) != m.state_count ||
        static_cast<int>(g.stds.size()) != m.state_count)
      out.push_back({"emission", "needs one mean and std per state"});
    for (size_t s = 0; s < g.stds.size(); ++s) {
      if (!std::isfinite(g.stds[s]) || g.stds[s] <= 0.0)
        out.push_back({"emission.std[" + std::to_string(s) + "]", "must be positive"});
      if (s < g.means.size() && !std::isfinite(g.means[s]))
        out.push_back({"emission.mean[" + std::to_string(s) + "]", "non-finite"});
    }
  }
  return out;
}

inline void require_valid(const HmtModel& m) {
  const auto violations = validate(m);
  if (!violations.empty())
    throw Error(errc::invalid_model,
                violations.front().where + ": " + violations.front().what +
                    (violations.size() > 1
                         ? " (+" + std::to_string(violations.size() - 1) + " more)"
                         : ""));
}

// Probability mass (categorical) or density value (Gaussian; may exceed 1).
inline double emission_density(const HmtModel& m, int state, const Observation& obs) {
  if (emission_kind(m.emission) != obs.kind)
    throw Error(errc::kind_mismatch, "observation kind does not match the emission family");
  if (const auto* cat = std::get_if<CategoricalEmission>(&m.emission)) {
    const auto& row = cat->probs[static_cast<size_t>(state)];
    if (obs.symbol < 0 || obs.symbol >= static_cast<int>(row.size())) return 0.0;
    return row[static_cast<size_t>(obs.symbol)];
  }
  const auto& g = std::get<GaussianEmission>(m.emission);
  const double sd = g.stds[static_cast<size_t>(state)];
  const double z = (obs.value - g.means[static_cast<size_t>(state)]) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

// Sum of tensor entries over all tuples whose child_index-th slot is
// child_state: the per-branch marginal P(child i = mu | parent).
inline double child_tuple_marginal(const TransitionTensor& t, int parent_state, int child_index,
                                   int child_state) {
  const int n = t.branching;
  const int N = t.state_count;
  // Stride of the child_index-th digit in the lexicographic tuple index.
  int stride = 1;
  for (int i = child_index + 1; i < n; ++i) stride *= N;
  const int block = stride * N;
  const int tuples = t.tuple_count();
  double sum = 0.0;
  for (int base = 0; base < tuples; base += block)
    for (int low = 0; low < stride; ++low)
      sum += t.at(parent_state, base + child_state * stride + low);
  return sum;
}

// Product tensor built from independent per-child transition matrices; the
// uncoupled special case.
inline TransitionTensor factorized_tensor(
    const std::vector<std::vector<std::vector<double>>>& per_child_matrices) {
  if (per_child_matrices.empty())
    throw Error(errc::dimension_mismatch, "need at least one child matrix");
  const int n = static_cast<int>(per_child_matrices.size());
  const size_t N = per_child_matrices[0].size();
  for (const auto& mat : per_child_matrices) {
    if (mat.size() != N)
      throw Error(errc::dimension_mismatch, "child matrices disagree on state count");
    for (const auto& row : mat)
      if (row.size() != N)
        throw Error(errc::dimension_mismatch, "child matrix is not square");
  }
  TransitionTensor t(static_cast<int>(N), n);
  std::vector<int> digits;
  for (int p = 0; p < static_cast<int>(N); ++p)
    for (int tup = 0; tup < t.tuple_count(); ++tup) {
      tuple_unpack(tup, n, static_cast<int>(N), digits);
      double prod = 1.0;
      for (int i = 0; i < n; ++i)
        prod *= per_child_matrices[static_cast<size_t>(i)][static_cast<size_t>(p)]
                                  [static_cast<size_t>(digits[static_cast<size_t>(i)])];
      t.at(p, tup) = prod;
    }
  return t;
}

// Explicit repair: rescales every distribution row to sum 1. Validation never
// renormalizes silently.
inline TransitionTensor renormalized(TransitionTensor t) {
  const int tuples = t.tuple_count();
  for (int p = 0; p < t.state_count; ++p) {
    double sum = 0.0;
    for (int tup = 0; tup < tuples; ++tup) sum += t.at(p, tup);
    if (sum > 0.0)
      for (int tup = 0; tup < tuples; ++tup) t.at(p, tup) /= sum;
  }
  return t;
}

inline HmtModel renormalized(HmtModel m) {
  double psum = 0.0;
  for (double v : m.pi) psum += v;
  if (psum > 0.0)
    for (double& v : m.pi) v /= psum;
  for (auto& [n, tensor] : m.transitions) tensor = renormalized(std::move(tensor));
  if (auto* cat = std::get_if<CategoricalEmission>(&m.emission)) {
    for (auto& row : cat->probs) {
      double sum = 0.0;
      for (double v : row) sum += v;
      if (sum > 0.0)
        for (double& v : row) v /= sum;
    }
  }
  return m;
}

// Relabels hidden states: state s becomes perm[s]. Tensors are remapped on
// both the parent axis and every child digit.
inline HmtModel permute_states(const HmtModel& m, const std::vector<int>& perm) {
  const int N = m.state_count;
  HmtModel out = m;
  for (int s = 0; s < N; ++s) out.pi[static_cast<size_t>(perm[static_cast<size_t>(s)])] = m.pi[static_cast<size_t>(s)];
  std::vector<int> digits;
  for (const auto& [n, tensor] : m.transitions) {
    TransitionTensor& dst = out.transitions[n];
    for (int p = 0; p < N; ++p)
      for (int tup = 0; tup < tensor.tuple_count(); ++tup) {
        tuple_unpack(tup, n, N, digits);
        for (int& d : digits) d = perm[static_cast<size_t>(d)];
        dst.at(perm[static_cast<size_t>(p)], tuple_pack(digits, N)) = tensor.at(p, tup);
      }
  }
  if (const auto* cat = std::get_if<CategoricalEmission>(&m.emission)) {
    auto& dst = std::get<CategoricalEmission>(out.emission);
    for (int s = 0; s < N; ++s) dst.probs[static_cast<size_t>(perm[static_cast<size_t>(s)])] = cat->probs[static_cast<size_t>(s)];
  } else {
    const auto& g = std::get<GaussianEmission>(m.emission);
    auto& dst = std::get<GaussianEmission>(out.emission);
    for (int s = 0; s < N; ++s) {
      dst.means[static_cast<size_t>(perm[static_cast<size_t>(s)])] = g.means[static_cast<size_t>(s)];
      dst.stds[static_cast<size_t>(perm[static_cast<size_t>(s)])] = g.stds[static_cast<size_t>(s)];
    }
  }
  return out;
}

}  // namespace hmt
