#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hmt/error.hpp"
#include "hmt/learning.hpp"
#include "hmt/model.hpp"
#include "hmt/selfcheck.hpp"
#include "hmt/tree.hpp"

namespace hmt {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Forest files: a JSON array of trees, each
//   {"kind": "scalar"|"categorical", "parents": [null, 0, ...],
//    "observations": [...]}.
// ---------------------------------------------------------------------------

inline json forest_to_json(const Forest& forest) {
  json out = json::array();
  for (const auto& td : forest.trees) {
    json tree;
    tree["kind"] = forest.kind == ObsKind::scalar ? "scalar" : "categorical";
    json parents = json::array();
    for (int v = 0; v < td.tree.node_count(); ++v) {
      const int p = td.tree.parent[static_cast<size_t>(v)];
      if (p < 0)
        parents.push_back(nullptr);
      else
        parents.push_back(p);
    }
    tree["parents"] = std::move(parents);
    json obs = json::array();
    for (const auto& o : td.obs) {
      if (forest.kind == ObsKind::scalar)
        obs.push_back(o.value);
      else
        obs.push_back(o.symbol);
    }
    tree["observations"] = std::move(obs);
    out.push_back(std::move(tree));
  }
  return out;
}

inline Forest forest_from_json(const json& j) {
  if (!j.is_array() || j.empty())
    throw Error(errc::invalid_forest, "forest file must be a non-empty array of trees");
  std::vector<TreeData> trees;
  ObsKind kind = ObsKind::scalar;
  for (size_t k = 0; k < j.size(); ++k) {
    const json& tj = j[k];
    const std::string where = "tree " + std::to_string(k);
    if (!tj.contains("parents") || !tj.contains("observations") || !tj.contains("kind"))
      throw Error(errc::io_error, where + ": needs \"kind\", \"parents\", \"observations\"");
    const std::string kind_str = tj["kind"].get<std::string>();
    ObsKind tree_kind;
    if (kind_str == "scalar")
      tree_kind = ObsKind::scalar;
    else if (kind_str == "categorical")
      tree_kind = ObsKind::categorical;
    else
      throw Error(errc::io_error, where + ": unknown kind \"" + kind_str + "\"");
    if (k == 0)
      kind = tree_kind;
    else if (tree_kind != kind)
      throw Error(errc::kind_mismatch, where + ": forest mixes observation kinds");

    std::vector<std::optional<int>> parents;
    for (const json& p : tj["parents"]) {
      if (p.is_null())
        parents.push_back(std::nullopt);
      else
        parents.push_back(p.get<int>());
    }
    TreeData td;
    td.tree = build_tree(parents);
    for (const json& o : tj["observations"]) {
      if (kind == ObsKind::scalar) {
        td.obs.push_back(Observation::scalar(o.get<double>()));
      } else {
        if (!o.is_number_unsigned())
          throw Error(errc::io_error, where + ": categorical symbols must be non-negative integers");
        td.obs.push_back(Observation::categorical(o.get<int>()));
      }
    }
    trees.push_back(std::move(td));
  }
  return make_forest(std::move(trees));
}

// ---------------------------------------------------------------------------
// Model files:
//   {"N": 2, "pi": [...],
//    "transitions": {"2": [[...flat row per parent state...]]},
//    "emission": {"type": "gaussian", "means": [...], "stds": [...]}
//              | {"type": "categorical", "probs": [[...]]}}
// Flat rows are lexicographic in the child tuple, child 1 most significant.
// ---------------------------------------------------------------------------

inline json model_to_json(const HmtModel& m) {
  json out;
  out["N"] = m.state_count;
  out["pi"] = m.pi;
  json trans = json::object();
  for (const auto& [n, tensor] : m.transitions) {
    json rows = json::array();
    const int tuples = tensor.tuple_count();
    for (int p = 0; p < tensor.state_count; ++p) {
      json row = json::array();
      for (int tup = 0; tup < tuples; ++tup) row.push_back(tensor.at(p, tup));
      rows.push_back(std::move(row));
    }
    trans[std::to_string(n)] = std::move(rows);
  }
  out["transitions"] = std::move(trans);
  json em;
  if (const auto* cat = std::get_if<CategoricalEmission>(&m.emission)) {
    em["type"] = "categorical";
    em["probs"] = cat->probs;
  } else {
    const auto& g = std::get<GaussianEmission>(m.emission);
    em["type"] = "gaussian";
    em["means"] = g.means;
    em["stds"] = g.stds;
  }
  out["emission"] = std::move(em);
  return out;
}

inline HmtModel model_from_json(const json& j) {
  HmtModel m;
  if (!j.contains("N") || !j.contains("pi") || !j.contains("transitions") ||
      !j.contains("emission"))
    throw Error(errc::io_error, "model file needs \"N\", \"pi\", \"transitions\", \"emission\"");
  m.state_count = j["N"].get<int>();
  m.pi = j["pi"].get<std::vector<double>>();
  for (const auto& [key, rows] : j["transitions"].items()) {
    int n = 0;
    try {
      n = std::stoi(key);
    } catch (...) {
      throw Error(errc::io_error, "transitions key \"" + key + "\" is not a branching factor");
    }
    TransitionTensor tensor(m.state_count, n);
    const int tuples = tensor.tuple_count();
    if (static_cast<int>(rows.size()) != m.state_count)
      throw Error(errc::dimension_mismatch,
                  "transitions[" + key + "]: need one row per parent state");
    for (int p = 0; p < m.state_count; ++p) {
      const auto row = rows[static_cast<size_t>(p)].get<std::vector<double>>();
      if (static_cast<int>(row.size()) != tuples)
        throw Error(errc::dimension_mismatch,
                    "transitions[" + key + "] row " + std::to_string(p) + ": expected " +
                        std::to_string(tuples) + " entries, got " + std::to_string(row.size()));
      for (int tup = 0; tup < tuples; ++tup) tensor.at(p, tup) = row[static_cast<size_t>(tup)];
    }
    m.transitions[n] = std::move(tensor);
  }
  const json& em = j["emission"];
  const std::string type = em.at("type").get<std::string>();
  if (type == "categorical") {
    CategoricalEmission cat;
    cat.probs = em.at("probs").get<std::vector<std::vector<double>>>();
    m.emission = std::move(cat);
  } else if (type == "gaussian") {
    GaussianEmission g;
    g.means = em.at("means").get<std::vector<double>>();
    g.stds = em.at("stds").get<std::vector<double>>();
    m.emission = std::move(g);
  } else {
    throw Error(errc::io_error, "unknown emission type \"" + type + "\"");
  }
  return m;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::io_error, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(errc::io_error, path + ": " + e.what());
  }
  return j;
}

inline void save_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(errc::io_error, "cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

inline Forest load_forest(const std::string& path) { return forest_from_json(load_json_file(path)); }
inline void save_forest(const std::string& path, const Forest& f) {
  save_json_file(path, forest_to_json(f));
}
inline HmtModel load_model(const std::string& path) {
  HmtModel m = model_from_json(load_json_file(path));
  require_valid(m);
  return m;
}
inline void save_model(const std::string& path, const HmtModel& m) {
  save_json_file(path, model_to_json(m));
}

// ---------------------------------------------------------------------------
// CSV output. Doubles are printed with 17 significant digits so written
// values reload exactly.
// ---------------------------------------------------------------------------

inline std::string csv_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Flat parameter listing used by the learn trace; names are CSV-safe.
inline std::vector<std::pair<std::string, double>> param_rows(const HmtModel& m) {
  std::vector<std::pair<std::string, double>> rows;
  for (size_t s = 0; s < m.pi.size(); ++s)
    rows.emplace_back("pi[" + std::to_string(s) + "]", m.pi[s]);
  std::vector<int> digits;
  for (const auto& [n, tensor] : m.transitions)
    for (int p = 0; p < tensor.state_count; ++p)
      for (int tup = 0; tup < tensor.tuple_count(); ++tup) {
        tuple_unpack(tup, n, tensor.state_count, digits);
        std::string name = "a" + std::to_string(n) + "[" + std::to_string(p) + "][";
        for (size_t i = 0; i < digits.size(); ++i) {
          if (i) name += '-';
          name += std::to_string(digits[i]);
        }
        name += ']';
        rows.emplace_back(std::move(name), tensor.at(p, tup));
      }
  if (const auto* cat = std::get_if<CategoricalEmission>(&m.emission)) {
    for (size_t s = 0; s < cat->probs.size(); ++s)
      for (size_t v = 0; v < cat->probs[s].size(); ++v)
        rows.emplace_back("b[" + std::to_string(s) + "][" + std::to_string(v) + "]",
                          cat->probs[s][v]);
  } else {
    const auto& g = std::get<GaussianEmission>(m.emission);
    for (size_t s = 0; s < g.means.size(); ++s)
      rows.emplace_back("mean[" + std::to_string(s) + "]", g.means[s]);
    for (size_t s = 0; s < g.stds.size(); ++s)
      rows.emplace_back("std[" + std::to_string(s) + "]", g.stds[s]);
  }
  return rows;
}

inline void write_likelihood_csv(std::ostream& os, const std::vector<double>& per_tree) {
  os << "tree_index,log_likelihood\n";
  double total = 0.0;
  for (size_t i = 0; i < per_tree.size(); ++i) {
    os << i << ',' << csv_double(per_tree[i]) << '\n';
    total += per_tree[i];
  }
  os << "total," << csv_double(total) << '\n';
}

inline void write_decode_csv(std::ostream& os, const std::vector<std::vector<int>>& states,
                             const std::vector<double>& log_scores) {
  os << "tree_index,node_id,state,log_score\n";
  for (size_t k = 0; k < states.size(); ++k)
    for (size_t v = 0; v < states[k].size(); ++v)
      os << k << ',' << v << ',' << states[k][v] << ',' << csv_double(log_scores[k]) << '\n';
}

inline void write_trace_csv(std::ostream& os, const FitTrace& trace) {
  os << "iteration,log_likelihood,param_name,value\n";
  for (size_t it = 0; it < trace.iterations.size(); ++it)
    for (const auto& [name, value] : param_rows(trace.iterations[it].model))
      os << it << ',' << csv_double(trace.iterations[it].log_likelihood) << ',' << name << ','
         << csv_double(value) << '\n';
}

inline void write_selfcheck_csv(std::ostream& os, const SelfCheckReport& report) {
  os << "m,n,pair_count,r_data,r_sim,abs_diff\n";
  for (const auto& row : report.rows) {
    os << row.m << ',' << row.n << ',' << row.pair_count_data << ',';
    if (row.comparable)
      os << csv_double(row.r_data) << ',' << csv_double(row.r_sim) << ','
         << csv_double(row.abs_diff) << '\n';
    else
      os << "undefined,undefined,undefined\n";
  }
}

inline void write_hidden_csv(std::ostream& os, const std::vector<std::vector<int>>& hidden) {
  os << "tree_index,node_id,state\n";
  for (size_t k = 0; k < hidden.size(); ++k)
    for (size_t v = 0; v < hidden[k].size(); ++v)
      os << k << ',' << v << ',' << hidden[k][v] << '\n';
}

// FNV-1a over the file bytes; recorded in run manifests so inputs can be
// matched to outputs later.
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::io_error, "cannot open " + path);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ULL;
    }
    if (!in) break;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace hmt
