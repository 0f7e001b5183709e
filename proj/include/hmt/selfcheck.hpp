#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "hmt/error.hpp"
#include "hmt/model.hpp"
#include "hmt/simulate.hpp"
#include "hmt/tree.hpp"

namespace hmt {

struct BinStats {
  std::size_t pair_count = 0;
  double r = 0.0;
  bool defined = false;  // false when a margin has zero variance
};

// Keyed by canonical lineage distance (m, n) with m <= n.
using LineageCorrelations = std::map<std::pair<int, int>, BinStats>;

// Pearson correlation of observation pairs pooled across trees, binned by the
// lineage distance of the node pair. Each unordered pair enters with the
// smaller-distance node first and once more swapped, which makes the estimate
// symmetric. Bins with fewer than two pairs are dropped.
inline LineageCorrelations lineage_correlations(const Forest& forest, int max_distance) {
  if (forest.kind != ObsKind::scalar)
    throw Error(errc::kind_mismatch, "correlations need scalar observations");
  if (max_distance < 1)
    throw Error(errc::invalid_forest, "max_distance must be at least 1");

  struct Moments {
    std::size_t pairs = 0;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  };
  std::map<std::pair<int, int>, Moments> acc;

  for (const auto& td : forest.trees) {
    const int n_nodes = td.tree.node_count();
    for (int u = 0; u < n_nodes; ++u)
      for (int v = u + 1; v < n_nodes; ++v) {
        auto [m, n] = lineage_distance(td.tree, u, v);
        if (n > max_distance) continue;
        // Put the node closer to the common ancestor first.
        const int du = td.tree.depth[static_cast<size_t>(u)];
        const int dv = td.tree.depth[static_cast<size_t>(v)];
        const double xu = td.obs[static_cast<size_t>(u)].value;
        const double xv = td.obs[static_cast<size_t>(v)].value;
        const double x = du <= dv ? xu : xv;
        const double y = du <= dv ? xv : xu;
        Moments& mo = acc[{m, n}];
        ++mo.pairs;
        mo.sx += x + y;
        mo.sy += y + x;
        mo.sxx += x * x + y * y;
        mo.syy += y * y + x * x;
        mo.sxy += 2.0 * x * y;
      }
  }

  LineageCorrelations out;
  for (const auto& [key, mo] : acc) {
    if (mo.pairs < 2) continue;
    BinStats b;
    b.pair_count = mo.pairs;
    const double cnt = 2.0 * static_cast<double>(mo.pairs);  // symmetrized samples
    const double vx = mo.sxx - mo.sx * mo.sx / cnt;
    const double vy = mo.syy - mo.sy * mo.sy / cnt;
    const double cxy = mo.sxy - mo.sx * mo.sy / cnt;
    if (vx > 0.0 && vy > 0.0) {
      b.r = cxy / std::sqrt(vx * vy);
      b.defined = true;
    }
    out[key] = b;
  }
  return out;
}

struct SelfCheckConfig {
  std::uint64_t seed = 0;
  int max_distance = 4;
  double threshold = 0.1;  // max tolerated |r_data - r_sim| per bin
};

struct SelfCheckRow {
  int m = 0, n = 0;
  std::size_t pair_count_data = 0, pair_count_sim = 0;
  double r_data = 0.0, r_sim = 0.0, abs_diff = 0.0;
  bool comparable = false;  // both sides defined in this bin
};

struct SelfCheckReport {
  std::vector<SelfCheckRow> rows;
  bool pass = false;
  double threshold = 0.0;
};

// Simulates a forest from the fitted model on the data's own tree shapes and
// compares lineage-binned correlations side by side. Passes iff every
// comparable bin differs by less than the threshold; undefined bins are
// reported but excluded from the verdict.
inline SelfCheckReport self_consistency_report(const Forest& data, const HmtModel& fitted,
                                               const SelfCheckConfig& cfg) {
  require_valid(fitted);
  const Forest sim = sample_on_shapes(fitted, data, cfg.seed).forest;
  const LineageCorrelations cd = lineage_correlations(data, cfg.max_distance);
  const LineageCorrelations cs = lineage_correlations(sim, cfg.max_distance);

  SelfCheckReport report;
  report.threshold = cfg.threshold;
  report.pass = true;
  for (const auto& [key, bd] : cd) {
    SelfCheckRow row;
    row.m = key.first;
    row.n = key.second;
    row.pair_count_data = bd.pair_count;
    row.r_data = bd.r;
    auto it = cs.find(key);
    if (it != cs.end()) {
      row.pair_count_sim = it->second.pair_count;
      row.r_sim = it->second.r;
      row.comparable = bd.defined && it->second.defined;
    }
    if (row.comparable) {
      row.abs_diff = std::abs(row.r_data - row.r_sim);
      if (row.abs_diff >= cfg.threshold) report.pass = false;
    }
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace hmt
