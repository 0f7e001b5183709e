// Command-line front end: simulate, likelihood, decode, learn, selfcheck, and
// a hidden oracle subcommand for debugging. File formats are documented in
// the README; every run writes a manifest next to its primary output.

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hmt/hmt.hpp"

namespace fs = std::filesystem;
using hmt::json;

namespace {

std::string iso_timestamp() {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

// Manifest alongside every output: what ran, with which flags, on which
// inputs. The timestamp is the only field allowed to differ between
// identically seeded runs.
void write_manifest(const std::string& path, const std::string& subcommand, const json& flags,
                    const std::vector<std::string>& input_paths, std::uint64_t seed) {
  json m;
  m["subcommand"] = subcommand;
  m["flags"] = flags;
  json inputs = json::object();
  for (const auto& p : input_paths) inputs[p] = hmt::file_digest(p);
  m["inputs"] = inputs;
  m["seed"] = seed;
  m["version"] = hmt::kVersion;
  m["generated_at"] = iso_timestamp();
  hmt::save_json_file(path, m);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw hmt::Error(hmt::errc::io_error, "cannot open " + path + " for writing");
  out << content;
}

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("HMT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

struct SimulateArgs {
  std::string model_path, out_path;
  int trees = 1, depth = 5, branching = 2;
  std::uint64_t seed = 0;
  bool emit_hidden = false;
};

int run_simulate(const SimulateArgs& a) {
  const hmt::HmtModel model = hmt::load_model(a.model_path);
  hmt::SimConfig cfg;
  cfg.tree_count = a.trees;
  cfg.depth = a.depth;
  cfg.branching = a.branching;
  cfg.seed = a.seed;
  cfg.emit_hidden = a.emit_hidden;
  const hmt::SimulatedForest sim = hmt::sample_forest(model, cfg);
  hmt::save_forest(a.out_path, sim.forest);
  if (a.emit_hidden) {
    std::ostringstream os;
    hmt::write_hidden_csv(os, sim.hidden);
    write_text_file(a.out_path + ".hidden.csv", os.str());
  }
  json flags{{"model", a.model_path}, {"trees", a.trees},          {"depth", a.depth},
             {"branching", a.branching}, {"seed", a.seed},         {"out", a.out_path},
             {"emit-hidden", a.emit_hidden}};
  write_manifest(a.out_path + ".manifest.json", "simulate", flags, {a.model_path}, a.seed);
  return 0;
}

struct DataModelArgs {
  std::string model_path, data_path, out_path;
  int threads = 0;
};

int run_likelihood(const DataModelArgs& a) {
  const hmt::HmtModel model = hmt::load_model(a.model_path);
  const hmt::Forest forest = hmt::load_forest(a.data_path);
  std::vector<double> per_tree(forest.trees.size(), 0.0);
  hmt::parallel_for(forest.trees.size(), resolve_threads(a.threads), [&](std::size_t k) {
    per_tree[k] = hmt::log_likelihood_scaled(model, forest.trees[k].tree, forest.trees[k].obs);
  });
  std::ostringstream os;
  hmt::write_likelihood_csv(os, per_tree);
  if (a.out_path.empty()) {
    std::cout << os.str();
  } else {
    write_text_file(a.out_path, os.str());
    json flags{{"model", a.model_path}, {"data", a.data_path}, {"out", a.out_path}};
    write_manifest(a.out_path + ".manifest.json", "likelihood", flags,
                   {a.model_path, a.data_path}, 0);
  }
  return 0;
}

struct DecodeArgs : DataModelArgs {
  std::string criterion = "map";
};

int run_decode(const DecodeArgs& a) {
  const hmt::HmtModel model = hmt::load_model(a.model_path);
  const hmt::Forest forest = hmt::load_forest(a.data_path);
  std::vector<std::vector<int>> states(forest.trees.size());
  std::vector<double> scores(forest.trees.size(), 0.0);
  hmt::parallel_for(forest.trees.size(), resolve_threads(a.threads), [&](std::size_t k) {
    const auto& td = forest.trees[k];
    if (a.criterion == "map") {
      const hmt::DecodeResult res = hmt::viterbi_decode(model, td.tree, td.obs);
      states[k] = res.states;
      scores[k] = res.log_score;
    } else {
      const hmt::ScaledPasses p = hmt::run_scaled_passes(model, td.tree, td.obs);
      states[k] = hmt::posterior_decode(p.gamma);
      scores[k] = hmt::joint_log_probability(model, td.tree, td.obs, states[k]);
    }
  });
  std::ostringstream os;
  hmt::write_decode_csv(os, states, scores);
  if (a.out_path.empty()) {
    std::cout << os.str();
  } else {
    write_text_file(a.out_path, os.str());
    json flags{{"model", a.model_path},
               {"data", a.data_path},
               {"criterion", a.criterion},
               {"out", a.out_path}};
    write_manifest(a.out_path + ".manifest.json", "decode", flags, {a.model_path, a.data_path},
                   0);
  }
  return 0;
}

struct LearnArgs {
  std::string data_path, out_dir, init = "kmeans";
  int states = 2, max_iters = 500, threads = 0;
  double tol = 1e-6, std_floor = 1e-6;
  std::uint64_t seed = 0;
};

int run_learn(const LearnArgs& a) {
  const hmt::Forest forest = hmt::load_forest(a.data_path);
  hmt::FitConfig cfg;
  cfg.max_iterations = a.max_iters;
  cfg.log_likelihood_tolerance = a.tol;
  cfg.seed = a.seed;
  cfg.states = a.states;
  cfg.std_floor = a.std_floor;
  cfg.threads = resolve_threads(a.threads);
  std::vector<std::string> inputs{a.data_path};
  if (a.init.rfind("file:", 0) == 0) {
    const std::string path = a.init.substr(5);
    cfg.init_model = hmt::load_model(path);
    inputs.push_back(path);
  } else if (a.init != "kmeans") {
    throw CLI::ValidationError("--init", "expected 'kmeans' or 'file:PATH'");
  }

  const hmt::FitTrace trace = hmt::fit(forest, cfg);

  fs::create_directories(a.out_dir);
  const std::string model_path = (fs::path(a.out_dir) / "model.json").string();
  hmt::save_model(model_path, trace.final_model);
  std::ostringstream os;
  hmt::write_trace_csv(os, trace);
  write_text_file((fs::path(a.out_dir) / "trace.csv").string(), os.str());

  json flags{{"data", a.data_path}, {"states", a.states},   {"max-iters", a.max_iters},
             {"tol", a.tol},        {"seed", a.seed},       {"init", a.init},
             {"out", a.out_dir},    {"std-floor", a.std_floor}};
  write_manifest((fs::path(a.out_dir) / "manifest.json").string(), "learn", flags, inputs,
                 a.seed);

  std::cout << "iterations: " << trace.iterations.size() << "\n"
            << "final log-likelihood: " << trace.final_log_likelihood << "\n"
            << "stop: " << trace.stop_reason << "\n";
  for (const auto& w : trace.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

struct SelfCheckArgs {
  std::string data_path, model_path, out_path;
  double threshold = 0.1;
  std::uint64_t seed = 0;
  int max_distance = 4;
};

int run_selfcheck(const SelfCheckArgs& a) {
  const hmt::Forest data = hmt::load_forest(a.data_path);
  const hmt::HmtModel model = hmt::load_model(a.model_path);
  hmt::SelfCheckConfig cfg;
  cfg.seed = a.seed;
  cfg.threshold = a.threshold;
  cfg.max_distance = a.max_distance;
  const hmt::SelfCheckReport report = hmt::self_consistency_report(data, model, cfg);
  std::ostringstream os;
  hmt::write_selfcheck_csv(os, report);
  std::cout << os.str();
  std::cout << (report.pass ? "PASS" : "FAIL") << "\n";
  if (!a.out_path.empty()) {
    write_text_file(a.out_path, os.str());
    json flags{{"data", a.data_path},   {"model", a.model_path},
               {"threshold", a.threshold}, {"seed", a.seed},
               {"max-distance", a.max_distance}, {"out", a.out_path}};
    write_manifest(a.out_path + ".manifest.json", "selfcheck", flags,
                   {a.data_path, a.model_path}, a.seed);
  }
  return 0;
}

struct OracleArgs {
  std::string model_path, data_path;
  std::uint64_t budget = 10'000'000;
};

int run_oracle(const OracleArgs& a) {
  const hmt::HmtModel model = hmt::load_model(a.model_path);
  const hmt::Forest forest = hmt::load_forest(a.data_path);
  std::cout << "tree_index,likelihood,map_score,map_assignment\n";
  for (size_t k = 0; k < forest.trees.size(); ++k) {
    const auto res =
        hmt::enumerate_assignments(model, forest.trees[k].tree, forest.trees[k].obs, a.budget);
    std::string assignment;
    for (size_t v = 0; v < res.map_assignment.size(); ++v) {
      if (v) assignment += '-';
      assignment += std::to_string(res.map_assignment[v]);
    }
    std::cout << k << ',' << hmt::csv_double(res.likelihood) << ','
              << hmt::csv_double(res.map_score) << ',' << assignment << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hidden Markov tree models with coupled branches"};
  app.set_version_flag("--version", std::string(hmt::kVersion));
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "worker threads for per-tree computations (default: HMT_THREADS or 1)");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "sample a forest from a model");
  sim_cmd->add_option("--model", sim.model_path, "model JSON")->required();
  sim_cmd->add_option("--trees", sim.trees, "number of trees")->required();
  sim_cmd->add_option("--depth", sim.depth, "generations (node levels)")->required();
  sim_cmd->add_option("--branching", sim.branching, "children per interior node");
  sim_cmd->add_option("--seed", sim.seed, "RNG seed");
  sim_cmd->add_option("--out", sim.out_path, "output forest JSON")->required();
  sim_cmd->add_flag("--emit-hidden", sim.emit_hidden, "write hidden states sidecar CSV");

  DataModelArgs lik;
  auto* lik_cmd = app.add_subcommand("likelihood", "per-tree and total log-likelihood");
  lik_cmd->add_option("--model", lik.model_path, "model JSON")->required();
  lik_cmd->add_option("--data", lik.data_path, "forest JSON")->required();
  lik_cmd->add_option("--out", lik.out_path, "CSV path (default: stdout)");

  DecodeArgs dec;
  auto* dec_cmd = app.add_subcommand("decode", "most likely state trees");
  dec_cmd->add_option("--model", dec.model_path, "model JSON")->required();
  dec_cmd->add_option("--data", dec.data_path, "forest JSON")->required();
  dec_cmd->add_option("--criterion", dec.criterion, "map|posterior")
      ->check(CLI::IsMember({"map", "posterior"}));
  dec_cmd->add_option("--out", dec.out_path, "CSV path (default: stdout)");

  LearnArgs learn;
  auto* learn_cmd = app.add_subcommand("learn", "EM parameter estimation");
  learn_cmd->add_option("--data", learn.data_path, "forest JSON")->required();
  learn_cmd->add_option("--states", learn.states, "number of hidden states")->required();
  learn_cmd->add_option("--max-iters", learn.max_iters, "iteration cap");
  learn_cmd->add_option("--tol", learn.tol, "log-likelihood convergence tolerance");
  learn_cmd->add_option("--seed", learn.seed, "RNG seed for the initialization");
  learn_cmd->add_option("--init", learn.init, "kmeans or file:PATH");
  learn_cmd->add_option("--std-floor", learn.std_floor, "lower bound for Gaussian stds");
  learn_cmd->add_option("--out", learn.out_dir, "output directory")->required();

  SelfCheckArgs check;
  auto* check_cmd =
      app.add_subcommand("selfcheck", "lineage-correlation consistency of data vs model");
  check_cmd->add_option("--data", check.data_path, "forest JSON")->required();
  check_cmd->add_option("--model", check.model_path, "fitted model JSON")->required();
  check_cmd->add_option("--threshold", check.threshold, "max |r_data - r_sim| per bin");
  check_cmd->add_option("--seed", check.seed, "RNG seed for the comparison simulation");
  check_cmd->add_option("--max-distance", check.max_distance, "largest lineage distance");
  check_cmd->add_option("--out", check.out_path, "also write the CSV here");

  OracleArgs oracle;
  auto* oracle_cmd = app.add_subcommand("oracle", "brute-force enumeration (debugging)");
  oracle_cmd->group("");  // hidden
  oracle_cmd->add_option("--model", oracle.model_path)->required();
  oracle_cmd->add_option("--data", oracle.data_path)->required();
  oracle_cmd->add_option("--budget", oracle.budget);

  try {
    app.parse(argc, argv);
    lik.threads = dec.threads = learn.threads = threads;
    if (sim_cmd->parsed()) return run_simulate(sim);
    if (lik_cmd->parsed()) return run_likelihood(lik);
    if (dec_cmd->parsed()) return run_decode(dec);
    if (learn_cmd->parsed()) return run_learn(learn);
    if (check_cmd->parsed()) return run_selfcheck(check);
    if (oracle_cmd->parsed()) return run_oracle(oracle);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const hmt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
