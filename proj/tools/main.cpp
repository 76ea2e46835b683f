#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "experiment_config.hpp"
#include "fedransom/errors.hpp"
#include "fedransom/eval.hpp"
#include "fedransom/synth.hpp"

namespace fs = std::filesystem;
using namespace fedransom;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kProtocol = 3 };

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> transport;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_transport) {
  cmd->add_option("--config", f.config, "Experiment config file");
  cmd->add_option("--seed", f.seed, "Master seed (overrides the config file)");
  if (with_transport) cmd->add_option("--transport", f.transport, "in-proc or socket");
  cmd->add_option("--out", f.out, "Output directory");
}

cli::ExperimentConfig experiment_from(const CommonFlags& f) {
  cli::ExperimentConfig c = f.config.empty() ? cli::ExperimentConfig::from_kv({}, fs::current_path())
                                             : cli::ExperimentConfig::load(f.config);
  if (f.seed) c.set_master_seed(*f.seed);
  if (f.transport) c.settings.channel = channel_kind_from_string(*f.transport);
  if (!f.out.empty()) c.out = fs::path(f.out);
  c.validate();
  return c;
}

fs::path require_out(const cli::ExperimentConfig& c) {
  if (!c.out) throw ConfigError("no output directory: pass --out or set 'out' in the config");
  return *c.out;
}

int cmd_gen_synth(const CommonFlags& f, const std::string& synth_cfg) {
  const auto exp = experiment_from(f);
  CorpusConfig cfg = CorpusConfig::defaults();
  if (!synth_cfg.empty()) {
    cfg = CorpusConfig::load(synth_cfg);
  } else if (exp.synth_config) {
    cfg = CorpusConfig::load(*exp.synth_config);
  }
  if (f.seed) cfg.master_seed = *f.seed;
  // The corpus lands where later stages read it unless --out says otherwise.
  const fs::path out = !f.out.empty() ? fs::path(f.out) : exp.corpus.value_or(fs::path());
  if (out.empty()) throw ConfigError("no corpus directory: pass --out or set 'corpus' in the config");
  const auto summary = generate_corpus(cfg, out);
  std::cout << "wrote " << summary.runs << " runs (" << summary.csv_files << " csv files) to " << out.string() << "\n";
  return kOk;
}

int cmd_extract(const CommonFlags& f, const std::string& corpus_flag, std::optional<double> window,
                std::optional<double> hop, std::optional<std::string> empty, std::optional<double> test_fraction,
                bool lenient) {
  auto exp = experiment_from(f);
  if (window) {
    exp.window.window_seconds = *window;
    if (!hop) exp.window.hop_seconds = *window;
  }
  if (hop) exp.window.hop_seconds = *hop;
  if (empty) {
    if (*empty == "skip") {
      exp.window.empty_windows = EmptyWindowPolicy::skip;
    } else if (*empty == "emit-zeros") {
      exp.window.empty_windows = EmptyWindowPolicy::emit_zeros;
    } else {
      throw ConfigError("--empty must be skip or emit-zeros");
    }
  }
  if (test_fraction) exp.split.test_fraction = *test_fraction;
  if (lenient) exp.parse.lenient = true;
  exp.validate();

  const fs::path corpus = !corpus_flag.empty() ? fs::path(corpus_flag) : exp.corpus.value_or(fs::path());
  if (corpus.empty()) throw ConfigError("no corpus: pass --corpus or set 'corpus' in the config");
  const auto out = require_out(exp);

  CorpusLoadOptions opts;
  opts.parse = exp.parse;
  const auto loaded = load_corpus(corpus, opts);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
  const auto samples = extract_all(loaded.runs, exp.window);

  std::vector<NodeId> nodes;
  for (const auto& r : loaded.runs) {
    if (std::find(nodes.begin(), nodes.end(), r.server) == nodes.end()) nodes.push_back(r.server);
  }
  std::sort(nodes.begin(), nodes.end());
  const auto datasets = make_node_datasets(samples, nodes, exp.split);
  for (const auto& d : datasets) {
    save_node_dataset(out, d, exp.split);
    std::cout << d.node_id.str() << ": " << d.train.size() << " train, " << d.test.size() << " test\n";
  }
  return kOk;
}

int cmd_train(const CommonFlags& f, const std::string& data, const std::string& mode, std::optional<std::size_t> trees,
              std::optional<std::string> policy, std::optional<std::size_t> target_trees,
              std::optional<std::uint16_t> port) {
  auto exp = experiment_from(f);
  if (trees) exp.settings.train.n_trees = *trees;
  if (policy) {
    if (*policy == "concat-all") {
      exp.settings.policy = AggregationPolicy::concat_all();
    } else if (*policy == "subsample") {
      exp.settings.policy = AggregationPolicy::size_weighted_subsample(0, 0);
    } else {
      throw ConfigError("--policy must be concat-all or subsample");
    }
  }
  if (target_trees) exp.settings.policy.target_trees = *target_trees;
  if (port) exp.settings.transport.port = *port;
  exp.validate();
  const auto out = require_out(exp);

  const auto nodes = load_node_datasets(data);
  const auto outcome = run_scenario(scenario_kind_from_string(mode), nodes, exp.settings);
  fs::create_directories(out / "models");
  fs::create_directories(out / "reports");
  for (const auto& [name, model] : outcome.models) save_forest((out / "models" / (name + ".forest.json")).string(), model);
  for (const auto& r : outcome.reports) {
    const std::string name = r.kind == ScenarioKind::local ? r.node->str() : std::string(to_string(r.kind));
    save_report(out / "reports" / (name + ".report.json"), r);
    std::cout << r.column_name() << ": accuracy " << format_metric(r.metrics.accuracy) << ", f1 "
              << format_metric(r.metrics.f1) << "\n";
  }
  if (outcome.federation) {
    const auto& fed = *outcome.federation;
    std::cout << "participants " << fed.participants.size() << "/" << fed.nodes.size() << ", global trees "
              << fed.global.size() << "\n";
  }
  return kOk;
}

int cmd_predict(const std::string& model_file, const std::string& features, const std::string& out_file, bool proba) {
  const Forest forest = load_forest(model_file);
  const auto samples = load_features_csv(features);
  std::ofstream file;
  if (!out_file.empty()) {
    file.open(out_file, std::ios::binary);
    if (!file) throw DataError("cannot write " + out_file);
  }
  std::ostream& out = out_file.empty() ? std::cout : file;
  out << (proba ? "label,proba\n" : "label\n");
  for (const auto& s : samples) {
    out << to_int(predict(forest, s.x));
    if (proba) {
      char buf[32];
      std::snprintf(buf, sizeof buf, ",%.6f", predict_proba(forest, s.x));
      out << buf;
    }
    out << '\n';
  }
  return kOk;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file() && e.path().filename().string().ends_with(".report.json")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(p)) {
      files.push_back(p);
    } else {
      throw DataError("report input not found: " + in);
    }
  }
  if (files.empty()) throw DataError("no reports found");
  std::vector<ScenarioReport> reports;
  for (const auto& f : files) reports.push_back(load_report(f));
  const auto tables = emit_report(reports);
  std::cout << tables.text;
  if (!out.empty()) write_report_files(out, reports);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated random-forest ransomware detection from storage access traces"};
  app.require_subcommand(1);

  CommonFlags gen_flags;
  std::string synth_cfg;
  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic corpus");
  add_common(gen, gen_flags, false);
  gen->add_option("--synth-config", synth_cfg, "Corpus generator config");

  CommonFlags ext_flags;
  std::string corpus;
  std::optional<double> window, hop, test_fraction;
  std::optional<std::string> empty;
  bool lenient = false;
  auto* ext = app.add_subcommand("extract", "Parse a corpus and write per-node feature datasets");
  add_common(ext, ext_flags, false);
  ext->add_option("--corpus", corpus, "Corpus root directory");
  ext->add_option("--window", window, "Window length in seconds");
  ext->add_option("--hop", hop, "Hop between window starts in seconds");
  ext->add_option("--empty", empty, "Empty-window policy: emit-zeros or skip");
  ext->add_option("--test-fraction", test_fraction, "Per-node held-out fraction");
  ext->add_flag("--lenient", lenient, "Skip malformed CSV lines");

  CommonFlags train_flags;
  std::string data, mode;
  std::optional<std::size_t> trees, target_trees;
  std::optional<std::string> policy;
  std::optional<std::uint16_t> port;
  auto* train = app.add_subcommand("train", "Train and evaluate one scenario");
  add_common(train, train_flags, true);
  train->add_option("--mode", mode, "centralized, federated or local")
      ->required()
      ->check(CLI::IsMember({"centralized", "federated", "local"}));
  train->add_option("--data", data, "Dataset directory written by extract")->required();
  train->add_option("--trees", trees, "Trees per forest");
  train->add_option("--policy", policy, "Aggregation: concat-all or subsample");
  train->add_option("--target-trees", target_trees, "Global forest size for subsample");
  train->add_option("--port", port, "Loopback port for the socket channel");

  std::string model_file, features, pred_out;
  bool proba = false;
  auto* pred = app.add_subcommand("predict", "Classify feature rows with a saved model");
  pred->add_option("--model", model_file, "Model file")->required();
  pred->add_option("--features", features, "Features CSV")->required();
  pred->add_option("--out", pred_out, "Output CSV (stdout when omitted)");
  pred->add_flag("--proba", proba, "Also print the ransomware probability");

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* rep = app.add_subcommand("report", "Merge scenario reports into one table");
  rep->add_option("reports", report_inputs, "Report files or directories")->required();
  rep->add_option("--out", report_out, "Directory for report.csv and report.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(gen_flags, synth_cfg);
    if (ext->parsed()) return cmd_extract(ext_flags, corpus, window, hop, empty, test_fraction, lenient);
    if (train->parsed()) return cmd_train(train_flags, data, mode, trees, policy, target_trees, port);
    if (pred->parsed()) return cmd_predict(model_file, features, pred_out, proba);
    if (rep->parsed()) return cmd_report(report_inputs, report_out);
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return kProtocol;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
