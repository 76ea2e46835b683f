#include "fedransom/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fedransom/errors.hpp"
#include "fedransom/seeds.hpp"
#include "text_util.hpp"

namespace fedransom {

namespace fs = std::filesystem;
using nlohmann::json;

void ConfusionMatrix::add(Label truth, Label predicted) {
  if (truth == Label::ransomware) {
    (predicted == Label::ransomware ? tp : fn)++;
  } else {
    (predicted == Label::ransomware ? fp : tn)++;
  }
}

ConfusionMatrix evaluate(const Forest& forest, std::span<const FeatureVector> test) {
  ConfusionMatrix cm;
  for (const auto& s : test) cm.add(s.label, predict(forest, s.x));
  return cm;
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DataError("cannot compute metrics of an empty confusion matrix");
  Metrics m;
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  if (cm.tp + cm.fp == 0) {
    m.precision_undefined = true;
  } else {
    m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  }
  if (cm.tp + cm.fn == 0) {
    m.recall_undefined = true;
  } else {
    m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  }
  if (m.precision_undefined || m.recall_undefined || m.precision + m.recall == 0.0) {
    m.f1_undefined = true;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

double relative_gain(double a, double b) {
  if (b == 0.0) throw std::domain_error("relative gain against a zero baseline");
  return (a - b) / b;
}

std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::centralized:
      return "centralized";
    case ScenarioKind::federated:
      return "federated";
    case ScenarioKind::local:
      return "local";
  }
  return "?";
}

ScenarioKind scenario_kind_from_string(std::string_view s) {
  if (s == "centralized") return ScenarioKind::centralized;
  if (s == "federated") return ScenarioKind::federated;
  if (s == "local") return ScenarioKind::local;
  throw ConfigError("unknown scenario '" + std::string(s) + "'");
}

std::string ScenarioReport::column_name() const {
  switch (kind) {
    case ScenarioKind::centralized:
      return "Centralized";
    case ScenarioKind::federated:
      return "Federated";
    case ScenarioKind::local:
      return node ? node->str() : "local";
  }
  return "?";
}

std::string report_to_json(const ScenarioReport& r) {
  json j;
  j["scenario"] = std::string(to_string(r.kind));
  if (r.node) j["node"] = r.node->str();
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}};
  j["metrics"] = {{"accuracy", r.metrics.accuracy},
                  {"precision", r.metrics.precision},
                  {"recall", r.metrics.recall},
                  {"f1", r.metrics.f1},
                  {"precision_undefined", r.metrics.precision_undefined},
                  {"recall_undefined", r.metrics.recall_undefined},
                  {"f1_undefined", r.metrics.f1_undefined}};
  j["config_fingerprint"] = r.config_fingerprint;
  j["master_seed"] = r.master_seed;
  j["train_seed"] = r.train_seed;
  j["test_set_hash"] = r.test_set_hash;
  j["test_size"] = r.test_size;
  json parts = json::array();
  for (const auto& p : r.participants) parts.push_back(p.str());
  j["participants"] = parts;
  j["partial_participation"] = r.partial_participation;
  return j.dump(2) + "\n";
}

ScenarioReport report_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    ScenarioReport r;
    r.kind = scenario_kind_from_string(j.at("scenario").get<std::string>());
    if (j.contains("node")) r.node = NodeId(j.at("node").get<std::string>());
    const auto& c = j.at("confusion");
    r.confusion = {c.at("tp").get<std::uint64_t>(), c.at("fp").get<std::uint64_t>(), c.at("tn").get<std::uint64_t>(),
                   c.at("fn").get<std::uint64_t>()};
    const auto& m = j.at("metrics");
    r.metrics.accuracy = m.at("accuracy").get<double>();
    r.metrics.precision = m.at("precision").get<double>();
    r.metrics.recall = m.at("recall").get<double>();
    r.metrics.f1 = m.at("f1").get<double>();
    r.metrics.precision_undefined = m.value("precision_undefined", false);
    r.metrics.recall_undefined = m.value("recall_undefined", false);
    r.metrics.f1_undefined = m.value("f1_undefined", false);
    r.config_fingerprint = j.value("config_fingerprint", std::string{});
    r.master_seed = j.value("master_seed", std::uint64_t{0});
    r.train_seed = j.value("train_seed", std::uint64_t{0});
    r.test_set_hash = j.value("test_set_hash", std::uint64_t{0});
    r.test_size = j.value("test_size", std::size_t{0});
    if (j.contains("participants")) {
      for (const auto& p : j.at("participants")) r.participants.emplace_back(p.get<std::string>());
    }
    r.partial_participation = j.value("partial_participation", false);
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

void save_report(const fs::path& file, const ScenarioReport& r) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  out << report_to_json(r);
}

ScenarioReport load_report(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

TrainConfig ExperimentSettings::base_train_config() const {
  TrainConfig c = train;
  c.seed = derive_seed(master_seed, "forest");
  return c;
}

Preprocessing ExperimentSettings::base_preprocessing() const {
  Preprocessing p = preprocessing;
  if (p.balance) p.balance->seed = derive_seed(master_seed, "balance");
  return p;
}

AggregationPolicy ExperimentSettings::resolved_policy() const {
  AggregationPolicy p = policy;
  if (p.kind == AggregationPolicy::Kind::size_weighted_subsample) {
    p.seed = derive_seed(master_seed, "aggregate");
    if (p.target_trees == 0) p.target_trees = train.n_trees;
  }
  return p;
}

std::string ExperimentSettings::fingerprint() const {
  const TrainConfig c = base_train_config();
  const Preprocessing p = base_preprocessing();
  const AggregationPolicy a = resolved_policy();
  std::ostringstream s;
  s << "n_trees=" << c.n_trees << ";max_features=" << static_cast<int>(c.max_features) << ':' << c.max_features_k
    << ";max_depth=" << (c.max_depth ? std::to_string(*c.max_depth) : "none") << ";min_split=" << c.min_samples_split
    << ";bootstrap=" << c.bootstrap << ";seed=" << c.seed << ";normalize=" << p.normalize;
  if (p.balance) {
    s << ";balance=" << detail::format_double(p.balance->undersample_majority_to_ratio) << ':'
      << p.balance->oversample_minority_to_parity << ':' << p.balance->seed;
  } else {
    s << ";balance=none";
  }
  s << ";policy=" << static_cast<int>(a.kind) << ':' << a.target_trees << ':' << a.seed;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s.str())));
  return buf;
}

namespace {

ScenarioReport make_report(ScenarioKind kind, const Forest& model, std::span<const FeatureVector> test,
                           std::uint64_t test_hash, const ExperimentSettings& settings, std::uint64_t train_seed) {
  ScenarioReport r;
  r.kind = kind;
  r.confusion = evaluate(model, test);
  r.metrics = compute_metrics(r.confusion);
  r.config_fingerprint = settings.fingerprint();
  r.master_seed = settings.master_seed;
  r.train_seed = train_seed;
  r.test_set_hash = test_hash;
  r.test_size = test.size();
  return r;
}

}  // namespace

ScenarioOutcome run_scenario(ScenarioKind kind, std::span<const NodeDataset> nodes, const ExperimentSettings& settings) {
  if (nodes.empty()) throw DataError("no node datasets");
  const auto test = pooled_test(nodes);
  if (test.empty()) throw DataError("pooled test set is empty");
  const auto test_hash = hash_samples(test);
  const TrainConfig base = settings.base_train_config();
  const Preprocessing base_prep = settings.base_preprocessing();

  ScenarioOutcome out;
  switch (kind) {
    case ScenarioKind::centralized: {
      std::vector<FeatureVector> train;
      for (const auto& n : nodes) train.insert(train.end(), n.train.begin(), n.train.end());
      if (train.empty()) throw DataError("no training data");
      const NodeId scope("centralized");
      const TrainConfig cfg = node_train_config(base, scope);
      Forest model = fit_model(train, cfg, node_preprocessing(base_prep, scope));
      auto r = make_report(kind, model, test, test_hash, settings, cfg.seed);
      for (const auto& n : nodes) {
        if (!n.train.empty()) r.participants.push_back(n.node_id);
      }
      out.reports.push_back(std::move(r));
      out.models.emplace_back("centralized", std::move(model));
      break;
    }
    case ScenarioKind::local: {
      for (const auto& n : nodes) {
        if (n.train.empty()) continue;
        const TrainConfig cfg = node_train_config(base, n.node_id);
        Forest model = fit_model(n.train, cfg, node_preprocessing(base_prep, n.node_id));
        auto r = make_report(kind, model, test, test_hash, settings, cfg.seed);
        r.node = n.node_id;
        r.participants = {n.node_id};
        out.reports.push_back(std::move(r));
        out.models.emplace_back(n.node_id.str(), std::move(model));
      }
      if (out.reports.empty()) throw DataError("no node has training data");
      break;
    }
    case ScenarioKind::federated: {
      FederationConfig fc;
      fc.train = base;
      fc.preprocessing = base_prep;
      fc.policy = settings.resolved_policy();
      fc.channel = settings.channel;
      fc.transport = settings.transport;
      fc.timeout = settings.timeout;
      fc.observer = settings.observer;
      auto record = run_federation(nodes, fc);
      auto r = make_report(kind, record.global, test, test_hash, settings, base.seed);
      r.participants = record.participants;
      r.partial_participation = record.partial();
      out.reports.push_back(std::move(r));
      out.models.emplace_back("federated", record.global);
      out.federation = std::move(record);
      break;
    }
  }
  return out;
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

namespace {

std::vector<const ScenarioReport*> column_order(std::span<const ScenarioReport> reports) {
  std::vector<const ScenarioReport*> cols;
  for (auto kind : {ScenarioKind::local, ScenarioKind::centralized, ScenarioKind::federated}) {
    for (const auto& r : reports) {
      if (r.kind == kind) cols.push_back(&r);
    }
  }
  return cols;
}

}  // namespace

ReportTables emit_report(std::span<const ScenarioReport> reports) {
  const auto cols = column_order(reports);
  struct Row {
    const char* name;
    double Metrics::*field;
  };
  const Row rows[] = {{"Accuracy", &Metrics::accuracy},
                      {"Precision", &Metrics::precision},
                      {"Recall", &Metrics::recall},
                      {"F1-Score", &Metrics::f1}};

  ReportTables t;
  t.csv = "metric";
  for (const auto* r : cols) {
    t.csv += ',';
    t.csv += r->kind == ScenarioKind::local ? r->column_name() : std::string(to_string(r->kind));
  }
  t.csv += '\n';
  for (const auto& row : rows) {
    t.csv += row.name;
    for (const auto* r : cols) t.csv += ',' + format_metric(r->metrics.*row.field);
    t.csv += '\n';
  }

  std::vector<std::vector<std::string>> cells;
  cells.push_back({""});
  for (const auto* r : cols) cells.front().push_back(r->column_name());
  for (const auto& row : rows) {
    std::vector<std::string> line{row.name};
    for (const auto* r : cols) line.push_back(format_metric(r->metrics.*row.field));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(cols.size() + 1, 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  for (const auto& line : cells) {
    std::string text;
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c == 0) {
        text += line[c] + std::string(width[c] - line[c].size(), ' ');
      } else {
        text += "  " + std::string(width[c] - line[c].size(), ' ') + line[c];
      }
    }
    t.text += text + '\n';
  }
  return t;
}

void write_report_files(const fs::path& dir, std::span<const ScenarioReport> reports) {
  fs::create_directories(dir);
  const auto tables = emit_report(reports);
  for (const auto& [name, body] : {std::pair{"report.csv", &tables.csv}, std::pair{"report.txt", &tables.text}}) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    out << *body;
  }
}

}  // namespace fedransom
