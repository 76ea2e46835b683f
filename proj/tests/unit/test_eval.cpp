#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fedransom/errors.hpp"
#include "fedransom/eval.hpp"
#include "fedransom/features.hpp"
#include "fedransom/synth.hpp"
#include "test_support.hpp"

using namespace fedransom;

namespace {

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::size_t count_char(const std::string& s, char c) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), c)); }

ScenarioReport report_with(ScenarioKind kind, double acc, std::optional<std::string> node = std::nullopt) {
  ScenarioReport r;
  r.kind = kind;
  if (node) r.node = NodeId(*node);
  r.metrics.accuracy = acc;
  r.metrics.precision = acc;
  r.metrics.recall = acc;
  r.metrics.f1 = acc;
  return r;
}

std::vector<NodeDataset> synthetic_nodes(std::uint64_t seed, std::size_t runs) {
  auto cfg = CorpusConfig::defaults();
  cfg.master_seed = seed;
  cfg.runs_per_software = runs;
  cfg.benign.duration_seconds = cfg.ransomware.duration_seconds = 1200;
  const auto samples = extract_all(generate_corpus_runs(cfg));
  std::vector<NodeId> ids;
  for (const auto& s : cfg.servers) ids.push_back(s.server);
  SplitSpec split;
  split.seed = seed;
  return make_node_datasets(samples, ids, split);
}

}  // namespace

TEST(Metrics, PerfectClassifier) {
  const auto m = compute_metrics({1, 0, 1, 0});
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.f1, 1.0);
}

TEST(Metrics, HandEvaluatedExample) {
  ConfusionMatrix cm;
  cm.tp = 3;
  cm.fp = 1;
  cm.fn = 1;
  cm.tn = 5;
  const auto m = compute_metrics(cm);
  EXPECT_EQ(m.precision, 0.75);
  EXPECT_EQ(m.recall, 0.75);
  EXPECT_EQ(m.f1, 0.75);
  EXPECT_EQ(m.accuracy, 0.8);
  EXPECT_FALSE(m.precision_undefined || m.recall_undefined || m.f1_undefined);
}

TEST(Metrics, ZeroDenominatorFlagged) {
  ConfusionMatrix cm;
  cm.tn = 4;
  cm.fn = 2;
  const auto m = compute_metrics(cm);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_TRUE(m.precision_undefined);
  EXPECT_FALSE(m.recall_undefined);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_TRUE(m.f1_undefined);
  EXPECT_FALSE(std::isnan(m.f1));
}

TEST(Metrics, EmptyMatrixRejected) { EXPECT_THROW(compute_metrics({}), DataError); }

TEST(Metrics, IdentitiesOnRandomMatrices) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 2000; ++i) {
    ConfusionMatrix cm{rng() % 50, rng() % 50, rng() % 50, rng() % 50};
    if (cm.total() == 0) continue;
    const auto m = compute_metrics(cm);
    EXPECT_NEAR(m.accuracy, 1.0 - static_cast<double>(cm.fp + cm.fn) / static_cast<double>(cm.total()), 1e-12);
    if (!m.f1_undefined) {
      EXPECT_GE(m.f1, std::min(m.precision, m.recall) - 1e-15);
      EXPECT_LE(m.f1, std::max(m.precision, m.recall) + 1e-15);
      EXPECT_LE(m.f1, std::sqrt(m.precision * m.recall) + 1e-15);
    }
  }
}

TEST(Metrics, ConfusionCountsFromPredictions) {
  ConfusionMatrix cm;
  cm.add(Label::ransomware, Label::ransomware);
  cm.add(Label::ransomware, Label::benign);
  cm.add(Label::benign, Label::ransomware);
  cm.add(Label::benign, Label::benign);
  cm.add(Label::benign, Label::benign);
  EXPECT_EQ(cm, (ConfusionMatrix{1, 1, 2, 1}));
}

TEST(RelativeGain, ReportedAccuracies) {
  const double g = relative_gain(0.986, 0.905);
  EXPECT_NEAR(g, 0.0895, 5e-5);
  EXPECT_EQ(std::lround(g * 100.0), 9);
}

TEST(RelativeGain, TrivialCases) {
  EXPECT_EQ(relative_gain(0.7, 0.7), 0.0);
  EXPECT_EQ(relative_gain(1.0, 0.5), 1.0);
  EXPECT_THROW(relative_gain(1.0, 0.0), std::domain_error);
}

TEST(ReportTable, SixColumnsFourRows) {
  std::vector<ScenarioReport> reports = {report_with(ScenarioKind::federated, 0.986),
                                         report_with(ScenarioKind::local, 0.905, "win7-120gb-hdd"),
                                         report_with(ScenarioKind::local, 0.930, "win7-120gb-ssd"),
                                         report_with(ScenarioKind::centralized, 0.999),
                                         report_with(ScenarioKind::local, 0.919, "win7-250gb-hdd"),
                                         report_with(ScenarioKind::local, 0.913, "win7-250gb-ssd")};
  const auto t = emit_report(reports);
  const auto csv = lines(t.csv);
  ASSERT_EQ(csv.size(), 5u);
  EXPECT_EQ(csv[0], "metric,win7-120gb-hdd,win7-120gb-ssd,win7-250gb-hdd,win7-250gb-ssd,centralized,federated");
  EXPECT_EQ(csv[1], "Accuracy,0.905,0.930,0.919,0.913,0.999,0.986");
  EXPECT_EQ(csv[4].substr(0, 9), "F1-Score,");
  for (const auto& l : csv) EXPECT_EQ(count_char(l, ','), 6u);
  const auto text = lines(t.text);
  ASSERT_EQ(text.size(), 5u);
  EXPECT_NE(text[0].find("Centralized"), std::string::npos);
  EXPECT_NE(text[0].find("Federated"), std::string::npos);
  for (const auto& l : text) EXPECT_EQ(l.size(), text[0].size());
}

TEST(ReportTable, SingleColumn) {
  const std::vector<ScenarioReport> reports = {report_with(ScenarioKind::centralized, 0.5)};
  const auto csv = lines(emit_report(reports).csv);
  ASSERT_EQ(csv.size(), 5u);
  for (const auto& l : csv) EXPECT_EQ(count_char(l, ','), 1u);
}

TEST(ReportTable, ThreeDecimalRendering) {
  EXPECT_EQ(format_metric(0.98649), "0.986");
  EXPECT_EQ(format_metric(1.0), "1.000");
  EXPECT_EQ(format_metric(0.0), "0.000");
}

TEST(ReportJson, RoundTripPreservesEverything) {
  ScenarioReport r;
  r.kind = ScenarioKind::local;
  r.node = NodeId("win7-250gb-ssd");
  r.confusion = {12, 3, 40, 5};
  r.metrics = compute_metrics(r.confusion);
  r.config_fingerprint = "00ff00ff00ff00ff";
  r.master_seed = 18446744073709551615ULL;
  r.train_seed = 12345;
  r.test_set_hash = 987654321987654321ULL;
  r.test_size = 60;
  r.participants = {NodeId("win7-250gb-ssd")};
  const auto back = report_from_json(report_to_json(r));
  EXPECT_EQ(report_to_json(back), report_to_json(r));
  EXPECT_EQ(back.metrics, r.metrics);
  EXPECT_EQ(compute_metrics(back.confusion), back.metrics);
  EXPECT_EQ(back.master_seed, r.master_seed);
  EXPECT_THROW(report_from_json("{}"), DataError);
}

TEST(Scenarios, SingleNodeFederationEqualsLocal) {
  std::vector<NodeDataset> nodes = {NodeDataset{NodeId("only"), {}, {}}};
  const auto data = fixtures::noisy(600, 3, "only");
  const auto split = stratified_split(data, {});
  nodes[0].train = split.train;
  nodes[0].test = split.test;
  ExperimentSettings s;
  s.master_seed = 5;
  s.train.n_trees = 20;
  const auto local = run_scenario(ScenarioKind::local, nodes, s);
  const auto fed = run_scenario(ScenarioKind::federated, nodes, s);
  ASSERT_EQ(local.reports.size(), 1u);
  ASSERT_EQ(fed.reports.size(), 1u);
  EXPECT_EQ(fed.reports[0].confusion, local.reports[0].confusion);
  EXPECT_EQ(fed.reports[0].metrics, local.reports[0].metrics);
  EXPECT_EQ(fed.models[0].second.trees(), local.models[0].second.trees());
}

TEST(Scenarios, AllConsumeTheSamePooledTestSet) {
  const auto nodes = synthetic_nodes(2, 2);
  ExperimentSettings s;
  s.master_seed = 2;
  s.train.n_trees = 10;
  std::vector<ScenarioReport> all;
  for (auto k : {ScenarioKind::local, ScenarioKind::centralized, ScenarioKind::federated}) {
    const auto out = run_scenario(k, nodes, s);
    all.insert(all.end(), out.reports.begin(), out.reports.end());
  }
  ASSERT_EQ(all.size(), 6u);
  for (const auto& r : all) {
    EXPECT_EQ(r.test_set_hash, all[0].test_set_hash);
    EXPECT_EQ(r.test_size, all[0].test_size);
    EXPECT_EQ(r.config_fingerprint, s.fingerprint());
    EXPECT_EQ(r.confusion.total(), r.test_size);
  }
}

TEST(Scenarios, FederatedBeatsWorstLocalOnSyntheticCorpus) {
  const auto nodes = synthetic_nodes(4, 3);
  ExperimentSettings s;
  s.master_seed = 4;
  s.train.n_trees = 30;
  const auto local = run_scenario(ScenarioKind::local, nodes, s);
  const auto fed = run_scenario(ScenarioKind::federated, nodes, s);
  double worst = 1.0;
  for (const auto& r : local.reports) worst = std::min(worst, r.metrics.accuracy);
  EXPECT_GE(fed.reports[0].metrics.accuracy, worst);
}

TEST(Scenarios, PartialParticipationMarked) {
  auto nodes = synthetic_nodes(6, 1);
  nodes[1].train.clear();
  ExperimentSettings s;
  s.train.n_trees = 5;
  const auto fed = run_scenario(ScenarioKind::federated, nodes, s);
  EXPECT_TRUE(fed.reports[0].partial_participation);
  EXPECT_EQ(fed.reports[0].participants.size(), 3u);
  ASSERT_TRUE(fed.federation.has_value());
  EXPECT_EQ(fed.federation->abstained.size(), 1u);
}

TEST(Settings, FingerprintTracksTrainingConfig) {
  ExperimentSettings a;
  ExperimentSettings b;
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.train.n_trees = 7;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  ExperimentSettings c;
  c.master_seed = 1;
  EXPECT_NE(a.fingerprint(), c.fingerprint());
  ExperimentSettings d;
  d.channel = ChannelKind::socket;
  EXPECT_EQ(a.fingerprint(), d.fingerprint());
}
