#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedransom/dataset.hpp"
#include "fedransom/fed_protocol.hpp"
#include "fedransom/forest.hpp"
#include "fedransom/pipeline.hpp"

namespace fedransom {

struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  void add(Label truth, Label predicted);
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix evaluate(const Forest& forest, std::span<const FeatureVector> test);

/// Zero denominators yield 0 with the matching flag set.
struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;

  bool operator==(const Metrics&) const = default;
};

/// Throws DataError for an empty matrix.
Metrics compute_metrics(const ConfusionMatrix& cm);

/// (a - b) / b. Throws std::domain_error when b == 0.
double relative_gain(double a, double b);

enum class ScenarioKind { centralized, federated, local };

std::string_view to_string(ScenarioKind k);
ScenarioKind scenario_kind_from_string(std::string_view s);

struct ScenarioReport {
  ScenarioKind kind = ScenarioKind::centralized;
  std::optional<NodeId> node;  // local scenario only
  ConfusionMatrix confusion;
  Metrics metrics;
  std::string config_fingerprint;
  std::uint64_t master_seed = 0;
  std::uint64_t train_seed = 0;
  std::uint64_t test_set_hash = 0;
  std::size_t test_size = 0;
  std::vector<NodeId> participants;
  bool partial_participation = false;

  /// Table column: node id, "Centralized" or "Federated".
  std::string column_name() const;
};

std::string report_to_json(const ScenarioReport& r);
ScenarioReport report_from_json(std::string_view text);
void save_report(const std::filesystem::path& file, const ScenarioReport& r);
ScenarioReport load_report(const std::filesystem::path& file);

/// Settings shared by every scenario of one experiment. Node-, scenario- and
/// tree-level seeds are all derived from `master_seed`.
struct ExperimentSettings {
  std::uint64_t master_seed = 0;
  TrainConfig train;  // seed field is ignored; derived from master_seed
  Preprocessing preprocessing;
  AggregationPolicy policy;
  ChannelKind channel = ChannelKind::in_process;
  TransportOptions transport;
  std::chrono::milliseconds timeout{std::chrono::minutes(10)};
  MessageObserver observer;

  TrainConfig base_train_config() const;
  Preprocessing base_preprocessing() const;
  AggregationPolicy resolved_policy() const;
  std::string fingerprint() const;
};

struct ScenarioOutcome {
  std::vector<ScenarioReport> reports;
  /// (name, model) per trained model: node id, "centralized" or "federated".
  std::vector<std::pair<std::string, Forest>> models;
  std::optional<FederationRunRecord> federation;
};

/// Trains per the scenario and evaluates every model on the pooled test set
/// of all `nodes`.
/// centralized: merged node train sets, one balanced model.
/// federated: run_federation over the configured channel.
/// local: one model per non-empty node trained only on its own data.
ScenarioOutcome run_scenario(ScenarioKind kind, std::span<const NodeDataset> nodes,
                             const ExperimentSettings& settings);

struct ReportTables {
  std::string csv;
  std::string text;
};

/// Rows Accuracy/Precision/Recall/F1-Score, one column per report (local
/// reports first in the given order, then Centralized, then Federated);
/// values with three decimals.
ReportTables emit_report(std::span<const ScenarioReport> reports);
/// Writes `report.csv` and `report.txt` into `dir`.
void write_report_files(const std::filesystem::path& dir, std::span<const ScenarioReport> reports);

std::string format_metric(double v);

}  // namespace fedransom
