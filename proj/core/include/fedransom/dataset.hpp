#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "fedransom/features.hpp"

namespace fedransom {

struct SplitSpec {
  double test_fraction = 0.25;
  std::uint64_t seed = 0;
  bool stratify = true;

  void validate() const;
};

struct BalanceSpec {
  /// Majority:minority ratio left after undersampling the majority class.
  double undersample_majority_to_ratio = 1.5;
  /// Duplicate random minority samples until both classes are equal.
  bool oversample_minority_to_parity = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitResult {
  std::vector<FeatureVector> train;
  std::vector<FeatureVector> test;
};

/// Index form of a split; both lists ascending.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class c with n_c samples, round(n_c * test_fraction) random samples go
/// to test. Requires >= 2 samples in every present class when stratifying.
SplitIndices stratified_split_indices(std::span<const FeatureVector> samples, const SplitSpec& spec);
SplitResult stratified_split(std::span<const FeatureVector> samples, const SplitSpec& spec);

struct ClassCounts {
  std::size_t benign = 0;
  std::size_t ransomware = 0;

  std::size_t total() const { return benign + ransomware; }
  bool operator==(const ClassCounts&) const = default;
};

ClassCounts count_classes(std::span<const FeatureVector> samples);

/// Randomly undersamples the majority class down to ratio * minority, then
/// (optionally) duplicates random minority samples up to parity. Kept samples
/// retain their relative order; duplicates are appended. Training data only.
std::vector<FeatureVector> balance_classes(std::span<const FeatureVector> train, const BalanceSpec& spec);

/// Per-feature z-score. Features with zero variance map to 0.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(FeatureArray mean, FeatureArray stddev) : mean_(mean), stddev_(stddev) {}

  static Normalizer fit(std::span<const FeatureVector> train);

  double apply(std::size_t feature, double value) const;
  FeatureArray apply(const FeatureArray& x) const;
  std::vector<FeatureVector> apply(std::span<const FeatureVector> samples) const;

  /// Maps a threshold in normalized units back to raw units.
  double invert(std::size_t feature, double normalized) const;

  const FeatureArray& mean() const { return mean_; }
  const FeatureArray& stddev() const { return stddev_; }

 private:
  FeatureArray mean_{};
  FeatureArray stddev_{};
};

inline Normalizer fit_normalizer(std::span<const FeatureVector> train) { return Normalizer::fit(train); }
inline std::vector<FeatureVector> apply_normalizer(const Normalizer& n, std::span<const FeatureVector> samples) {
  return n.apply(samples);
}

struct NodeDataset {
  NodeId node_id;
  std::vector<FeatureVector> train;
  std::vector<FeatureVector> test;

  bool empty() const { return train.empty() && test.empty(); }
};

struct NodePartition {
  NodeId node_id;
  std::vector<FeatureVector> samples;
  bool empty() const { return samples.empty(); }
};

/// Groups samples by server. Returns one partition per configured node in
/// the given order, including empty ones. Throws DataError for samples whose
/// server is not configured.
std::vector<NodePartition> partition_by_server(std::span<const FeatureVector> samples,
                                               std::span<const NodeId> nodes);

/// Same grouping applied to raw runs.
std::vector<std::vector<TraceRun>> partition_runs_by_server(std::span<const TraceRun> runs,
                                                           std::span<const NodeId> nodes);

/// Partitions and splits each node with a seed derived from `spec.seed` and
/// the node id. Empty nodes yield empty datasets.
std::vector<NodeDataset> make_node_datasets(std::span<const FeatureVector> samples,
                                            std::span<const NodeId> nodes, const SplitSpec& spec);

/// Union of per-node test sets in node order.
std::vector<FeatureVector> pooled_test(std::span<const NodeDataset> nodes);

/// Stable content hash of a sample multiset's ordered form.
std::uint64_t hash_samples(std::span<const FeatureVector> samples);

/// `<dir>/<node>/train.csv`, `test.csv` and `manifest.txt`.
void save_node_dataset(const std::filesystem::path& dir, const NodeDataset& node, const SplitSpec& spec);
NodeDataset load_node_dataset(const std::filesystem::path& node_dir);
/// Loads every node subdirectory holding a manifest, sorted by node id.
std::vector<NodeDataset> load_node_datasets(const std::filesystem::path& dir);

}  // namespace fedransom
