#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedransom/errors.hpp"
#include "fedransom/features.hpp"

namespace fedransom {

/// Flat tree node. Leaves have `feature == kLeaf` and carry class counts;
/// internal nodes route `x[feature] <= threshold` to `left`.
struct TreeNode {
  static constexpr std::int32_t kLeaf = -1;

  std::int32_t feature = kLeaf;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t count0 = 0;
  std::uint32_t count1 = 0;

  bool is_leaf() const noexcept { return feature == kLeaf; }

  static TreeNode leaf(std::uint32_t c0, std::uint32_t c1) {
    TreeNode n;
    n.count0 = c0;
    n.count1 = c1;
    return n;
  }
  static TreeNode split(std::int32_t feature, double threshold, std::uint32_t left, std::uint32_t right) {
    TreeNode n;
    n.feature = feature;
    n.threshold = threshold;
    n.left = left;
    n.right = right;
    return n;
  }

  bool operator==(const TreeNode&) const = default;
};

/// Nodes in preorder; index 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf_for(const FeatureArray& x) const;
  /// Majority class of the reached leaf, ties toward ransomware.
  Label vote(const FeatureArray& x) const;
  /// Positive-class fraction of the reached leaf.
  double positive_fraction(const FeatureArray& x) const;
  std::size_t depth() const;

  bool operator==(const Tree&) const = default;
};

struct ForestMeta {
  std::uint64_t seed = 0;
  std::size_t n_trees = 0;
  std::vector<std::string> provenance;  // node ids that contributed trees

  bool operator==(const ForestMeta&) const = default;
};

class Forest {
 public:
  Forest() = default;
  Forest(std::vector<Tree> trees, ForestMeta meta);

  const std::vector<Tree>& trees() const { return trees_; }
  std::vector<Tree>& mutable_trees() { return trees_; }
  const ForestMeta& meta() const { return meta_; }
  ForestMeta& mutable_meta() { return meta_; }
  std::size_t size() const { return trees_.size(); }
  bool empty() const { return trees_.empty(); }
  static constexpr std::size_t n_features() { return kNumFeatures; }

  /// Structural checks: feature bounds, child indices, acyclicity, non-empty leaves.
  void validate() const;

  bool operator==(const Forest&) const = default;

 private:
  std::vector<Tree> trees_;
  ForestMeta meta_;
};

enum class MaxFeatures { sqrt, all, fixed };

struct TrainConfig {
  std::size_t n_trees = 100;
  MaxFeatures max_features = MaxFeatures::sqrt;
  std::size_t max_features_k = 0;  // used when max_features == fixed
  std::optional<std::size_t> max_depth;
  std::size_t min_samples_split = 2;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  /// Worker threads for tree construction; 0 picks hardware concurrency.
  /// Does not affect the result.
  std::size_t n_threads = 0;

  /// Number of features examined per split.
  std::size_t features_per_split() const;
  void validate() const;
};

/// 1 - sum_c p_c^2. Throws std::domain_error if both counts are zero.
double gini(std::uint64_t count0, std::uint64_t count1);

/// Bootstrap draw of n indices from [0, n) with replacement.
std::vector<std::uint32_t> bootstrap_indices(std::size_t n, std::uint64_t seed);

/// Grows one unpruned CART tree on the given sample slots (indices into
/// `samples`, duplicates allowed). Splits maximise Gini decrease over a fresh
/// random feature subset; candidate thresholds are midpoints of consecutive
/// distinct values; equal gains resolve to the lowest feature index, then the
/// lowest threshold.
Tree grow_tree(std::span<const FeatureVector> samples, std::span<const std::uint32_t> slots,
               const TrainConfig& cfg, std::uint64_t tree_seed);

/// Trains cfg.n_trees trees; tree t uses seed cfg.seed + t, so the result is
/// independent of the thread count. Throws DataError on empty input.
Forest train_forest(std::span<const FeatureVector> train, const TrainConfig& cfg);

/// Hard majority vote over trees; a tie predicts ransomware.
Label predict(const Forest& forest, const FeatureArray& x);
/// Mean over trees of the reached leaf's positive-class fraction.
double predict_proba(const Forest& forest, const FeatureArray& x);
std::vector<Label> predict_all(const Forest& forest, std::span<const FeatureVector> samples);

class ForestFormatError : public DataError {
 public:
  enum class Kind { framing, schema, version, structure };

  ForestFormatError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr int kForestFormatVersion = 1;

/// JSON: {"version":1,"n_features":5,"trees":[{"nodes":[...]}],"meta":{...}}
/// with internal nodes as [feature, threshold, left, right] and leaves as
/// [count0, count1].
std::string serialize_forest(const Forest& forest);
Forest deserialize_forest(std::string_view bytes);

void save_forest(const std::string& path, const Forest& forest);
Forest load_forest(const std::string& path);

}  // namespace fedransom
