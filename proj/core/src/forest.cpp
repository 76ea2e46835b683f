#include "fedransom/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fedransom/seeds.hpp"
#include "json_codec.hpp"
#include "random_util.hpp"

namespace fedransom {

using nlohmann::json;

const TreeNode& Tree::leaf_for(const FeatureArray& x) const {
  const TreeNode* n = &nodes[0];
  while (!n->is_leaf()) {
    n = &nodes[x[static_cast<std::size_t>(n->feature)] <= n->threshold ? n->left : n->right];
  }
  return *n;
}

Label Tree::vote(const FeatureArray& x) const {
  const auto& leaf = leaf_for(x);
  return leaf.count1 >= leaf.count0 ? Label::ransomware : Label::benign;
}

double Tree::positive_fraction(const FeatureArray& x) const {
  const auto& leaf = leaf_for(x);
  return static_cast<double>(leaf.count1) / static_cast<double>(leaf.count0 + leaf.count1);
}

std::size_t Tree::depth() const {
  if (nodes.empty()) return 0;
  std::size_t best = 0;
  std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (!nodes[i].is_leaf()) {
      stack.push_back({nodes[i].left, d + 1});
      stack.push_back({nodes[i].right, d + 1});
    }
  }
  return best;
}

namespace {

using Kind = ForestFormatError::Kind;

void validate_tree(const Tree& tree, std::size_t tree_index) {
  const auto where = [&](std::size_t node) {
    return "tree " + std::to_string(tree_index) + " node " + std::to_string(node) + ": ";
  };
  if (tree.nodes.empty()) throw ForestFormatError(Kind::structure, "tree " + std::to_string(tree_index) + " has no nodes");
  const std::size_t n = tree.nodes.size();
  std::vector<std::uint8_t> referenced(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = tree.nodes[i];
    if (node.is_leaf()) {
      if (node.count0 == 0 && node.count1 == 0) throw ForestFormatError(Kind::structure, where(i) + "empty leaf");
      continue;
    }
    if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= kNumFeatures) {
      throw ForestFormatError(Kind::structure, where(i) + "feature index out of range");
    }
    if (!std::isfinite(node.threshold)) throw ForestFormatError(Kind::structure, where(i) + "non-finite threshold");
    for (std::uint32_t child : {node.left, node.right}) {
      if (child >= n) throw ForestFormatError(Kind::structure, where(i) + "child index out of range");
      if (child == 0) throw ForestFormatError(Kind::structure, where(i) + "child refers to the root");
      if (referenced[child]++) throw ForestFormatError(Kind::structure, where(i) + "node has two parents");
    }
  }
  // Every node has at most one parent and the root none; full reachability
  // from the root then rules out detached cycles.
  std::vector<std::uint32_t> stack{0};
  std::size_t seen = 0;
  while (!stack.empty()) {
    const auto i = stack.back();
    stack.pop_back();
    ++seen;
    if (!tree.nodes[i].is_leaf()) {
      stack.push_back(tree.nodes[i].left);
      stack.push_back(tree.nodes[i].right);
    }
  }
  if (seen != n) throw ForestFormatError(Kind::structure, "tree " + std::to_string(tree_index) + " has unreachable nodes");
}

}  // namespace

Forest::Forest(std::vector<Tree> trees, ForestMeta meta) : trees_(std::move(trees)), meta_(std::move(meta)) {}

void Forest::validate() const {
  if (trees_.empty()) throw ForestFormatError(Kind::structure, "forest has no trees");
  for (std::size_t t = 0; t < trees_.size(); ++t) validate_tree(trees_[t], t);
}

std::size_t TrainConfig::features_per_split() const {
  switch (max_features) {
    case MaxFeatures::sqrt:
      return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(kNumFeatures))));
    case MaxFeatures::all:
      return kNumFeatures;
    case MaxFeatures::fixed:
      return max_features_k;
  }
  return kNumFeatures;
}

void TrainConfig::validate() const {
  if (n_trees == 0) throw ConfigError("n_trees must be positive");
  if (max_features == MaxFeatures::fixed && (max_features_k == 0 || max_features_k > kNumFeatures)) {
    throw ConfigError("fixed max_features must lie in [1, " + std::to_string(kNumFeatures) + "]");
  }
  if (max_depth && *max_depth == 0) throw ConfigError("max_depth must be positive");
  if (min_samples_split < 2) throw ConfigError("min_samples_split must be >= 2");
}

double gini(std::uint64_t count0, std::uint64_t count1) {
  if (count0 == 0 && count1 == 0) throw std::domain_error("gini of an empty node");
  const double n = static_cast<double>(count0 + count1);
  const double p0 = static_cast<double>(count0) / n;
  const double p1 = static_cast<double>(count1) / n;
  return 1.0 - (p0 * p0 + p1 * p1);
}

std::vector<std::uint32_t> bootstrap_indices(std::size_t n, std::uint64_t seed) {
  detail::Rng rng(seed);
  std::vector<std::uint32_t> out(n);
  for (auto& i : out) i = static_cast<std::uint32_t>(detail::uniform_index(rng, n));
  return out;
}

namespace {

// Column-major copy of the bootstrap sample plus one sorted slot order per
// feature. Every node owns the same [begin, end) range in all five orders.
class TreeBuilder {
 public:
  TreeBuilder(std::span<const FeatureVector> samples, std::span<const std::uint32_t> slots,
              const TrainConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(splitmix64(seed)), n_(slots.size()) {
    labels_.resize(n_);
    for (std::size_t f = 0; f < kNumFeatures; ++f) values_[f].resize(n_);
    for (std::size_t s = 0; s < n_; ++s) {
      const auto& sample = samples[slots[s]];
      labels_[s] = static_cast<std::uint8_t>(sample.label == Label::ransomware);
      for (std::size_t f = 0; f < kNumFeatures; ++f) values_[f][s] = sample.x[f];
    }
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      auto& order = order_[f];
      order.resize(n_);
      std::iota(order.begin(), order.end(), 0u);
      const auto& vals = values_[f];
      std::stable_sort(order.begin(), order.end(),
                       [&vals](std::uint32_t a, std::uint32_t b) { return vals[a] < vals[b]; });
    }
    goes_left_.resize(n_);
    scratch_.resize(n_);
  }

  Tree build() {
    Tree tree;
    struct Task {
      std::uint32_t begin, end;
      std::size_t depth;
      std::int64_t parent;
      bool is_left;
    };
    std::vector<Task> stack{{0, static_cast<std::uint32_t>(n_), 0, -1, false}};
    while (!stack.empty()) {
      const Task task = stack.back();
      stack.pop_back();
      const auto index = static_cast<std::uint32_t>(tree.nodes.size());
      if (task.parent >= 0) {
        auto& parent = tree.nodes[static_cast<std::size_t>(task.parent)];
        (task.is_left ? parent.left : parent.right) = index;
      }

      std::uint32_t c1 = 0;
      for (std::uint32_t i = task.begin; i < task.end; ++i) c1 += labels_[order_[0][i]];
      const std::uint32_t n = task.end - task.begin;
      const std::uint32_t c0 = n - c1;

      const bool must_stop = n < cfg_.min_samples_split || c0 == 0 || c1 == 0 ||
                             (cfg_.max_depth && task.depth >= *cfg_.max_depth);
      Split best;
      if (!must_stop) best = find_split(task.begin, task.end, c0, c1);
      if (!best.valid) {
        tree.nodes.push_back(TreeNode::leaf(c0, c1));
        continue;
      }
      tree.nodes.push_back(TreeNode::split(static_cast<std::int32_t>(best.feature), best.threshold, 0, 0));
      const std::uint32_t mid = partition(task.begin, task.end, best);
      stack.push_back({mid, task.end, task.depth + 1, index, false});
      stack.push_back({task.begin, mid, task.depth + 1, index, true});
    }
    return tree;
  }

 private:
  struct Split {
    bool valid = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double score = 0.0;  // sum over children of (sum_c n_c^2) / n_child; larger is purer
  };

  // Best split on one feature: lowest threshold among equal scores.
  Split scan_feature(std::size_t f, std::uint32_t begin, std::uint32_t end, std::uint32_t c0, std::uint32_t c1) const {
    Split best;
    const auto& order = order_[f];
    const auto& vals = values_[f];
    if (vals[order[begin]] == vals[order[end - 1]]) return best;
    double l0 = 0.0;
    double l1 = 0.0;
    const double t0 = c0;
    const double t1 = c1;
    const double total = static_cast<double>(end - begin);
    for (std::uint32_t i = begin; i + 1 < end; ++i) {
      (labels_[order[i]] ? l1 : l0) += 1.0;
      const double v = vals[order[i]];
      const double next = vals[order[i + 1]];
      if (!(v < next)) continue;
      const double nl = l0 + l1;
      const double nr = total - nl;
      const double r0 = t0 - l0;
      const double r1 = t1 - l1;
      const double score = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr;
      if (!best.valid || score > best.score) {
        double thr = v + (next - v) / 2.0;
        if (!(thr < next)) thr = v;
        best = {true, f, thr, score};
      }
    }
    return best;
  }

  Split find_split(std::uint32_t begin, std::uint32_t end, std::uint32_t c0, std::uint32_t c1) {
    std::array<std::size_t, kNumFeatures> features{};
    std::iota(features.begin(), features.end(), std::size_t{0});
    for (std::size_t i = kNumFeatures; i > 1; --i) {
      std::swap(features[i - 1], features[detail::uniform_index(rng_, i)]);
    }
    const std::size_t k = cfg_.features_per_split();
    // Examine the drawn subset; like CART implementations, keep drawing past k
    // only while no examined feature admits a split.
    Split best;
    std::size_t examined = 0;
    while (examined < kNumFeatures && (examined < k || !best.valid)) {
      const std::size_t batch_end = examined < k ? k : examined + 1;
      std::array<std::size_t, kNumFeatures> batch{};
      std::size_t m = 0;
      for (; examined < batch_end; ++examined) batch[m++] = features[examined];
      std::sort(batch.begin(), batch.begin() + static_cast<std::ptrdiff_t>(m));
      for (std::size_t j = 0; j < m; ++j) {
        Split s = scan_feature(batch[j], begin, end, c0, c1);
        if (!s.valid) continue;
        if (!best.valid || s.score > best.score ||
            (s.score == best.score && (s.feature < best.feature ||
                                       (s.feature == best.feature && s.threshold < best.threshold)))) {
          best = s;
        }
      }
    }
    return best;
  }

  // Stable partition of every feature order; returns the first right index.
  std::uint32_t partition(std::uint32_t begin, std::uint32_t end, const Split& split) {
    const auto& vals = values_[split.feature];
    for (std::uint32_t i = begin; i < end; ++i) {
      const auto s = order_[0][i];
      goes_left_[s] = vals[s] <= split.threshold;
    }
    std::uint32_t mid = begin;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      auto& order = order_[f];
      std::uint32_t l = begin;
      std::uint32_t r = 0;
      for (std::uint32_t i = begin; i < end; ++i) {
        const auto s = order[i];
        if (goes_left_[s]) {
          order[l++] = s;
        } else {
          scratch_[r++] = s;
        }
      }
      std::copy(scratch_.begin(), scratch_.begin() + r, order.begin() + l);
      mid = l;
    }
    return mid;
  }

  const TrainConfig& cfg_;
  detail::Rng rng_;
  std::size_t n_;
  std::vector<std::uint8_t> labels_;
  std::array<std::vector<double>, kNumFeatures> values_;
  std::array<std::vector<std::uint32_t>, kNumFeatures> order_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> scratch_;
};

}  // namespace

Tree grow_tree(std::span<const FeatureVector> samples, std::span<const std::uint32_t> slots,
               const TrainConfig& cfg, std::uint64_t tree_seed) {
  if (slots.empty()) throw DataError("cannot grow a tree on zero samples");
  return TreeBuilder(samples, slots, cfg, tree_seed).build();
}

Forest train_forest(std::span<const FeatureVector> train, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw DataError("cannot train a forest on an empty training set");
  if (train.size() > UINT32_MAX) throw DataError("training set too large");

  std::vector<Tree> trees(cfg.n_trees);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < cfg.n_trees; t = next++) {
      const std::uint64_t tree_seed = cfg.seed + t;
      std::vector<std::uint32_t> slots;
      if (cfg.bootstrap) {
        slots = bootstrap_indices(train.size(), tree_seed);
      } else {
        slots.resize(train.size());
        std::iota(slots.begin(), slots.end(), 0u);
      }
      trees[t] = grow_tree(train, slots, cfg, tree_seed);
    }
  };
  std::size_t n_threads = cfg.n_threads ? cfg.n_threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, cfg.n_trees);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }

  ForestMeta meta;
  meta.seed = cfg.seed;
  meta.n_trees = cfg.n_trees;
  return Forest(std::move(trees), std::move(meta));
}

namespace {

void require_trained(const Forest& forest) {
  if (forest.empty()) throw DataError("forest is not trained");
}

}  // namespace

Label predict(const Forest& forest, const FeatureArray& x) {
  require_trained(forest);
  std::size_t positive = 0;
  for (const auto& t : forest.trees()) positive += t.vote(x) == Label::ransomware;
  return 2 * positive >= forest.size() ? Label::ransomware : Label::benign;
}

double predict_proba(const Forest& forest, const FeatureArray& x) {
  require_trained(forest);
  double sum = 0.0;
  for (const auto& t : forest.trees()) sum += t.positive_fraction(x);
  return sum / static_cast<double>(forest.size());
}

std::vector<Label> predict_all(const Forest& forest, std::span<const FeatureVector> samples) {
  std::vector<Label> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(predict(forest, s.x));
  return out;
}

namespace detail {

json forest_to_json(const Forest& forest) {
  json trees = json::array();
  for (const auto& tree : forest.trees()) {
    json nodes = json::array();
    for (const auto& n : tree.nodes) {
      if (n.is_leaf()) {
        nodes.push_back(json::array({n.count0, n.count1}));
      } else {
        nodes.push_back(json::array({n.feature, n.threshold, n.left, n.right}));
      }
    }
    trees.push_back(json{{"nodes", std::move(nodes)}});
  }
  json meta{{"seed", forest.meta().seed}, {"n_trees", forest.meta().n_trees}, {"provenance", forest.meta().provenance}};
  return json{{"version", kForestFormatVersion},
              {"n_features", kNumFeatures},
              {"trees", std::move(trees)},
              {"meta", std::move(meta)}};
}

namespace {

std::uint32_t as_index(const json& v, const std::string& what) {
  if (!v.is_number_integer()) throw ForestFormatError(Kind::schema, what + " must be an integer");
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > UINT32_MAX) throw ForestFormatError(Kind::structure, what + " out of range");
    return static_cast<std::uint32_t>(u);
  }
  const auto s = v.get<std::int64_t>();
  if (s < 0 || s > static_cast<std::int64_t>(UINT32_MAX)) throw ForestFormatError(Kind::structure, what + " out of range");
  return static_cast<std::uint32_t>(s);
}

}  // namespace

Forest forest_from_json(const json& j) {
  if (!j.is_object()) throw ForestFormatError(Kind::schema, "forest document must be an object");
  if (!j.contains("version") || !j["version"].is_number_integer()) {
    throw ForestFormatError(Kind::schema, "missing integer 'version'");
  }
  if (j["version"].get<std::int64_t>() != kForestFormatVersion) {
    throw ForestFormatError(Kind::version, "unsupported forest format version " + j["version"].dump());
  }
  if (!j.contains("n_features") || !j["n_features"].is_number_integer() ||
      j["n_features"].get<std::int64_t>() != static_cast<std::int64_t>(kNumFeatures)) {
    throw ForestFormatError(Kind::schema, "'n_features' must be " + std::to_string(kNumFeatures));
  }
  if (!j.contains("trees") || !j["trees"].is_array()) throw ForestFormatError(Kind::schema, "missing 'trees' array");

  std::vector<Tree> trees;
  trees.reserve(j["trees"].size());
  for (const auto& jt : j["trees"]) {
    if (!jt.is_object() || !jt.contains("nodes") || !jt["nodes"].is_array()) {
      throw ForestFormatError(Kind::schema, "tree must be an object with a 'nodes' array");
    }
    Tree tree;
    tree.nodes.reserve(jt["nodes"].size());
    for (const auto& jn : jt["nodes"]) {
      if (!jn.is_array()) throw ForestFormatError(Kind::schema, "node must be an array");
      if (jn.size() == 2) {
        tree.nodes.push_back(TreeNode::leaf(as_index(jn[0], "leaf count"), as_index(jn[1], "leaf count")));
      } else if (jn.size() == 4) {
        if (!jn[0].is_number_integer()) throw ForestFormatError(Kind::schema, "feature index must be an integer");
        if (!jn[1].is_number()) throw ForestFormatError(Kind::schema, "threshold must be a number");
        const auto f = jn[0].get<std::int64_t>();
        if (f < 0 || f >= static_cast<std::int64_t>(kNumFeatures)) {
          throw ForestFormatError(Kind::structure, "feature index out of range");
        }
        tree.nodes.push_back(TreeNode::split(static_cast<std::int32_t>(f), jn[1].get<double>(),
                                             as_index(jn[2], "child index"), as_index(jn[3], "child index")));
      } else {
        throw ForestFormatError(Kind::schema, "node arrays have 2 (leaf) or 4 (split) elements");
      }
    }
    trees.push_back(std::move(tree));
  }

  ForestMeta meta;
  if (j.contains("meta")) {
    const auto& m = j["meta"];
    if (!m.is_object()) throw ForestFormatError(Kind::schema, "'meta' must be an object");
    try {
      if (m.contains("seed")) meta.seed = m["seed"].get<std::uint64_t>();
      if (m.contains("n_trees")) meta.n_trees = m["n_trees"].get<std::size_t>();
      if (m.contains("provenance")) meta.provenance = m["provenance"].get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw ForestFormatError(Kind::schema, std::string("bad 'meta': ") + e.what());
    }
  }
  Forest forest(std::move(trees), std::move(meta));
  forest.validate();
  return forest;
}

}  // namespace detail

std::string serialize_forest(const Forest& forest) {
  forest.validate();
  return detail::forest_to_json(forest).dump();
}

Forest deserialize_forest(std::string_view bytes) {
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ForestFormatError(Kind::framing, std::string("malformed forest payload: ") + e.what());
  }
  return detail::forest_from_json(j);
}

void save_forest(const std::string& path, const Forest& forest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << serialize_forest(forest);
}

Forest load_forest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_forest(ss.str());
}

}  // namespace fedransom
