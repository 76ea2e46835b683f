#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "fedransom/errors.hpp"
#include "fedransom/forest.hpp"
#include "fedransom/pipeline.hpp"
#include "test_support.hpp"

using namespace fedransom;
using fedransom::fixtures::sample;

namespace {

Tree stump(std::uint32_t left0, std::uint32_t left1, std::uint32_t right0, std::uint32_t right1, double threshold = 0.0) {
  Tree t;
  t.nodes = {TreeNode::split(0, threshold, 1, 2), TreeNode::leaf(left0, left1), TreeNode::leaf(right0, right1)};
  return t;
}

Tree single_leaf(std::uint32_t c0, std::uint32_t c1) {
  Tree t;
  t.nodes = {TreeNode::leaf(c0, c1)};
  return t;
}

Forest forest_of(std::vector<Tree> trees) {
  ForestMeta meta;
  meta.n_trees = trees.size();
  return Forest(std::move(trees), meta);
}

// True when some single (feature, threshold) pair separates the classes.
bool exhaustively_separable(const std::vector<FeatureVector>& data) {
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    std::set<double> values;
    for (const auto& s : data) values.insert(s.x[f]);
    for (double t : values) {
      bool below_benign = true, below_ransom = true;
      for (const auto& s : data) {
        const bool below = s.x[f] <= t;
        const bool ransom = s.label == Label::ransomware;
        if (below == ransom) below_benign = false;
        if (below != ransom) below_ransom = false;
      }
      if (below_benign || below_ransom) return true;
    }
  }
  return false;
}

double training_accuracy(const Forest& f, const std::vector<FeatureVector>& data) {
  std::size_t ok = 0;
  for (const auto& s : data) ok += predict(f, s.x) == s.label;
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

}  // namespace

TEST(Gini, HandValues) {
  EXPECT_EQ(gini(10, 0), 0.0);
  EXPECT_EQ(gini(0, 7), 0.0);
  EXPECT_EQ(gini(5, 5), 0.5);
  EXPECT_EQ(gini(3, 1), 0.375);
  EXPECT_THROW(gini(0, 0), std::domain_error);
}

TEST(Bootstrap, SizeAndUniqueFraction) {
  const std::size_t n = 1000;
  double sum = 0.0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto idx = bootstrap_indices(n, seed);
    ASSERT_EQ(idx.size(), n);
    for (auto i : idx) ASSERT_LT(i, n);
    sum += static_cast<double>(std::set<std::uint32_t>(idx.begin(), idx.end()).size()) / static_cast<double>(n);
  }
  EXPECT_NEAR(sum / 500.0, 1.0 - std::exp(-1.0), 0.02);
}

TEST(TrainForest, SingleSampleGivesSingleLeafTrees) {
  const std::vector<FeatureVector> one = {sample({1, 2, 3, 4, 5}, Label::ransomware)};
  TrainConfig cfg;
  cfg.n_trees = 7;
  const auto f = train_forest(one, cfg);
  ASSERT_EQ(f.size(), 7u);
  for (const auto& t : f.trees()) {
    ASSERT_EQ(t.nodes.size(), 1u);
    EXPECT_TRUE(t.nodes[0].is_leaf());
  }
  EXPECT_EQ(predict(f, {0, 0, 0, 0, 0}), Label::ransomware);
}

TEST(TrainForest, SeparableSetFitsPerfectly) {
  auto data = fixtures::blobs(100, 100, 17, "n0", 12.0);
  ASSERT_TRUE(exhaustively_separable(data));
  TrainConfig cfg;
  cfg.n_trees = 10;
  cfg.seed = 5;
  EXPECT_EQ(training_accuracy(train_forest(data, cfg), data), 1.0);
}

TEST(TrainForest, SeparableOnOneOfTwoFeatures) {
  // Class is decided by feature 3 alone; feature 1 carries overlapping noise.
  std::mt19937_64 rng(2);
  std::vector<FeatureVector> data;
  for (int i = 0; i < 200; ++i) {
    const double a = static_cast<double>(rng() % 1000);
    const double b = static_cast<double>(rng() % 1000);
    data.push_back(sample({0, b, 0, a, 0}, a > 500 ? Label::ransomware : Label::benign));
  }
  ASSERT_TRUE(exhaustively_separable(data));
  TrainConfig cfg;
  cfg.n_trees = 10;
  EXPECT_EQ(training_accuracy(train_forest(data, cfg), data), 1.0);
}

TEST(TrainForest, DeterministicSerialization) {
  const auto data = fixtures::noisy(500, 4);
  TrainConfig cfg;
  cfg.n_trees = 20;
  cfg.seed = 42;
  const auto a = serialize_forest(train_forest(data, cfg));
  cfg.n_threads = 3;
  const auto b = serialize_forest(train_forest(data, cfg));
  EXPECT_EQ(a, b);
}

TEST(TrainForest, SingleClassGivesConstantModel) {
  std::vector<FeatureVector> data = fixtures::noisy(50, 3);
  for (auto& s : data) s.label = Label::benign;
  const auto f = train_forest(data, {});
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    FeatureArray x;
    for (auto& v : x) v = static_cast<double>(rng() % 1000) - 500.0;
    EXPECT_EQ(predict(f, x), Label::benign);
  }
}

TEST(TrainForest, EmptyTrainRejected) {
  EXPECT_THROW(train_forest({}, {}), DataError);
  TrainConfig bad;
  bad.n_trees = 0;
  EXPECT_THROW(train_forest(fixtures::noisy(10, 1), bad), ConfigError);
}

TEST(TrainForest, DepthLimitRespected) {
  TrainConfig cfg;
  cfg.n_trees = 5;
  cfg.max_depth = 3;
  const auto forest = train_forest(fixtures::noisy(400, 1), cfg);
  for (const auto& t : forest.trees()) EXPECT_LE(t.depth(), 3u);
}

TEST(Predict, MajorityVote) {
  const auto f = forest_of({single_leaf(0, 3), single_leaf(0, 3), single_leaf(3, 0)});
  EXPECT_EQ(predict(f, {}), Label::ransomware);
}

TEST(Predict, TieGoesToRansomware) {
  const auto f = forest_of({single_leaf(4, 0), single_leaf(0, 4)});
  EXPECT_EQ(predict(f, {}), Label::ransomware);
}

TEST(Predict, UntrainedForestRejected) {
  EXPECT_THROW(predict(Forest{}, {}), DataError);
  EXPECT_THROW(predict_proba(Forest{}, {}), DataError);
}

TEST(PredictProba, PurePositiveLeaves) {
  EXPECT_EQ(predict_proba(forest_of({single_leaf(0, 2), single_leaf(0, 9)}), {}), 1.0);
}

TEST(PredictProba, MeanOfLeafFractions) {
  EXPECT_EQ(predict_proba(forest_of({single_leaf(3, 1), single_leaf(1, 3)}), {}), 0.5);
}

TEST(PredictProba, SingleTreeIsLeafFraction) {
  const auto f = forest_of({stump(3, 1, 1, 4, 0.5)});
  EXPECT_EQ(predict_proba(f, {0, 0, 0, 0, 0}), 0.25);
  EXPECT_EQ(predict_proba(f, {1, 0, 0, 0, 0}), 0.8);
}

TEST(PredictProba, AgreesWithVoteOnPureLeaves) {
  // Fully grown trees on bootstrap samples end in pure leaves.
  const auto data = fixtures::noisy(600, 11);
  TrainConfig cfg;
  cfg.n_trees = 25;
  const auto f = train_forest(data, cfg);
  for (const auto& t : f.trees()) {
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) ASSERT_TRUE(n.count0 == 0 || n.count1 == 0);
    }
  }
  for (const auto& s : fixtures::noisy(300, 12)) {
    EXPECT_EQ(predict(f, s.x) == Label::ransomware, predict_proba(f, s.x) >= 0.5);
  }
}

TEST(ForestProperties, FlippingOneVoteUpNeverLowersProbability) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Tree> trees;
    const std::size_t n = 1 + rng() % 9;
    for (std::size_t i = 0; i < n; ++i) trees.push_back(single_leaf(1 + rng() % 5, rng() % 5));
    const auto before = forest_of(trees);
    const std::size_t flip = rng() % n;
    if (trees[flip].vote({}) == Label::ransomware) continue;
    auto& leaf = trees[flip].nodes[0];
    std::swap(leaf.count0, leaf.count1);
    if (leaf.count1 == leaf.count0) continue;
    EXPECT_GE(predict_proba(forest_of(trees), {}), predict_proba(before, {}));
  }
}

TEST(ForestProperties, AcceptedSplitsNeverIncreaseGini) {
  const auto data = fixtures::noisy(800, 13);
  TrainConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto slots = bootstrap_indices(data.size(), seed);
    const Tree tree = grow_tree(data, slots, cfg, seed);
    // Route the bootstrap sample to recover per-node class counts.
    std::vector<std::array<std::uint64_t, 2>> counts(tree.nodes.size(), {0, 0});
    for (auto s : slots) {
      std::size_t i = 0;
      while (true) {
        ++counts[i][to_int(data[s].label)];
        const auto& node = tree.nodes[i];
        if (node.is_leaf()) break;
        i = data[s].x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
      }
    }
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const auto& node = tree.nodes[i];
      if (node.is_leaf()) {
        EXPECT_EQ(node.count0, counts[i][0]);
        EXPECT_EQ(node.count1, counts[i][1]);
        continue;
      }
      const auto& l = counts[node.left];
      const auto& r = counts[node.right];
      const double nl = static_cast<double>(l[0] + l[1]);
      const double nr = static_cast<double>(r[0] + r[1]);
      ASSERT_GT(nl, 0);
      ASSERT_GT(nr, 0);
      const double children = (nl * gini(l[0], l[1]) + nr * gini(r[0], r[1])) / (nl + nr);
      EXPECT_LE(children, gini(counts[i][0], counts[i][1]) + 1e-12);
    }
  }
}

TEST(ForestProperties, MonotoneFeatureTransformKeepsTrainingPredictions) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto data = fixtures::noisy(120, 100 + seed);
    auto warped = data;
    for (auto& s : warped) s.x[1] = std::exp(s.x[1] / 2.0) * 3.0 + 7.0;
    TrainConfig cfg;
    cfg.n_trees = 15;
    cfg.seed = seed;
    // Out-of-bag points may fall between two in-bag neighbours, where the
    // warped midpoint lands elsewhere; without bootstrap every point is in-bag.
    cfg.bootstrap = false;
    const auto a = train_forest(data, cfg);
    const auto b = train_forest(warped, cfg);
    for (std::size_t i = 0; i < data.size(); ++i) {
      EXPECT_EQ(predict(a, data[i].x), predict(b, warped[i].x));
      EXPECT_EQ(predict_proba(a, data[i].x), predict_proba(b, warped[i].x));
    }
  }
}

TEST(ForestProperties, SplitThresholdsSeparateNeighbouringValues) {
  // Values 1 and 2 with labels 0 and 1: the chosen threshold is the midpoint.
  const std::vector<FeatureVector> data = {sample({1, 0, 0, 0, 0}, Label::benign),
                                           sample({2, 0, 0, 0, 0}, Label::ransomware)};
  TrainConfig cfg;
  cfg.bootstrap = false;
  cfg.max_features = MaxFeatures::all;
  const auto f = train_forest(data, cfg);
  const auto& root = f.trees()[0].nodes[0];
  EXPECT_EQ(root.feature, 0);
  EXPECT_EQ(root.threshold, 1.5);
}

TEST(Serialization, RoundTripPredictsIdentically) {
  const auto data = fixtures::noisy(400, 21);
  TrainConfig cfg;
  cfg.n_trees = 12;
  const auto f = train_forest(data, cfg);
  const auto back = deserialize_forest(serialize_forest(f));
  EXPECT_EQ(back, f);
  for (const auto& s : fixtures::noisy(200, 22)) {
    EXPECT_EQ(predict(back, s.x), predict(f, s.x));
    EXPECT_EQ(predict_proba(back, s.x), predict_proba(f, s.x));
  }
}

TEST(Serialization, FileRoundTrip) {
  fixtures::TempDir dir;
  const auto f = train_forest(fixtures::noisy(100, 2), {});
  const auto path = (dir.path() / "m.json").string();
  save_forest(path, f);
  EXPECT_EQ(load_forest(path), f);
}

TEST(Serialization, DistinctErrorKinds) {
  const auto text = serialize_forest(forest_of({stump(1, 0, 0, 1)}));
  auto kind_of = [](const std::string& s) {
    try {
      deserialize_forest(s);
    } catch (const ForestFormatError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "no error for: " << s;
    return ForestFormatError::Kind::framing;
  };
  EXPECT_EQ(kind_of(text.substr(0, text.size() / 2)), ForestFormatError::Kind::framing);
  EXPECT_EQ(kind_of("[1, 2, 3]"), ForestFormatError::Kind::schema);
  EXPECT_EQ(kind_of(R"({"version": 999, "n_features": 5, "trees": []})"), ForestFormatError::Kind::version);
  EXPECT_EQ(kind_of(R"({"version": 1, "n_features": 5, "trees": [{"nodes": [[0, 0.5, 1, 7], [1, 0], [0, 1]]}]})"),
            ForestFormatError::Kind::structure);
}

TEST(Serialization, StructuralValidation) {
  Tree cyclic;
  cyclic.nodes = {TreeNode::split(0, 0.0, 1, 2), TreeNode::split(0, 0.0, 2, 2), TreeNode::leaf(1, 0)};
  EXPECT_THROW(forest_of({cyclic}).validate(), ForestFormatError);
  Tree back_edge;
  back_edge.nodes = {TreeNode::split(0, 0.0, 1, 0), TreeNode::leaf(1, 0)};
  EXPECT_THROW(forest_of({back_edge}).validate(), ForestFormatError);
  EXPECT_THROW(forest_of({single_leaf(0, 0)}).validate(), ForestFormatError);
  EXPECT_NO_THROW(forest_of({stump(1, 0, 0, 1)}).validate());
}

TEST(Pipeline, FoldedForestMatchesNormalizedPredictions) {
  const auto data = fixtures::noisy(500, 31);
  std::vector<FeatureVector> scaled = data;
  for (auto& s : scaled) {
    s.x[0] = s.x[0] * 1e6 + 3e7;
    s.x[2] = s.x[2] * 0.001 - 4.0;
  }
  TrainConfig cfg;
  cfg.n_trees = 10;
  Preprocessing prep;
  prep.balance.reset();
  const auto folded = fit_model(scaled, cfg, prep);
  const auto norm = Normalizer::fit(scaled);
  const auto raw_model = train_forest(norm.apply(std::span<const FeatureVector>(scaled)), cfg);
  for (const auto& s : scaled) EXPECT_EQ(predict(folded, s.x), predict(raw_model, norm.apply(s.x)));
}
