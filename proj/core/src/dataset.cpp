#include "fedransom/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "fedransom/config.hpp"
#include "fedransom/errors.hpp"
#include "fedransom/seeds.hpp"
#include "random_util.hpp"
#include "text_util.hpp"

namespace fedransom {

namespace fs = std::filesystem;

void SplitSpec::validate() const {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie in (0, 1)");
  }
}

void BalanceSpec::validate() const {
  if (!(undersample_majority_to_ratio >= 1.0) || !std::isfinite(undersample_majority_to_ratio)) {
    throw ConfigError("majority:minority ratio must be >= 1");
  }
}

namespace {

std::string class_name(Label l) { return l == Label::ransomware ? "ransomware (1)" : "benign (0)"; }

// Picks round(n * fraction) of `indices` at random; returns them ascending.
std::vector<std::size_t> pick(std::vector<std::size_t> indices, double fraction, detail::Rng& rng) {
  const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(indices.size()) * fraction));
  detail::shuffle(indices, rng);
  indices.resize(k);
  std::sort(indices.begin(), indices.end());
  return indices;
}

}  // namespace

SplitIndices stratified_split_indices(std::span<const FeatureVector> samples, const SplitSpec& spec) {
  spec.validate();
  detail::Rng rng(spec.seed);
  std::vector<std::size_t> test;
  if (spec.stratify) {
    for (Label cls : {Label::benign, Label::ransomware}) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].label == cls) members.push_back(i);
      }
      if (members.empty()) continue;
      if (members.size() < 2) {
        throw DataError("stratified split needs at least 2 samples of class " + class_name(cls));
      }
      auto chosen = pick(std::move(members), spec.test_fraction, rng);
      test.insert(test.end(), chosen.begin(), chosen.end());
    }
    std::sort(test.begin(), test.end());
  } else {
    std::vector<std::size_t> all(samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    test = pick(std::move(all), spec.test_fraction, rng);
  }

  SplitIndices out;
  out.test = test;
  out.train.reserve(samples.size() - test.size());
  std::size_t t = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (t < test.size() && test[t] == i) {
      ++t;
    } else {
      out.train.push_back(i);
    }
  }
  return out;
}

SplitResult stratified_split(std::span<const FeatureVector> samples, const SplitSpec& spec) {
  const auto idx = stratified_split_indices(samples, spec);
  SplitResult out;
  out.train.reserve(idx.train.size());
  out.test.reserve(idx.test.size());
  for (auto i : idx.train) out.train.push_back(samples[i]);
  for (auto i : idx.test) out.test.push_back(samples[i]);
  return out;
}

ClassCounts count_classes(std::span<const FeatureVector> samples) {
  ClassCounts c;
  for (const auto& s : samples) (s.label == Label::ransomware ? c.ransomware : c.benign)++;
  return c;
}

std::vector<FeatureVector> balance_classes(std::span<const FeatureVector> train, const BalanceSpec& spec) {
  spec.validate();
  const ClassCounts counts = count_classes(train);
  if (counts.benign == 0 || counts.ransomware == 0) {
    throw DataError("class balancing needs both classes present");
  }
  const Label majority = counts.ransomware > counts.benign ? Label::ransomware : Label::benign;
  const std::size_t n_minority = std::min(counts.benign, counts.ransomware);
  const std::size_t n_majority = std::max(counts.benign, counts.ransomware);

  detail::Rng rng(spec.seed);

  std::vector<std::size_t> majority_idx;
  std::vector<std::size_t> minority_idx;
  for (std::size_t i = 0; i < train.size(); ++i) {
    (train[i].label == majority ? majority_idx : minority_idx).push_back(i);
  }

  const auto cap = static_cast<std::size_t>(
      std::floor(spec.undersample_majority_to_ratio * static_cast<double>(n_minority)));
  std::vector<bool> keep(train.size(), true);
  std::size_t kept_majority = n_majority;
  if (n_majority > cap) {
    auto shuffled = majority_idx;
    detail::shuffle(shuffled, rng);
    for (std::size_t i = cap; i < shuffled.size(); ++i) keep[shuffled[i]] = false;
    kept_majority = cap;
  }

  std::vector<FeatureVector> out;
  out.reserve(std::max(kept_majority, n_minority) * 2);
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (keep[i]) out.push_back(train[i]);
  }
  if (spec.oversample_minority_to_parity && kept_majority > n_minority) {
    for (std::size_t k = n_minority; k < kept_majority; ++k) {
      out.push_back(train[minority_idx[detail::uniform_index(rng, minority_idx.size())]]);
    }
  }
  return out;
}

Normalizer Normalizer::fit(std::span<const FeatureVector> train) {
  if (train.empty()) throw DataError("cannot fit a normalizer on an empty training set");
  FeatureArray mean{};
  FeatureArray sd{};
  const double n = static_cast<double>(train.size());
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    double sum = 0.0;
    for (const auto& s : train) sum += s.x[f];
    mean[f] = sum / n;
    double sq = 0.0;
    for (const auto& s : train) {
      const double d = s.x[f] - mean[f];
      sq += d * d;
    }
    sd[f] = std::sqrt(sq / n);
  }
  return Normalizer(mean, sd);
}

double Normalizer::apply(std::size_t feature, double value) const {
  if (stddev_[feature] == 0.0) return 0.0;
  return (value - mean_[feature]) / stddev_[feature];
}

FeatureArray Normalizer::apply(const FeatureArray& x) const {
  FeatureArray out{};
  for (std::size_t f = 0; f < kNumFeatures; ++f) out[f] = apply(f, x[f]);
  return out;
}

std::vector<FeatureVector> Normalizer::apply(std::span<const FeatureVector> samples) const {
  std::vector<FeatureVector> out(samples.begin(), samples.end());
  for (auto& s : out) s.x = apply(s.x);
  return out;
}

double Normalizer::invert(std::size_t feature, double normalized) const {
  if (stddev_[feature] == 0.0) return mean_[feature];
  return normalized * stddev_[feature] + mean_[feature];
}

namespace {

std::size_t node_position(std::span<const NodeId> nodes, const NodeId& id) {
  auto it = std::find(nodes.begin(), nodes.end(), id);
  if (it == nodes.end()) throw DataError("unknown server id '" + id.str() + "'");
  return static_cast<std::size_t>(it - nodes.begin());
}

}  // namespace

std::vector<NodePartition> partition_by_server(std::span<const FeatureVector> samples,
                                               std::span<const NodeId> nodes) {
  std::vector<NodePartition> out;
  out.reserve(nodes.size());
  for (const auto& n : nodes) out.push_back({n, {}});
  for (const auto& s : samples) out[node_position(nodes, s.server)].samples.push_back(s);
  return out;
}

std::vector<std::vector<TraceRun>> partition_runs_by_server(std::span<const TraceRun> runs,
                                                           std::span<const NodeId> nodes) {
  std::vector<std::vector<TraceRun>> out(nodes.size());
  for (const auto& r : runs) out[node_position(nodes, r.server)].push_back(r);
  return out;
}

std::vector<NodeDataset> make_node_datasets(std::span<const FeatureVector> samples,
                                            std::span<const NodeId> nodes, const SplitSpec& spec) {
  std::vector<NodeDataset> out;
  for (auto& part : partition_by_server(samples, nodes)) {
    NodeDataset ds;
    ds.node_id = part.node_id;
    if (!part.empty()) {
      SplitSpec node_spec = spec;
      node_spec.seed = derive_seed(spec.seed, part.node_id.str());
      auto split = stratified_split(part.samples, node_spec);
      ds.train = std::move(split.train);
      ds.test = std::move(split.test);
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<FeatureVector> pooled_test(std::span<const NodeDataset> nodes) {
  std::vector<FeatureVector> out;
  for (const auto& n : nodes) out.insert(out.end(), n.test.begin(), n.test.end());
  return out;
}

std::uint64_t hash_samples(std::span<const FeatureVector> samples) {
  std::uint64_t h = fnv1a("");
  for (const auto& s : samples) {
    std::string row;
    for (double v : s.x) row += detail::format_double(v) + ',';
    row += std::to_string(to_int(s.label)) + ',' + std::to_string(s.window_index) + ',' + s.server.str() + '\n';
    h = fnv1a(row, h);
  }
  return h;
}

void save_node_dataset(const fs::path& dir, const NodeDataset& node, const SplitSpec& spec) {
  const fs::path node_dir = dir / node.node_id.str();
  fs::create_directories(node_dir);
  save_features_csv(node_dir / "train.csv", node.train);
  save_features_csv(node_dir / "test.csv", node.test);

  const auto tr = count_classes(node.train);
  const auto te = count_classes(node.test);
  KeyValueConfig m;
  m.set("node_id", node.node_id.str());
  m.set("train_benign", std::to_string(tr.benign));
  m.set("train_ransomware", std::to_string(tr.ransomware));
  m.set("test_benign", std::to_string(te.benign));
  m.set("test_ransomware", std::to_string(te.ransomware));
  m.set("split_seed", std::to_string(spec.seed));
  m.set("test_fraction", detail::format_double(spec.test_fraction));
  m.set("stratify", spec.stratify ? "true" : "false");
  std::ofstream out(node_dir / "manifest.txt", std::ios::binary);
  if (!out) throw DataError("cannot write " + (node_dir / "manifest.txt").string());
  out << m.dump();
}

NodeDataset load_node_dataset(const fs::path& node_dir) {
  const auto m = KeyValueConfig::load(node_dir / "manifest.txt");
  NodeDataset ds;
  ds.node_id = NodeId(m.get_string("node_id", node_dir.filename().string()));
  ds.train = load_features_csv(node_dir / "train.csv");
  ds.test = load_features_csv(node_dir / "test.csv");
  const auto tr = count_classes(ds.train);
  const auto te = count_classes(ds.test);
  if (tr.benign != m.get_uint("train_benign", tr.benign) ||
      tr.ransomware != m.get_uint("train_ransomware", tr.ransomware) ||
      te.benign != m.get_uint("test_benign", te.benign) ||
      te.ransomware != m.get_uint("test_ransomware", te.ransomware)) {
    throw DataError(node_dir.string() + ": class counts disagree with manifest");
  }
  return ds;
}

std::vector<NodeDataset> load_node_datasets(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  std::vector<fs::path> node_dirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.txt")) node_dirs.push_back(e.path());
  }
  std::sort(node_dirs.begin(), node_dirs.end());
  if (node_dirs.empty()) throw DataError("no node datasets under " + dir.string());
  std::vector<NodeDataset> out;
  for (const auto& d : node_dirs) out.push_back(load_node_dataset(d));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.node_id < b.node_id; });
  return out;
}

}  // namespace fedransom
