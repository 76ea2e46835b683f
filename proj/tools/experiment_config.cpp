#include "experiment_config.hpp"

#include <chrono>
#include <set>
#include <string>

#include "fedransom/errors.hpp"
#include "fedransom/seeds.hpp"

namespace fedransom::cli {

namespace fs = std::filesystem;

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "master_seed",         "corpus",           "synth_config",        "out",
      "parse.lenient",       "parse.order",      "window.seconds",      "window.hop",
      "window.empty",        "split.test_fraction", "split.stratify",   "balance.enabled",
      "balance.ratio",       "balance.oversample", "normalize",         "train.n_trees",
      "train.max_features",  "train.max_depth",  "train.min_samples_split", "train.bootstrap",
      "train.threads",       "aggregation.policy", "aggregation.target_trees", "transport",
      "transport.port",      "transport.max_frame_bytes", "timeout_seconds"};
  return keys;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv, const fs::path& base_dir) {
  for (const auto& [key, value] : kv.entries()) {
    if (!known_keys().contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  ExperimentConfig c;
  if (auto v = kv.get("corpus")) c.corpus = resolve(base_dir, *v);
  if (auto v = kv.get("synth_config")) c.synth_config = resolve(base_dir, *v);
  if (auto v = kv.get("out")) c.out = resolve(base_dir, *v);

  c.parse.lenient = kv.get_bool("parse.lenient", false);
  const auto order = kv.get_string("parse.order", "sort");
  if (order == "sort") {
    c.parse.order = OrderPolicy::sort;
  } else if (order == "strict") {
    c.parse.order = OrderPolicy::strict;
  } else {
    throw ConfigError("parse.order must be sort or strict");
  }

  c.window.window_seconds = kv.get_double("window.seconds", c.window.window_seconds);
  c.window.hop_seconds = kv.get_double("window.hop", c.window.window_seconds);
  const auto empty = kv.get_string("window.empty", "emit-zeros");
  if (empty == "emit-zeros") {
    c.window.empty_windows = EmptyWindowPolicy::emit_zeros;
  } else if (empty == "skip") {
    c.window.empty_windows = EmptyWindowPolicy::skip;
  } else {
    throw ConfigError("window.empty must be emit-zeros or skip");
  }

  c.split.test_fraction = kv.get_double("split.test_fraction", c.split.test_fraction);
  c.split.stratify = kv.get_bool("split.stratify", c.split.stratify);

  auto& s = c.settings;
  if (kv.get_bool("balance.enabled", true)) {
    BalanceSpec b;
    b.undersample_majority_to_ratio = kv.get_double("balance.ratio", b.undersample_majority_to_ratio);
    b.oversample_minority_to_parity = kv.get_bool("balance.oversample", b.oversample_minority_to_parity);
    s.preprocessing.balance = b;
  } else {
    s.preprocessing.balance.reset();
  }
  s.preprocessing.normalize = kv.get_bool("normalize", true);

  s.train.n_trees = kv.get_uint("train.n_trees", s.train.n_trees);
  const auto mf = kv.get_string("train.max_features", "sqrt");
  if (mf == "sqrt") {
    s.train.max_features = MaxFeatures::sqrt;
  } else if (mf == "all") {
    s.train.max_features = MaxFeatures::all;
  } else {
    s.train.max_features = MaxFeatures::fixed;
    s.train.max_features_k = kv.get_uint("train.max_features", 0);
  }
  if (kv.contains("train.max_depth")) s.train.max_depth = kv.get_uint("train.max_depth", 0);
  s.train.min_samples_split = kv.get_uint("train.min_samples_split", s.train.min_samples_split);
  s.train.bootstrap = kv.get_bool("train.bootstrap", s.train.bootstrap);
  s.train.n_threads = kv.get_uint("train.threads", s.train.n_threads);

  const auto policy = kv.get_string("aggregation.policy", "concat-all");
  if (policy == "concat-all") {
    s.policy = AggregationPolicy::concat_all();
  } else if (policy == "subsample") {
    s.policy = AggregationPolicy::size_weighted_subsample(kv.get_uint("aggregation.target_trees", 0), 0);
  } else {
    throw ConfigError("aggregation.policy must be concat-all or subsample");
  }

  s.channel = channel_kind_from_string(kv.get_string("transport", "in-proc"));
  const auto port = kv.get_uint("transport.port", 0);
  if (port > 65535) throw ConfigError("transport.port out of range");
  s.transport.port = static_cast<std::uint16_t>(port);
  s.transport.max_frame_bytes = kv.get_uint("transport.max_frame_bytes", s.transport.max_frame_bytes);
  const double timeout = kv.get_double("timeout_seconds", 600.0);
  if (!(timeout > 0.0)) throw ConfigError("timeout_seconds must be positive");
  s.timeout = std::chrono::milliseconds(static_cast<long long>(timeout * 1000.0));

  c.set_master_seed(kv.get_uint("master_seed", 0));
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& file) {
  return from_kv(KeyValueConfig::load(file), file.has_parent_path() ? file.parent_path() : fs::path("."));
}

void ExperimentConfig::set_master_seed(std::uint64_t seed) {
  settings.master_seed = seed;
  split.seed = derive_seed(seed, "split");
}

void ExperimentConfig::validate() const {
  window.validate();
  split.validate();
  if (settings.preprocessing.balance) settings.preprocessing.balance->validate();
  settings.base_train_config().validate();
  if (settings.transport.max_frame_bytes == 0) throw ConfigError("transport.max_frame_bytes must be positive");
}

}  // namespace fedransom::cli
