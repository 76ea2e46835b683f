#include "fedransom/fed_protocol.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>

#include "fedransom/seeds.hpp"
#include "json_codec.hpp"
#include "random_util.hpp"

namespace fedransom {

using nlohmann::json;

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::config_broadcast:
      return "ConfigBroadcast";
    case MessageKind::local_model_upload:
      return "LocalModelUpload";
    case MessageKind::global_model_broadcast:
      return "GlobalModelBroadcast";
    case MessageKind::abstention:
      return "Abstention";
  }
  return "?";
}

namespace {

MessageKind kind_from_string(const std::string& s) {
  for (auto k : {MessageKind::config_broadcast, MessageKind::local_model_upload, MessageKind::global_model_broadcast,
                 MessageKind::abstention}) {
    if (to_string(k) == s) return k;
  }
  throw ProtocolError("unknown message kind '" + s + "'");
}

json train_config_to_json(const TrainConfig& c) {
  json j;
  j["n_trees"] = c.n_trees;
  switch (c.max_features) {
    case MaxFeatures::sqrt:
      j["max_features"] = "sqrt";
      break;
    case MaxFeatures::all:
      j["max_features"] = "all";
      break;
    case MaxFeatures::fixed:
      j["max_features"] = c.max_features_k;
      break;
  }
  j["max_depth"] = c.max_depth ? json(*c.max_depth) : json(nullptr);
  j["min_samples_split"] = c.min_samples_split;
  j["bootstrap"] = c.bootstrap;
  j["seed"] = c.seed;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.n_trees = j.at("n_trees").get<std::size_t>();
  const auto& mf = j.at("max_features");
  if (mf.is_string()) {
    const auto s = mf.get<std::string>();
    if (s == "sqrt") {
      c.max_features = MaxFeatures::sqrt;
    } else if (s == "all") {
      c.max_features = MaxFeatures::all;
    } else {
      throw ProtocolError("unknown max_features '" + s + "'");
    }
  } else {
    c.max_features = MaxFeatures::fixed;
    c.max_features_k = mf.get<std::size_t>();
  }
  if (!j.at("max_depth").is_null()) c.max_depth = j.at("max_depth").get<std::size_t>();
  c.min_samples_split = j.at("min_samples_split").get<std::size_t>();
  c.bootstrap = j.at("bootstrap").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

json preprocessing_to_json(const Preprocessing& p) {
  json j;
  if (p.balance) {
    j["balance"] = {{"ratio", p.balance->undersample_majority_to_ratio},
                    {"oversample", p.balance->oversample_minority_to_parity},
                    {"seed", p.balance->seed}};
  } else {
    j["balance"] = nullptr;
  }
  j["normalize"] = p.normalize;
  return j;
}

Preprocessing preprocessing_from_json(const json& j) {
  Preprocessing p;
  if (j.at("balance").is_null()) {
    p.balance.reset();
  } else {
    const auto& b = j.at("balance");
    BalanceSpec spec;
    spec.undersample_majority_to_ratio = b.at("ratio").get<double>();
    spec.oversample_minority_to_parity = b.at("oversample").get<bool>();
    spec.seed = b.at("seed").get<std::uint64_t>();
    spec.validate();
    p.balance = spec;
  }
  p.normalize = j.at("normalize").get<bool>();
  return p;
}

std::uint32_t expected_round(MessageKind k) { return k == MessageKind::config_broadcast ? 0 : 1; }

}  // namespace

void FederationMessage::validate() const {
  if (round != expected_round(kind)) {
    throw ProtocolError(std::string(to_string(kind)) + " must carry round " + std::to_string(expected_round(kind)));
  }
  const bool payload_ok = std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConfigPayload>) return kind == MessageKind::config_broadcast;
        if constexpr (std::is_same_v<P, LocalModelUpload>) return kind == MessageKind::local_model_upload;
        if constexpr (std::is_same_v<P, Forest>) return kind == MessageKind::global_model_broadcast;
        if constexpr (std::is_same_v<P, Abstention>) return kind == MessageKind::abstention;
        return false;
      },
      payload);
  if (!payload_ok) throw ProtocolError(std::string(to_string(kind)) + ": payload does not match kind");
  if (kind == MessageKind::local_model_upload && std::get<LocalModelUpload>(payload).n_samples == 0) {
    throw ProtocolError("LocalModelUpload must report n_samples > 0");
  }
  if (sender.empty()) throw ProtocolError("message without sender");
}

FederationMessage make_config_broadcast(const ConfigPayload& cfg) {
  return {MessageKind::config_broadcast, 0, std::string(kAggregatorId), cfg};
}

FederationMessage make_upload(LocalModelUpload upload) {
  std::string sender = upload.node.str();
  return {MessageKind::local_model_upload, 1, std::move(sender), std::move(upload)};
}

FederationMessage make_global_broadcast(Forest global) {
  return {MessageKind::global_model_broadcast, 1, std::string(kAggregatorId), std::move(global)};
}

FederationMessage make_abstention(Abstention a) {
  std::string sender = a.node.str();
  return {MessageKind::abstention, 1, std::move(sender), std::move(a)};
}

std::string encode_message(const FederationMessage& msg) {
  msg.validate();
  json env;
  env["kind"] = to_string(msg.kind);
  env["round"] = msg.round;
  env["sender"] = msg.sender;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConfigPayload>) {
          env["body"] = {{"train", train_config_to_json(p.train)},
                         {"preprocessing", preprocessing_to_json(p.preprocessing)}};
        } else if constexpr (std::is_same_v<P, LocalModelUpload>) {
          env["n_samples"] = p.n_samples;
          env["body"] = detail::forest_to_json(p.forest);
        } else if constexpr (std::is_same_v<P, Forest>) {
          env["body"] = detail::forest_to_json(p);
        } else {
          env["body"] = {{"reason", p.reason}};
        }
      },
      msg.payload);
  return env.dump();
}

FederationMessage decode_message(std::string_view envelope) {
  json env;
  try {
    env = json::parse(envelope.begin(), envelope.end());
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed envelope: ") + e.what());
  }
  try {
    if (!env.is_object()) throw ProtocolError("envelope must be a JSON object");
    for (const auto& [key, _] : env.items()) {
      if (key != "kind" && key != "round" && key != "sender" && key != "n_samples" && key != "body") {
        throw ProtocolError("unexpected envelope field '" + key + "'");
      }
    }
    FederationMessage msg;
    msg.kind = kind_from_string(env.at("kind").get<std::string>());
    msg.round = env.at("round").get<std::uint32_t>();
    msg.sender = env.at("sender").get<std::string>();
    const auto& body = env.at("body");
    switch (msg.kind) {
      case MessageKind::config_broadcast:
        msg.payload = ConfigPayload{train_config_from_json(body.at("train")),
                                    preprocessing_from_json(body.at("preprocessing"))};
        break;
      case MessageKind::local_model_upload:
        msg.payload = LocalModelUpload{NodeId(msg.sender), detail::forest_from_json(body),
                                       env.at("n_samples").get<std::size_t>()};
        break;
      case MessageKind::global_model_broadcast:
        msg.payload = detail::forest_from_json(body);
        break;
      case MessageKind::abstention:
        msg.payload = Abstention{NodeId(msg.sender), body.at("reason").get<std::string>()};
        break;
    }
    msg.validate();
    return msg;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("bad envelope: ") + e.what());
  } catch (const ForestFormatError& e) {
    throw ProtocolError(std::string("bad model in envelope: ") + e.what());
  } catch (const ConfigError& e) {
    throw ProtocolError(std::string("bad configuration in envelope: ") + e.what());
  }
}

DeliveryReceipt send_message(Endpoint& to, const FederationMessage& msg) { return to.send(encode_message(msg)); }

FederationMessage receive_message(Endpoint& from, std::chrono::milliseconds timeout) {
  return decode_message(from.receive(timeout));
}

TrainConfig node_train_config(const TrainConfig& base, const NodeId& node) {
  TrainConfig c = base;
  c.seed = derive_seed(base.seed, node.str());
  return c;
}

Preprocessing node_preprocessing(const Preprocessing& base, const NodeId& node) {
  Preprocessing p = base;
  if (p.balance) p.balance->seed = derive_seed(base.balance->seed, node.str());
  return p;
}

LocalTrainResult node_local_train(const NodeDataset& node, const TrainConfig& cfg, const Preprocessing& prep) {
  if (node.train.empty()) return Abstention{node.node_id, "no training data"};
  LocalModelUpload up;
  up.node = node.node_id;
  up.forest = fit_model(node.train, cfg, prep);
  up.forest.mutable_meta().provenance = {node.node_id.str()};
  up.n_samples = node.train.size();
  return up;
}

namespace {

std::vector<std::size_t> canonical_order(std::span<const LocalModelUpload> uploads) {
  std::vector<std::size_t> order(uploads.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return uploads[a].node < uploads[b].node; });
  return order;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> weighted_tree_draw(std::span<const LocalModelUpload> uploads,
                                                                    std::size_t target_trees,
                                                                    std::uint64_t seed) {
  const auto order = canonical_order(uploads);
  std::size_t total_trees = 0;
  for (const auto& u : uploads) total_trees += u.forest.size();
  if (target_trees == 0 || target_trees > total_trees) {
    throw ProtocolError("subsample target of " + std::to_string(target_trees) + " trees exceeds the " +
                        std::to_string(total_trees) + " uploaded");
  }

  // Expected trees per node: target * n_k * T_k / sum_j n_j * T_j, i.e. every
  // tree's inclusion probability is proportional to its node's sample count.
  // Nodes whose quota exceeds their tree count are capped and the remainder
  // is spread over the others.
  const std::size_t m = order.size();
  std::vector<double> quota(m, 0.0);
  std::vector<bool> capped(m, false);
  double remaining = static_cast<double>(target_trees);
  while (true) {
    double mass = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& u = uploads[order[i]];
      if (!capped[i]) mass += static_cast<double>(u.n_samples) * static_cast<double>(u.forest.size());
    }
    bool changed = false;
    for (std::size_t i = 0; i < m; ++i) {
      if (capped[i]) continue;
      const auto& u = uploads[order[i]];
      quota[i] = mass > 0.0 ? remaining * static_cast<double>(u.n_samples) * static_cast<double>(u.forest.size()) / mass
                            : 0.0;
      if (quota[i] > static_cast<double>(u.forest.size())) {
        quota[i] = static_cast<double>(u.forest.size());
        capped[i] = true;
        remaining -= quota[i];
        changed = true;
      }
    }
    if (!changed) break;
  }

  // Integer allocation with E[count_k] = quota_k: floors plus a systematic
  // draw over the fractional parts.
  detail::Rng rng(seed);
  std::vector<std::size_t> count(m, 0);
  std::size_t allocated = 0;
  for (std::size_t i = 0; i < m; ++i) {
    count[i] = static_cast<std::size_t>(std::floor(quota[i]));
    allocated += count[i];
  }
  const double u = detail::uniform01(rng);
  double cum = 0.0;
  double next_point = u;
  for (std::size_t i = 0; i < m && allocated < target_trees; ++i) {
    const double frac = quota[i] - std::floor(quota[i]);
    cum += frac;
    if (cum > next_point && count[i] < uploads[order[i]].forest.size()) {
      ++count[i];
      ++allocated;
      next_point += 1.0;
    }
  }
  // Rounding residue: fill any shortfall from nodes with spare trees.
  for (std::size_t i = 0; i < m && allocated < target_trees; ++i) {
    while (allocated < target_trees && count[i] < uploads[order[i]].forest.size()) {
      ++count[i];
      ++allocated;
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> picks;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<std::size_t> trees(uploads[order[i]].forest.size());
    std::iota(trees.begin(), trees.end(), std::size_t{0});
    for (std::size_t k = 0; k < count[i]; ++k) {
      const auto j = k + static_cast<std::size_t>(detail::uniform_index(rng, trees.size() - k));
      std::swap(trees[k], trees[j]);
    }
    trees.resize(count[i]);
    std::sort(trees.begin(), trees.end());
    for (auto t : trees) picks.emplace_back(order[i], t);
  }
  return picks;
}

Forest aggregate(std::span<const LocalModelUpload> uploads, const AggregationPolicy& policy) {
  if (uploads.empty()) throw ProtocolError("aggregation needs at least one upload");
  for (const auto& u : uploads) {
    if (u.n_samples == 0) throw ProtocolError("upload from " + u.node.str() + " reports zero samples");
    u.forest.validate();
  }
  const auto order = canonical_order(uploads);

  std::vector<Tree> trees;
  ForestMeta meta;
  if (policy.kind == AggregationPolicy::Kind::concat_all) {
    for (auto i : order) {
      const auto& f = uploads[i].forest;
      trees.insert(trees.end(), f.trees().begin(), f.trees().end());
    }
  } else {
    for (auto [u, t] : weighted_tree_draw(uploads, policy.target_trees, policy.seed)) {
      trees.push_back(uploads[u].forest.trees()[t]);
    }
    meta.seed = policy.seed;
  }
  for (auto i : order) meta.provenance.push_back(uploads[i].node.str());
  meta.n_trees = trees.size();
  return Forest(std::move(trees), std::move(meta));
}

std::uint64_t forest_digest(const Forest& forest) { return fnv1a(serialize_forest(forest)); }

FederationRunRecord run_federation(std::span<const NodeDataset> nodes, const FederationConfig& cfg) {
  if (nodes.empty()) throw ProtocolError("federation needs at least one node");
  const auto started = std::chrono::steady_clock::now();

  FederationRunRecord record;
  for (const auto& n : nodes) {
    if (std::find(record.nodes.begin(), record.nodes.end(), n.node_id) != record.nodes.end()) {
      throw ProtocolError("duplicate node id " + n.node_id.str());
    }
    record.nodes.push_back(n.node_id);
    record.round_trips[n.node_id] = 0;
  }
  auto links = make_links(cfg.channel, record.nodes, cfg.transport);

  std::mutex trace_mu;
  auto transmit = [&](Endpoint& ep, const FederationMessage& msg, const std::string& envelope,
                      const std::string& to) {
    TraceEntry entry{msg.sender, to, msg.kind, msg.round, envelope.size()};
    {
      std::lock_guard lock(trace_mu);
      record.trace.push_back(entry);
      record.node_trace[NodeId(msg.sender == kAggregatorId ? to : msg.sender)].push_back(msg.kind);
      if (cfg.observer) cfg.observer(entry, envelope);
    }
    ep.send(envelope);
  };

  const auto wait_budget = cfg.timeout * 2 + std::chrono::seconds(5);
  std::vector<std::optional<std::uint64_t>> digests(nodes.size());
  std::vector<std::jthread> workers;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const bool stalled = std::find(cfg.stalled_nodes.begin(), cfg.stalled_nodes.end(), nodes[i].node_id) !=
                         cfg.stalled_nodes.end();
    workers.emplace_back([&, i, stalled] {
      Endpoint& ep = *links[i].node_side;
      const NodeDataset& node = nodes[i];
      try {
        const auto config = receive_message(ep, wait_budget);
        if (config.kind != MessageKind::config_broadcast) return;
        if (stalled) {
          ep.receive(wait_budget);
          return;
        }
        const auto& payload = std::get<ConfigPayload>(config.payload);
        LocalTrainResult result;
        try {
          result = node_local_train(node, payload.train, payload.preprocessing);
        } catch (const std::exception& e) {
          result = Abstention{node.node_id, e.what()};
        }
        const FederationMessage reply = std::visit(
            [](auto&& r) -> FederationMessage {
              using R = std::decay_t<decltype(r)>;
              if constexpr (std::is_same_v<R, LocalModelUpload>) {
                return make_upload(std::move(r));
              } else {
                return make_abstention(std::move(r));
              }
            },
            std::move(result));
        transmit(ep, reply, encode_message(reply), std::string(kAggregatorId));
        const auto global = receive_message(ep, wait_budget);
        if (global.kind == MessageKind::global_model_broadcast) {
          digests[i] = forest_digest(std::get<Forest>(global.payload));
        }
      } catch (const std::exception&) {
        // Transport failures leave the node without a model; the aggregator
        // records it as timed out.
      }
    });
  }

  auto shutdown = [&] {
    for (auto& l : links) l.aggregator_side->close();
    for (auto& w : workers) w.join();
  };

  std::vector<LocalModelUpload> uploads;
  std::vector<std::size_t> responders;
  try {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      ConfigPayload payload{node_train_config(cfg.train, nodes[i].node_id),
                            node_preprocessing(cfg.preprocessing, nodes[i].node_id)};
      const auto msg = make_config_broadcast(payload);
      transmit(*links[i].aggregator_side, msg, encode_message(msg), nodes[i].node_id.str());
    }
    // Every link is read concurrently against one shared deadline, so a
    // stalled node cannot eat the time budget of the nodes after it.
    const auto deadline = std::chrono::steady_clock::now() + cfg.timeout;
    std::vector<std::optional<FederationMessage>> replies(nodes.size());
    std::vector<std::exception_ptr> failures(nodes.size());
    {
      std::vector<std::jthread> receivers;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        receivers.emplace_back([&, i] {
          try {
            const auto left = std::max(std::chrono::milliseconds(0),
                                       std::chrono::duration_cast<std::chrono::milliseconds>(
                                           deadline - std::chrono::steady_clock::now()));
            replies[i] = receive_message(*links[i].aggregator_side, left);
          } catch (...) {
            failures[i] = std::current_exception();
          }
        });
      }
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& id = nodes[i].node_id;
      try {
        if (failures[i]) std::rethrow_exception(failures[i]);
        auto& msg = *replies[i];
        if (msg.sender != id.str()) throw ProtocolError("reply on " + id.str() + "'s link from " + msg.sender);
        if (msg.kind == MessageKind::local_model_upload) {
          uploads.push_back(std::get<LocalModelUpload>(std::move(msg.payload)));
          record.participants.push_back(id);
        } else if (msg.kind == MessageKind::abstention) {
          record.abstained.push_back(id);
        } else {
          throw ProtocolError("unexpected " + std::string(to_string(msg.kind)) + " from " + id.str());
        }
        record.round_trips[id] = 1;
        responders.push_back(i);
      } catch (const TransportError&) {
        record.timed_out.push_back(id);
        links[i].aggregator_side->close();
      }
    }
    if (uploads.empty()) throw ProtocolError("no node uploaded a model");

    record.global = aggregate(uploads, cfg.policy);
    const auto msg = make_global_broadcast(record.global);
    const std::string envelope = encode_message(msg);
    for (auto i : responders) {
      const auto& id = nodes[i].node_id;
      try {
        transmit(*links[i].aggregator_side, msg, envelope, id.str());
        record.round_trips[id] = 2;
      } catch (const TransportError&) {
        // Node vanished after uploading; it keeps one completed round.
      }
    }
  } catch (...) {
    shutdown();
    throw;
  }
  for (auto& w : workers) w.join();
  for (auto& l : links) l.aggregator_side->close();

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (digests[i]) record.node_model_digest[nodes[i].node_id] = *digests[i];
  }
  record.wall_time = std::chrono::steady_clock::now() - started;
  return record;
}

namespace {

std::uint64_t feature_key(std::span<const double> values) {
  std::uint64_t h = fnv1a("");
  for (double v : values) {
    if (v == 0.0) v = 0.0;  // fold -0.0
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
  }
  return h;
}

void scan_numeric_arrays(const json& j, const std::unordered_set<std::uint64_t>& keys, std::vector<std::string>& out) {
  if (j.is_array()) {
    std::vector<double> run;
    for (const auto& e : j) {
      if (e.is_number()) {
        run.push_back(e.get<double>());
      } else {
        run.clear();
      }
      if (run.size() >= kNumFeatures) {
        const auto key = feature_key(std::span(run).subspan(run.size() - kNumFeatures));
        if (keys.count(key)) out.push_back("numeric array reproduces a training feature vector");
      }
      scan_numeric_arrays(e, keys, out);
    }
  } else if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        if (k == feature_name(f)) out.push_back("field named after feature '" + k + "'");
      }
      scan_numeric_arrays(v, keys, out);
    }
  }
}

}  // namespace

PrivacyInspector::PrivacyInspector(std::span<const FeatureVector> raw_samples) {
  for (const auto& s : raw_samples) sample_hashes_.insert(feature_key(s.x));
}

void PrivacyInspector::inspect(std::string_view envelope) {
  ++inspected_;
  try {
    decode_message(envelope);
  } catch (const std::exception& e) {
    violations_.push_back(std::string("envelope outside the message schema: ") + e.what());
    return;
  }
  scan_numeric_arrays(json::parse(envelope.begin(), envelope.end()), sample_hashes_, violations_);
}

}  // namespace fedransom
