#pragma once

// Two-round horizontal federation for random forests.
//
//   round 0  aggregator -> node   ConfigBroadcast      (training configuration)
//   round 1  node -> aggregator   LocalModelUpload     (locally grown trees, n_samples)
//   round 1  aggregator -> node   GlobalModelBroadcast (merged forest)
//
// Nodes never send feature vectors or raw events; the only model parameters
// exchanged are tree structures and leaf class counts.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "fedransom/dataset.hpp"
#include "fedransom/forest.hpp"
#include "fedransom/pipeline.hpp"
#include "fedransom/transport.hpp"

namespace fedransom {

inline constexpr std::string_view kAggregatorId = "aggregator";

enum class MessageKind {
  config_broadcast,
  local_model_upload,
  global_model_broadcast,
  abstention,  // node with no training data declines round 1
};

std::string_view to_string(MessageKind kind);

struct ConfigPayload {
  TrainConfig train;
  Preprocessing preprocessing;
};

struct LocalModelUpload {
  NodeId node;
  Forest forest;
  std::size_t n_samples = 0;
};

struct Abstention {
  NodeId node;
  std::string reason;
};

struct FederationMessage {
  MessageKind kind = MessageKind::config_broadcast;
  std::uint32_t round = 0;
  std::string sender;
  std::variant<ConfigPayload, LocalModelUpload, Forest, Abstention> payload;

  /// Kind/round/payload consistency. Throws ProtocolError.
  void validate() const;
};

FederationMessage make_config_broadcast(const ConfigPayload& cfg);
FederationMessage make_upload(LocalModelUpload upload);
FederationMessage make_global_broadcast(Forest global);
FederationMessage make_abstention(Abstention a);

/// JSON envelope {kind, round, sender, n_samples?, body}.
std::string encode_message(const FederationMessage& msg);
/// Throws ProtocolError on malformed envelopes or bodies.
FederationMessage decode_message(std::string_view envelope);

DeliveryReceipt send_message(Endpoint& to, const FederationMessage& msg);
FederationMessage receive_message(Endpoint& from, std::chrono::milliseconds timeout);

/// Configuration a node trains with: seeds specialised by node id.
TrainConfig node_train_config(const TrainConfig& base, const NodeId& node);
Preprocessing node_preprocessing(const Preprocessing& base, const NodeId& node);

using LocalTrainResult = std::variant<LocalModelUpload, Abstention>;

/// Round-1 work on a node. `cfg` and `prep` are used as given.
LocalTrainResult node_local_train(const NodeDataset& node, const TrainConfig& cfg,
                                  const Preprocessing& prep = {});

struct AggregationPolicy {
  enum class Kind { concat_all, size_weighted_subsample };

  Kind kind = Kind::concat_all;
  std::size_t target_trees = 0;
  std::uint64_t seed = 0;

  static AggregationPolicy concat_all() { return {}; }
  static AggregationPolicy size_weighted_subsample(std::size_t target_trees, std::uint64_t seed) {
    return {Kind::size_weighted_subsample, target_trees, seed};
  }
};

/// ConcatAll: every tree, ordered by node id then tree index.
/// SizeWeightedSubsample: target_trees trees drawn without replacement, each
/// tree weighted by its node's n_samples.
/// Throws ProtocolError when there are no uploads or the target is too large.
Forest aggregate(std::span<const LocalModelUpload> uploads, const AggregationPolicy& policy);

/// Index form of the weighted draw: (upload index, tree index) pairs.
std::vector<std::pair<std::size_t, std::size_t>> weighted_tree_draw(std::span<const LocalModelUpload> uploads,
                                                                    std::size_t target_trees,
                                                                    std::uint64_t seed);

struct TraceEntry {
  std::string from;
  std::string to;
  MessageKind kind = MessageKind::config_broadcast;
  std::uint32_t round = 0;
  std::size_t bytes = 0;
};

using MessageObserver = std::function<void(const TraceEntry&, std::string_view envelope)>;

struct FederationConfig {
  TrainConfig train;
  Preprocessing preprocessing;
  AggregationPolicy policy;
  ChannelKind channel = ChannelKind::in_process;
  TransportOptions transport;
  /// Deadline for uploads measured from the config broadcast.
  std::chrono::milliseconds timeout{std::chrono::minutes(10)};
  /// Sees every envelope as it is sent. Called from several threads.
  MessageObserver observer;
  /// Fault injection: these nodes receive the config and never answer.
  std::vector<NodeId> stalled_nodes;
};

struct FederationRunRecord {
  std::vector<NodeId> nodes;
  std::vector<NodeId> participants;
  std::vector<NodeId> abstained;
  std::vector<NodeId> timed_out;
  /// Completed communication rounds per node (upload exchange, global broadcast).
  std::map<NodeId, int> round_trips;
  /// Message kinds each node sent or received, in order.
  std::map<NodeId, std::vector<MessageKind>> node_trace;
  /// Digest of the global forest each node ended holding.
  std::map<NodeId, std::uint64_t> node_model_digest;
  std::vector<TraceEntry> trace;
  std::chrono::duration<double> wall_time{0};
  Forest global;

  bool partial() const { return participants.size() != nodes.size(); }
};

/// Runs the full cycle over the chosen channel. Nodes train concurrently and
/// uploads are aggregated in node order. Nodes that miss the deadline are
/// excluded; at least one upload is required (ProtocolError otherwise).
FederationRunRecord run_federation(std::span<const NodeDataset> nodes, const FederationConfig& cfg);

std::uint64_t forest_digest(const Forest& forest);

/// Checks envelopes for leaked training data: every envelope must match the
/// message schema, and no numeric array in it may reproduce the feature
/// values of a known raw sample.
class PrivacyInspector {
 public:
  explicit PrivacyInspector(std::span<const FeatureVector> raw_samples);

  void inspect(std::string_view envelope);

  std::size_t messages_inspected() const { return inspected_; }
  std::size_t violations() const { return violations_.size(); }
  const std::vector<std::string>& violation_details() const { return violations_; }

 private:
  std::unordered_set<std::uint64_t> sample_hashes_;
  std::size_t inspected_ = 0;
  std::vector<std::string> violations_;
};

}  // namespace fedransom
