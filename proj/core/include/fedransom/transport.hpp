#pragma once

// Message channels between the aggregator and federation nodes.
//
// Wire framing: a 4-byte big-endian length followed by that many payload
// bytes. The in-process bus hands payload strings across queues; the socket
// channel writes frames over loopback TCP.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedransom/ata_trace.hpp"
#include "fedransom/errors.hpp"

namespace fedransom {

inline constexpr std::size_t kDefaultMaxFrameBytes = std::size_t{1} << 26;  // 64 MiB
inline constexpr std::size_t kFrameHeaderBytes = 4;

class TransportError : public ProtocolError {
 public:
  enum class Kind { closed, oversize, timeout, framing, io };

  TransportError(Kind kind, const std::string& what) : ProtocolError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class FramingError : public TransportError {
 public:
  FramingError(std::size_t expected, std::size_t got);

  std::size_t bytes_expected() const noexcept { return expected_; }
  std::size_t bytes_got() const noexcept { return got_; }

 private:
  std::size_t expected_;
  std::size_t got_;
};

std::vector<std::uint8_t> encode_frame(std::string_view payload,
                                       std::size_t max_bytes = kDefaultMaxFrameBytes);

/// Decodes exactly one frame that must span the whole buffer.
std::string decode_frame(std::span<const std::uint8_t> frame,
                         std::size_t max_bytes = kDefaultMaxFrameBytes);

/// Incremental decoder for a byte stream split at arbitrary points.
class FrameDecoder {
 public:
  explicit FrameDecoder(std::size_t max_bytes = kDefaultMaxFrameBytes) : max_bytes_(max_bytes) {}

  /// Consumes bytes and returns every frame completed by them.
  std::vector<std::string> feed(std::span<const std::uint8_t> bytes);
  /// Throws FramingError if a partial frame is buffered.
  void finish() const;

  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::size_t max_bytes_;
  std::vector<std::uint8_t> buffer_;
};

enum class ChannelKind { in_process, socket };

std::string_view to_string(ChannelKind kind);
ChannelKind channel_kind_from_string(std::string_view s);

struct DeliveryReceipt {
  std::uint64_t sequence = 0;  // per-endpoint send counter, starting at 1
  std::size_t bytes = 0;       // payload bytes
};

/// One side of a bidirectional link. A single thread consumes the inbox;
/// sends may come from any thread.
class Endpoint {
 public:
  virtual ~Endpoint() = default;

  const std::string& id() const { return id_; }
  ChannelKind kind() const { return kind_; }

  /// Throws TransportError (closed, oversize, io).
  virtual DeliveryReceipt send(std::string payload) = 0;
  /// Throws TransportError (timeout, closed, framing).
  virtual std::string receive(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
  virtual bool is_open() const = 0;

 protected:
  Endpoint(std::string id, ChannelKind kind) : id_(std::move(id)), kind_(kind) {}

 private:
  std::string id_;
  ChannelKind kind_;
};

/// Aggregator side and node side of one node's link.
struct Link {
  NodeId node;
  std::unique_ptr<Endpoint> aggregator_side;
  std::unique_ptr<Endpoint> node_side;
};

struct TransportOptions {
  std::size_t max_frame_bytes = kDefaultMaxFrameBytes;
  /// Loopback port for the socket channel; 0 picks an ephemeral port.
  std::uint16_t port = 0;
};

/// Creates in-process queue-backed links.
std::vector<Link> make_in_process_links(std::span<const NodeId> nodes, const TransportOptions& opts = {});

/// Listens on 127.0.0.1, connects one client socket per node and pairs each
/// accepted socket with its node.
std::vector<Link> make_socket_links(std::span<const NodeId> nodes, const TransportOptions& opts = {});

std::vector<Link> make_links(ChannelKind kind, std::span<const NodeId> nodes, const TransportOptions& opts = {});

}  // namespace fedransom
