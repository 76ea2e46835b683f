#include "fedransom/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

namespace fedransom {

using Kind = TransportError::Kind;

FramingError::FramingError(std::size_t expected, std::size_t got)
    : TransportError(Kind::framing, "truncated frame: expected " + std::to_string(expected) + " bytes, got " +
                                        std::to_string(got)),
      expected_(expected),
      got_(got) {}

namespace {

TransportError oversize(std::size_t n, std::size_t max) {
  return TransportError(Kind::oversize,
                        "frame payload of " + std::to_string(n) + " bytes exceeds the " + std::to_string(max) + " byte cap");
}

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

}  // namespace

std::vector<std::uint8_t> encode_frame(std::string_view payload, std::size_t max_bytes) {
  if (payload.size() > max_bytes || payload.size() > UINT32_MAX) throw oversize(payload.size(), max_bytes);
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderBytes + payload.size());
  out.push_back(static_cast<std::uint8_t>(n >> 24));
  out.push_back(static_cast<std::uint8_t>(n >> 16));
  out.push_back(static_cast<std::uint8_t>(n >> 8));
  out.push_back(static_cast<std::uint8_t>(n));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::string decode_frame(std::span<const std::uint8_t> frame, std::size_t max_bytes) {
  if (frame.size() < kFrameHeaderBytes) throw FramingError(kFrameHeaderBytes, frame.size());
  const std::size_t n = read_be32(frame.data());
  if (n > max_bytes) throw oversize(n, max_bytes);
  const std::size_t body = frame.size() - kFrameHeaderBytes;
  if (body < n) throw FramingError(kFrameHeaderBytes + n, frame.size());
  if (body > n) {
    throw TransportError(Kind::framing, "trailing bytes after frame: " + std::to_string(body - n));
  }
  return std::string(reinterpret_cast<const char*>(frame.data()) + kFrameHeaderBytes, n);
}

std::vector<std::string> FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (buffer_.size() - pos >= kFrameHeaderBytes) {
    const std::size_t n = read_be32(buffer_.data() + pos);
    if (n > max_bytes_) throw oversize(n, max_bytes_);
    if (buffer_.size() - pos - kFrameHeaderBytes < n) break;
    out.emplace_back(reinterpret_cast<const char*>(buffer_.data()) + pos + kFrameHeaderBytes, n);
    pos += kFrameHeaderBytes + n;
  }
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
  return out;
}

void FrameDecoder::finish() const {
  if (buffer_.empty()) return;
  if (buffer_.size() < kFrameHeaderBytes) throw FramingError(kFrameHeaderBytes, buffer_.size());
  throw FramingError(kFrameHeaderBytes + read_be32(buffer_.data()), buffer_.size());
}

std::string_view to_string(ChannelKind kind) {
  return kind == ChannelKind::socket ? "socket" : "in-proc";
}

ChannelKind channel_kind_from_string(std::string_view s) {
  if (s == "in-proc" || s == "in_process" || s == "inproc") return ChannelKind::in_process;
  if (s == "socket") return ChannelKind::socket;
  throw ConfigError("unknown transport '" + std::string(s) + "' (expected in-proc or socket)");
}

namespace {

struct Mailbox {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> queue;
  bool closed = false;
};

class InProcessEndpoint final : public Endpoint {
 public:
  InProcessEndpoint(std::string id, std::shared_ptr<Mailbox> inbox, std::shared_ptr<Mailbox> outbox,
                    std::size_t max_bytes)
      : Endpoint(std::move(id), ChannelKind::in_process),
        inbox_(std::move(inbox)),
        outbox_(std::move(outbox)),
        max_bytes_(max_bytes) {}

  ~InProcessEndpoint() override { close(); }

  DeliveryReceipt send(std::string payload) override {
    if (payload.size() > max_bytes_) throw oversize(payload.size(), max_bytes_);
    const std::size_t n = payload.size();
    {
      std::lock_guard lock(outbox_->mu);
      if (outbox_->closed) throw TransportError(Kind::closed, "endpoint " + id() + ": channel closed");
      outbox_->queue.push_back(std::move(payload));
    }
    outbox_->cv.notify_one();
    return {++sent_, n};
  }

  std::string receive(std::chrono::milliseconds timeout) override {
    std::unique_lock lock(inbox_->mu);
    const bool ready = inbox_->cv.wait_for(lock, timeout, [&] { return !inbox_->queue.empty() || inbox_->closed; });
    if (!inbox_->queue.empty()) {
      std::string msg = std::move(inbox_->queue.front());
      inbox_->queue.pop_front();
      return msg;
    }
    if (!ready) throw TransportError(Kind::timeout, "endpoint " + id() + ": receive timed out");
    throw TransportError(Kind::closed, "endpoint " + id() + ": channel closed");
  }

  void close() override {
    for (auto* box : {inbox_.get(), outbox_.get()}) {
      {
        std::lock_guard lock(box->mu);
        box->closed = true;
      }
      box->cv.notify_all();
    }
  }

  bool is_open() const override {
    std::lock_guard lock(outbox_->mu);
    return !outbox_->closed;
  }

 private:
  std::shared_ptr<Mailbox> inbox_;
  std::shared_ptr<Mailbox> outbox_;
  std::size_t max_bytes_;
  std::uint64_t sent_ = 0;
};

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

class SocketEndpoint final : public Endpoint {
 public:
  SocketEndpoint(std::string id, int fd, std::size_t max_bytes)
      : Endpoint(std::move(id), ChannelKind::socket), fd_(fd), max_bytes_(max_bytes), decoder_(max_bytes) {}

  ~SocketEndpoint() override { close(); }

  DeliveryReceipt send(std::string payload) override {
    std::lock_guard lock(send_mu_);
    if (fd_ < 0) throw TransportError(Kind::closed, "endpoint " + id() + ": socket closed");
    const auto frame = encode_frame(payload, max_bytes_);
    std::size_t off = 0;
    while (off < frame.size()) {
      const ssize_t n = ::send(fd_, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == EPIPE || errno == ECONNRESET) {
          throw TransportError(Kind::closed, "endpoint " + id() + ": peer closed");
        }
        throw TransportError(Kind::io, errno_text("send"));
      }
      off += static_cast<std::size_t>(n);
    }
    return {++sent_, payload.size()};
  }

  std::string receive(std::chrono::milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::vector<std::uint8_t> buf(1 << 16);
    while (pending_.empty()) {
      if (fd_ < 0) throw TransportError(Kind::closed, "endpoint " + id() + ": socket closed");
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TransportError(Kind::timeout, "endpoint " + id() + ": receive timed out");
      pollfd p{fd_, POLLIN, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), INT32_MAX)));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw TransportError(Kind::io, errno_text("poll"));
      }
      if (rc == 0) continue;
      const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        if (errno == ECONNRESET) throw TransportError(Kind::closed, "endpoint " + id() + ": peer reset");
        throw TransportError(Kind::io, errno_text("recv"));
      }
      if (n == 0) {
        decoder_.finish();
        throw TransportError(Kind::closed, "endpoint " + id() + ": peer closed");
      }
      for (auto& frame : decoder_.feed(std::span(buf.data(), static_cast<std::size_t>(n)))) {
        pending_.push_back(std::move(frame));
      }
    }
    std::string msg = std::move(pending_.front());
    pending_.pop_front();
    return msg;
  }

  void close() override {
    std::lock_guard lock(send_mu_);
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

  bool is_open() const override { return fd_ >= 0; }

 private:
  int fd_;
  std::size_t max_bytes_;
  FrameDecoder decoder_;
  std::deque<std::string> pending_;
  std::mutex send_mu_;
  std::uint64_t sent_ = 0;
};

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }
  int release() { return std::exchange(fd_, -1); }

 private:
  int fd_;
};

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

std::vector<Link> make_in_process_links(std::span<const NodeId> nodes, const TransportOptions& opts) {
  std::vector<Link> links;
  for (const auto& node : nodes) {
    auto to_node = std::make_shared<Mailbox>();
    auto to_aggregator = std::make_shared<Mailbox>();
    Link link;
    link.node = node;
    link.aggregator_side = std::make_unique<InProcessEndpoint>("aggregator->" + node.str(), to_aggregator, to_node,
                                                               opts.max_frame_bytes);
    link.node_side = std::make_unique<InProcessEndpoint>(node.str(), to_node, to_aggregator, opts.max_frame_bytes);
    links.push_back(std::move(link));
  }
  return links;
}

std::vector<Link> make_socket_links(std::span<const NodeId> nodes, const TransportOptions& opts) {
  Fd listener(::socket(AF_INET, SOCK_STREAM, 0));
  if (listener.get() < 0) throw TransportError(Kind::io, errno_text("socket"));
  int one = 1;
  ::setsockopt(listener.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(opts.port);
  if (::bind(listener.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    throw TransportError(Kind::io, errno_text("bind"));
  }
  if (::listen(listener.get(), static_cast<int>(nodes.size()) + 1) < 0) {
    throw TransportError(Kind::io, errno_text("listen"));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listener.get(), reinterpret_cast<sockaddr*>(&addr), &len);

  std::vector<Link> links;
  for (const auto& node : nodes) {
    Fd client(::socket(AF_INET, SOCK_STREAM, 0));
    if (client.get() < 0) throw TransportError(Kind::io, errno_text("socket"));
    if (::connect(client.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
      throw TransportError(Kind::io, errno_text("connect"));
    }
    // Connect and accept alternate, so the accepted socket belongs to `node`.
    Fd server(::accept(listener.get(), nullptr, nullptr));
    if (server.get() < 0) throw TransportError(Kind::io, errno_text("accept"));
    set_nodelay(client.get());
    set_nodelay(server.get());
    Link link;
    link.node = node;
    link.aggregator_side =
        std::make_unique<SocketEndpoint>("aggregator->" + node.str(), server.release(), opts.max_frame_bytes);
    link.node_side = std::make_unique<SocketEndpoint>(node.str(), client.release(), opts.max_frame_bytes);
    links.push_back(std::move(link));
  }
  return links;
}

std::vector<Link> make_links(ChannelKind kind, std::span<const NodeId> nodes, const TransportOptions& opts) {
  return kind == ChannelKind::socket ? make_socket_links(nodes, opts) : make_in_process_links(nodes, opts);
}

}  // namespace fedransom
