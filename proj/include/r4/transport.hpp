#pragma once

#include <algorithm>
#include <arpa/inet.h>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fcntl.h>
#include <map>
#include <memory>
#include <netinet/in.h>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <sys/socket.h>
#include <unistd.h>

#include "r4/codec.hpp"
#include "r4/error.hpp"

namespace r4 {

inline constexpr std::uint16_t kBoardPort = 2018;
inline constexpr std::uint16_t kHostPort = 2390;

struct Address {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  friend bool operator==(const Address&, const Address&) = default;
  friend auto operator<=>(const Address&, const Address&) = default;

  std::string to_string() const { return host + ":" + std::to_string(port); }

  /// "host:port" or "port".
  static Address parse(std::string_view text) {
    Address a;
    std::size_t colon = text.rfind(':');
    std::string_view port = text;
    if (colon != std::string_view::npos) {
      a.host = std::string(text.substr(0, colon));
      port = text.substr(colon + 1);
    }
    auto p = parse_unsigned(port);
    if (!p || *p > 65535) throw Error(Errc::BadConfig, "bad address '" + std::string(text) + "'");
    a.port = static_cast<std::uint16_t>(*p);
    return a;
  }
};

struct EndpointConfig {
  Address local;
  Address peer;
  std::size_t max_frame = kMaxAcceptedFrame;
  bool allow_ephemeral = false;  // local port 0 picks a free port instead of failing
};

struct Datagram {
  std::string bytes;
  Address source;
};

/// One datagram per frame; recv() never blocks.
class Endpoint {
 public:
  explicit Endpoint(EndpointConfig config) : config_(std::move(config)) {}
  virtual ~Endpoint() = default;
  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  virtual void send_to(const Address& to, std::string_view bytes) = 0;
  virtual std::optional<Datagram> recv() = 0;
  virtual Address local_address() const = 0;
  virtual void close() = 0;
  virtual bool is_open() const = 0;

  void send(std::string_view bytes) { send_to(config_.peer, bytes); }

  const Address& peer() const { return config_.peer; }
  void set_peer(Address peer) { config_.peer = std::move(peer); }
  std::size_t max_frame() const { return config_.max_frame; }

 protected:
  void check_send(std::string_view bytes) const {
    if (!is_open()) throw Error(Errc::Closed, "endpoint closed");
    if (bytes.size() > config_.max_frame)
      throw Error(Errc::Oversize, std::to_string(bytes.size()) + " byte datagram");
  }

  EndpointConfig config_;
};

// ---------------------------------------------------------------------------
// UDP

class UdpEndpoint final : public Endpoint {
 public:
  explicit UdpEndpoint(EndpointConfig config) : Endpoint(std::move(config)) {
    if (config_.local.port == 0 && !config_.allow_ephemeral)
      throw Error(Errc::BindFailure, "port 0 without ephemeral binding enabled");

    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw Error(Errc::BindFailure, std::string("socket: ") + std::strerror(errno));
    int flags = ::fcntl(fd_, F_GETFL, 0);
    ::fcntl(fd_, F_SETFL, flags | O_NONBLOCK);

    sockaddr_in addr = to_sockaddr(config_.local);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      std::string why = std::strerror(errno);
      ::close(fd_);
      fd_ = -1;
      throw Error(Errc::BindFailure, config_.local.to_string() + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    bound_ = config_.local;
    bound_.port = ntohs(addr.sin_port);
    buffer_.resize(config_.max_frame + 1);
  }

  ~UdpEndpoint() override { close(); }

  void send_to(const Address& to, std::string_view bytes) override {
    check_send(bytes);
    sockaddr_in addr = to_sockaddr(to);
    // Datagram loss is part of the contract; a failed send is a dropped frame.
    (void)::sendto(fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  }

  std::optional<Datagram> recv() override {
    if (fd_ < 0) throw Error(Errc::Closed, "endpoint closed");
    while (true) {
      sockaddr_in from{};
      socklen_t len = sizeof from;
      ssize_t n = ::recvfrom(fd_, buffer_.data(), buffer_.size(), MSG_TRUNC, reinterpret_cast<sockaddr*>(&from), &len);
      if (n < 0) return std::nullopt;  // EWOULDBLOCK or transient error
      if (static_cast<std::size_t>(n) > config_.max_frame) {
        ++oversize_dropped_;
        continue;
      }
      char host[INET_ADDRSTRLEN] = {};
      ::inet_ntop(AF_INET, &from.sin_addr, host, sizeof host);
      return Datagram{std::string(buffer_.data(), static_cast<std::size_t>(n)), Address{host, ntohs(from.sin_port)}};
    }
  }

  Address local_address() const override { return bound_; }

  void close() override {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  bool is_open() const override { return fd_ >= 0; }

  std::uint64_t oversize_dropped() const { return oversize_dropped_; }

 private:
  static sockaddr_in to_sockaddr(const Address& a) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(a.port);
    std::string host = a.host == "localhost" ? "127.0.0.1" : a.host;
    if (host.empty() || host == "*") host = "0.0.0.0";
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
      throw Error(Errc::BindFailure, "not an IPv4 address: '" + a.host + "'");
    return addr;
  }

  int fd_ = -1;
  Address bound_;
  std::string buffer_;
  std::uint64_t oversize_dropped_ = 0;
};

inline std::unique_ptr<Endpoint> open_udp(const EndpointConfig& config) {
  return std::make_unique<UdpEndpoint>(config);
}

// ---------------------------------------------------------------------------
// In-memory loopback with seeded fault injection

struct Impairment {
  double drop_probability = 0.0;
  double duplicate_probability = 0.0;
  std::size_t reorder_window = 0;  // a frame may overtake up to this many queued frames
  std::uint64_t seed = 0;
};

class LoopbackNetwork {
 public:
  explicit LoopbackNetwork(Impairment impairment = {})
      : state_(std::make_shared<State>(impairment)) {
    if (impairment.drop_probability < 0 || impairment.drop_probability > 1 ||
        impairment.duplicate_probability < 0 || impairment.duplicate_probability > 1)
      throw Error(Errc::BadConfig, "impairment probabilities must be in [0, 1]");
  }

  std::unique_ptr<Endpoint> open(EndpointConfig config) {
    if (config.local.port == 0) {
      if (!config.allow_ephemeral) throw Error(Errc::BindFailure, "port 0 without ephemeral binding enabled");
      config.local.port = state_->next_ephemeral++;
    }
    if (state_->queues.count(config.local))
      throw Error(Errc::BindFailure, config.local.to_string() + " already bound");
    state_->queues[config.local];
    return std::unique_ptr<Endpoint>(new LoopbackEndpoint(std::move(config), state_));
  }

  std::uint64_t dropped() const { return state_->dropped; }
  std::uint64_t duplicated() const { return state_->duplicated; }

 private:
  struct State {
    explicit State(const Impairment& imp) : impairment(imp), rng(imp.seed) {}
    Impairment impairment;
    std::mt19937_64 rng;
    std::map<Address, std::deque<Datagram>> queues;
    std::uint16_t next_ephemeral = 49152;
    std::uint64_t dropped = 0;
    std::uint64_t duplicated = 0;

    bool roll(double p) { return p > 0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

    void deliver(const Address& to, Datagram d) {
      auto it = queues.find(to);
      if (it == queues.end()) {
        ++dropped;  // nobody listening
        return;
      }
      if (roll(impairment.drop_probability)) {
        ++dropped;
        return;
      }
      int copies = 1;
      if (roll(impairment.duplicate_probability)) {
        ++copies;
        ++duplicated;
      }
      auto& q = it->second;
      for (int i = 0; i < copies; ++i) {
        std::size_t back = 0;
        if (impairment.reorder_window > 0) {
          std::size_t limit = std::min(impairment.reorder_window, q.size());
          back = std::uniform_int_distribution<std::size_t>(0, limit)(rng);
        }
        q.insert(q.end() - static_cast<std::ptrdiff_t>(back), d);
      }
    }
  };

  class LoopbackEndpoint final : public Endpoint {
   public:
    LoopbackEndpoint(EndpointConfig config, std::shared_ptr<State> state)
        : Endpoint(std::move(config)), state_(std::move(state)) {}
    ~LoopbackEndpoint() override { close(); }

    void send_to(const Address& to, std::string_view bytes) override {
      check_send(bytes);
      state_->deliver(to, Datagram{std::string(bytes), config_.local});
    }

    std::optional<Datagram> recv() override {
      if (!open_) throw Error(Errc::Closed, "endpoint closed");
      auto& q = state_->queues[config_.local];
      if (q.empty()) return std::nullopt;
      Datagram d = std::move(q.front());
      q.pop_front();
      return d;
    }

    Address local_address() const override { return config_.local; }

    void close() override {
      if (open_) state_->queues.erase(config_.local);
      open_ = false;
    }

    bool is_open() const override { return open_; }

   private:
    std::shared_ptr<State> state_;
    bool open_ = true;
  };

  std::shared_ptr<State> state_;
};

}  // namespace r4
