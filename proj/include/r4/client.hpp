#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "r4/codec.hpp"
#include "r4/model.hpp"
#include "r4/transport.hpp"

// Host side: answers board heartbeats, tracks sequence gaps and the datagram
// period, and sends commands.

namespace r4 {

inline std::uint64_t epoch_ms() {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::system_clock::now().time_since_epoch())
                                        .count());
}

struct StateUpdate {
  Frame frame;
};
struct HeartbeatEchoed {
  std::optional<std::uint64_t> board_t;
  bool connecting = false;  // PNum 0 connection attempt
};
struct Gap {
  std::uint64_t expected = 0;
  std::uint64_t got = 0;
  std::uint64_t lost = 0;
};
struct CrcError {
  std::string detail;
};
struct Malformed {
  std::string detail;
};

using Event = std::variant<StateUpdate, HeartbeatEchoed, Gap, CrcError, Malformed>;

struct ClientStats {
  std::uint64_t status_frames = 0;
  std::uint64_t board_heartbeats = 0;
  std::uint64_t lost = 0;
  std::uint64_t out_of_order = 0;
  std::uint64_t crc_errors = 0;
  std::uint64_t malformed = 0;
  std::uint64_t period_samples = 0;
  double period_mean_ms = 0.0;
  double period_stddev_ms = 0.0;
  std::vector<std::uint64_t> heartbeat_intervals_ms;
};

/// Running mean and variance (Welford).
class RunningStats {
 public:
  void add(double x) {
    ++n_;
    double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double stddev() const { return n_ > 1 ? std::sqrt(m2_ / static_cast<double>(n_ - 1)) : 0.0; }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

class Session {
 public:
  using Clock = std::function<std::uint64_t()>;

  explicit Session(std::unique_ptr<Endpoint> endpoint, Clock host_clock = epoch_ms, bool auto_heartbeat = true)
      : endpoint_(std::move(endpoint)), clock_(std::move(host_clock)), auto_heartbeat_(auto_heartbeat) {}

  /// Drains everything queued and returns what happened, in arrival order.
  std::vector<Event> poll() {
    std::vector<Event> events;
    while (auto d = endpoint_->recv()) {
      if (!learned_peer_ && d->source.port != 0) {
        endpoint_->set_peer(d->source);
        learned_peer_ = true;
      }
      handle(d->bytes, events);
    }
    return events;
  }

  /// Sends a command with this session's next PNum and the host clock as T.
  void send(const Command& cmd) {
    std::vector<Field> fields{encode_command(cmd)};
    append_trailer(fields, pnum_out_++, clock_());
    endpoint_->send(serialize_frame(fields));
  }

  void send_raw(std::string_view bytes) { endpoint_->send(bytes); }

  ClientStats stats() const {
    if (stats_.status_frames < 2)
      throw Error(Errc::InsufficientData, "need at least two status frames, have " + std::to_string(stats_.status_frames));
    ClientStats s = stats_;
    s.period_samples = period_.count();
    s.period_mean_ms = period_.mean();
    s.period_stddev_ms = period_.stddev();
    return s;
  }

  /// Withholding heartbeat replies lets the board's watchdog fire.
  void set_auto_heartbeat(bool on) { auto_heartbeat_ = on; }
  bool auto_heartbeat() const { return auto_heartbeat_; }

  std::uint64_t status_frames() const { return stats_.status_frames; }
  const std::optional<Frame>& latest_status() const { return latest_; }
  Endpoint& endpoint() { return *endpoint_; }
  bool connected() const { return learned_peer_; }

 private:
  void handle(std::string_view bytes, std::vector<Event>& events) {
    Frame frame;
    try {
      frame = parse_frame(bytes);
    } catch (const Error& e) {
      if (e.code() == Errc::ChecksumMismatch) {
        ++stats_.crc_errors;
        events.push_back(CrcError{e.what()});
      } else {
        ++stats_.malformed;
        events.push_back(Malformed{e.what()});
      }
      return;
    }

    Classification c = classify(frame);
    auto pnum = frame.pnum();
    auto t = frame.timestamp();

    if (c.kind == FrameKind::Heartbeat) {
      bool connecting = pnum && *pnum == 0;
      if (connecting) {
        // A board (re)starting its connection attempts: sequence restarts.
        last_pnum_.reset();
        prev_status_.reset();
        last_board_hb_t_.reset();
      } else {
        track_sequence(pnum, events);
        ++stats_.board_heartbeats;
        ++heartbeats_since_status_;
        if (t) {
          if (last_board_hb_t_ && *t > *last_board_hb_t_) stats_.heartbeat_intervals_ms.push_back(*t - *last_board_hb_t_);
          last_board_hb_t_ = t;
        }
      }
      if (auto_heartbeat_) {
        std::vector<Field> reply{Field{"H", "ROS2-R4"}};
        append_trailer(reply, pnum_out_++, clock_());
        endpoint_->send(serialize_frame(reply));
      }
      events.push_back(HeartbeatEchoed{t, connecting});
      return;
    }
    if (c.kind != FrameKind::Status) return;  // commands are not expected from a board

    bool clean = track_sequence(pnum, events);
    ++stats_.status_frames;
    // A period sample needs two adjacent status frames: only board heartbeats
    // (never a lost frame) may sit between them.
    if (clean && prev_status_ && pnum && t && *pnum == prev_status_->pnum + 1 + heartbeats_since_status_ &&
        *t >= prev_status_->t)
      period_.add(static_cast<double>(*t - prev_status_->t));
    if (pnum && t) prev_status_ = PrevStatus{*pnum, *t};
    else prev_status_.reset();
    heartbeats_since_status_ = 0;
    latest_ = frame;
    events.push_back(StateUpdate{std::move(frame)});
  }

  /// Returns false when a gap or reordering broke continuity.
  bool track_sequence(std::optional<std::uint64_t> pnum, std::vector<Event>& events) {
    if (!pnum) return false;
    bool clean = true;
    if (last_pnum_) {
      if (*pnum == *last_pnum_ + 1) {
        // in order
      } else if (*pnum > *last_pnum_ + 1) {
        std::uint64_t lost = *pnum - *last_pnum_ - 1;
        stats_.lost += lost;
        events.push_back(Gap{*last_pnum_ + 1, *pnum, lost});
        clean = false;
        prev_status_.reset();
      } else {
        ++stats_.out_of_order;
        return false;  // duplicate or late; keep the high-water mark
      }
    }
    last_pnum_ = pnum;
    return clean;
  }

 private:
  struct PrevStatus {
    std::uint64_t pnum;
    std::uint64_t t;
  };

  std::unique_ptr<Endpoint> endpoint_;
  Clock clock_;
  bool auto_heartbeat_;
  bool learned_peer_ = false;
  std::uint64_t pnum_out_ = 0;
  std::optional<std::uint64_t> last_pnum_;
  std::optional<PrevStatus> prev_status_;
  std::uint64_t heartbeats_since_status_ = 0;
  std::optional<std::uint64_t> last_board_hb_t_;
  std::optional<Frame> latest_;
  ClientStats stats_;
  RunningStats period_;
};

struct ConnectOptions {
  std::uint64_t timeout_ms = 3000;
  Session::Clock clock = epoch_ms;
  bool auto_heartbeat = true;
  std::function<void()> idle;  // runs between polls; defaults to a 1 ms sleep
};

/// Waits for the first verified board frame and answers it.
inline std::unique_ptr<Session> connect(std::unique_ptr<Endpoint> endpoint, ConnectOptions opts = {}) {
  auto session = std::make_unique<Session>(std::move(endpoint), opts.clock, opts.auto_heartbeat);
  auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(opts.timeout_ms);
  while (true) {
    for (const auto& e : session->poll())
      if (std::holds_alternative<HeartbeatEchoed>(e) || std::holds_alternative<StateUpdate>(e)) return session;
    if (std::chrono::steady_clock::now() >= deadline)
      throw Error(Errc::Timeout, "no board frame within " + std::to_string(opts.timeout_ms) + " ms");
    if (opts.idle) opts.idle();
    else std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
}

// ---------------------------------------------------------------------------
// Command reflection

/// Status field through which a command's effect is visible.
inline std::string reflecting_field(const Command& cmd) {
  return std::visit(
      [](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, ServoCmd>) return "SERVO" + std::to_string(c.channel) + "POS";
        else if constexpr (std::is_same_v<T, DhbCmd>) return std::string(kStatusFieldNames[status_index::kDhb + c.channel - 1]);
        else if constexpr (std::is_same_v<T, OsmcCmd>) return "OSMC" + std::to_string(c.channel);
        else if constexpr (std::is_same_v<T, RelayCmd>) return "RELAYS";
        else if constexpr (std::is_same_v<T, StepperTargetCmd>) return "STEP" + std::to_string(c.channel) + "POS";
        else return {};
      },
      cmd);
}

/// Does `now` show the command's effect? `before` is the status frame seen
/// when the command was sent (steppers reflect by moving toward the target).
/// nullopt: the reflecting field is not enabled, so it cannot be observed.
inline std::optional<bool> reflects(const Command& cmd, const Frame& now, const Frame* before = nullptr) {
  if (std::holds_alternative<StopCmd>(cmd)) {
    bool any = false;
    for (const auto& f : now.fields) {
      bool motor = iequals(f.name.substr(0, 3), "DHB") || iequals(f.name.substr(0, 4), "OSMC") ||
                   iequals(f.name.substr(0, 4), "BLDC");
      if (!motor) continue;
      any = true;
      if (f.elements.empty() || f.elements[0] != "0") return false;
    }
    return any ? std::optional<bool>(true) : std::nullopt;
  }
  if (std::holds_alternative<HeartbeatCmd>(cmd)) return std::nullopt;

  const Field* f = now.find(reflecting_field(cmd));
  if (!f) return std::nullopt;
  auto el = [&](std::size_t i) -> std::string { return i < f->elements.size() ? f->elements[i] : std::string(); };

  if (const auto* s = std::get_if<ServoCmd>(&cmd)) return el(0) == std::to_string(s->width_us);
  if (const auto* d = std::get_if<DhbCmd>(&cmd))
    return el(0) == std::to_string(d->duty) && el(1) == std::to_string(int{d->direction});
  if (const auto* o = std::get_if<OsmcCmd>(&cmd))
    return el(0) == std::to_string(o->width) && el(1) == std::to_string(int{o->direction});
  if (const auto* r = std::get_if<RelayCmd>(&cmd)) return el(static_cast<std::size_t>(r->channel - 1)) == (r->closed ? "1" : "0");

  const auto& p = std::get<StepperTargetCmd>(cmd);
  std::int64_t pos = 0;
  if (auto res = std::from_chars(el(0).data(), el(0).data() + el(0).size(), pos); res.ec != std::errc{}) return false;
  if (pos == p.position) return true;
  if (!before) return false;
  const Field* bf = before->find(f->name);
  std::int64_t was = 0;
  if (!bf || bf->elements.empty()) return false;
  std::from_chars(bf->elements[0].data(), bf->elements[0].data() + bf->elements[0].size(), was);
  auto dist = [&](std::int64_t x) { return x > p.position ? x - p.position : p.position - x; };
  return dist(pos) < dist(was);
}

}  // namespace r4
