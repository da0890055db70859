#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "r4/codec.hpp"
#include "r4/model.hpp"
#include "r4/safety.hpp"
#include "r4/transport.hpp"

namespace r4 {

// ---------------------------------------------------------------------------
// Signal generators

struct AbsentSource {
  friend bool operator==(const AbsentSource&, const AbsentSource&) = default;
};
struct ConstantSource {
  double value = 0.0;
  friend bool operator==(const ConstantSource&, const ConstantSource&) = default;
};
/// Uniform in [mean - jitter, mean + jitter].
struct NoisySource {
  double mean = 0.0;
  double jitter = 0.0;
  friend bool operator==(const NoisySource&, const NoisySource&) = default;
};
/// Sawtooth from `from` to `to` over `period_ms`, then wraps.
struct RampSource {
  double from = 0.0;
  double to = 0.0;
  std::uint64_t period_ms = 1000;
  friend bool operator==(const RampSource&, const RampSource&) = default;
};

using SignalSource = std::variant<AbsentSource, ConstantSource, NoisySource, RampSource>;

inline std::optional<double> sample(const SignalSource& src, std::uint64_t now, std::mt19937_64& rng) {
  if (std::holds_alternative<AbsentSource>(src)) return std::nullopt;
  if (const auto* c = std::get_if<ConstantSource>(&src)) return c->value;
  if (const auto* n = std::get_if<NoisySource>(&src))
    return std::uniform_real_distribution<double>(n->mean - n->jitter, n->mean + n->jitter)(rng);
  const auto& r = std::get<RampSource>(src);
  std::uint64_t period = r.period_ms ? r.period_ms : 1;
  double phase = static_cast<double>(now % period) / static_cast<double>(period);
  return r.from + (r.to - r.from) * phase;
}

// ---------------------------------------------------------------------------
// Configuration

struct StepperConfig {
  double rate = 100.0;  // steps per second
  bool demo = false;    // sweep targets between demo_min and demo_max
  std::int32_t demo_min = -100;
  std::int32_t demo_max = 100;
  std::array<std::int32_t, kStepperChannels> initial_positions{-100, 0, 0, 0};
};

struct DmhConfig {
  double threshold_cm = 30.0;
  bool sensors_enabled = false;
  bool enforce_button = false;
  bool button_pressed = true;
  std::optional<int> relay;
};

/// Longest status frame the enabled fields can produce, trailer included.
inline std::size_t worst_case_status_size(const EnableSet& enables,
                                          const std::array<double, kAnalogChannels>& ranges) {
  namespace si = status_index;
  double max_range = *std::max_element(ranges.begin(), ranges.end());
  std::size_t volts = format_volts(max_range).size();
  std::size_t size = 0;
  for (std::size_t i = 0; i < kStatusFieldNames.size(); ++i) {
    if (!enables.test(i)) continue;
    std::size_t value = 0;
    if (i < si::kDmhSta || i == si::kAinSteer) value = volts;
    else if (i == si::kDmhSta) value = 1;
    else if (i < si::kStep) value = 6;                 // 4095,1
    else if (i < si::kServo) value = 11;               // -2147483648
    else if (i < si::kRelays) value = 5;               // 20000
    else if (i == si::kRelays) value = 2 * kRelayChannels - 1;
    else value = 8;                                    // 4095,1,1
    size += kStatusFieldNames[i].size() + 2 + value;
  }
  return size + std::string_view("PNum:;T:;").size() + 2 * 20 + std::string_view("^0xffffffff^\r").size();
}

struct SimConfig {
  std::uint64_t datagram_period_ms = 10;
  std::uint64_t heartbeat_interval_ms = kDefaultHeartbeatIntervalMs;
  std::uint64_t heartbeat_timeout_ms = kDefaultHeartbeatTimeoutMs;
  EnableSet enables = default_enables();
  StepperConfig stepper;
  std::array<SignalSource, kAnalogChannels> analog_sources{
      ConstantSource{24.28}, ConstantSource{12.15}, ConstantSource{5.11},
      ConstantSource{12.15}, ConstantSource{0.0},   ConstantSource{1.00}};
  std::array<double, kAnalogChannels> analog_ranges{30.0, 15.0, 6.0, 15.0, 12.0, 5.0};
  AnalogMap analog_map;
  std::array<SignalSource, kUltrasonicChannels> sensor_sources{};
  DmhConfig dmh;
  std::array<Bldc, kBldcChannels> bldc{};
  Address local{"0.0.0.0", kBoardPort};
  Address host{"127.0.0.1", kHostPort};
  std::optional<Impairment> impairment;  // honoured by in-process loopback networks only
  std::uint64_t seed = 1;
  bool echo_frames = false;  // copy every emitted datagram to the diagnostic stream

  void validate() const {
    if (datagram_period_ms < 1) throw Error(Errc::BadConfig, "datagram_period_ms must be >= 1");
    if (heartbeat_interval_ms < 1) throw Error(Errc::BadConfig, "heartbeat_interval_ms must be >= 1");
    if (heartbeat_timeout_ms <= heartbeat_interval_ms)
      throw Error(Errc::BadConfig, "heartbeat_timeout_ms must exceed heartbeat_interval_ms");
    if (dmh.threshold_cm <= 0) throw Error(Errc::BadConfig, "dmh.threshold_cm must be > 0");
    for (double r : analog_ranges)
      if (!(r > 0)) throw Error(Errc::BadConfig, "analog ranges must be > 0");
    if (stepper.rate < 0) throw Error(Errc::BadConfig, "stepper.rate must be >= 0");
    if (dmh.relay && (*dmh.relay < 1 || *dmh.relay > kRelayChannels))
      throw Error(Errc::BadConfig, "dmh.relay must be 1..8");
    for (const auto& b : bldc)
      if (b.speed > kMaxPwm || b.direction > 1) throw Error(Errc::BadConfig, "bldc values out of range");
    if (std::size_t worst = worst_case_status_size(enables, analog_ranges); worst > kMaxEmittedFrame)
      throw Error(Errc::BadConfig, "enabled status fields can need " + std::to_string(worst) +
                                       " bytes, more than one " + std::to_string(kMaxEmittedFrame) + "-byte datagram");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on" || v == "pressed") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off" || v == "released") return false;
  throw Error(Errc::BadConfig, key + ": expected a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  throw Error(Errc::BadConfig, key + ": expected a number, got '" + v + "'");
}

inline std::int64_t parse_int(const std::string& v, const std::string& key) {
  std::int64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw Error(Errc::BadConfig, key + ": expected an integer, got '" + v + "'");
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next == std::string_view::npos ? s.npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

/// "none" | "constant V" | "noisy MEAN JITTER" | "ramp FROM TO PERIOD_MS"
inline SignalSource parse_source(const std::string& v, const std::string& key) {
  std::istringstream in(v);
  std::string kind;
  in >> kind;
  std::vector<std::string> args;
  for (std::string a; in >> a;) args.push_back(a);
  auto need = [&](std::size_t n) {
    if (args.size() != n) throw Error(Errc::BadConfig, key + ": '" + kind + "' takes " + std::to_string(n) + " values");
  };
  if (kind == "none") return AbsentSource{};
  if (kind == "constant") {
    need(1);
    return ConstantSource{parse_double(args[0], key)};
  }
  if (kind == "noisy") {
    need(2);
    return NoisySource{parse_double(args[0], key), parse_double(args[1], key)};
  }
  if (kind == "ramp") {
    need(3);
    auto period = parse_int(args[2], key);
    if (period < 1) throw Error(Errc::BadConfig, key + ": ramp period must be >= 1 ms");
    return RampSource{parse_double(args[0], key), parse_double(args[1], key), static_cast<std::uint64_t>(period)};
  }
  throw Error(Errc::BadConfig, key + ": unknown source kind '" + kind + "'");
}

/// "analog.3" -> 2, checking the 1-based channel against `count`.
inline int channel_of(const std::string& key, std::size_t prefix_len, int count) {
  std::string digits = key.substr(prefix_len, key.find('.', prefix_len) - prefix_len);
  auto ch = parse_int(digits, key);
  if (ch < 1 || ch > count) throw Error(Errc::BadConfig, key + ": channel out of range");
  return static_cast<int>(ch - 1);
}

}  // namespace detail

/// Reads `key = value` lines; '#' starts a comment. Unknown keys are errors.
inline SimConfig parse_sim_config(std::istream& in, SimConfig cfg = {}) {
  using namespace detail;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::BadConfig, "line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    auto starts = [&](std::string_view p) { return key.rfind(p, 0) == 0; };
    auto ends = [&](std::string_view s) {
      return key.size() >= s.size() && key.compare(key.size() - s.size(), s.size(), s) == 0;
    };

    if (key == "datagram_period_ms") cfg.datagram_period_ms = static_cast<std::uint64_t>(parse_int(val, key));
    else if (key == "rate_hz") {
      auto hz = parse_int(val, key);
      if (hz < 1 || hz > 1000) throw Error(Errc::BadConfig, "rate_hz must be 1..1000");
      cfg.datagram_period_ms = static_cast<std::uint64_t>(1000 / hz);
    } else if (key == "heartbeat_interval_ms") cfg.heartbeat_interval_ms = static_cast<std::uint64_t>(parse_int(val, key));
    else if (key == "heartbeat_timeout_ms") cfg.heartbeat_timeout_ms = static_cast<std::uint64_t>(parse_int(val, key));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(val, key));
    else if (key == "echo_frames") cfg.echo_frames = parse_bool(val, key);
    else if (key == "enable") {
      cfg.enables.reset();
      for (const auto& name : split(val, ','))
        if (!name.empty()) cfg.enables.set(*[&] {
          auto idx = status_field_index(name);
          if (!idx) throw Error(Errc::BadConfig, key + ": unknown status field '" + name + "'");
          return idx;
        }());
    } else if (starts("enable.")) {
      auto idx = status_field_index(key.substr(7));
      if (!idx) throw Error(Errc::BadConfig, "unknown status field '" + key.substr(7) + "'");
      cfg.enables.set(*idx, parse_bool(val, key));
    } else if (key == "network.local") cfg.local = Address::parse(val);
    else if (key == "network.host") cfg.host = Address::parse(val);
    else if (key == "stepper.rate") cfg.stepper.rate = parse_double(val, key);
    else if (key == "stepper.demo") cfg.stepper.demo = parse_bool(val, key);
    else if (key == "stepper.demo_min") cfg.stepper.demo_min = static_cast<std::int32_t>(parse_int(val, key));
    else if (key == "stepper.demo_max") cfg.stepper.demo_max = static_cast<std::int32_t>(parse_int(val, key));
    else if (starts("stepper.") && ends(".position"))
      cfg.stepper.initial_positions[channel_of(key, 8, kStepperChannels)] =
          static_cast<std::int32_t>(parse_int(val, key));
    else if (starts("analog.map.")) {
      auto ch = parse_int(val, key);
      if (ch < 1 || ch > kAnalogChannels) throw Error(Errc::BadConfig, key + ": channel must be 1..6");
      std::string field = key.substr(11);
      int c = static_cast<int>(ch - 1);
      if (iequals(field, "AIN24")) cfg.analog_map.ain24 = c;
      else if (iequals(field, "AIN12")) cfg.analog_map.ain12 = c;
      else if (iequals(field, "AIN5")) cfg.analog_map.ain5 = c;
      else if (iequals(field, "AINDMH")) cfg.analog_map.aindmh = c;
      else if (iequals(field, "AINSTEER")) cfg.analog_map.ainsteer = c;
      else throw Error(Errc::BadConfig, key + ": not an analog status field");
    } else if (starts("analog.") && ends(".range"))
      cfg.analog_ranges[channel_of(key, 7, kAnalogChannels)] = parse_double(val, key);
    else if (starts("analog."))
      cfg.analog_sources[channel_of(key, 7, kAnalogChannels)] = parse_source(val, key);
    else if (starts("sensor."))
      cfg.sensor_sources[channel_of(key, 7, kUltrasonicChannels)] = parse_source(val, key);
    else if (key == "dmh.threshold_cm") cfg.dmh.threshold_cm = parse_double(val, key);
    else if (key == "dmh.sensors_enabled") cfg.dmh.sensors_enabled = parse_bool(val, key);
    else if (key == "dmh.enforce_button") cfg.dmh.enforce_button = parse_bool(val, key);
    else if (key == "dmh.button") cfg.dmh.button_pressed = parse_bool(val, key);
    else if (key == "dmh.relay") cfg.dmh.relay = static_cast<int>(parse_int(val, key));
    else if (starts("bldc.")) {
      auto parts = split(val, ',');
      if (parts.size() != 3) throw Error(Errc::BadConfig, key + ": expected speed,direction,brake");
      auto& b = cfg.bldc[channel_of(key, 5, kBldcChannels)];
      b.speed = static_cast<std::uint16_t>(parse_int(parts[0], key));
      b.direction = static_cast<std::uint8_t>(parse_int(parts[1], key));
      b.brake = parse_bool(parts[2], key);
    } else if (starts("impairment.")) {
      if (!cfg.impairment) cfg.impairment = Impairment{};
      if (key == "impairment.drop") cfg.impairment->drop_probability = parse_double(val, key);
      else if (key == "impairment.duplicate") cfg.impairment->duplicate_probability = parse_double(val, key);
      else if (key == "impairment.reorder_window")
        cfg.impairment->reorder_window = static_cast<std::size_t>(parse_int(val, key));
      else if (key == "impairment.seed") cfg.impairment->seed = static_cast<std::uint64_t>(parse_int(val, key));
      else throw Error(Errc::BadConfig, "unknown key '" + key + "'");
    } else {
      throw Error(Errc::BadConfig, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

inline SimConfig load_sim_config(const std::string& path, SimConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::BadConfig, "cannot read config '" + path + "'");
  return parse_sim_config(in, std::move(base));
}

// ---------------------------------------------------------------------------
// Clock

/// Board time base: milliseconds since simulator start.
class SimClock {
 public:
  enum class Mode { Real, Virtual };

  explicit SimClock(Mode mode = Mode::Virtual) : mode_(mode), origin_(std::chrono::steady_clock::now()) {}

  Mode mode() const { return mode_; }

  std::uint64_t now() const {
    if (mode_ == Mode::Virtual) return virtual_now_;
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - origin_).count());
  }

  /// Virtual: advance by one quantum. Real: sleep until the next millisecond boundary.
  void wait_next() {
    if (mode_ == Mode::Virtual) {
      ++virtual_now_;
      return;
    }
    std::this_thread::sleep_until(origin_ + std::chrono::milliseconds(now() + 1));
  }

  void advance(std::uint64_t ms) {
    if (mode_ == Mode::Virtual) virtual_now_ += ms;
  }

 private:
  Mode mode_;
  std::chrono::steady_clock::time_point origin_;
  std::uint64_t virtual_now_ = 0;
};

// ---------------------------------------------------------------------------
// Per-tick physics

/// Constant-rate stepper motion toward the live target at `rate` steps/s.
/// Credit is kept in step-milliseconds so integral rates never drift. An idle
/// stepper, or one just given a target, has a step ready for the next tick.

inline BoardState step_kinematics(BoardState state, std::uint64_t dt_ms, const StepperConfig& cfg) {
  const Outputs live = state.outputs();
  for (int i = 0; i < kStepperChannels; ++i) {
    Stepper& s = state.steppers[i];
    std::int32_t target = live.stepper_targets[i];
    if (cfg.demo && !state.safe_state && s.position == target) {
      target = (target >= cfg.demo_max) ? cfg.demo_min : cfg.demo_max;
      state.commanded.stepper_targets[i] = target;
    }
    if (s.position == target || cfg.rate <= 0.0) {
      s.credit = kStepCredit;
      continue;
    }
    std::int64_t gap = static_cast<std::int64_t>(target) - s.position;
    // Steps due now are paid from credit banked by earlier ticks.
    auto steps = static_cast<std::int64_t>(s.credit / kStepCredit);
    s.credit -= static_cast<double>(steps) * kStepCredit;
    s.credit += cfg.rate * static_cast<double>(dt_ms);
    if (steps <= 0) continue;
    std::int64_t move = std::min<std::int64_t>(steps, gap > 0 ? gap : -gap);
    s.position = static_cast<std::int32_t>(s.position + (gap > 0 ? move : -move));
    if (s.position == target) s.credit = kStepCredit;
  }
  return state;
}

struct SensorSources {
  std::array<SignalSource, kAnalogChannels> analog{};
  std::array<double, kAnalogChannels> ranges{};
  std::array<SignalSource, kUltrasonicChannels> ultrasonic{};
};

/// Regenerates ADC codes and ultrasonic distances from their sources.
inline BoardState sample_sensors(BoardState state, std::uint64_t now, const SensorSources& src, std::mt19937_64& rng) {
  for (int i = 0; i < kAnalogChannels; ++i) {
    state.analog[i].range_volts = src.ranges[i];
    auto v = sample(src.analog[i], now, rng);
    state.analog[i].raw = v ? volts_to_raw(*v, src.ranges[i]) : 0;
  }
  for (int i = 0; i < kUltrasonicChannels; ++i) state.distances_cm[i] = sample(src.ultrasonic[i], now, rng);
  return state;
}

// ---------------------------------------------------------------------------
// The board

struct SimCounters {
  std::uint64_t frames_sent = 0;
  std::uint64_t status_sent = 0;
  std::uint64_t heartbeats_sent = 0;
  std::uint64_t connect_attempts = 0;
  std::uint64_t frames_received = 0;
  std::uint64_t host_heartbeats = 0;
  std::uint64_t commands_applied = 0;
  std::uint64_t commands_rejected = 0;
  std::uint64_t crc_failures = 0;
  std::uint64_t malformed = 0;
  std::uint64_t ignored = 0;
};

struct ReceiveLogEntry {
  std::uint64_t received_at = 0;  // board T
  std::string raw;
};

/// Diagnostic lines never contain ';', which is what tells them apart from
/// frames in a capture.
inline std::string diagnostic_text(std::string_view s) {
  std::string out(s);
  std::replace(out.begin(), out.end(), ';', ',');
  return out;
}

class Simulator {
 public:
  static constexpr std::size_t kReceiveLogDepth = 256;

  Simulator(SimConfig config, Endpoint& endpoint, std::ostream* diag = nullptr)
      : config_(std::move(config)), endpoint_(endpoint), diag_(diag), rng_(config_.seed) {
    config_.validate();
    boot();
  }

  /// Startup banner in the firmware's serial-terminal layout.
  void print_banner() {
    if (!diag_) return;
    *diag_ << "HeartbeatInterval_ms : " << config_.heartbeat_interval_ms << "\n"
           << "heartbeatIntervalMax : " << config_.heartbeat_timeout_ms << "\n\n"
           << "Datagram Frequency Hz : " << 1000 / config_.datagram_period_ms << "\n"
           << "datagramInterval_ms : " << config_.datagram_period_ms << "\n\n"
           << "Starting UDP on " << endpoint_.local_address().to_string() << " - 0 means failed: 1\n"
           << "Host " << config_.host.to_string() << "\n\n";
  }

  /// One tick at board time `now` (monotone).
  void step(std::uint64_t now) {
    std::uint64_t dt = started_ ? now - last_tick_ : 0;
    started_ = true;
    last_tick_ = now;

    while (auto d = endpoint_.recv()) handle_frame(d->bytes, now);

    board_ = sample_sensors(std::move(board_), now, sources_, rng_);
    for (int i = 0; i < kUltrasonicChannels; ++i)
      if (distance_override_[i]) board_.distances_cm[i] = *distance_override_[i];
    board_ = evaluate_dmh(dmh_inputs(), std::move(board_));

    Phase before = link_.phase;
    auto r = tick(std::move(link_), std::move(board_), now);
    link_ = std::move(r.link);
    board_ = std::move(r.board);
    if (before == Phase::Normal && link_.phase == Phase::SafeState)
      note("Heartbeat timeout: safe state established at T: " + std::to_string(now));

    board_ = step_kinematics(std::move(board_), dt, config_.stepper);

    if (link_.phase == Phase::Normal && now >= next_status_due_) {
      emit_status(now);
      next_status_due_ += config_.datagram_period_ms;
      if (next_status_due_ <= now) next_status_due_ = now + config_.datagram_period_ms;
    }
    for (Action a : r.actions) emit_heartbeat(a, now);
  }

  /// Dispatches one received datagram.
  void handle_frame(std::string_view bytes, std::uint64_t now) {
    ++counters_.frames_received;
    Frame frame;
    try {
      frame = parse_frame(bytes);
    } catch (const Error& e) {
      if (e.code() == Errc::ChecksumMismatch) ++counters_.crc_failures;
      else ++counters_.malformed;
      note("Dropped packet (" + diagnostic_text(e.what()) + ")");
      return;
    }

    receive_log_.push_back({now, std::string(without_terminator(bytes))});
    if (receive_log_.size() > kReceiveLogDepth) receive_log_.pop_front();
    note("Incoming Packet: " + receive_log_.back().raw + " R4_Received_at:T: " + std::to_string(now) + ";");

    Classification c = classify(frame);
    if (c.kind == FrameKind::Status) {
      ++counters_.ignored;
      return;
    }
    DecodedCommand cmd;
    try {
      cmd = decode_command(frame);
    } catch (const Error& e) {
      ++counters_.commands_rejected;
      note("Rejected command (" + diagnostic_text(e.what()) + ")");
      return;
    }
    if (cmd.pnum) link_.pnum_in_last = cmd.pnum;

    if (auto* hb = std::get_if<HeartbeatCmd>(&cmd.command)) {
      if (hb->tag != "ROS2-R4") {
        ++counters_.ignored;
        return;
      }
      ++counters_.host_heartbeats;
      if (last_host_heartbeat_rx_ && link_.phase != Phase::LinkDown)
        note("Interval Between Heart Beats mS: " + std::to_string(now - *last_host_heartbeat_rx_));
      last_host_heartbeat_rx_ = now;
      Phase before = link_.phase;
      std::tie(link_, board_) = on_host_heartbeat(std::move(link_), std::move(board_), now);
      if (before != Phase::Normal && link_.phase == Phase::Normal) {
        next_status_due_ = now;
        if (before == Phase::SafeState) note("Host heartbeat: safe state revoked at T: " + std::to_string(now));
        else note("Connection established at T: " + std::to_string(now));
      }
      return;
    }

    ++counters_.commands_applied;
    if (std::holds_alternative<StopCmd>(cmd.command)) {
      std::tie(link_, board_) = on_stop(std::move(link_), std::move(board_));
      note("STOP received: safe state established at T: " + std::to_string(now));
    } else {
      board_ = apply_command(std::move(board_), cmd.command);
    }
  }

  void link_down() {
    std::tie(link_, board_) = on_link_down(std::move(link_), std::move(board_));
    note("WiFi connection lost: safe state latched until reset");
  }

  /// Microcontroller reset: fresh board, back to connection attempts.
  void reset() {
    boot();
    note("Reset");
  }

  void inject_distance(int channel, std::optional<double> cm) { distance_override_.at(channel - 1) = cm; }
  void clear_distance_override(int channel) { distance_override_.at(channel - 1).reset(); }
  void set_dmh_button(bool pressed) { config_.dmh.button_pressed = pressed; }

  const BoardState& board() const { return board_; }
  const LinkState& link() const { return link_; }
  const SimCounters& counters() const { return counters_; }
  const SimConfig& config() const { return config_; }
  const std::deque<ReceiveLogEntry>& receive_log() const { return receive_log_; }

 private:
  void boot() {
    link_ = LinkState{};
    link_.heartbeat_interval_ms = config_.heartbeat_interval_ms;
    link_.heartbeat_timeout_ms = config_.heartbeat_timeout_ms;

    board_ = BoardState{};
    board_.enables = config_.enables;
    board_.analog_map = config_.analog_map;
    board_.dmh_relay = config_.dmh.relay;
    board_.commanded.bldc = config_.bldc;
    for (int i = 0; i < kStepperChannels; ++i) {
      board_.steppers[i].position = config_.stepper.initial_positions[i];
      board_.commanded.stepper_targets[i] = config_.stepper.initial_positions[i];
    }
    board_.safe_state = true;  // outputs held off until the host answers

    sources_.analog = config_.analog_sources;
    sources_.ranges = config_.analog_ranges;
    sources_.ultrasonic = config_.sensor_sources;
    distance_override_ = {};
    last_host_heartbeat_rx_.reset();
    started_ = false;
    next_status_due_ = 0;
  }

  DmhInputs dmh_inputs() const {
    DmhInputs in;
    in.button_pressed = config_.dmh.button_pressed;
    in.sensor_distances = board_.distances_cm;
    in.sensors_enabled = config_.dmh.sensors_enabled;
    in.min_distance_cm = config_.dmh.threshold_cm;
    in.enforce_button = config_.dmh.enforce_button;
    return in;
  }

  void transmit(std::vector<Field> fields, std::uint64_t pnum, std::uint64_t t) {
    append_trailer(fields, pnum, t);
    std::string bytes = serialize_frame(fields);
    try {
      endpoint_.send_to(config_.host, bytes);
    } catch (const Error& e) {
      note(std::string("Send failed (") + e.what() + ")");
    }
    ++counters_.frames_sent;
    if (config_.echo_frames && diag_) *diag_ << without_terminator(bytes) << "\n";
  }

  void emit_status(std::uint64_t now) {
    std::uint64_t pnum = next_pnum(link_);
    transmit(snapshot(board_), pnum, now);
    ++counters_.status_sent;
  }

  void emit_heartbeat(Action a, std::uint64_t now) {
    std::vector<Field> fields{Field{"H", "R4-ROS2"}};
    if (a == Action::SendConnectHeartbeat) {
      append_trailer(fields, 0, 0);
      std::string bytes = serialize_frame(fields);
      try {
        endpoint_.send_to(config_.host, bytes);
      } catch (const Error& e) {
        note(std::string("Send failed (") + e.what() + ")");
      }
      ++counters_.connect_attempts;
      ++counters_.frames_sent;
      note("Attempting to Establish a Connection: " + std::string(without_terminator(bytes)));
      return;
    }
    std::uint64_t pnum = next_pnum(link_);
    transmit(std::move(fields), pnum, now);
    ++counters_.heartbeats_sent;
  }

  void note(const std::string& line) {
    if (diag_) *diag_ << line << "\n";
  }

  SimConfig config_;
  Endpoint& endpoint_;
  std::ostream* diag_;
  std::mt19937_64 rng_;
  SensorSources sources_;

  LinkState link_;
  BoardState board_;
  SimCounters counters_;
  std::deque<ReceiveLogEntry> receive_log_;
  std::array<std::optional<double>, kUltrasonicChannels> distance_override_{};
  std::optional<std::uint64_t> last_host_heartbeat_rx_;

  bool started_ = false;
  std::uint64_t last_tick_ = 0;
  std::uint64_t next_status_due_ = 0;
};

/// Drives the simulator from `clock` until `stop` is set or `until_ms` is
/// reached. `on_tick` runs after every simulator step (in-process hosts use it).
inline void run(Simulator& sim, SimClock& clock, const std::atomic<bool>& stop,
                std::optional<std::uint64_t> until_ms = std::nullopt,
                const std::function<void(std::uint64_t)>& on_tick = {}) {
  while (!stop.load(std::memory_order_relaxed)) {
    std::uint64_t now = clock.now();
    if (until_ms && now >= *until_ms) break;
    sim.step(now);
    if (on_tick) on_tick(now);
    clock.wait_next();
  }
}

}  // namespace r4
