#pragma once

#include <algorithm>
#include <array>
#include <bitset>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "r4/codec.hpp"
#include "r4/error.hpp"

namespace r4 {

inline constexpr int kServoChannels = 16;
inline constexpr int kDhbChannels = 4;
inline constexpr int kOsmcChannels = 4;
inline constexpr int kStepperChannels = 4;
inline constexpr int kRelayChannels = 8;
inline constexpr int kBldcChannels = 4;
inline constexpr int kAnalogChannels = 6;
inline constexpr int kUltrasonicChannels = 4;

inline constexpr int kMaxPwm = 4095;          // 12-bit PCA9685 / DAC code
inline constexpr int kMaxServoUs = 20000;     // one 50 Hz servo period
inline constexpr std::uint32_t kAdcFullScale = 65535;

// ---------------------------------------------------------------------------
// Status field catalogue, in emission order.

inline constexpr std::array<std::string_view, 39> kStatusFieldNames = {
    "AIN24",     "AIN12",      "AIN5",       "AINDMH",     "DMHSTA",     "AINSTEER",   "DHB1A",      "DHB1B",
    "DHB2A",     "DHB2B",      "OSMC1",      "OSMC2",      "OSMC3",      "OSMC4",      "STEP1POS",   "STEP2POS",
    "STEP3POS",  "STEP4POS",   "SERVO1POS",  "SERVO2POS",  "SERVO3POS",  "SERVO4POS",  "SERVO5POS",  "SERVO6POS",
    "SERVO7POS", "SERVO8POS",  "SERVO9POS",  "SERVO10POS", "SERVO11POS", "SERVO12POS", "SERVO13POS", "SERVO14POS",
    "SERVO15POS", "SERVO16POS", "RELAYS",    "BLDC1",      "BLDC2",      "BLDC3",      "BLDC4",
};

// Index layout of kStatusFieldNames.
namespace status_index {
inline constexpr std::size_t kAin24 = 0;
inline constexpr std::size_t kDmhSta = 4;
inline constexpr std::size_t kAinSteer = 5;
inline constexpr std::size_t kDhb = 6;
inline constexpr std::size_t kOsmc = 10;
inline constexpr std::size_t kStep = 14;
inline constexpr std::size_t kServo = 18;
inline constexpr std::size_t kRelays = 34;
inline constexpr std::size_t kBldc = 35;
}  // namespace status_index

using EnableSet = std::bitset<kStatusFieldNames.size()>;

inline std::optional<std::size_t> status_field_index(std::string_view name) {
  for (std::size_t i = 0; i < kStatusFieldNames.size(); ++i)
    if (iequals(kStatusFieldNames[i], name)) return i;
  return std::nullopt;
}

/// The field set the firmware ships with: analog block, DMH, first channel of
/// each actuator family.
inline EnableSet default_enables() {
  EnableSet e;
  for (std::string_view n : {"AIN24", "AIN12", "AIN5", "AINDMH", "DMHSTA", "AINSTEER", "DHB1A", "OSMC1", "STEP1POS",
                             "SERVO1POS"})
    e.set(*status_field_index(n));
  return e;
}

// ---------------------------------------------------------------------------
// Board state

struct HBridge {
  std::uint16_t duty = 0;      // 0..4095
  std::uint8_t direction = 0;  // 0|1
  friend bool operator==(const HBridge&, const HBridge&) = default;
};

struct Bldc {
  std::uint16_t speed = 0;  // DAC code 0..4095
  std::uint8_t direction = 0;
  bool brake = false;
  friend bool operator==(const Bldc&, const Bldc&) = default;
};

/// Everything the host can command.
struct Outputs {
  std::array<std::uint16_t, kServoChannels> servos{};  // pulse width us, 0 = disabled
  std::array<HBridge, kDhbChannels> dhb{};             // DHB1A, DHB1B, DHB2A, DHB2B
  std::array<HBridge, kOsmcChannels> osmc{};
  std::array<Bldc, kBldcChannels> bldc{};
  std::array<bool, kRelayChannels> relays{};           // true = closed
  std::array<std::int32_t, kStepperChannels> stepper_targets{};

  friend bool operator==(const Outputs&, const Outputs&) = default;
  bool is_zero() const { return *this == Outputs{}; }
};

/// One step's worth of stepper credit, in step-milliseconds.
inline constexpr double kStepCredit = 1000.0;

struct Stepper {
  std::int32_t position = 0;
  double credit = 0.0;  // step-milliseconds banked by the kinematics integrator (1000 = one step)
  friend bool operator==(const Stepper&, const Stepper&) = default;
};

struct AnalogChannel {
  std::uint16_t raw = 0;
  double range_volts = 24.0;
  friend bool operator==(const AnalogChannel&, const AnalogChannel&) = default;
};

/// Which analog channel (0-based) feeds each named AIN status field.
struct AnalogMap {
  int ain24 = 0;
  int ain12 = 1;
  int ain5 = 2;
  int aindmh = 3;
  int ainsteer = 5;
  friend bool operator==(const AnalogMap&, const AnalogMap&) = default;
};

struct BoardState {
  Outputs commanded;  // last values set by the host
  std::array<Stepper, kStepperChannels> steppers{};
  std::array<AnalogChannel, kAnalogChannels> analog{};
  std::array<std::optional<double>, kUltrasonicChannels> distances_cm{};
  AnalogMap analog_map;
  bool dmh_button = true;  // pressed
  bool dmh_condition = false;
  bool safe_state = false;
  std::optional<int> dmh_relay;  // 1-based relay channel opened on a DMH condition
  EnableSet enables = default_enables();

  friend bool operator==(const BoardState&, const BoardState&) = default;

  /// Live outputs: commanded values masked by the safe-state and DMH latches.
  Outputs outputs() const {
    if (safe_state) {
      Outputs off;
      for (int i = 0; i < kStepperChannels; ++i) off.stepper_targets[i] = steppers[i].position;
      return off;
    }
    Outputs live = commanded;
    if (dmh_condition) {
      live.dhb = {};
      live.osmc = {};
      live.bldc = {};
      if (dmh_relay && *dmh_relay >= 1 && *dmh_relay <= kRelayChannels) live.relays[*dmh_relay - 1] = false;
    }
    return live;
  }

  /// Outputs that will be re-established when the safe state is revoked.
  std::optional<Outputs> pending_restore() const {
    if (!safe_state || commanded.is_zero()) return std::nullopt;
    return commanded;
  }
};

// ---------------------------------------------------------------------------
// Commands

struct HeartbeatCmd {
  std::string tag;  // "ROS2-R4" from the host
  friend bool operator==(const HeartbeatCmd&, const HeartbeatCmd&) = default;
};
struct ServoCmd {
  std::uint16_t width_us = 0;
  int channel = 1;
  friend bool operator==(const ServoCmd&, const ServoCmd&) = default;
};
struct DhbCmd {
  std::uint16_t duty = 0;
  std::uint8_t direction = 0;
  int channel = 1;
  friend bool operator==(const DhbCmd&, const DhbCmd&) = default;
};
struct OsmcCmd {
  std::uint16_t width = 0;
  std::uint8_t direction = 0;
  int channel = 1;
  friend bool operator==(const OsmcCmd&, const OsmcCmd&) = default;
};
struct RelayCmd {
  int channel = 1;
  bool closed = false;
  friend bool operator==(const RelayCmd&, const RelayCmd&) = default;
};
struct StopCmd {
  friend bool operator==(const StopCmd&, const StopCmd&) = default;
};
struct StepperTargetCmd {
  std::int32_t position = 0;
  int channel = 1;
  friend bool operator==(const StepperTargetCmd&, const StepperTargetCmd&) = default;
};

using Command = std::variant<HeartbeatCmd, ServoCmd, DhbCmd, OsmcCmd, RelayCmd, StopCmd, StepperTargetCmd>;

enum class Verb { Heartbeat, Servo, Dhb, Osmc, Relay, Stop, StepperTarget };

inline Verb verb_of(const Command& cmd) { return static_cast<Verb>(cmd.index()); }

inline char verb_letter(Verb v) {
  constexpr std::array<char, 7> letters = {'H', 'S', 'D', 'O', 'R', 'E', 'P'};
  return letters[static_cast<std::size_t>(v)];
}

struct DecodedCommand {
  Command command;
  std::optional<std::uint64_t> pnum;
  std::optional<std::uint64_t> t;
};

namespace detail {

inline std::int64_t int_element(const Field& f, std::size_t i, std::int64_t lo, std::int64_t hi, const char* what) {
  const std::string& s = f.elements[i];
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw Error(Errc::OutOfRange, std::string(what) + " '" + s + "' is not an integer");
  if (v < lo || v > hi)
    throw Error(Errc::OutOfRange,
                std::string(what) + " " + s + " outside " + std::to_string(lo) + ".." + std::to_string(hi));
  return v;
}

inline void expect_arity(const Field& f, std::size_t n) {
  if (f.elements.size() != n)
    throw Error(Errc::BadArity, "'" + f.name + "' takes " + std::to_string(n) + " element(s), got " +
                                    std::to_string(f.elements.size()));
}

}  // namespace detail

/// Verb, arguments and trailer of a command or host heartbeat frame.
inline DecodedCommand decode_command(const Frame& frame) {
  if (frame.fields.empty()) throw Error(Errc::UnknownVerb, "empty frame");
  const Field& f = frame.fields.front();
  Classification c = classify(frame);
  if (c.kind == FrameKind::Status) throw Error(Errc::UnknownVerb, "'" + f.name + "' is not a command");

  using detail::expect_arity;
  using detail::int_element;
  DecodedCommand out{StopCmd{}, frame.pnum(), frame.timestamp()};

  if (c.kind == FrameKind::Heartbeat) {
    expect_arity(f, 1);
    out.command = HeartbeatCmd{f.elements[0]};
    return out;
  }
  switch (c.verb) {
    case 'S':
      expect_arity(f, 2);
      out.command = ServoCmd{static_cast<std::uint16_t>(int_element(f, 0, 0, kMaxServoUs, "servo width")),
                             static_cast<int>(int_element(f, 1, 1, kServoChannels, "channel"))};
      break;
    case 'D':
      expect_arity(f, 3);
      out.command = DhbCmd{static_cast<std::uint16_t>(int_element(f, 0, 0, kMaxPwm, "duty")),
                           static_cast<std::uint8_t>(int_element(f, 1, 0, 1, "direction")),
                           static_cast<int>(int_element(f, 2, 1, kDhbChannels, "channel"))};
      break;
    case 'O':
      expect_arity(f, 3);
      out.command = OsmcCmd{static_cast<std::uint16_t>(int_element(f, 0, 0, kMaxPwm, "width")),
                            static_cast<std::uint8_t>(int_element(f, 1, 0, 1, "direction")),
                            static_cast<int>(int_element(f, 2, 1, kOsmcChannels, "channel"))};
      break;
    case 'R':
      expect_arity(f, 2);
      out.command = RelayCmd{static_cast<int>(int_element(f, 0, 1, kRelayChannels, "channel")),
                             int_element(f, 1, 0, 1, "relay state") == 1};
      break;
    case 'E':
      expect_arity(f, 1);
      if (!iequals(f.elements[0], "STOP")) throw Error(Errc::OutOfRange, "E expects STOP, got '" + f.elements[0] + "'");
      out.command = StopCmd{};
      break;
    case 'P':
      expect_arity(f, 2);
      out.command = StepperTargetCmd{
          static_cast<std::int32_t>(int_element(f, 0, INT32_MIN, INT32_MAX, "stepper position")),
          static_cast<int>(int_element(f, 1, 1, kStepperChannels, "channel"))};
      break;
    default:
      throw Error(Errc::UnknownVerb, "verb '" + f.name + "'");
  }
  return out;
}

/// Leading command field for a command, e.g. O:358,1,1.
inline Field encode_command(const Command& cmd) {
  auto s = [](auto v) { return std::to_string(v); };
  return std::visit(
      [&](const auto& c) -> Field {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, HeartbeatCmd>) return {"H", c.tag};
        else if constexpr (std::is_same_v<T, ServoCmd>) return {"S", {s(c.width_us), s(c.channel)}};
        else if constexpr (std::is_same_v<T, DhbCmd>) return {"D", {s(c.duty), s(int{c.direction}), s(c.channel)}};
        else if constexpr (std::is_same_v<T, OsmcCmd>) return {"O", {s(c.width), s(int{c.direction}), s(c.channel)}};
        else if constexpr (std::is_same_v<T, RelayCmd>) return {"R", {s(c.channel), c.closed ? "1" : "0"}};
        else if constexpr (std::is_same_v<T, StopCmd>) return {"E", "STOP"};
        else return {"P", {s(c.position), s(c.channel)}};
      },
      cmd);
}

/// Pure state transition. Stop clears the commanded outputs and latches the
/// safe state, so a later recovery comes back to all-off.
inline BoardState apply_command(BoardState state, const Command& cmd) {
  Outputs& out = state.commanded;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, ServoCmd>) out.servos[c.channel - 1] = c.width_us;
        else if constexpr (std::is_same_v<T, DhbCmd>) out.dhb[c.channel - 1] = {c.duty, c.direction};
        else if constexpr (std::is_same_v<T, OsmcCmd>) out.osmc[c.channel - 1] = {c.width, c.direction};
        else if constexpr (std::is_same_v<T, RelayCmd>) out.relays[c.channel - 1] = c.closed;
        else if constexpr (std::is_same_v<T, StepperTargetCmd>) {
          out.stepper_targets[c.channel - 1] = c.position;
          // A target command starts its move on the next tick.
          Stepper& s = state.steppers[c.channel - 1];
          s.credit = std::max(s.credit, kStepCredit);
        }
        else if constexpr (std::is_same_v<T, StopCmd>) {
          out = Outputs{};
          for (int i = 0; i < kStepperChannels; ++i) out.stepper_targets[i] = state.steppers[i].position;
          state.safe_state = true;
        }
      },
      cmd);
  return state;
}

// ---------------------------------------------------------------------------
// ADC scaling and status formatting

/// Two decimals, half away from zero.
inline std::string format_volts(double volts) {
  double rounded = std::round(volts * 100.0) / 100.0;
  if (rounded == 0.0) rounded = 0.0;  // no "-0.00"
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, rounded, std::chars_format::fixed, 2);
  return std::string(buf, res.ptr);
}

struct AdcReading {
  double volts = 0.0;
  std::string text;
};

/// raw / 65535 * range_volts.
inline AdcReading scale_adc(std::uint16_t raw, double range_volts) {
  double v = static_cast<double>(raw) / static_cast<double>(kAdcFullScale) * range_volts;
  return {v, format_volts(v)};
}

/// Nearest ADC code for a voltage, clamped to the converter range.
inline std::uint16_t volts_to_raw(double volts, double range_volts) {
  double code = std::round(volts / range_volts * static_cast<double>(kAdcFullScale));
  if (!(code > 0.0)) return 0;
  if (code >= static_cast<double>(kAdcFullScale)) return static_cast<std::uint16_t>(kAdcFullScale);
  return static_cast<std::uint16_t>(code);
}

inline BoardState set_enable(BoardState state, std::string_view name, bool on) {
  auto idx = status_field_index(name);
  if (!idx) throw Error(Errc::UnknownField, "no status field '" + std::string(name) + "'");
  state.enables.set(*idx, on);
  return state;
}

/// Enabled status fields of the current live state, in emission order.
inline std::vector<Field> snapshot(const BoardState& state) {
  namespace si = status_index;
  const Outputs live = state.outputs();
  const auto& a = state.analog;
  auto ain = [&](int ch) {
    if (ch < 0 || ch >= kAnalogChannels) return std::string("0.00");
    return scale_adc(a[ch].raw, a[ch].range_volts).text;
  };
  auto bridge = [](const HBridge& h) {
    return std::vector<std::string>{std::to_string(h.duty), std::to_string(int{h.direction})};
  };

  std::vector<Field> fields;
  for (std::size_t i = 0; i < kStatusFieldNames.size(); ++i) {
    if (!state.enables.test(i)) continue;
    std::string name(kStatusFieldNames[i]);
    switch (i) {
      case 0: fields.emplace_back(name, ain(state.analog_map.ain24)); continue;
      case 1: fields.emplace_back(name, ain(state.analog_map.ain12)); continue;
      case 2: fields.emplace_back(name, ain(state.analog_map.ain5)); continue;
      case 3: fields.emplace_back(name, ain(state.analog_map.aindmh)); continue;
      case si::kDmhSta: fields.emplace_back(name, state.dmh_button ? "1" : "0"); continue;
      case si::kAinSteer: fields.emplace_back(name, ain(state.analog_map.ainsteer)); continue;
      default: break;
    }
    if (i >= si::kDhb && i < si::kOsmc) {
      fields.emplace_back(name, bridge(live.dhb[i - si::kDhb]));
    } else if (i >= si::kOsmc && i < si::kStep) {
      fields.emplace_back(name, bridge(live.osmc[i - si::kOsmc]));
    } else if (i >= si::kStep && i < si::kServo) {
      fields.emplace_back(name, std::to_string(state.steppers[i - si::kStep].position));
    } else if (i >= si::kServo && i < si::kRelays) {
      fields.emplace_back(name, std::to_string(live.servos[i - si::kServo]));
    } else if (i == si::kRelays) {
      std::vector<std::string> bits;
      for (bool r : live.relays) bits.emplace_back(r ? "1" : "0");
      fields.emplace_back(name, std::move(bits));
    } else {
      const Bldc& b = live.bldc[i - si::kBldc];
      fields.emplace_back(name, std::vector<std::string>{std::to_string(b.speed), std::to_string(int{b.direction}),
                                                         b.brake ? "1" : "0"});
    }
  }
  return fields;
}

}  // namespace r4
