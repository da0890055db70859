#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "r4/model.hpp"

// Heartbeat watchdog, safe-state latch and DMH interlock. Every function here is
// a pure transition driven by the caller's clock (1 ms quantum).

namespace r4 {

enum class Phase { Connecting, Normal, SafeState, LinkDown };

constexpr std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Connecting: return "Connecting";
    case Phase::Normal: return "Normal";
    case Phase::SafeState: return "SafeState";
    case Phase::LinkDown: return "LinkDown";
  }
  return "?";
}

inline constexpr std::uint64_t kDefaultHeartbeatIntervalMs = 500;
inline constexpr std::uint64_t kDefaultHeartbeatTimeoutMs = 1000;

struct LinkState {
  Phase phase = Phase::Connecting;
  std::uint64_t last_host_heartbeat = 0;
  std::optional<std::uint64_t> last_sent_heartbeat;
  std::uint64_t heartbeat_interval_ms = kDefaultHeartbeatIntervalMs;
  std::uint64_t heartbeat_timeout_ms = kDefaultHeartbeatTimeoutMs;
  std::uint64_t pnum_out = 0;
  std::optional<std::uint64_t> pnum_in_last;

  friend bool operator==(const LinkState&, const LinkState&) = default;
};

/// Sequence number for the next transmitted frame. Connection attempts all
/// carry 0; from Normal onwards every frame takes the next integer.
inline std::uint64_t next_pnum(LinkState& link) {
  if (link.phase == Phase::Connecting) return 0;
  return ++link.pnum_out;
}

enum class Action {
  SendHeartbeat,         // "H:R4-ROS2" with the next PNum and board T
  SendConnectHeartbeat,  // "H:R4-ROS2;PNum:0;T:0;"
};

struct TickResult {
  LinkState link;
  BoardState board;
  std::vector<Action> actions;
};

inline TickResult tick(LinkState link, BoardState board, std::uint64_t now) {
  TickResult r{std::move(link), std::move(board), {}};
  LinkState& l = r.link;

  if (l.phase == Phase::LinkDown) return r;

  if (l.phase == Phase::Normal && now - l.last_host_heartbeat > l.heartbeat_timeout_ms) {
    l.phase = Phase::SafeState;
    r.board.safe_state = true;
  }

  if (!l.last_sent_heartbeat || now - *l.last_sent_heartbeat >= l.heartbeat_interval_ms) {
    l.last_sent_heartbeat = now;
    r.actions.push_back(l.phase == Phase::Connecting ? Action::SendConnectHeartbeat : Action::SendHeartbeat);
  }
  return r;
}

/// A verified "H:ROS2-R4" arrived. Revokes the safe state and re-establishes
/// the last host-commanded outputs.
inline std::pair<LinkState, BoardState> on_host_heartbeat(LinkState link, BoardState board, std::uint64_t now) {
  if (link.phase == Phase::LinkDown) return {std::move(link), std::move(board)};
  link.last_host_heartbeat = now;
  if (link.phase == Phase::SafeState || link.phase == Phase::Connecting) {
    link.phase = Phase::Normal;
    board.safe_state = false;
  }
  return {std::move(link), std::move(board)};
}

/// Carrier loss. Latches until reset().
inline std::pair<LinkState, BoardState> on_link_down(LinkState link, BoardState board) {
  link.phase = Phase::LinkDown;
  board.safe_state = true;
  return {std::move(link), std::move(board)};
}

/// E:STOP from the host.
inline std::pair<LinkState, BoardState> on_stop(LinkState link, BoardState board) {
  board = apply_command(std::move(board), StopCmd{});
  if (link.phase == Phase::Normal) link.phase = Phase::SafeState;
  return {std::move(link), std::move(board)};
}

/// Microcontroller reset: back to connection attempts with fresh counters.
inline LinkState reset(const LinkState& link) {
  LinkState fresh;
  fresh.heartbeat_interval_ms = link.heartbeat_interval_ms;
  fresh.heartbeat_timeout_ms = link.heartbeat_timeout_ms;
  return fresh;
}

struct DmhInputs {
  bool button_pressed = true;
  std::array<std::optional<double>, kUltrasonicChannels> sensor_distances{};
  bool sensors_enabled = false;
  double min_distance_cm = 30.0;
  bool enforce_button = false;  // motors dead unless the handle is held
};

/// Recomputes the DMH condition. While it holds, motor outputs read zero;
/// it clears as soon as the inputs clear.
inline BoardState evaluate_dmh(const DmhInputs& in, BoardState board) {
  bool obstacle = false;
  if (in.sensors_enabled) {
    for (const auto& d : in.sensor_distances)
      if (d && *d <= in.min_distance_cm) obstacle = true;
  }
  board.dmh_button = in.button_pressed;
  board.distances_cm = in.sensor_distances;
  board.dmh_condition = obstacle || (in.enforce_button && !in.button_pressed);
  return board;
}

}  // namespace r4
