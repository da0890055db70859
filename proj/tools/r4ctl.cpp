// r4ctl: host-side control of an R4 board.
//
//   r4ctl monitor                 print status frames as they arrive
//   r4ctl send O 358,1,1          send a command and wait for the board to reflect it
//   r4ctl stats                   datagram period and loss over --duration-ms
//   r4ctl stop                    E:STOP
//
// Exit status: 0 success, 1 timeout or command not reflected, 2 usage error.

#include <chrono>
#include <iomanip>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "r4/client.hpp"

namespace {

using SteadyClock = std::chrono::steady_clock;

struct Options {
  int port = r4::kHostPort;
  std::string bind = "0.0.0.0";
  std::uint64_t timeout_ms = 3000;
  std::uint64_t duration_ms = 2000;
};

std::unique_ptr<r4::Session> open_session(const Options& o) {
  r4::EndpointConfig ec;
  ec.local = {o.bind, static_cast<std::uint16_t>(o.port)};
  ec.allow_ephemeral = o.port == 0;
  r4::ConnectOptions co;
  co.timeout_ms = o.timeout_ms;
  return r4::connect(r4::open_udp(ec), co);
}

/// Polls for `ms`, handing every event to `fn` (which may return true to stop early).
template <typename Fn>
bool pump(r4::Session& s, std::uint64_t ms, Fn&& fn) {
  auto deadline = SteadyClock::now() + std::chrono::milliseconds(ms);
  while (SteadyClock::now() < deadline) {
    for (auto& e : s.poll())
      if (fn(e)) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  return false;
}

std::string field_text(const r4::Field& f) {
  std::string out = f.name + ":";
  for (std::size_t i = 0; i < f.elements.size(); ++i) out += (i ? "," : "") + f.elements[i];
  return out;
}

/// "O" + {"358,1,1"} or {"358","1","1"} -> OsmcCmd, validated by the codec.
r4::Command parse_command(const std::string& verb, const std::vector<std::string>& args) {
  std::vector<std::string> elements;
  for (const auto& a : args) {
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = a.find(',', pos);
      elements.push_back(a.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  if (elements.empty()) elements.emplace_back();
  std::vector<r4::Field> fields{r4::Field{verb, elements}};
  r4::append_trailer(fields, 0, 0);
  return r4::decode_command(r4::make_frame(fields)).command;
}

int monitor(const Options& o) {
  auto s = open_session(o);
  pump(*s, o.duration_ms, [](const r4::Event& e) {
    if (const auto* u = std::get_if<r4::StateUpdate>(&e)) std::cout << r4::without_terminator(u->frame.raw) << "\n";
    else if (const auto* g = std::get_if<r4::Gap>(&e))
      std::cout << "gap: expected PNum " << g->expected << ", got " << g->got << " (" << g->lost << " lost)\n";
    else if (const auto* c = std::get_if<r4::CrcError>(&e)) std::cout << "crc error: " << c->detail << "\n";
    else if (const auto* m = std::get_if<r4::Malformed>(&e)) std::cout << "malformed: " << m->detail << "\n";
    return false;
  });
  return 0;
}

int send(const Options& o, const r4::Command& cmd) {
  auto s = open_session(o);
  std::optional<r4::Frame> before;
  pump(*s, o.timeout_ms, [&](const r4::Event& e) {
    if (const auto* u = std::get_if<r4::StateUpdate>(&e)) before = u->frame;
    return before.has_value();
  });
  s->send(cmd);

  std::string label = field_text(r4::encode_command(cmd));
  if (!before) {
    std::cout << label << " sent; no status frames to confirm it\n";
    return 1;
  }
  if (!r4::reflects(cmd, *before, &*before).has_value()) {
    std::cout << label << " sent; its status field is not enabled, cannot confirm\n";
    return 0;
  }
  int frames = 0;
  std::string shown;
  bool ok = pump(*s, o.timeout_ms, [&](const r4::Event& e) {
    const auto* u = std::get_if<r4::StateUpdate>(&e);
    if (!u) return false;
    ++frames;
    if (!r4::reflects(cmd, u->frame, &*before).value_or(false)) return false;
    std::string name = r4::reflecting_field(cmd);
    if (const r4::Field* f = name.empty() ? nullptr : u->frame.find(name)) shown = field_text(*f);
    return true;
  });
  if (!ok) {
    std::cout << label << " not reflected within " << o.timeout_ms << " ms\n";
    return 1;
  }
  std::cout << (shown.empty() ? label : shown) << " reflected after " << frames << " frame" << (frames == 1 ? "" : "s")
            << "\n";
  return 0;
}

/// E:STOP puts the board in its safe state: status frames stop. Heartbeats are
/// not answered afterwards so the stop is not revoked from here.
int stop(const Options& o) {
  auto s = open_session(o);
  s->send(r4::StopCmd{});
  s->set_auto_heartbeat(false);
  constexpr auto kQuiet = std::chrono::milliseconds(100);
  auto last_status = SteadyClock::now();
  int late = 0;
  bool halted = pump(*s, o.timeout_ms, [&](const r4::Event& e) {
    if (std::holds_alternative<r4::StateUpdate>(e)) {
      ++late;
      last_status = SteadyClock::now();
    }
    return SteadyClock::now() - last_status >= kQuiet;
  }) || SteadyClock::now() - last_status >= kQuiet;
  if (!halted) {
    std::cout << "E:STOP sent; status stream did not halt within " << o.timeout_ms << " ms\n";
    return 1;
  }
  std::cout << "E:STOP acknowledged: status stream halted (safe state) after " << late << " in-flight frame"
            << (late == 1 ? "" : "s") << "\n";
  return 0;
}

int stats(const Options& o) {
  auto s = open_session(o);
  pump(*s, o.duration_ms, [](const r4::Event&) { return false; });
  r4::ClientStats st;
  try {
    st = s->stats();
  } catch (const r4::Error& e) {
    std::cout << e.what() << "\n";
    return 1;
  }
  std::cout << std::fixed << std::setprecision(2) << "period_mean=" << st.period_mean_ms
            << "ms period_stddev=" << st.period_stddev_ms << "ms samples=" << st.period_samples
            << " status_frames=" << st.status_frames << " loss=" << st.lost << " out_of_order=" << st.out_of_order
            << " crc_errors=" << st.crc_errors << "\n";
  if (!st.heartbeat_intervals_ms.empty()) {
    std::cout << "heartbeat_intervals_ms=";
    for (std::size_t i = 0; i < st.heartbeat_intervals_ms.size(); ++i)
      std::cout << (i ? "," : "") << st.heartbeat_intervals_ms[i];
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Control and monitor an R4 board"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--port", o.port, "Local UDP port the board sends to")->check(CLI::Range(0, 65535));
  app.add_option("--bind", o.bind, "Local address to bind");
  app.add_option("--timeout-ms", o.timeout_ms, "How long to wait for the board");
  app.add_option("--duration-ms", o.duration_ms, "How long monitor and stats listen");

  auto* mon = app.add_subcommand("monitor", "Print status frames as they arrive");
  auto* snd = app.add_subcommand("send", "Send one command: VERB ARGS (e.g. O 358,1,1)");
  std::string verb;
  std::vector<std::string> args;
  snd->add_option("verb", verb, "S, D, O, R, E or P")->required();
  snd->add_option("args", args, "Command elements");
  auto* sts = app.add_subcommand("stats", "Report datagram period and loss");
  auto* stp = app.add_subcommand("stop", "Send E:STOP");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*mon) return monitor(o);
    if (*sts) return stats(o);
    if (*stp) return stop(o);
    if (*snd) {
      r4::Command cmd;
      try {
        cmd = parse_command(verb, args);
      } catch (const r4::Error& e) {
        std::cerr << "r4ctl: " << e.what() << "\n";
        return 2;
      }
      return send(o, cmd);
    }
  } catch (const r4::Error& e) {
    std::cerr << "r4ctl: " << e.what() << "\n";
    return e.code() == r4::Errc::BindFailure ? 2 : 1;
  }
  return 2;
}
