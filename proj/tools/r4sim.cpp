// r4sim: run a virtual R4 board.
//
// Speaks the R4 protocol over UDP (board port 2018, host port 2390 by default).
// With --loopback-host the host side runs in-process over a simulated network,
// which is how deterministic captures are produced:
//
//   r4sim --loopback-host --virtual-clock --duration-ms 2000 --echo-frames > capture.txt
//   r4check capture.txt

#include <atomic>
#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "r4/client.hpp"
#include "r4/simulator.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual R4 board"};
  std::string config_path;
  std::optional<int> port;
  std::optional<std::string> host;
  std::optional<int> rate_hz;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> duration_ms;
  bool virtual_clock = false;
  bool echo_frames = false;
  bool loopback_host = false;
  bool quiet = false;

  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--port", port, "Local UDP port (0 picks a free one)")->check(CLI::Range(0, 65535));
  app.add_option("--host", host, "Host address as HOST:PORT");
  app.add_option("--rate-hz", rate_hz, "Status datagram rate")->check(CLI::Range(1, 1000));
  app.add_option("--seed", seed, "Seed for sensor noise and network impairment");
  app.add_option("--duration-ms", duration_ms, "Stop after this much board time");
  app.add_flag("--virtual-clock", virtual_clock, "Step a virtual 1 ms clock instead of real time");
  app.add_flag("--echo-frames", echo_frames, "Write every emitted frame to stdout");
  app.add_flag("--loopback-host", loopback_host, "Run an in-process host that answers heartbeats");
  app.add_flag("-q,--quiet", quiet, "No diagnostic output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (virtual_clock && !duration_ms) {
    std::cerr << "r4sim: --virtual-clock needs --duration-ms\n";
    return 2;
  }

  r4::SimConfig cfg;
  std::unique_ptr<r4::Endpoint> board_ep;
  std::unique_ptr<r4::LoopbackNetwork> net;
  std::unique_ptr<r4::Session> host_session;
  try {
    if (!config_path.empty()) cfg = r4::load_sim_config(config_path);
    if (port) cfg.local.port = static_cast<std::uint16_t>(*port);
    if (host) cfg.host = r4::Address::parse(*host);
    if (rate_hz) cfg.datagram_period_ms = static_cast<std::uint64_t>(1000 / *rate_hz);
    if (seed) cfg.seed = *seed;
    cfg.echo_frames = cfg.echo_frames || echo_frames;
    cfg.validate();

    if (loopback_host) {
      r4::Impairment imp = cfg.impairment.value_or(r4::Impairment{});
      if (seed && !cfg.impairment) imp.seed = *seed;
      net = std::make_unique<r4::LoopbackNetwork>(imp);
      if (cfg.local.port == 0) cfg.local.port = r4::kBoardPort;
      board_ep = net->open({cfg.local, cfg.host});
    } else {
      board_ep = r4::open_udp({cfg.local, cfg.host, r4::kMaxAcceptedFrame, cfg.local.port == 0});
    }
  } catch (const r4::Error& e) {
    std::cerr << "r4sim: " << e.what() << "\n";
    return 2;
  }

  std::ostream* diag = quiet ? nullptr : &std::cout;
  r4::Simulator sim(cfg, *board_ep, diag);
  r4::SimClock clock(virtual_clock ? r4::SimClock::Mode::Virtual : r4::SimClock::Mode::Real);

  std::function<void(std::uint64_t)> on_tick;
  if (loopback_host) {
    // Host T is epoch-like; anchored so that runs are reproducible.
    constexpr std::uint64_t kHostEpoch = 1699276044000;
    host_session = std::make_unique<r4::Session>(net->open({cfg.host, cfg.local}),
                                                 [&clock] { return kHostEpoch + clock.now(); });
    on_tick = [&](std::uint64_t) { host_session->poll(); };
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  sim.print_banner();
  r4::run(sim, clock, g_stop, duration_ms, on_tick);

  if (!quiet) {
    const auto& c = sim.counters();
    std::cerr << "sent " << c.frames_sent << " frames (" << c.status_sent << " status, " << c.heartbeats_sent
              << " heartbeat, " << c.connect_attempts << " connection attempts); received " << c.frames_received
              << " (" << c.crc_failures << " checksum failures, " << c.malformed << " malformed)\n";
  }
  return 0;
}
