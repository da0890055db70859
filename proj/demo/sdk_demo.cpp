// Host SDK walk-through against an in-process board: connect, command an
// OSMC channel, watch it reflected, then let the watchdog fire.

#include <iostream>

#include "r4/r4.hpp"

int main() {
  r4::LoopbackNetwork net;
  r4::SimConfig cfg;
  cfg.local = {"10.0.0.2", r4::kBoardPort};
  cfg.host = {"10.0.0.1", r4::kHostPort};

  auto board_ep = net.open({cfg.local, cfg.host});
  r4::Simulator board(cfg, *board_ep);
  r4::SimClock clock;

  auto host_clock = [&] { return 1699276044000 + clock.now(); };
  auto tick = [&] {
    board.step(clock.now());
    clock.wait_next();
  };

  r4::ConnectOptions opts;
  opts.clock = host_clock;
  opts.idle = tick;
  auto session = r4::connect(net.open({cfg.host, cfg.local}), opts);
  std::cout << "connected to " << session->endpoint().peer().to_string() << "\n";

  for (int i = 0; i < 30; ++i) {
    tick();
    session->poll();
  }
  session->send(r4::OsmcCmd{358, 1, 1});
  for (int i = 0; i < 30; ++i) {
    tick();
    for (const auto& e : session->poll())
      if (const auto* u = std::get_if<r4::StateUpdate>(&e)) {
        std::cout << r4::without_terminator(u->frame.raw) << "\n";
        if (r4::reflects(r4::OsmcCmd{358, 1, 1}, u->frame).value_or(false)) i = 30;
      }
  }

  session->set_auto_heartbeat(false);
  while (board.link().phase == r4::Phase::Normal) {
    tick();
    session->poll();
  }
  std::cout << "watchdog fired at T " << clock.now() << ", phase " << r4::to_string(board.link().phase) << "\n";

  auto stats = session->stats();
  std::cout << "status frames " << stats.status_frames << ", mean period " << stats.period_mean_ms << " ms, lost "
            << stats.lost << "\n";
}
