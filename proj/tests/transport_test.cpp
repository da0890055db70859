#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <thread>

#include "r4/transport.hpp"

using r4::Address;
using r4::Errc;

namespace {

r4::EndpointConfig ephemeral(Address peer = {}) {
  r4::EndpointConfig c;
  c.local = {"127.0.0.1", 0};
  c.peer = std::move(peer);
  c.allow_ephemeral = true;
  return c;
}

std::optional<r4::Datagram> recv_within(r4::Endpoint& ep, int ms = 1000) {
  auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(ms);
  while (std::chrono::steady_clock::now() < deadline) {
    if (auto d = ep.recv()) return d;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  return std::nullopt;
}

template <typename Fn>
Errc error_of(Fn&& fn) {
  try {
    fn();
  } catch (const r4::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::MalformedFrame;
}

}  // namespace

TEST(Address, Parse) {
  EXPECT_EQ(Address::parse("192.168.1.20:2390"), (Address{"192.168.1.20", 2390}));
  EXPECT_EQ(Address::parse("2018").port, 2018);
  EXPECT_EQ(error_of([] { Address::parse("host:99999"); }), Errc::BadConfig);
  EXPECT_EQ(error_of([] { Address::parse("host:"); }), Errc::BadConfig);
  EXPECT_EQ((Address{"10.0.0.1", 5}).to_string(), "10.0.0.1:5");
}

TEST(Udp, DatagramPerFrameWithSource) {
  auto a = r4::open_udp(ephemeral());
  auto b = r4::open_udp(ephemeral(a->local_address()));
  EXPECT_NE(a->local_address().port, 0);
  b->send("H:R4-ROS2;PNum:0;T:0;^0xb10b3a06^\r");
  b->send("second");
  auto d = recv_within(*a);
  ASSERT_TRUE(d);
  EXPECT_EQ(d->bytes, "H:R4-ROS2;PNum:0;T:0;^0xb10b3a06^\r");
  EXPECT_EQ(d->source, b->local_address());
  auto d2 = recv_within(*a);
  ASSERT_TRUE(d2);
  EXPECT_EQ(d2->bytes, "second");
  EXPECT_FALSE(a->recv());  // non-blocking
}

TEST(Udp, PortZeroNeedsEphemeralOptIn) {
  r4::EndpointConfig c;
  c.local = {"127.0.0.1", 0};
  EXPECT_EQ(error_of([&] { r4::open_udp(c); }), Errc::BindFailure);
}

TEST(Udp, PortInUseIsBindFailure) {
  auto a = r4::open_udp(ephemeral());
  r4::EndpointConfig c;
  c.local = a->local_address();
  EXPECT_EQ(error_of([&] { r4::open_udp(c); }), Errc::BindFailure);
}

TEST(Udp, BadHostIsBindFailure) {
  r4::EndpointConfig c = ephemeral();
  c.local.host = "not-an-ip";
  EXPECT_EQ(error_of([&] { r4::open_udp(c); }), Errc::BindFailure);
}

TEST(Udp, OversizeDatagramsAreDroppedOnReceiveAndRefusedOnSend) {
  auto small_cfg = ephemeral();
  small_cfg.max_frame = 64;
  auto small = r4::open_udp(small_cfg);
  auto big = r4::open_udp(ephemeral(small->local_address()));
  big->send(std::string(200, 'x'));
  big->send("fits");
  auto d = recv_within(*small);
  ASSERT_TRUE(d);
  EXPECT_EQ(d->bytes, "fits");
  EXPECT_EQ(static_cast<r4::UdpEndpoint&>(*small).oversize_dropped(), 1u);
  EXPECT_EQ(error_of([&] { small->send_to(big->local_address(), std::string(65, 'x')); }), Errc::Oversize);
}

TEST(Udp, ClosedEndpoint) {
  auto a = r4::open_udp(ephemeral());
  a->close();
  EXPECT_FALSE(a->is_open());
  EXPECT_EQ(error_of([&] { a->recv(); }), Errc::Closed);
  EXPECT_EQ(error_of([&] { a->send_to({"127.0.0.1", 9}, "x"); }), Errc::Closed);
}

TEST(Loopback, DeliversInOrderWithoutImpairment) {
  r4::LoopbackNetwork net;
  auto a = net.open({{"10.0.0.1", 2390}, {"10.0.0.2", 2018}});
  auto b = net.open({{"10.0.0.2", 2018}, {"10.0.0.1", 2390}});
  for (int i = 0; i < 100; ++i) b->send(std::to_string(i));
  for (int i = 0; i < 100; ++i) {
    auto d = a->recv();
    ASSERT_TRUE(d);
    EXPECT_EQ(d->bytes, std::to_string(i));
    EXPECT_EQ(d->source, (Address{"10.0.0.2", 2018}));
  }
  EXPECT_FALSE(a->recv());
}

TEST(Loopback, BindingRules) {
  r4::LoopbackNetwork net;
  auto a = net.open({{"10.0.0.1", 2390}, {}});
  EXPECT_EQ(error_of([&] { net.open({{"10.0.0.1", 2390}, {}}); }), Errc::BindFailure);
  EXPECT_EQ(error_of([&] { net.open({{"10.0.0.1", 0}, {}}); }), Errc::BindFailure);
  r4::EndpointConfig eph{{"10.0.0.1", 0}, {}};
  eph.allow_ephemeral = true;
  EXPECT_GE(net.open(eph)->local_address().port, 49152);
  a->close();
  EXPECT_NO_THROW(net.open({{"10.0.0.1", 2390}, {}}));  // freed by close
}

TEST(Loopback, NobodyListeningCountsAsDrop) {
  r4::LoopbackNetwork net;
  auto a = net.open({{"10.0.0.1", 1}, {"10.0.0.9", 9}});
  a->send("x");
  EXPECT_EQ(net.dropped(), 1u);
}

TEST(Loopback, ImpairmentIsSeededAndDeterministic) {
  auto run = [](std::uint64_t seed) {
    r4::LoopbackNetwork net({0.2, 0.1, 3, seed});
    auto a = net.open({{"a", 1}, {"b", 2}});
    auto b = net.open({{"b", 2}, {"a", 1}});
    for (int i = 0; i < 1000; ++i) a->send(std::to_string(i));
    std::vector<std::string> got;
    while (auto d = b->recv()) got.push_back(d->bytes);
    return std::tuple{got, net.dropped(), net.duplicated()};
  };
  EXPECT_EQ(run(42), run(42));
  EXPECT_NE(std::get<0>(run(42)), std::get<0>(run(43)));
  auto [got, dropped, duplicated] = run(42);
  EXPECT_EQ(got.size(), 1000 - dropped + duplicated);
  EXPECT_NEAR(static_cast<double>(dropped), 200.0, 60.0);
  EXPECT_FALSE(std::is_sorted(got.begin(), got.end(), [](const auto& x, const auto& y) { return std::stoi(x) < std::stoi(y); }));
}

TEST(Loopback, ExtremeProbabilities) {
  {
    r4::LoopbackNetwork net({1.0, 0.0, 0, 1});
    auto a = net.open({{"a", 1}, {"b", 2}});
    auto b = net.open({{"b", 2}, {"a", 1}});
    for (int i = 0; i < 50; ++i) a->send("x");
    EXPECT_FALSE(b->recv());
    EXPECT_EQ(net.dropped(), 50u);
  }
  {
    r4::LoopbackNetwork net({0.0, 1.0, 0, 1});
    auto a = net.open({{"a", 1}, {"b", 2}});
    auto b = net.open({{"b", 2}, {"a", 1}});
    a->send("x");
    EXPECT_TRUE(b->recv());
    EXPECT_TRUE(b->recv());
    EXPECT_FALSE(b->recv());
  }
  EXPECT_EQ(error_of([] { r4::LoopbackNetwork net({1.5, 0, 0, 0}); }), Errc::BadConfig);
}

TEST(Loopback, ReorderKeepsEveryDatagram) {
  r4::LoopbackNetwork net({0.0, 0.0, 4, 9});
  auto a = net.open({{"a", 1}, {"b", 2}});
  auto b = net.open({{"b", 2}, {"a", 1}});
  for (int i = 0; i < 200; ++i) a->send(std::to_string(i));
  std::vector<int> got;
  while (auto d = b->recv()) got.push_back(std::stoi(d->bytes));
  ASSERT_EQ(got.size(), 200u);
  EXPECT_FALSE(std::is_sorted(got.begin(), got.end()));
  std::sort(got.begin(), got.end());
  for (int i = 0; i < 200; ++i) EXPECT_EQ(got[static_cast<std::size_t>(i)], i);
}
