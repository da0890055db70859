#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "r4/model.hpp"

using r4::Errc;

namespace {

r4::Frame sealed(std::string_view body) {
  return r4::parse_frame(std::string(body) + "^" + r4::format_checksum(r4::frame_crc(body)) + "^");
}

Errc decode_error(std::string_view body) {
  try {
    r4::decode_command(sealed(body));
  } catch (const r4::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "accepted " << body;
  return Errc::BadConfig;
}

std::string field_text(const std::vector<r4::Field>& fields, std::string_view name) {
  for (const auto& f : fields)
    if (f.name == name) {
      std::string s;
      for (std::size_t i = 0; i < f.elements.size(); ++i) s += (i ? "," : "") + f.elements[i];
      return s;
    }
  return "<absent>";
}

r4::Command random_motor_command(std::mt19937_64& rng) {
  auto u = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  switch (u(0, 4)) {
    case 0: return r4::ServoCmd{static_cast<std::uint16_t>(u(0, r4::kMaxServoUs)), u(1, r4::kServoChannels)};
    case 1:
      return r4::DhbCmd{static_cast<std::uint16_t>(u(0, r4::kMaxPwm)), static_cast<std::uint8_t>(u(0, 1)),
                        u(1, r4::kDhbChannels)};
    case 2:
      return r4::OsmcCmd{static_cast<std::uint16_t>(u(0, r4::kMaxPwm)), static_cast<std::uint8_t>(u(0, 1)),
                         u(1, r4::kOsmcChannels)};
    case 3: return r4::RelayCmd{u(1, r4::kRelayChannels), u(0, 1) == 1};
    default: return r4::StepperTargetCmd{u(-100000, 100000), u(1, r4::kStepperChannels)};
  }
}

}  // namespace

TEST(Commands, DecodeEachVerb) {
  EXPECT_EQ(r4::decode_command(sealed("O:358,1,1;PNum:66;T:1699276044383;")).command,
            r4::Command(r4::OsmcCmd{358, 1, 1}));
  EXPECT_EQ(r4::decode_command(sealed("D:4095,0,1;")).command, r4::Command(r4::DhbCmd{4095, 0, 1}));
  EXPECT_EQ(r4::decode_command(sealed("S:1500,16;")).command, r4::Command(r4::ServoCmd{1500, 16}));
  EXPECT_EQ(r4::decode_command(sealed("R:8,1;")).command, r4::Command(r4::RelayCmd{8, true}));
  EXPECT_EQ(r4::decode_command(sealed("E:STOP;")).command, r4::Command(r4::StopCmd{}));
  EXPECT_EQ(r4::decode_command(sealed("P:-93,1;")).command, r4::Command(r4::StepperTargetCmd{-93, 1}));
  EXPECT_EQ(r4::decode_command(sealed("H:ROS2-R4;T:79201;")).command, r4::Command(r4::HeartbeatCmd{"ROS2-R4"}));
}

TEST(Commands, TrailerIsReported) {
  auto d = r4::decode_command(sealed("O:358,1,1;PNum:66;T:1699276044383;"));
  EXPECT_EQ(d.pnum, 66u);
  EXPECT_EQ(d.t, 1699276044383u);
}

TEST(Commands, Rejections) {
  EXPECT_EQ(decode_error("O:358,1,1,0;"), Errc::BadArity);
  EXPECT_EQ(decode_error("O:358,1;"), Errc::BadArity);
  EXPECT_EQ(decode_error("O:4096,1,1;"), Errc::OutOfRange);
  EXPECT_EQ(decode_error("O:1,2,1;"), Errc::OutOfRange);
  EXPECT_EQ(decode_error("O:1,1,5;"), Errc::OutOfRange);
  EXPECT_EQ(decode_error("D:1,1,0;"), Errc::OutOfRange);
  EXPECT_EQ(decode_error("S:20001,1;"), Errc::OutOfRange);
  EXPECT_EQ(decode_error("S:1500,17;"), Errc::OutOfRange);
  EXPECT_EQ(decode_error("S:1.5,1;"), Errc::OutOfRange);
  EXPECT_EQ(decode_error("S:,1;"), Errc::OutOfRange);
  EXPECT_EQ(decode_error("R:1,2;"), Errc::OutOfRange);
  EXPECT_EQ(decode_error("R:9,1;"), Errc::OutOfRange);
  EXPECT_EQ(decode_error("E:GO;"), Errc::OutOfRange);
  EXPECT_EQ(decode_error("X:1;"), Errc::UnknownVerb);
  EXPECT_EQ(decode_error("AIN24:1.00;"), Errc::UnknownVerb);
}

TEST(Commands, EncodeDecodeRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    r4::Command cmd = random_motor_command(rng);
    std::vector<r4::Field> fields{r4::encode_command(cmd)};
    r4::append_trailer(fields, static_cast<std::uint64_t>(i), 1699276044383u + static_cast<std::uint64_t>(i));
    auto d = r4::decode_command(r4::parse_frame(r4::serialize_frame(fields)));
    ASSERT_EQ(d.command, cmd);
    ASSERT_EQ(d.pnum, static_cast<std::uint64_t>(i));
  }
  EXPECT_EQ(r4::encode_command(r4::StopCmd{}), r4::Field("E", "STOP"));
  EXPECT_EQ(r4::verb_letter(r4::verb_of(r4::OsmcCmd{})), 'O');
}

TEST(Status, DefaultFieldsMatchPublishedLayout) {
  r4::BoardState b;
  b.analog[0].range_volts = 30;
  b.analog[0].raw = r4::volts_to_raw(24.28, 30);
  b.commanded.dhb[0] = {4095, 1};
  b.commanded.osmc[0] = {400, 1};
  b.steppers[0].position = -100;
  b.commanded.servos[0] = 2000;
  auto fields = r4::snapshot(b);
  std::vector<std::string> names;
  for (const auto& f : fields) names.push_back(f.name);
  EXPECT_EQ(names, (std::vector<std::string>{"AIN24", "AIN12", "AIN5", "AINDMH", "DMHSTA", "AINSTEER", "DHB1A",
                                             "OSMC1", "STEP1POS", "SERVO1POS"}));
  EXPECT_EQ(field_text(fields, "AIN24"), "24.28");
  EXPECT_EQ(field_text(fields, "DMHSTA"), "1");
  EXPECT_EQ(field_text(fields, "DHB1A"), "4095,1");
  EXPECT_EQ(field_text(fields, "OSMC1"), "400,1");
  EXPECT_EQ(field_text(fields, "STEP1POS"), "-100");
  EXPECT_EQ(field_text(fields, "SERVO1POS"), "2000");
}

TEST(Status, EnableFlagsSelectFields) {
  r4::BoardState b;
  b = r4::set_enable(b, "RELAYS", true);
  b = r4::set_enable(b, "ain24", false);
  b.commanded.relays[2] = true;
  auto fields = r4::snapshot(b);
  EXPECT_EQ(field_text(fields, "AIN24"), "<absent>");
  EXPECT_EQ(field_text(fields, "RELAYS"), "0,0,1,0,0,0,0,0");
  try {
    r4::set_enable(b, "NOPE", true);
    FAIL();
  } catch (const r4::Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownField);
  }
  b.enables.set();
  EXPECT_EQ(r4::snapshot(b).size(), r4::kStatusFieldNames.size());
  EXPECT_EQ(field_text(r4::snapshot(b), "BLDC4"), "0,0,0");
}

TEST(Status, CommandsAreReflected) {
  r4::BoardState b;
  b = r4::apply_command(b, r4::OsmcCmd{358, 1, 1});
  EXPECT_EQ(field_text(r4::snapshot(b), "OSMC1"), "358,1");
  b = r4::apply_command(b, r4::DhbCmd{4095, 0, 1});
  EXPECT_EQ(field_text(r4::snapshot(b), "DHB1A"), "4095,0");
  b = r4::apply_command(b, r4::ServoCmd{1500, 1});
  EXPECT_EQ(field_text(r4::snapshot(b), "SERVO1POS"), "1500");
}

TEST(Status, StopZeroesEverything) {
  r4::BoardState b;
  b.steppers[1].position = 7;
  b = r4::apply_command(b, r4::OsmcCmd{358, 1, 1});
  b = r4::apply_command(b, r4::RelayCmd{3, true});
  b = r4::apply_command(b, r4::StepperTargetCmd{100, 2});
  b = r4::apply_command(b, r4::StopCmd{});
  EXPECT_TRUE(b.safe_state);
  EXPECT_EQ(b.commanded.osmc[0], r4::HBridge{});
  EXPECT_FALSE(b.commanded.relays[2]);
  EXPECT_EQ(b.commanded.stepper_targets[1], 7);  // hold position
  EXPECT_EQ(b.outputs().osmc[0], r4::HBridge{});
}

TEST(Status, SafeStateMasksOutputsAndKeepsRestoreSnapshot) {
  // Replay the same random sequence on a normal board and a safe-state board.
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    r4::BoardState normal, safe;
    safe.safe_state = true;
    int n = std::uniform_int_distribution<int>(0, 50)(rng);
    for (int i = 0; i < n; ++i) {
      auto cmd = random_motor_command(rng);
      normal = r4::apply_command(normal, cmd);
      safe = r4::apply_command(safe, cmd);
      r4::Outputs live = safe.outputs();
      for (const auto& h : live.dhb) ASSERT_EQ(h, r4::HBridge{});
      for (const auto& h : live.osmc) ASSERT_EQ(h, r4::HBridge{});
      for (auto s : live.servos) ASSERT_EQ(s, 0);
      for (bool r : live.relays) ASSERT_FALSE(r);
      for (int k = 0; k < r4::kStepperChannels; ++k) ASSERT_EQ(live.stepper_targets[k], safe.steppers[k].position);
    }
    if (normal.commanded.is_zero()) ASSERT_EQ(safe.pending_restore(), std::nullopt);
    else ASSERT_EQ(safe.pending_restore(), normal.outputs());
  }
}

TEST(Status, DmhConditionMasksMotorsOnly) {
  r4::BoardState b;
  b.dmh_relay = 2;
  b = r4::apply_command(b, r4::OsmcCmd{400, 1, 1});
  b = r4::apply_command(b, r4::DhbCmd{4095, 1, 1});
  b = r4::apply_command(b, r4::ServoCmd{2000, 1});
  b = r4::apply_command(b, r4::RelayCmd{2, true});
  b = r4::apply_command(b, r4::RelayCmd{3, true});
  b.commanded.bldc[0] = {100, 1, false};
  b.dmh_condition = true;
  auto live = b.outputs();
  EXPECT_EQ(live.osmc[0], r4::HBridge{});
  EXPECT_EQ(live.dhb[0], r4::HBridge{});
  EXPECT_EQ(live.bldc[0], r4::Bldc{});
  EXPECT_EQ(live.servos[0], 2000);
  EXPECT_FALSE(live.relays[1]);
  EXPECT_TRUE(live.relays[2]);
  b.dmh_condition = false;
  EXPECT_EQ(b.outputs(), b.commanded);
}

TEST(Adc, FullScale) {
  EXPECT_EQ(r4::scale_adc(65535, 12.0).text, "12.00");
  EXPECT_DOUBLE_EQ(r4::scale_adc(65535, 12.0).volts, 12.0);
  EXPECT_EQ(r4::scale_adc(0, 30.0).text, "0.00");
}

TEST(Adc, MatchesIntegerOracle) {
  // hundredths = round_half_up(raw * range_mV / 10 / 65535), all in integers.
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> raw_d(0, 65535), range_mv(100, 60000);
  for (int i = 0; i < 5000; ++i) {
    std::int64_t raw = raw_d(rng);
    std::int64_t mv = range_mv(rng);
    std::int64_t num = raw * mv;            // volts * 65535 * 1000
    std::int64_t den = 65535 * 10;          // -> hundredths
    if ((2 * num) % (2 * den) == den) continue;  // exact half-hundredth: decided by float rounding
    std::int64_t hundredths = (2 * num + den) / (2 * den);
    char expect[32];
    std::snprintf(expect, sizeof expect, "%lld.%02lld", static_cast<long long>(hundredths / 100),
                  static_cast<long long>(hundredths % 100));
    ASSERT_EQ(r4::scale_adc(static_cast<std::uint16_t>(raw), static_cast<double>(mv) / 1000.0).text, expect)
        << "raw " << raw << " range " << mv << " mV";
  }
}

TEST(Adc, VoltsToRawInvertsScaling) {
  for (double v : {0.0, 1.0, 5.11, 12.15, 24.28, 29.99})
    EXPECT_NEAR(r4::scale_adc(r4::volts_to_raw(v, 30.0), 30.0).volts, v, 30.0 / 65535);
  EXPECT_EQ(r4::volts_to_raw(-1, 30), 0);
  EXPECT_EQ(r4::volts_to_raw(40, 30), 65535);
}

TEST(Adc, FormatRoundsHalfAwayFromZero) {
  EXPECT_EQ(r4::format_volts(1.005 + 1e-12), "1.01");
  EXPECT_EQ(r4::format_volts(-0.001), "0.00");
  EXPECT_EQ(r4::format_volts(24.284), "24.28");
}
