#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "r4/capture.hpp"
#include "r4/simulator.hpp"

namespace {

std::string golden() {
  std::ifstream in(std::string(R4_TEST_DATA) + "/paper_capture.txt");
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

// Re-seals a frame with a freshly computed checksum, independent of the checker's
// own normalization code.
std::string reseal(std::string frame) {
  if (frame.starts_with("0:")) frame[0] = 'O';
  auto end = frame.rfind(';');
  std::string body = frame.substr(0, end + 1);
  return body + "^" + r4::format_checksum(r4::frame_crc(body)) + "^";
}

std::string reseal_line(const std::string& line) {
  const std::string incoming = "Incoming Packet: ";
  if (line.starts_with(incoming)) {
    auto at = line.find(" R4_Received_at:");
    return incoming + reseal(line.substr(incoming.size(), at - incoming.size())) + line.substr(at);
  }
  if (line.find(';') == std::string::npos) return line;
  return reseal(line);
}

std::size_t count_kind(const r4::CaptureReport& r, std::string_view kind) {
  std::size_t n = 0;
  for (const auto& i : r.issues) n += i.kind == kind;
  return n;
}

}  // namespace

TEST(Capture, GoldenPassesInPaperMode) {
  r4::CaptureOptions o;
  o.paper_capture = true;
  auto r = r4::check_capture_text(golden(), o);
  EXPECT_TRUE(r.pass()) << r4::format_report(r);
  EXPECT_TRUE(r.continuous());
  EXPECT_EQ(r.pnum_first, 7433u);
  EXPECT_EQ(r.pnum_last, 7496u);
  EXPECT_EQ(r.heartbeat_pnums, std::vector<std::uint64_t>{7446});
  EXPECT_EQ(r.period_histogram, (std::map<std::uint64_t, std::uint64_t>{{10, 60}}));
  EXPECT_EQ(r.heartbeat_intervals_ms, (std::vector<std::uint64_t>{505, 495}));
  EXPECT_EQ(r.crc_allowlisted, 16u);
  EXPECT_EQ(r.crc_ok + r.crc_allowlisted, 71u);
}

TEST(Capture, GoldenFailsWithoutAllowlist) {
  auto r = r4::check_capture_text(golden());
  EXPECT_FALSE(r.pass());
  EXPECT_GE(count_kind(r, "checksum") + count_kind(r, "malformed"), 16u);
  EXPECT_EQ(r.crc_allowlisted, 0u);
}

TEST(Capture, StrictFlagsCasingAndMissingTrailer) {
  r4::CaptureOptions o;
  o.paper_capture = true;
  o.strict = true;
  auto r = r4::check_capture_text(golden(), o);
  EXPECT_FALSE(r.pass());
  EXPECT_EQ(count_kind(r, "casing"), 1u);  // "Pnum" on the first frame
  EXPECT_GE(count_kind(r, "trailer-order"), 1u);
}

TEST(Capture, NineDigitTokenIsChecksumMismatch) {
  auto lines = lines_of(golden());
  std::string bad;
  for (const auto& l : lines)
    if (l.find("0xf180ca3ad") != std::string::npos) bad = l;
  ASSERT_FALSE(bad.empty());
  std::replace(bad.begin(), bad.end(), '"', '^');
  auto r = r4::check_capture_text(bad);
  ASSERT_EQ(r.issues.size(), 1u);
  EXPECT_EQ(r.issues[0].kind, "checksum");
  EXPECT_NE(r.issues[0].detail.find("ChecksumMismatch"), std::string::npos) << r.issues[0].detail;
}

TEST(Capture, ResealedGoldenHasNoChecksumFailures) {
  auto lines = lines_of(golden());
  for (auto& l : lines) l = reseal_line(l);
  auto r = r4::check_capture_text(join(lines));
  EXPECT_TRUE(r.pass()) << r4::format_report(r);
  EXPECT_EQ(r.crc_ok, 71u);
  EXPECT_EQ(r.normalized, 0u);
}

TEST(Capture, DeletedLineIsAGap) {
  auto lines = lines_of(golden());
  for (auto& l : lines) l = reseal_line(l);
  auto it = std::find_if(lines.begin(), lines.end(), [](const auto& l) { return l.find("PNum:7460;") != std::string::npos; });
  ASSERT_NE(it, lines.end());
  lines.erase(it);
  auto r = r4::check_capture_text(join(lines));
  EXPECT_FALSE(r.pass());
  EXPECT_EQ(r.lost, 1u);
  ASSERT_EQ(count_kind(r, "gap"), 1u);
  EXPECT_NE(r.issues[0].detail.find("expected PNum 7460, got 7461"), std::string::npos);
}

TEST(Capture, SwappedLinesAreOutOfOrder) {
  auto lines = lines_of(golden());
  for (auto& l : lines) l = reseal_line(l);
  std::swap(lines[2], lines[3]);
  auto r = r4::check_capture_text(join(lines));
  EXPECT_EQ(r.out_of_order, 1u);
  EXPECT_EQ(r.lost, 1u);
  EXPECT_FALSE(r.pass());
}

TEST(Capture, TrailerOrderInStrictMode) {
  auto frame = [](std::string body) { return body + "^" + r4::format_checksum(r4::frame_crc(body)) + "^\n"; };
  r4::CaptureOptions strict;
  strict.strict = true;
  EXPECT_TRUE(r4::check_capture_text(frame("AIN24:24.28;PNum:1;T:10;"), strict).pass());
  auto r = r4::check_capture_text(frame("PNum:1;T:10;AIN24:24.28;"), strict);
  EXPECT_EQ(count_kind(r, "trailer-order"), 1u);
  EXPECT_TRUE(r4::check_capture_text(frame("PNum:1;T:10;AIN24:24.28;")).pass());
}

TEST(Capture, DiagnosticsAndConnectAttemptsDoNotBreakSequence) {
  auto frame = [](std::string body) { return body + "^" + r4::format_checksum(r4::frame_crc(body)) + "^"; };
  std::string text = "R4 board simulator\n"
                     "Attempting to Establish a Connection: " + frame("H:R4-ROS2;PNum:0;T:0;") + "\n" +
                     frame("AIN24:24.28;PNum:1;T:10;") + "\n" + frame("AIN24:24.28;PNum:2;T:20;") + "\n";
  auto r = r4::check_capture_text(text);
  EXPECT_TRUE(r.pass()) << r4::format_report(r);
  EXPECT_EQ(r.connect_attempts, 1u);
  EXPECT_EQ(r.period_histogram, (std::map<std::uint64_t, std::uint64_t>{{10, 1}}));
}

TEST(Capture, EmptyCaptureFails) {
  EXPECT_FALSE(r4::check_capture_text("").pass());
  EXPECT_FALSE(r4::check_capture_text("just a diagnostic\n").pass());
}

TEST(Capture, ReportEndsWithVerdict) {
  r4::CaptureOptions o;
  o.paper_capture = true;
  auto text = r4::format_report(r4::check_capture_text(golden(), o));
  EXPECT_NE(text.find("pnum: 7433..7496 continuous"), std::string::npos) << text;
  EXPECT_TRUE(text.ends_with("verdict: PASS\n"));
}
