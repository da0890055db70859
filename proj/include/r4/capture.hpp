#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "r4/codec.hpp"
#include "r4/model.hpp"

// Conformance checking of captured traffic: one frame or diagnostic line per
// line, in the layout the board's serial terminal prints.
//
//   <board frame>
//   Incoming Packet: <host frame> R4_Received_at:T: <n>;
//   Attempting to Establish a Connection: <board frame>
//   Interval Between Heart Beats mS: <n>
//
// Any other line without a ';' is a diagnostic and is skipped.

namespace r4 {

struct CaptureOptions {
  /// Accept the known transcription defects of the published example stream.
  bool paper_capture = false;
  /// Also require canonical field-name casing and PNum;T; as the final fields.
  bool strict = false;
};

struct CaptureIssue {
  std::size_t line = 0;
  std::string kind;  // checksum, malformed, gap, out-of-order, timestamp, casing, trailer-order
  std::string detail;
};

struct CaptureReport {
  std::size_t lines = 0;
  std::size_t status_frames = 0;
  std::size_t board_heartbeats = 0;
  std::size_t connect_attempts = 0;
  std::size_t host_frames = 0;
  std::size_t crc_ok = 0;
  std::size_t crc_allowlisted = 0;
  std::size_t normalized = 0;  // lines rewritten by the transcription allowlist
  std::optional<std::uint64_t> pnum_first;
  std::optional<std::uint64_t> pnum_last;
  std::uint64_t lost = 0;
  std::uint64_t out_of_order = 0;
  std::vector<std::uint64_t> heartbeat_pnums;          // board heartbeats, in order
  std::map<std::uint64_t, std::uint64_t> period_histogram;  // ms -> count
  std::vector<std::uint64_t> heartbeat_intervals_ms;  // "Interval Between Heart Beats" lines
  std::vector<CaptureIssue> issues;

  bool pass() const { return issues.empty() && status_frames + board_heartbeats > 0; }
  bool continuous() const { return lost == 0 && out_of_order == 0; }
  std::uint64_t period_samples() const {
    std::uint64_t n = 0;
    for (const auto& [ms, count] : period_histogram) n += count;
    return n;
  }
};

/// Printed checksums in the published example stream that do not match their
/// frames. Accepted only in paper-capture mode.
inline constexpr std::array<std::string_view, 16> kPaperChecksumAllowlist = {
    "0xe164c64a", "0xf07cf9da", "0xcd5a1f18", "0x94caadf0", "0xd9b74e4",  "0xa2815607",
    "0xa440bdcd", "0x46f408fa", "0x4754ab3d", "0x86572f2f", "0x57afaf5f", "0x75743634",
    "0xac54508e", "0xf180ca3ad", "0xb9f6b3b5", "0xb7056dd"};

namespace detail {

inline constexpr std::string_view kIncomingPrefix = "Incoming Packet:";
inline constexpr std::string_view kReceivedAt = " R4_Received_at:";
inline constexpr std::string_view kConnectPrefix = "Attempting to Establish a Connection:";
inline constexpr std::string_view kIntervalPrefix = "Interval Between Heart Beats mS:";

inline std::string_view trim_view(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

/// "0x..." quoted instead of caret-delimited.
inline bool unquote_checksum(std::string& text) {
  if (text.size() < 4 || text.back() != '"') return false;
  std::size_t open = text.rfind('"', text.size() - 2);
  if (open == std::string::npos || text.compare(open + 1, 2, "0x") != 0) return false;
  text[open] = '^';
  text.back() = '^';
  return true;
}

inline bool allowlisted(std::string_view token) {
  return std::find(kPaperChecksumAllowlist.begin(), kPaperChecksumAllowlist.end(), token) !=
         kPaperChecksumAllowlist.end();
}

class CaptureChecker {
 public:
  explicit CaptureChecker(CaptureOptions opts) : opts_(opts) {}

  void line(std::string_view raw) {
    ++r_.lines;
    std::string_view text = trim_view(raw);
    if (text.empty()) return;

    if (text.starts_with(kIntervalPrefix)) {
      auto v = parse_unsigned(trim_view(text.substr(kIntervalPrefix.size())));
      if (v) r_.heartbeat_intervals_ms.push_back(*v);
      else issue("malformed", "unreadable heartbeat interval");
      return;
    }
    if (text.starts_with(kConnectPrefix)) {
      ++r_.connect_attempts;
      reset_sequence();
      check(trim_view(text.substr(kConnectPrefix.size())), Role::Connect);
      return;
    }
    if (text.starts_with(kIncomingPrefix)) {
      std::string_view rest = trim_view(text.substr(kIncomingPrefix.size()));
      std::size_t at = rest.find(kReceivedAt);
      ++r_.host_frames;
      check(trim_view(rest.substr(0, at)), Role::Host);
      return;
    }
    if (text.find(';') == std::string_view::npos) return;  // diagnostic
    check(text, Role::Board);
  }

  CaptureReport finish() && { return std::move(r_); }

 private:
  enum class Role { Board, Host, Connect };

  void issue(std::string kind, std::string detail) { r_.issues.push_back({r_.lines, std::move(kind), std::move(detail)}); }

  void reset_sequence() {
    last_pnum_.reset();
    prev_status_.reset();
    heartbeats_between_ = 0;
  }

  void check(std::string_view payload, Role role) {
    std::string text(payload);
    bool rewritten = false;
    if (opts_.paper_capture) {
      rewritten |= unquote_checksum(text);
      if (role == Role::Host && text.starts_with("0:")) {  // digit zero printed for the OSMC verb
        text[0] = 'O';
        rewritten = true;
      }
    }

    DecodedFrame d;
    try {
      d = decode_frame(text);
    } catch (const Error& e) {
      issue("malformed", e.what());
      if (rewritten) ++r_.normalized;
      return;
    }
    if (d.checksum_ok) {
      ++r_.crc_ok;
    } else if (opts_.paper_capture && allowlisted(d.declared_token)) {
      ++r_.crc_allowlisted;
      rewritten = true;
    } else {
      issue("checksum", to_string(Errc::ChecksumMismatch).data() + std::string(": declared ") + d.declared_token +
                            ", computed " + format_checksum(d.computed));
    }
    if (rewritten) ++r_.normalized;

    if (opts_.strict) check_canonical(d.frame);
    if (role == Role::Host) return;  // host sequence numbers are independent of the board's

    Classification c = classify(d.frame);
    auto pnum = d.frame.pnum();
    auto t = d.frame.timestamp();
    if (role == Role::Connect || (c.kind == FrameKind::Heartbeat && pnum == 0u)) return;

    if (c.kind == FrameKind::Heartbeat) {
      ++r_.board_heartbeats;
      if (pnum) r_.heartbeat_pnums.push_back(*pnum);
      sequence(pnum);
      ++heartbeats_between_;
      return;
    }
    if (c.kind != FrameKind::Status) {
      issue("malformed", "command frame in board stream");
      return;
    }
    ++r_.status_frames;
    bool clean = sequence(pnum);
    if (clean && prev_status_ && pnum && t && *pnum == prev_status_->first + 1 + heartbeats_between_) {
      if (*t < prev_status_->second) issue("timestamp", "T went backwards");
      else ++r_.period_histogram[*t - prev_status_->second];
    }
    if (pnum && t) prev_status_ = std::pair{*pnum, *t};
    else prev_status_.reset();
    heartbeats_between_ = 0;
  }

  bool sequence(std::optional<std::uint64_t> pnum) {
    if (!pnum) {
      issue("malformed", "board frame without PNum");
      prev_status_.reset();
      return false;
    }
    if (!r_.pnum_first) r_.pnum_first = pnum;
    bool clean = true;
    if (last_pnum_) {
      if (*pnum == *last_pnum_ + 1) {
      } else if (*pnum > *last_pnum_ + 1) {
        std::uint64_t lost = *pnum - *last_pnum_ - 1;
        r_.lost += lost;
        issue("gap", "expected PNum " + std::to_string(*last_pnum_ + 1) + ", got " + std::to_string(*pnum) + " (" +
                         std::to_string(lost) + " lost)");
        prev_status_.reset();
        clean = false;
      } else {
        ++r_.out_of_order;
        issue("out-of-order", "PNum " + std::to_string(*pnum) + " after " + std::to_string(*last_pnum_));
        return false;
      }
    }
    last_pnum_ = pnum;
    r_.pnum_last = pnum;
    return clean;
  }

  void check_canonical(const Frame& f) {
    for (const auto& field : f.fields) {
      std::string_view canon;
      if (iequals(field.name, "PNum")) canon = "PNum";
      else if (iequals(field.name, "T")) canon = "T";
      else if (auto idx = status_field_index(field.name)) canon = kStatusFieldNames[*idx];
      if (!canon.empty() && field.name != canon)
        issue("casing", "field '" + field.name + "' should be spelled '" + std::string(canon) + "'");
    }
    std::size_t n = f.fields.size();
    bool has_trailer = f.find("PNum") || f.find("T");
    if (has_trailer && (n < 2 || !iequals(f.fields[n - 2].name, "PNum") || !iequals(f.fields[n - 1].name, "T")))
      issue("trailer-order", "frame does not end with PNum then T");
  }

  CaptureOptions opts_;
  CaptureReport r_;
  std::optional<std::uint64_t> last_pnum_;
  std::optional<std::pair<std::uint64_t, std::uint64_t>> prev_status_;  // PNum, T
  std::uint64_t heartbeats_between_ = 0;
};

}  // namespace detail

inline CaptureReport check_capture(std::istream& in, CaptureOptions opts = {}) {
  detail::CaptureChecker checker(opts);
  for (std::string line; std::getline(in, line);) checker.line(line);
  return std::move(checker).finish();
}

inline CaptureReport check_capture_text(std::string_view text, CaptureOptions opts = {}) {
  std::istringstream in{std::string(text)};
  return check_capture(in, opts);
}

inline std::string format_report(const CaptureReport& r) {
  std::ostringstream o;
  o << "lines: " << r.lines << "\n"
    << "board frames: " << r.status_frames + r.board_heartbeats << " (status " << r.status_frames << ", heartbeat "
    << r.board_heartbeats << ")\n"
    << "connection attempts: " << r.connect_attempts << "\n"
    << "host frames: " << r.host_frames << "\n"
    << "checksums: ok " << r.crc_ok << ", allowlisted " << r.crc_allowlisted << "\n";
  if (r.normalized) o << "normalized lines: " << r.normalized << "\n";
  o << "pnum: ";
  if (r.pnum_first) o << *r.pnum_first << ".." << *r.pnum_last;
  else o << "none";
  o << (r.continuous() ? " continuous" : "") << " (lost " << r.lost << ", out of order " << r.out_of_order << ")\n";
  o << "heartbeat pnum:";
  for (auto p : r.heartbeat_pnums) o << " " << p;
  o << "\nperiod ms:";
  for (const auto& [ms, n] : r.period_histogram) o << " " << ms << "x" << n;
  o << "\nheartbeat intervals ms:";
  for (auto ms : r.heartbeat_intervals_ms) o << " " << ms;
  o << "\n";
  for (const auto& i : r.issues) o << "line " << i.line << ": " << i.kind << ": " << i.detail << "\n";
  o << "verdict: " << (r.pass() ? "PASS" : "FAIL") << "\n";
  return o.str();
}

}  // namespace r4
