// r4check: validate a captured R4 datagram log.
//
// Exit status: 0 the capture conforms, 1 it does not, 2 usage or I/O error.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "r4/capture.hpp"

namespace {

nlohmann::json to_json(const r4::CaptureReport& r) {
  nlohmann::json j;
  j["lines"] = r.lines;
  j["status_frames"] = r.status_frames;
  j["board_heartbeats"] = r.board_heartbeats;
  j["connect_attempts"] = r.connect_attempts;
  j["host_frames"] = r.host_frames;
  j["crc_ok"] = r.crc_ok;
  j["crc_allowlisted"] = r.crc_allowlisted;
  j["pnum_first"] = r.pnum_first ? nlohmann::json(*r.pnum_first) : nlohmann::json(nullptr);
  j["pnum_last"] = r.pnum_last ? nlohmann::json(*r.pnum_last) : nlohmann::json(nullptr);
  j["lost"] = r.lost;
  j["out_of_order"] = r.out_of_order;
  j["heartbeat_pnums"] = r.heartbeat_pnums;
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [ms, n] : r.period_histogram) hist[std::to_string(ms)] = n;
  j["period_histogram_ms"] = hist;
  j["heartbeat_intervals_ms"] = r.heartbeat_intervals_ms;
  j["issues"] = nlohmann::json::array();
  for (const auto& i : r.issues) j["issues"].push_back({{"line", i.line}, {"kind", i.kind}, {"detail", i.detail}});
  j["pass"] = r.pass();
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Check a captured R4 datagram stream for grammar, checksums, sequencing and timing"};
  std::string path;
  r4::CaptureOptions opts;
  bool json = false;
  app.add_option("capture", path, "Capture file, one frame or diagnostic line per line ('-' for stdin)")->required();
  app.add_flag("--paper-capture", opts.paper_capture,
               "Accept the known transcription defects of the published example stream");
  app.add_flag("--strict", opts.strict, "Require canonical field casing and PNum;T; as the final fields");
  app.add_flag("--json", json, "Print the report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (opts.strict && opts.paper_capture) {
    std::cerr << "r4check: --strict and --paper-capture are mutually exclusive\n";
    return 2;
  }

  r4::CaptureReport report;
  if (path == "-") {
    report = r4::check_capture(std::cin, opts);
  } else {
    std::ifstream in(path);
    if (!in) {
      std::cerr << "r4check: cannot read '" << path << "'\n";
      return 2;
    }
    report = r4::check_capture(in, opts);
  }

  if (json) std::cout << to_json(report).dump(2) << "\n";
  else std::cout << r4::format_report(report);
  return report.pass() ? 0 : 1;
}
