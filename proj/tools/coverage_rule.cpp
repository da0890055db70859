// Prints the reference heartbeat checksum under both candidate coverage
// rules and fails when neither reproduces the published value. Run as part
// of the build.

#include <cstdio>

#include "r4/codec.hpp"

int main() {
  using r4::CoverageRule;
  auto a = r4::coverage_crc(r4::kReferenceHeartbeatBody, CoverageRule::ExcludeLeadingCaret);
  auto b = r4::coverage_crc(r4::kReferenceHeartbeatBody, CoverageRule::IncludeLeadingCaret);
  std::printf("reference frame %.*s^%s^\n", static_cast<int>(r4::kReferenceHeartbeatBody.size()),
              r4::kReferenceHeartbeatBody.data(), r4::format_checksum(r4::kReferenceHeartbeatCrc).c_str());
  std::printf("  fields only        %s%s\n", r4::format_checksum(a).c_str(), a == r4::kReferenceHeartbeatCrc ? "  <- match" : "");
  std::printf("  fields + '^'       %s%s\n", r4::format_checksum(b).c_str(), b == r4::kReferenceHeartbeatCrc ? "  <- match" : "");
  if (a != r4::kReferenceHeartbeatCrc && b != r4::kReferenceHeartbeatCrc) {
    std::fprintf(stderr, "no coverage rule reproduces the reference checksum\n");
    return 1;
  }
  return 0;
}
