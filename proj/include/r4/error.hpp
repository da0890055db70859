#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace r4 {

enum class Errc {
  // codec
  MalformedFrame,
  ChecksumMissing,
  ChecksumMismatch,
  Oversize,
  IllegalCharacter,
  // model
  UnknownVerb,
  BadArity,
  OutOfRange,
  UnknownField,
  // transport
  BindFailure,
  Closed,
  // client
  Timeout,
  InsufficientData,
  // configuration
  BadConfig,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MalformedFrame: return "MalformedFrame";
    case Errc::ChecksumMissing: return "ChecksumMissing";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::Oversize: return "Oversize";
    case Errc::IllegalCharacter: return "IllegalCharacter";
    case Errc::UnknownVerb: return "UnknownVerb";
    case Errc::BadArity: return "BadArity";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::UnknownField: return "UnknownField";
    case Errc::BindFailure: return "BindFailure";
    case Errc::Closed: return "Closed";
    case Errc::Timeout: return "Timeout";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::BadConfig: return "BadConfig";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace r4
