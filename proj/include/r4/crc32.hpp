#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace r4 {

// CRC-32/ISO-HDLC: reflected polynomial 0xEDB88320, init and xorout 0xFFFFFFFF.
// Same value as zlib.crc32().
namespace detail {

constexpr std::uint32_t kCrcPolynomial = 0xEDB88320u;

constexpr std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1u) ? (c >> 1) ^ kCrcPolynomial : c >> 1;
    table[i] = c;
  }
  return table;
}

inline constexpr auto kCrcTable = make_crc_table();

}  // namespace detail

class Crc32 {
 public:
  constexpr Crc32& update(std::string_view bytes) {
    for (char ch : bytes) {
      auto b = static_cast<std::uint8_t>(ch);
      state_ = detail::kCrcTable[(state_ ^ b) & 0xFFu] ^ (state_ >> 8);
    }
    return *this;
  }

  constexpr Crc32& update(char ch) { return update(std::string_view(&ch, 1)); }

  constexpr std::uint32_t value() const { return state_ ^ 0xFFFFFFFFu; }

 private:
  std::uint32_t state_ = 0xFFFFFFFFu;
};

constexpr std::uint32_t crc32(std::string_view bytes) { return Crc32{}.update(bytes).value(); }

/// "0x" + lowercase hex, leading zeros suppressed ("0x0" for zero).
inline std::string format_checksum(std::uint32_t value) {
  char buf[2 + 8];
  buf[0] = '0';
  buf[1] = 'x';
  auto res = std::to_chars(buf + 2, buf + sizeof buf, value, 16);
  return std::string(buf, res.ptr);
}

/// Numeric parse of a "0x..." token. Leading zeros are fine ("0x00ff" == "0xff");
/// returns nullopt for anything that is not a 32-bit hex value.
inline std::optional<std::uint32_t> parse_checksum(std::string_view token) {
  if (token.size() < 3 || token[0] != '0' || token[1] != 'x') return std::nullopt;
  token.remove_prefix(2);
  std::uint32_t value = 0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), value, 16);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) return std::nullopt;
  return value;
}

inline std::string crc32_field(std::string_view bytes) { return format_checksum(crc32(bytes)); }

}  // namespace r4
