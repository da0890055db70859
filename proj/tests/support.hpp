#pragma once

// Generators shared by the unit tests and the acceptance run.

#include <random>
#include <string>
#include <vector>

#include "r4/codec.hpp"

namespace r4::testing {

inline std::string random_token(std::mt19937_64& rng, bool name) {
  // Printable ASCII minus the delimiters the token may not contain.
  static const std::string name_chars = [] {
    std::string s;
    for (char c = 0x20; c < 0x7F; ++c)
      if (c != ':' && c != ';' && c != ',' && c != '^') s += c;
    return s;
  }();
  static const std::string element_chars = name_chars + ":";
  const std::string& pool = name ? name_chars : element_chars;
  std::uniform_int_distribution<int> len(name ? 1 : 0, name ? 8 : 10);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::string out(static_cast<std::size_t>(len(rng)), ' ');
  for (auto& c : out) c = pool[pick(rng)];
  return out;
}

/// A legal field list whose serialized frame fits the emission limit.
inline std::vector<Field> random_fields(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nfields(1, 12), nelems(1, 4);
  while (true) {
    std::vector<Field> fields;
    int n = nfields(rng);
    std::size_t size = 16;
    for (int i = 0; i < n; ++i) {
      Field f;
      f.name = random_token(rng, true);
      int m = nelems(rng);
      for (int j = 0; j < m; ++j) f.elements.push_back(random_token(rng, false));
      size += f.name.size() + 2;
      for (const auto& e : f.elements) size += e.size() + 1;
      fields.push_back(std::move(f));
    }
    if (size <= kMaxEmittedFrame) return fields;
  }
}

/// Random bytes, or a valid frame with a few mutations.
inline std::string fuzz_input(std::mt19937_64& rng, const std::vector<std::string>& seeds) {
  std::uniform_int_distribution<int> mode(0, 3), byte(0, 255);
  std::string s;
  switch (mode(rng)) {
    case 0: {
      std::uniform_int_distribution<std::size_t> len(0, 600);
      s.resize(len(rng));
      for (auto& c : s) c = static_cast<char>(byte(rng));
      return s;
    }
    case 1: {
      std::uniform_int_distribution<std::size_t> len(0, 80);
      static constexpr char alphabet[] = "AZaz09:;,^\r\n x-.";
      std::uniform_int_distribution<std::size_t> pick(0, sizeof alphabet - 2);
      s.resize(len(rng));
      for (auto& c : s) c = alphabet[pick(rng)];
      return s;
    }
    default: break;
  }
  s = seeds[std::uniform_int_distribution<std::size_t>(0, seeds.size() - 1)(rng)];
  int edits = std::uniform_int_distribution<int>(1, 4)(rng);
  for (int i = 0; i < edits && !s.empty(); ++i) {
    std::size_t at = std::uniform_int_distribution<std::size_t>(0, s.size() - 1)(rng);
    switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
      case 0: s[at] = static_cast<char>(byte(rng)); break;
      case 1: s.erase(at, 1); break;
      case 2: s.insert(at, 1, "^;:,\r"[std::uniform_int_distribution<int>(0, 4)(rng)]); break;
      default: s.resize(at); break;
    }
  }
  if (std::uniform_int_distribution<int>(0, 50)(rng) == 0) s.append(5000, 'A');
  return s;
}

}  // namespace r4::testing
