#pragma once

// Little-endian scalar encoding shared by the feature and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <ostream>
#include <string>

namespace mmrec::binary {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) {
    out.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

inline std::uint16_t get_u16(const char* p) {
  const auto* u = reinterpret_cast<const unsigned char*>(p);
  return static_cast<std::uint16_t>(u[0] | (u[1] << 8));
}

inline float get_f32(const char* p) {
  const auto* u = reinterpret_cast<const unsigned char*>(p);
  const std::uint32_t bits = static_cast<std::uint32_t>(u[0]) | (static_cast<std::uint32_t>(u[1]) << 8) |
                             (static_cast<std::uint32_t>(u[2]) << 16) |
                             (static_cast<std::uint32_t>(u[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace mmrec::binary
