#pragma once

#include "wake/errors.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace wake {

inline std::string base64_encode(const std::uint8_t* data, std::size_t n) {
  static constexpr char table[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= n; i += 3) {
    const std::uint32_t w = (static_cast<std::uint32_t>(data[i]) << 16) |
                            (static_cast<std::uint32_t>(data[i + 1]) << 8) |
                            data[i + 2];
    out.push_back(table[(w >> 18) & 63]);
    out.push_back(table[(w >> 12) & 63]);
    out.push_back(table[(w >> 6) & 63]);
    out.push_back(table[w & 63]);
  }
  if (i + 1 == n) {
    const std::uint32_t w = static_cast<std::uint32_t>(data[i]) << 16;
    out.push_back(table[(w >> 18) & 63]);
    out.push_back(table[(w >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (i + 2 == n) {
    const std::uint32_t w = (static_cast<std::uint32_t>(data[i]) << 16) |
                            (static_cast<std::uint32_t>(data[i + 1]) << 8);
    out.push_back(table[(w >> 18) & 63]);
    out.push_back(table[(w >> 12) & 63]);
    out.push_back(table[(w >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::string base64_encode(std::string_view bytes) {
  return base64_encode(reinterpret_cast<const std::uint8_t*>(bytes.data()),
                       bytes.size());
}

/// Strict decoder: requires canonical padding and rejects any character
/// outside the standard alphabet.
inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  static constexpr auto inverse = [] {
    std::array<std::int8_t, 256> t{};
    t.fill(-1);
    const char* table =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    for (int i = 0; i < 64; ++i)
      t[static_cast<unsigned char>(table[i])] = static_cast<std::int8_t>(i);
    return t;
  }();

  if (text.size() % 4 != 0)
    throw FormatError("base64: length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    std::uint32_t w = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        if (i + 4 != text.size() || k < 2)
          throw FormatError("base64: misplaced padding");
        ++pad;
        w <<= 6;
        continue;
      }
      if (pad > 0) throw FormatError("base64: data after padding");
      const std::int8_t v = inverse[static_cast<unsigned char>(c)];
      if (v < 0) throw FormatError("base64: invalid character");
      w = (w << 6) | static_cast<std::uint32_t>(v);
    }
    out.push_back(static_cast<std::uint8_t>((w >> 16) & 0xFF));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((w >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(w & 0xFF));
  }
  return out;
}

}  // namespace wake
