#include "bbpatch/encoding.h"

#include <array>
#include <bit>
#include <cstring>

#include "bbpatch/errors.h"

namespace bbpatch {

namespace {

constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

constexpr std::array<int, 256> make_reverse() {
  std::array<int, 256> table{};
  for (auto& v : table) v = -1;
  for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kAlphabet[i])] = i;
  return table;
}

constexpr auto kReverse = make_reverse();

template <typename T, typename U>
std::string encode_le(std::span<const T> values) {
  std::vector<std::uint8_t> bytes(values.size() * sizeof(T));
  for (std::size_t i = 0; i < values.size(); ++i) {
    U bits = std::bit_cast<U>(values[i]);
    for (std::size_t b = 0; b < sizeof(T); ++b)
      bytes[i * sizeof(T) + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return base64_encode(bytes);
}

template <typename T, typename U>
std::vector<T> decode_le(std::string_view text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % sizeof(T) != 0)
    throw FormatError("float blob length " + std::to_string(bytes.size()) +
                      " is not a multiple of " + std::to_string(sizeof(T)));
  std::vector<T> out(bytes.size() / sizeof(T));
  for (std::size_t i = 0; i < out.size(); ++i) {
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
      bits |= static_cast<U>(bytes[i * sizeof(T) + b]) << (8 * b);
    out[i] = std::bit_cast<T>(bits);
  }
  return out;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (std::uint32_t{bytes[i]} << 16) |
                            (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t n = std::uint32_t{bytes[i]} << 16;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t n =
        (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0)
    throw FormatError("base64 length " + std::to_string(text.size()) +
                      " is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        // Padding only in the last two positions of the final quantum.
        if (i + 4 != text.size() || k < 2)
          throw FormatError("misplaced base64 padding");
        v[k] = 0;
        ++pad;
      } else {
        if (pad > 0) throw FormatError("misplaced base64 padding");
        v[k] = kReverse[static_cast<unsigned char>(c)];
        if (v[k] < 0) throw FormatError("invalid base64 character");
      }
    }
    const std::uint32_t n = (static_cast<std::uint32_t>(v[0]) << 18) |
                            (static_cast<std::uint32_t>(v[1]) << 12) |
                            (static_cast<std::uint32_t>(v[2]) << 6) |
                            static_cast<std::uint32_t>(v[3]);
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(n >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n));
  }
  return out;
}

std::string encode_f32(std::span<const float> values) {
  return encode_le<float, std::uint32_t>(values);
}
std::vector<float> decode_f32(std::string_view text) {
  return decode_le<float, std::uint32_t>(text);
}
std::string encode_f64(std::span<const double> values) {
  return encode_le<double, std::uint64_t>(values);
}
std::vector<double> decode_f64(std::string_view text) {
  return decode_le<double, std::uint64_t>(text);
}

}  // namespace bbpatch
