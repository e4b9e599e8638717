#pragma once

#include "fnocg/common.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace fnocg::binio {

// Little-endian primitives shared by the model and dataset formats.

template <typename T>
T to_little(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_f64s(std::ostream& out, const double* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) put(out, d[i]);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("unexpected end of file");
  return to_little(v);
}

inline void get_f64s(std::istream& in, double* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) d[i] = get<double>(in);
}

inline std::string get_string(std::istream& in, std::uint32_t max_len = 1u << 16) {
  const auto len = get<std::uint32_t>(in);
  if (len > max_len) throw FormatError("string length " + std::to_string(len) + " exceeds limit");
  std::string s(len, '\0');
  if (!in.read(s.data(), len)) throw FormatError("unexpected end of file");
  return s;
}

}  // namespace fnocg::binio
