#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "ctorecon/core.hpp"

namespace ctorecon::binio {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError(std::string("truncated file reading ") + what);
  return to_little(v);
}

inline void put_bytes(std::ostream& os, const std::string& s) { os.write(s.data(), static_cast<std::streamsize>(s.size())); }

inline std::string get_bytes(std::istream& is, std::size_t n, const char* what) {
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError(std::string("truncated file reading ") + what);
  return s;
}

}  // namespace ctorecon::binio
