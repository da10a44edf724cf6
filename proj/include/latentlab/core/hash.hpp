#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

namespace latentlab {

/// Incremental FNV-1a (64-bit). Used for fingerprints and payload checksums.
class Fnv1a {
 public:
  Fnv1a& bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  Fnv1a& str(std::string_view s) {
    std::uint64_t n = s.size();
    bytes(&n, sizeof n);
    return bytes(s.data(), s.size());
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  Fnv1a& value(T v) {
    return bytes(&v, sizeof v);
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  Fnv1a& values(std::span<const T> v) {
    return bytes(v.data(), v.size_bytes());
  }

  std::uint64_t digest() const { return h_; }

  std::string hex() const { return to_hex(h_); }

  static std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace latentlab
