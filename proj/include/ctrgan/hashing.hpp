#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>

namespace ctrgan {

// FNV-1a 64-bit. Stable across platforms and standard library versions;
// used for config hashes and content addressing, not for security.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << v;
  return os.str();
}

}  // namespace ctrgan
