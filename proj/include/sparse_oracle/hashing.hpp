#pragma once

#include <cstdint>
#include <string_view>

namespace sparse_oracle {

/// FNV-1a 64-bit; used for config fingerprints and derived sweep-cell seeds.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace sparse_oracle
