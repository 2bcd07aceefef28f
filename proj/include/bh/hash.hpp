#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace bh {

// FNV-1a, 64 bit. Used to tie artifacts to the mesh and config they came from.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string hash_text(std::string_view s) { return hash_hex(fnv1a64(s)); }

}  // namespace bh
