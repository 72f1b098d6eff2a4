#pragma once
// FNV-1a 64-bit digests. Used for deterministic split assignment,
// parameter fingerprints and artifact comparison in tests.

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emofuse {

inline constexpr uint64_t kFnvOffsetBasis = 14695981039346656037ULL;
inline constexpr uint64_t kFnvPrime = 1099511628211ULL;

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = kFnvOffsetBasis) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = kFnvOffsetBasis) {
    return fnv1a64(s.data(), s.size(), h);
}

// Hashes the IEEE-754 little-endian bytes of each value.
inline uint64_t fnv1a64(std::span<const double> values, uint64_t h = kFnvOffsetBasis) {
    for (double v : values) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        h = fnv1a64(&bits, sizeof(bits), h);
    }
    return h;
}

std::string inline digest_hex(uint64_t h) {
    static const char* t = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = t[h & 0xF];
        h >>= 4;
    }
    return out;
}

}  // namespace emofuse
