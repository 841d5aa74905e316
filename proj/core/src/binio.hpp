#pragma once

// Internal little-endian binary stream helpers shared by the checkpoint and
// tensor-file writers. Values are serialized byte by byte so files are
// identical regardless of host endianness.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace posekit::binio {

inline void put_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u8(std::ostream& out, uint8_t v) { put_bytes(out, &v, 1); }

inline void put_u32(std::ostream& out, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    put_bytes(out, b, 4);
}

inline void put_f64(std::ostream& out, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(u >> (8 * i));
    put_bytes(out, b, 8);
}

/// Returns false on short read (caller decides how to report truncation).
inline bool try_get_bytes(std::istream& in, void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    return static_cast<size_t>(in.gcount()) == n;
}

inline uint32_t decode_u32(const uint8_t b[4]) {
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline double decode_f64(const uint8_t b[8]) {
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

} // namespace posekit::binio
