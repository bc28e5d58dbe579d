#pragma once

#include <bit>
#include <cstdint>

namespace punct::detail {

inline void store_u32le(unsigned char* p, uint32_t v) {
    p[0] = static_cast<unsigned char>(v);
    p[1] = static_cast<unsigned char>(v >> 8);
    p[2] = static_cast<unsigned char>(v >> 16);
    p[3] = static_cast<unsigned char>(v >> 24);
}

inline uint32_t load_u32le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
           static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

inline void store_u64le(unsigned char* p, uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

inline uint64_t load_u64le(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

inline void store_f32le(unsigned char* p, float v) { store_u32le(p, std::bit_cast<uint32_t>(v)); }
inline float load_f32le(const unsigned char* p) { return std::bit_cast<float>(load_u32le(p)); }

inline void store_f64le(unsigned char* p, double v) { store_u64le(p, std::bit_cast<uint64_t>(v)); }
inline double load_f64le(const unsigned char* p) { return std::bit_cast<double>(load_u64le(p)); }

}  // namespace punct::detail
