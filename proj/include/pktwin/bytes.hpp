#pragma once
// Byte-order load/store helpers and address string conversions shared by the
// capture reader, anonymizer and container code.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace pktwin {

inline uint16_t load_be16(const uint8_t* p) {
    return static_cast<uint16_t>(uint16_t(p[0]) << 8 | p[1]);
}

inline uint32_t load_be32(const uint8_t* p) {
    return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 | p[3];
}

inline void store_be16(uint8_t* p, uint16_t v) {
    p[0] = uint8_t(v >> 8);
    p[1] = uint8_t(v);
}

inline void store_be32(uint8_t* p, uint32_t v) {
    p[0] = uint8_t(v >> 24);
    p[1] = uint8_t(v >> 16);
    p[2] = uint8_t(v >> 8);
    p[3] = uint8_t(v);
}

inline uint16_t load_le16(const uint8_t* p) {
    return static_cast<uint16_t>(uint16_t(p[1]) << 8 | p[0]);
}

inline uint32_t load_le32(const uint8_t* p) {
    return uint32_t(p[3]) << 24 | uint32_t(p[2]) << 16 | uint32_t(p[1]) << 8 | p[0];
}

inline uint64_t load_le64(const uint8_t* p) {
    return uint64_t(load_le32(p)) | uint64_t(load_le32(p + 4)) << 32;
}

inline void store_le16(uint8_t* p, uint16_t v) {
    p[0] = uint8_t(v);
    p[1] = uint8_t(v >> 8);
}

inline void store_le32(uint8_t* p, uint32_t v) {
    p[0] = uint8_t(v);
    p[1] = uint8_t(v >> 8);
    p[2] = uint8_t(v >> 16);
    p[3] = uint8_t(v >> 24);
}

inline void store_le64(uint8_t* p, uint64_t v) {
    store_le32(p, uint32_t(v));
    store_le32(p + 4, uint32_t(v >> 32));
}

// Dotted-quad parsing; returns the address in host order.
inline std::optional<uint32_t> parse_ipv4(std::string_view s) {
    uint32_t ip = 0;
    int octets = 0;
    size_t i = 0;
    while (octets < 4) {
        if (i >= s.size() || s[i] < '0' || s[i] > '9') return std::nullopt;
        uint32_t v = 0;
        size_t digits = 0;
        while (i < s.size() && s[i] >= '0' && s[i] <= '9') {
            v = v * 10 + uint32_t(s[i] - '0');
            if (v > 255 || ++digits > 3) return std::nullopt;
            ++i;
        }
        ip = ip << 8 | v;
        ++octets;
        if (octets < 4) {
            if (i >= s.size() || s[i] != '.') return std::nullopt;
            ++i;
        }
    }
    if (i != s.size()) return std::nullopt;
    return ip;
}

inline std::string format_ipv4(uint32_t ip) {
    return std::to_string(ip >> 24) + "." + std::to_string(ip >> 16 & 0xFF) + "." +
           std::to_string(ip >> 8 & 0xFF) + "." + std::to_string(ip & 0xFF);
}

// 48-bit MAC kept in the low bits of a uint64_t, byte 0 in bits 47..40.
inline std::string format_mac(uint64_t mac) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (int b = 5; b >= 0; --b) {
        uint8_t v = uint8_t(mac >> (b * 8));
        out += hex[v >> 4];
        out += hex[v & 0xF];
        if (b) out += ':';
    }
    return out;
}

} // namespace pktwin
