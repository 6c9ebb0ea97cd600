#pragma once
// Independent verification oracles. Deliberately written from scratch against
// the RFC definitions, not by calling the library code they check:
//  - the checksum oracle folds carries immediately after every word and
//    verifies that a valid packet re-sums to 0xFFFF;
//  - it locates the IP/transport headers with its own minimal offset math
//    (Ethernet II, no VLAN) instead of parse_headers.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace oracle {

// Ones-complement sum with the carry folded back in after each word.
inline uint16_t sum16(const uint8_t* p, size_t n, uint16_t acc = 0) {
    uint32_t s = acc;
    for (size_t i = 0; i + 1 < n; i += 2) {
        s += uint32_t(p[i]) << 8 | p[i + 1];
        if (s > 0xFFFF) s = (s & 0xFFFF) + 1;
    }
    if (n % 2) {
        s += uint32_t(p[n - 1]) << 8;
        if (s > 0xFFFF) s = (s & 0xFFFF) + 1;
    }
    return uint16_t(s);
}

struct PacketView {
    bool ipv4 = false;
    size_t ip_off = 0;
    size_t ip_hlen = 0;
    size_t ip_total = 0;
    uint8_t protocol = 0;
    size_t tr_off = 0;
};

inline PacketView view(const std::vector<uint8_t>& d) {
    PacketView v;
    if (d.size() < 34) return v;
    if (!(d[12] == 0x08 && d[13] == 0x00)) return v;
    if ((d[14] >> 4) != 4) return v;
    v.ipv4 = true;
    v.ip_off = 14;
    v.ip_hlen = size_t(d[14] & 0x0F) * 4;
    v.ip_total = size_t(d[16]) << 8 | d[17];
    v.protocol = d[23];
    v.tr_off = v.ip_off + v.ip_hlen;
    return v;
}

// Full IPv4 header (checksum field included) must re-sum to 0xFFFF.
inline bool ip_header_valid(const std::vector<uint8_t>& d) {
    const PacketView v = view(d);
    if (!v.ipv4 || d.size() < v.ip_off + v.ip_hlen) return false;
    return sum16(d.data() + v.ip_off, v.ip_hlen) == 0xFFFF;
}

// Pseudo-header plus segment (checksum field included) must re-sum to 0xFFFF.
inline bool transport_valid(const std::vector<uint8_t>& d) {
    const PacketView v = view(d);
    if (!v.ipv4 || (v.protocol != 6 && v.protocol != 17)) return false;

    size_t seg_len;
    if (v.protocol == 17) {
        if (d.size() < v.tr_off + 8) return false;
        seg_len = size_t(d[v.tr_off + 4]) << 8 | d[v.tr_off + 5];
    } else {
        seg_len = v.ip_total - v.ip_hlen;
    }
    if (d.size() < v.tr_off + seg_len) return false;

    uint8_t pseudo[12];
    for (int i = 0; i < 8; ++i) pseudo[i] = d[v.ip_off + 12 + i];
    pseudo[8] = 0;
    pseudo[9] = v.protocol;
    pseudo[10] = uint8_t(seg_len >> 8);
    pseudo[11] = uint8_t(seg_len);

    uint16_t s = sum16(pseudo, sizeof pseudo);
    s = sum16(d.data() + v.tr_off, seg_len, s);
    return s == 0xFFFF;
}

} // namespace oracle
