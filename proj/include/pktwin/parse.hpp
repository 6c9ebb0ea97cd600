#pragma once
// Link/network/transport header offsets for one captured frame. Ethernet II is
// assumed at offset 0; VLAN tags are skipped; only IPv4 with TCP or UDP gets a
// flow-capable parse. Anything else (ARP, IPv6, fragments, frames truncated
// mid-header) degrades to protocol=other and still flows through the pipeline
// as plain bytes.

#include <cstdint>

#include "pktwin/bytes.hpp"
#include "pktwin/pcap.hpp"

namespace pktwin {

enum class Transport : uint8_t { other = 0, tcp = 6, udp = 17 };

constexpr uint32_t kNoOffset = 0xFFFFFFFFu;

constexpr uint16_t kEtherTypeIpv4 = 0x0800;
constexpr uint16_t kEtherTypeVlan = 0x8100;

struct ParsedHeaders {
    uint32_t eth_offset = 0;
    uint32_t ip_offset = kNoOffset;
    uint32_t transport_offset = kNoOffset;
    uint32_t payload_offset = kNoOffset;
    uint32_t ttl_offset = kNoOffset;
    uint8_t ip_version = 0; // 4 or 0
    Transport protocol = Transport::other;
    uint32_t src_ip = 0; // host order, valid when ip_version == 4
    uint32_t dst_ip = 0;
    uint16_t src_port = 0; // valid when protocol is tcp/udp
    uint16_t dst_port = 0;
    uint8_t tcp_flags = 0;
    uint8_t ihl = 0;           // IPv4 header length in 32-bit words
    uint16_t ip_total_len = 0; // IPv4 total-length field

    bool has_ports() const { return protocol != Transport::other; }
};

inline ParsedHeaders parse_headers(const RawPacket& pkt) {
    ParsedHeaders h;
    const uint8_t* d = pkt.data.data();
    const uint32_t len = pkt.captured_len;
    if (len < 14) return h;

    uint32_t off = 12;
    uint16_t ether_type = load_be16(d + off);
    while (ether_type == kEtherTypeVlan) { // 4-byte tag per level, QinQ included
        if (off + 6 > len) return h;
        off += 4;
        ether_type = load_be16(d + off);
    }
    if (ether_type != kEtherTypeIpv4) return h;

    const uint32_t ip = off + 2;
    if (ip + 20 > len) return h;
    if ((d[ip] >> 4) != 4) return h;
    const uint8_t ihl = d[ip] & 0x0F;
    if (ihl < 5 || ip + uint32_t(ihl) * 4 > len) return h;

    h.ip_offset = ip;
    h.ip_version = 4;
    h.ihl = ihl;
    h.ip_total_len = load_be16(d + ip + 2);
    h.ttl_offset = ip + 8;
    h.src_ip = load_be32(d + ip + 12);
    h.dst_ip = load_be32(d + ip + 16);

    // A non-first fragment carries no transport header.
    const uint16_t frag = load_be16(d + ip + 6);
    if ((frag & 0x1FFF) != 0) return h;

    const uint32_t tr = ip + uint32_t(ihl) * 4;
    const uint8_t proto = d[ip + 9];
    if (proto == 6) {
        if (tr + 20 > len) return h;
        const uint8_t data_offset = d[tr + 12] >> 4;
        if (data_offset < 5 || tr + uint32_t(data_offset) * 4 > len) return h;
        h.protocol = Transport::tcp;
        h.transport_offset = tr;
        h.payload_offset = tr + uint32_t(data_offset) * 4;
        h.src_port = load_be16(d + tr);
        h.dst_port = load_be16(d + tr + 2);
        h.tcp_flags = d[tr + 13];
    } else if (proto == 17) {
        if (tr + 8 > len) return h;
        h.protocol = Transport::udp;
        h.transport_offset = tr;
        h.payload_offset = tr + 8;
        h.src_port = load_be16(d + tr);
        h.dst_port = load_be16(d + tr + 2);
    }
    return h;
}

} // namespace pktwin
