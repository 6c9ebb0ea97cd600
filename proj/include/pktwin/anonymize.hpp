#pragma once
// Randomized replacement of MAC/IP/port header fields plus checksum fix-up.
// Each distinct original value draws one uniform random replacement for the
// whole capture, so identity relationships between packets survive while the
// concrete addresses do not. After rewriting, the IPv4 header checksum and the
// TCP/UDP pseudo-header checksum are recomputed so packets stay protocol-valid.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pktwin/bytes.hpp"
#include "pktwin/parse.hpp"
#include "pktwin/pcap.hpp"
#include "pktwin/rng.hpp"

namespace pktwin {

// Injective per-capture value maps, deterministic for a given seed and
// insertion sequence. Replacement IPs exclude 0.0.0.0 and 255.255.255.255,
// replacement ports exclude 0, replacement MACs are forced to the
// locally-administered unicast bit pattern.
class ReplacementMap {
public:
    explicit ReplacementMap(uint64_t seed) : seed_(seed), rng_(seed, 0) {}

    uint64_t seed() const { return seed_; }

    uint64_t map_mac(uint64_t orig) {
        auto it = mac_.find(orig);
        if (it != mac_.end()) return it->second;
        uint64_t repl;
        do {
            repl = rng_.next() & 0xFFFFFFFFFFFFULL;
            repl = (repl & ~(0x01ULL << 40)) | (0x02ULL << 40); // unicast, local bit
        } while (used_mac_.contains(repl));
        used_mac_.insert(repl);
        mac_.emplace(orig, repl);
        return repl;
    }

    uint32_t map_ip(uint32_t orig) {
        auto it = ip_.find(orig);
        if (it != ip_.end()) return it->second;
        uint32_t repl;
        do {
            repl = uint32_t(rng_.next());
        } while (repl == 0 || repl == 0xFFFFFFFFu || used_ip_.contains(repl));
        used_ip_.insert(repl);
        ip_.emplace(orig, repl);
        return repl;
    }

    uint16_t map_port(uint16_t orig) {
        auto it = port_.find(orig);
        if (it != port_.end()) return it->second;
        // 65535 usable replacements (port 0 excluded): a capture touching every
        // port value cannot get a 65536th injective assignment.
        if (port_.size() >= 65535)
            throw std::runtime_error("anonymize: port replacement space exhausted");
        uint16_t repl;
        do {
            repl = uint16_t(rng_.next());
        } while (repl == 0 || used_port_.contains(repl));
        used_port_.insert(repl);
        port_.emplace(orig, repl);
        return repl;
    }

    const std::unordered_map<uint64_t, uint64_t>& mac_map() const { return mac_; }
    const std::unordered_map<uint32_t, uint32_t>& ip_map() const { return ip_; }
    const std::unordered_map<uint16_t, uint16_t>& port_map() const { return port_; }

private:
    uint64_t seed_;
    Xoshiro256 rng_;
    std::unordered_map<uint64_t, uint64_t> mac_;
    std::unordered_map<uint32_t, uint32_t> ip_;
    std::unordered_map<uint16_t, uint16_t> port_; // shared across TCP and UDP
    std::unordered_set<uint64_t> used_mac_;
    std::unordered_set<uint32_t> used_ip_;
    std::unordered_set<uint16_t> used_port_;
};

// RFC 1071 ones-complement sum of big-endian 16-bit words; odd length is
// padded with a zero byte. Carries are folded before returning.
inline uint32_t ones_complement_sum(std::span<const uint8_t> bytes, uint32_t acc = 0) {
    size_t i = 0;
    for (; i + 1 < bytes.size(); i += 2)
        acc += uint32_t(bytes[i]) << 8 | bytes[i + 1];
    if (i < bytes.size()) acc += uint32_t(bytes[i]) << 8;
    while (acc >> 16) acc = (acc & 0xFFFF) + (acc >> 16);
    return acc;
}

// Checksum over an IPv4 header whose checksum field bytes are zero. Inserting
// the result makes the full-header ones-complement sum equal 0xFFFF.
inline uint16_t ipv4_header_checksum(std::span<const uint8_t> header) {
    if (header.size() < 20)
        throw std::invalid_argument("ipv4 checksum: header shorter than 20 bytes");
    return uint16_t(~ones_complement_sum(header) & 0xFFFF);
}

struct TransportChecksum {
    bool computable = false;
    uint16_t value = 0;
};

// RFC 793/768 checksum: pseudo-header (src, dst, zero, protocol, length) plus
// the transport segment with its checksum field zeroed. For UDP a computed
// 0x0000 is transmitted as 0xFFFF. Returns computable=false when the capture
// is truncated below the transport length (or the length fields are mangled).
inline TransportChecksum transport_checksum(std::span<const uint8_t> pkt, const ParsedHeaders& h) {
    TransportChecksum out;
    if (h.protocol == Transport::other) return out;

    uint32_t seg_len;
    if (h.protocol == Transport::udp) {
        seg_len = load_be16(pkt.data() + h.transport_offset + 4);
        if (seg_len < 8) return out;
    } else {
        const uint32_t header_span = uint32_t(h.ihl) * 4;
        if (h.ip_total_len < header_span) return out;
        seg_len = h.ip_total_len - header_span;
    }
    if (uint64_t(h.transport_offset) + seg_len > pkt.size()) return out;

    uint32_t acc = 0;
    acc = ones_complement_sum(pkt.subspan(h.ip_offset + 12, 8), acc); // src + dst IP
    acc += uint8_t(h.protocol);
    acc += seg_len & 0xFFFF;
    acc = ones_complement_sum(pkt.subspan(h.transport_offset, seg_len), acc);
    while (acc >> 16) acc = (acc & 0xFFFF) + (acc >> 16);

    out.computable = true;
    out.value = uint16_t(~acc & 0xFFFF);
    if (h.protocol == Transport::udp && out.value == 0) out.value = 0xFFFF;
    return out;
}

struct AnonymizeStats {
    uint64_t packets = 0;
    uint64_t uncomputable_checksums = 0;
};

// Rewrites MAC/IP/port fields in place through the map. Bytes other than those
// fields are untouched; checksum fix-up happens separately.
inline void replace_fields(RawPacket& pkt, const ParsedHeaders& h, ReplacementMap& map) {
    uint8_t* d = pkt.data.data();
    if (pkt.captured_len >= 12) {
        for (uint32_t off : {0u, 6u}) {
            uint64_t mac = 0;
            for (int i = 0; i < 6; ++i) mac = mac << 8 | d[off + i];
            const uint64_t repl = map.map_mac(mac);
            for (int i = 0; i < 6; ++i) d[off + i] = uint8_t(repl >> ((5 - i) * 8));
        }
    }
    if (h.ip_version == 4) {
        store_be32(d + h.ip_offset + 12, map.map_ip(h.src_ip));
        store_be32(d + h.ip_offset + 16, map.map_ip(h.dst_ip));
    }
    if (h.has_ports()) {
        store_be16(d + h.transport_offset, map.map_port(h.src_port));
        store_be16(d + h.transport_offset + 2, map.map_port(h.dst_port));
    }
}

namespace detail {

inline void fix_checksums(RawPacket& pkt, const ParsedHeaders& h, AnonymizeStats& stats) {
    if (h.ip_version != 4) return;
    uint8_t* d = pkt.data.data();

    store_be16(d + h.ip_offset + 10, 0);
    const uint16_t ip_sum =
        ipv4_header_checksum({d + h.ip_offset, size_t(h.ihl) * 4});
    store_be16(d + h.ip_offset + 10, ip_sum);

    if (h.protocol == Transport::other) return;
    const uint32_t ck_off =
        h.transport_offset + (h.protocol == Transport::tcp ? 16u : 6u);
    store_be16(d + ck_off, 0);
    const auto ck = transport_checksum({d, pkt.captured_len}, h);
    if (ck.computable)
        store_be16(d + ck_off, ck.value);
    else
        ++stats.uncomputable_checksums; // field stays zeroed
}

} // namespace detail

struct AnonymizeResult {
    std::vector<RawPacket> packets;
    AnonymizeStats stats;
};

// Field replacement plus both checksum fix-ups over the whole capture.
// Deterministic for a given seed; payload bytes beyond the transport header
// are bit-identical to the input. Never aborts on malformed packets.
inline AnonymizeResult anonymize_capture(const std::vector<RawPacket>& packets,
                                         const std::vector<ParsedHeaders>& headers,
                                         ReplacementMap& map) {
    AnonymizeResult out;
    out.packets.reserve(packets.size());
    for (size_t i = 0; i < packets.size(); ++i) {
        RawPacket pkt = packets[i];
        replace_fields(pkt, headers[i], map);
        detail::fix_checksums(pkt, headers[i], out.stats);
        ++out.stats.packets;
        out.packets.push_back(std::move(pkt));
    }
    return out;
}

inline AnonymizeResult anonymize_capture(const std::vector<RawPacket>& packets,
                                         const std::vector<ParsedHeaders>& headers,
                                         uint64_t seed) {
    ReplacementMap map(seed);
    return anonymize_capture(packets, headers, map);
}

// Audit export, one row per mapping: kind,original,replacement. Rows are
// sorted by kind then original value so re-runs emit identical files.
inline void write_map_csv(const std::filesystem::path& path, const ReplacementMap& map) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("map: cannot write " + path.string());
    out << "kind,original,replacement\n";

    std::vector<std::pair<uint64_t, uint64_t>> macs(map.mac_map().begin(), map.mac_map().end());
    std::sort(macs.begin(), macs.end());
    for (const auto& [o, r] : macs)
        out << "mac," << format_mac(o) << ',' << format_mac(r) << '\n';

    std::vector<std::pair<uint32_t, uint32_t>> ips(map.ip_map().begin(), map.ip_map().end());
    std::sort(ips.begin(), ips.end());
    for (const auto& [o, r] : ips)
        out << "ip," << format_ipv4(o) << ',' << format_ipv4(r) << '\n';

    std::vector<std::pair<uint16_t, uint16_t>> ports(map.port_map().begin(), map.port_map().end());
    std::sort(ports.begin(), ports.end());
    for (const auto& [o, r] : ports)
        out << "port," << o << ',' << r << '\n';
}

} // namespace pktwin
