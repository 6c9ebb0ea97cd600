#pragma once
// Classic pcap reader/writer with light record sanitization. Handles both byte
// orders and both timestamp resolutions; timestamps are normalized to unsigned
// microseconds internally (nanosecond captures round to the nearest microsecond).
// Records whose declared length runs past end-of-file or over the snaplen are
// skipped and counted rather than treated as fatal. Only Ethernet (linktype 1)
// captures are accepted.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pktwin/bytes.hpp"

namespace pktwin {

// Bad magic or a linktype we do not parse.
struct UnsupportedFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File too short to hold the global header, or unreadable.
struct TruncatedFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr uint32_t kPcapMagicLe = 0xA1B2C3D4u;   // little-endian file, microseconds
constexpr uint32_t kPcapMagicBe = 0xD4C3B2A1u;   // byte-swapped file, microseconds
constexpr uint32_t kPcapMagicLeNs = 0xA1B23C4Du; // little-endian file, nanoseconds
constexpr uint32_t kPcapMagicBeNs = 0x4D3CB2A1u; // byte-swapped file, nanoseconds
constexpr uint32_t kLinktypeEthernet = 1;

struct PcapFileHeader {
    uint32_t magic = kPcapMagicLe;
    uint16_t version_major = 2;
    uint16_t version_minor = 4;
    uint32_t snaplen = 65535;
    uint32_t linktype = kLinktypeEthernet;
    bool swapped = false;    // file byte order differs from the reader's layout
    bool nanosecond = false; // sub-second field resolution
};

struct RawPacket {
    uint64_t index = 0; // ordinal in the source file, counting yielded packets
    uint64_t ts_us = 0;
    uint32_t captured_len = 0;
    uint32_t original_len = 0;
    std::vector<uint8_t> data;
};

struct CaptureReadResult {
    PcapFileHeader header;
    std::vector<RawPacket> packets;
    uint64_t skipped_records = 0;
};

namespace detail {

inline uint32_t field32(const uint8_t* p, bool swapped) {
    return swapped ? load_be32(p) : load_le32(p);
}

inline uint16_t field16(const uint8_t* p, bool swapped) {
    return swapped ? load_be16(p) : load_le16(p);
}

} // namespace detail

inline CaptureReadResult read_capture(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TruncatedFileError("pcap: cannot open " + path.string());

    uint8_t hdr[24];
    in.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    if (in.gcount() != sizeof hdr)
        throw TruncatedFileError("pcap: truncated file header in " + path.string());

    CaptureReadResult result;
    PcapFileHeader& fh = result.header;
    fh.magic = load_le32(hdr);
    switch (fh.magic) {
        case kPcapMagicLe: fh.swapped = false; fh.nanosecond = false; break;
        case kPcapMagicBe: fh.swapped = true;  fh.nanosecond = false; break;
        case kPcapMagicLeNs: fh.swapped = false; fh.nanosecond = true; break;
        case kPcapMagicBeNs: fh.swapped = true;  fh.nanosecond = true; break;
        default:
            throw UnsupportedFormatError("pcap: bad magic in " + path.string());
    }
    fh.version_major = detail::field16(hdr + 4, fh.swapped);
    fh.version_minor = detail::field16(hdr + 6, fh.swapped);
    fh.snaplen = detail::field32(hdr + 16, fh.swapped);
    fh.linktype = detail::field32(hdr + 20, fh.swapped);
    if (fh.snaplen == 0)
        throw TruncatedFileError("pcap: snaplen 0 in " + path.string());
    if (fh.linktype != kLinktypeEthernet)
        throw UnsupportedFormatError("pcap: unsupported linktype " +
                                     std::to_string(fh.linktype) + " in " + path.string());

    uint8_t rec[16];
    uint64_t next_index = 0;
    for (;;) {
        in.read(reinterpret_cast<char*>(rec), sizeof rec);
        const auto got = in.gcount();
        if (got == 0) break;
        if (got != sizeof rec) { // trailing partial record header
            ++result.skipped_records;
            break;
        }
        const uint32_t ts_sec = detail::field32(rec, fh.swapped);
        const uint32_t ts_frac = detail::field32(rec + 4, fh.swapped);
        const uint32_t incl_len = detail::field32(rec + 8, fh.swapped);
        const uint32_t orig_len = detail::field32(rec + 12, fh.swapped);

        if (incl_len > fh.snaplen || incl_len > orig_len) {
            // Implausible framing: drop the record but keep scanning if the
            // declared payload is still addressable.
            ++result.skipped_records;
            in.seekg(incl_len, std::ios::cur);
            if (!in || in.peek() == EOF) break;
            continue;
        }

        std::vector<uint8_t> data(incl_len);
        in.read(reinterpret_cast<char*>(data.data()), incl_len);
        if (in.gcount() != std::streamsize(incl_len)) {
            ++result.skipped_records;
            break;
        }

        RawPacket pkt;
        pkt.index = next_index++;
        pkt.ts_us = uint64_t(ts_sec) * 1'000'000u +
                    (fh.nanosecond ? (uint64_t(ts_frac) + 500) / 1000 : ts_frac);
        pkt.captured_len = incl_len;
        pkt.original_len = orig_len;
        pkt.data = std::move(data);
        result.packets.push_back(std::move(pkt));
    }
    return result;
}

// Always emits the little-endian microsecond layout regardless of what the
// packets were read from; data bytes and normalized timestamps round-trip.
inline void write_capture(const std::filesystem::path& path,
                          const std::vector<RawPacket>& packets,
                          uint32_t snaplen = 65535) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("pcap: cannot write " + path.string());

    uint8_t hdr[24] = {};
    store_le32(hdr, kPcapMagicLe);
    store_le16(hdr + 4, 2);
    store_le16(hdr + 6, 4);
    store_le32(hdr + 16, snaplen);
    store_le32(hdr + 20, kLinktypeEthernet);
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);

    for (const auto& pkt : packets) {
        uint8_t rec[16];
        store_le32(rec, uint32_t(pkt.ts_us / 1'000'000u));
        store_le32(rec + 4, uint32_t(pkt.ts_us % 1'000'000u));
        store_le32(rec + 8, pkt.captured_len);
        store_le32(rec + 12, pkt.original_len);
        out.write(reinterpret_cast<const char*>(rec), sizeof rec);
        out.write(reinterpret_cast<const char*>(pkt.data.data()),
                  std::streamsize(pkt.data.size()));
    }
    if (!out) throw std::runtime_error("pcap: short write to " + path.string());
}

// Stable sort by timestamp: equal timestamps keep their file order.
inline std::vector<RawPacket> reorder_chronologically(std::vector<RawPacket> packets) {
    std::stable_sort(packets.begin(), packets.end(),
                     [](const RawPacket& a, const RawPacket& b) { return a.ts_us < b.ts_us; });
    return packets;
}

} // namespace pktwin
