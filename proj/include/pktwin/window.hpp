#pragma once
// Fixed-width packet vectors and the 150-row windows the models consume. Each
// vector is 351 bytes: one quantized inter-packet time delta at index 0, then
// up to 350 packet bytes (shorter packets zero-padded, longer ones truncated).

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <vector>

#include "pktwin/pcap.hpp"

namespace pktwin {

constexpr size_t kVectorWidth = 351; // 1 delta byte + 350 packet bytes
constexpr size_t kPacketBytes = kVectorWidth - 1;
constexpr size_t kWindowRows = 150;

struct Provenance {
    uint32_t capture_id = 0;
    uint64_t packet_index = 0;

    bool operator==(const Provenance&) const = default;
};

// Sentinel provenance carried by padding rows when windows are written back
// into a container.
constexpr Provenance kPaddingProvenance{0xFFFFFFFFu, 0};

struct PacketVector {
    std::array<uint8_t, kVectorWidth> bytes{};
    uint8_t label = 0;
    bool valid = false;

    bool operator==(const PacketVector&) const = default;
};

// Logarithmic quantizer for the inter-packet gap: covers microseconds through
// minutes in one byte and is monotone non-decreasing in the gap.
//   b = min(255, floor(16 * log2(1 + delta_ms)))
inline uint8_t encode_time_delta(uint64_t delta_us) {
    const double b = std::floor(16.0 * std::log2(1.0 + double(delta_us) / 1000.0));
    return b >= 255.0 ? 255 : uint8_t(b);
}

inline PacketVector encode_packet(const RawPacket& pkt, std::optional<uint64_t> prev_ts,
                                  uint8_t label) {
    PacketVector v;
    v.bytes[0] = prev_ts ? encode_time_delta(pkt.ts_us - *prev_ts) : 0;
    const size_t n = std::min<size_t>(pkt.data.size(), kPacketBytes);
    if (n) std::memcpy(v.bytes.data() + 1, pkt.data.data(), n);
    v.label = label;
    v.valid = true;
    return v;
}

struct Window {
    std::array<PacketVector, kWindowRows> rows{};
    std::array<Provenance, kWindowRows> row_provenance{};
    uint32_t capture_id = 0;
    uint64_t first_packet_index = 0;

    bool infected() const {
        for (const auto& r : rows)
            if (r.valid && r.label == 1) return true;
        return false;
    }
};

// Consecutive non-overlapping chunks of 150 vectors; the last window is padded
// with all-zero label-0 rows marked invalid. provenance may be empty, in which
// case rows get default provenance and the origin stays zero.
inline std::vector<Window> build_windows(const std::vector<PacketVector>& vectors,
                                         const std::vector<Provenance>& provenance = {}) {
    std::vector<Window> windows;
    windows.reserve((vectors.size() + kWindowRows - 1) / kWindowRows);
    for (size_t base = 0; base < vectors.size(); base += kWindowRows) {
        Window w;
        if (!provenance.empty()) {
            w.capture_id = provenance[base].capture_id;
            w.first_packet_index = provenance[base].packet_index;
        }
        const size_t n = std::min(kWindowRows, vectors.size() - base);
        for (size_t r = 0; r < n; ++r) {
            w.rows[r] = vectors[base + r];
            w.row_provenance[r] = provenance.empty() ? Provenance{} : provenance[base + r];
        }
        for (size_t r = n; r < kWindowRows; ++r)
            w.row_provenance[r] = kPaddingProvenance;
        windows.push_back(std::move(w));
    }
    return windows;
}

} // namespace pktwin
