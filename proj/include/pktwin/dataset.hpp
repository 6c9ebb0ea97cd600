#pragma once
// Deterministic group-shuffled dataset split, minority-class oversampling and
// the PKW1 on-disk container for labeled packet vectors.
//
// PKW1 layout (little-endian, 32-byte header):
//   offset 0   magic "PKW1"
//   offset 4   u16 version        (1)
//   offset 6   u16 flags          (low 2 bits: partition role, 0 = unspecified,
//                                  1 = train, 2 = val, 3 = test)
//   offset 8   u16 vector_width   (351)
//   offset 10  u64 count
//   offset 18  14 reserved zero bytes
// then `count` fixed-size records:
//   u8 label, u8 valid, u32 capture_id, u64 packet_index, bytes[vector_width]
// Records with valid=0 are window padding rows; they carry the sentinel
// provenance capture_id 0xFFFFFFFF.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "pktwin/bytes.hpp"
#include "pktwin/rng.hpp"
#include "pktwin/window.hpp"

namespace pktwin {

enum class PartitionRole : uint8_t { unspecified = 0, train = 1, val = 2, test = 3 };

struct DatasetPartition {
    PartitionRole role = PartitionRole::unspecified;
    std::vector<PacketVector> vectors;
    std::vector<Provenance> provenance; // parallel to vectors

    size_t size() const { return vectors.size(); }
};

// Encodes a chronologically ordered capture into labeled packet vectors: one
// 351-byte row per packet, delta byte against the previous packet in the
// stream, provenance (capture_id, stream position).
inline DatasetPartition encode_capture(const std::vector<RawPacket>& packets,
                                       const std::vector<uint8_t>& labels, uint32_t capture_id) {
    DatasetPartition p;
    p.vectors.reserve(packets.size());
    p.provenance.reserve(packets.size());
    std::optional<uint64_t> prev_ts;
    for (size_t i = 0; i < packets.size(); ++i) {
        const uint8_t label = i < labels.size() ? labels[i] : 0;
        p.vectors.push_back(encode_packet(packets[i], prev_ts, label));
        p.provenance.push_back({capture_id, i});
        prev_ts = packets[i].ts_us;
    }
    return p;
}

struct SplitFractions {
    double train = 0.5;
    double val = 0.1; // remainder goes to test
};

struct GroupSplitResult {
    DatasetPartition train, val, test;
};

// Cuts the stream into `group_count` contiguous groups (the first N mod G
// groups are one packet larger), Fisher-Yates shuffles the group order with
// the pinned PRNG (stream 0), and deals the shuffled groups out 50/10/40.
// Intra-group packet order is preserved.
inline GroupSplitResult group_split(const DatasetPartition& input, size_t group_count,
                                    uint64_t seed, SplitFractions fractions = {}) {
    const size_t n = input.vectors.size();
    if (n < group_count)
        throw std::runtime_error("split: " + std::to_string(n) + " vectors cannot fill " +
                                 std::to_string(group_count) + " groups");

    const size_t base = n / group_count;
    const size_t remainder = n % group_count;

    std::vector<size_t> order(group_count);
    std::iota(order.begin(), order.end(), 0);
    Xoshiro256 rng(seed, 0);
    shuffle(order, rng);

    const size_t n_train = size_t(double(group_count) * fractions.train);
    const size_t n_val = size_t(double(group_count) * fractions.val);

    GroupSplitResult out;
    out.train.role = PartitionRole::train;
    out.val.role = PartitionRole::val;
    out.test.role = PartitionRole::test;

    for (size_t pos = 0; pos < group_count; ++pos) {
        const size_t g = order[pos];
        const size_t size = base + (g < remainder ? 1 : 0);
        const size_t start = g * base + std::min(g, remainder);
        DatasetPartition& dst =
            pos < n_train ? out.train : (pos < n_train + n_val ? out.val : out.test);
        for (size_t i = start; i < start + size; ++i) {
            dst.vectors.push_back(input.vectors[i]);
            dst.provenance.push_back(input.provenance[i]);
        }
    }
    return out;
}

// Duplicates minority-class vectors (cycling in their original order) appended
// after the originals until both classes count the same.
inline DatasetPartition oversample_packets(const DatasetPartition& train) {
    size_t attack = 0, benign = 0;
    for (const auto& v : train.vectors) (v.label ? attack : benign)++;
    if (attack == 0) throw std::runtime_error("oversample: no attack packets in partition");
    if (benign == 0) throw std::runtime_error("oversample: no benign packets in partition");

    DatasetPartition out = train;
    const uint8_t minority = attack < benign ? 1 : 0;
    size_t deficit = attack < benign ? benign - attack : attack - benign;

    std::vector<size_t> minority_indices;
    for (size_t i = 0; i < train.vectors.size(); ++i)
        if (train.vectors[i].label == minority) minority_indices.push_back(i);

    for (size_t k = 0; deficit > 0; --deficit, ++k) {
        const size_t src = minority_indices[k % minority_indices.size()];
        out.vectors.push_back(train.vectors[src]);
        out.provenance.push_back(train.provenance[src]);
    }
    return out;
}

// Window-level analogue: a window with at least one valid attack row is
// "infected"; the minority kind is duplicated (cycling) until the infected and
// fully-benign counts match.
inline std::vector<Window> oversample_windows(const std::vector<Window>& windows) {
    std::vector<size_t> infected, benign;
    for (size_t i = 0; i < windows.size(); ++i)
        (windows[i].infected() ? infected : benign).push_back(i);
    if (infected.empty()) throw std::runtime_error("oversample: no infected windows");
    if (benign.empty()) throw std::runtime_error("oversample: no fully-benign windows");

    const auto& minority = infected.size() < benign.size() ? infected : benign;
    size_t deficit = infected.size() < benign.size() ? benign.size() - infected.size()
                                                     : infected.size() - benign.size();
    std::vector<Window> out = windows;
    for (size_t k = 0; deficit > 0; --deficit, ++k)
        out.push_back(windows[minority[k % minority.size()]]);
    return out;
}

// Structured container failure; offset is the byte position of the first
// inconsistent field.
struct ContainerParseError : std::runtime_error {
    uint64_t offset;

    ContainerParseError(uint64_t off, const std::string& what)
        : std::runtime_error("pkw1: parse error at offset " + std::to_string(off) + ": " + what),
          offset(off) {}
};

constexpr size_t kContainerHeaderSize = 32;
constexpr size_t kContainerRecordSize = 1 + 1 + 4 + 8 + kVectorWidth;

inline void write_container(const std::filesystem::path& path, const DatasetPartition& p) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("pkw1: cannot write " + path.string());

    uint8_t hdr[kContainerHeaderSize] = {};
    hdr[0] = 'P'; hdr[1] = 'K'; hdr[2] = 'W'; hdr[3] = '1';
    store_le16(hdr + 4, 1);
    store_le16(hdr + 6, uint16_t(p.role));
    store_le16(hdr + 8, uint16_t(kVectorWidth));
    store_le64(hdr + 10, p.vectors.size());
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);

    std::vector<uint8_t> rec(kContainerRecordSize);
    for (size_t i = 0; i < p.vectors.size(); ++i) {
        const auto& v = p.vectors[i];
        const auto& prov = p.provenance[i];
        rec[0] = v.label;
        rec[1] = v.valid ? 1 : 0;
        store_le32(rec.data() + 2, prov.capture_id);
        store_le64(rec.data() + 6, prov.packet_index);
        std::memcpy(rec.data() + 14, v.bytes.data(), kVectorWidth);
        out.write(reinterpret_cast<const char*>(rec.data()), std::streamsize(rec.size()));
    }
    if (!out) throw std::runtime_error("pkw1: short write to " + path.string());
}

inline DatasetPartition read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pkw1: cannot open " + path.string());

    uint8_t hdr[kContainerHeaderSize];
    in.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    if (in.gcount() != sizeof hdr)
        throw ContainerParseError(uint64_t(in.gcount()), "truncated header");
    if (hdr[0] != 'P' || hdr[1] != 'K' || hdr[2] != 'W' || hdr[3] != '1')
        throw ContainerParseError(0, "bad magic");
    if (load_le16(hdr + 4) != 1)
        throw ContainerParseError(4, "unsupported version " + std::to_string(load_le16(hdr + 4)));
    const uint16_t flags = load_le16(hdr + 6);
    if (load_le16(hdr + 8) != kVectorWidth)
        throw ContainerParseError(8, "vector width " + std::to_string(load_le16(hdr + 8)));
    const uint64_t count = load_le64(hdr + 10);

    DatasetPartition p;
    p.role = PartitionRole(flags & 0x3);
    p.vectors.reserve(count);
    p.provenance.reserve(count);

    std::vector<uint8_t> rec(kContainerRecordSize);
    for (uint64_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(rec.data()), std::streamsize(rec.size()));
        if (in.gcount() != std::streamsize(rec.size()))
            throw ContainerParseError(kContainerHeaderSize + i * kContainerRecordSize,
                                      "truncated record " + std::to_string(i));
        PacketVector v;
        v.label = rec[0];
        v.valid = rec[1] != 0;
        std::memcpy(v.bytes.data(), rec.data() + 14, kVectorWidth);
        p.vectors.push_back(v);
        p.provenance.push_back({load_le32(rec.data() + 2), load_le64(rec.data() + 6)});
    }
    return p;
}

// Flattens windows back into a record stream: each window contributes exactly
// 150 rows, padding rows included (valid=0, sentinel provenance), so reading
// the file back and chunking by 150 reproduces the same windows.
inline DatasetPartition windows_to_partition(const std::vector<Window>& windows,
                                             PartitionRole role) {
    DatasetPartition p;
    p.role = role;
    p.vectors.reserve(windows.size() * kWindowRows);
    p.provenance.reserve(windows.size() * kWindowRows);
    for (const auto& w : windows) {
        for (size_t r = 0; r < kWindowRows; ++r) {
            p.vectors.push_back(w.rows[r]);
            p.provenance.push_back(w.row_provenance[r]);
        }
    }
    return p;
}

} // namespace pktwin
