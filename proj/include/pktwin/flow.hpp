#pragma once
// Bidirectional flow assembly and the rule-driven attack labeling that turns
// flow labels into per-packet labels. A flow is the canonical 5-tuple bounded
// by an idle timeout or by TCP FIN/RST; direction is defined relative to the
// endpoint that sent the flow's first packet. Label rules are declarative
// (time window, attacker, victim) rows loaded from CSV.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "pktwin/bytes.hpp"
#include "pktwin/parse.hpp"

namespace pktwin {

enum class Direction : uint8_t { forward = 0, backward = 1, none = 2 };

enum class LabelScheme : uint8_t { forward_only = 0, both_sides = 1 };

struct FlowKey {
    uint32_t ip_lo = 0;
    uint32_t ip_hi = 0;
    uint16_t port_lo = 0;
    uint16_t port_hi = 0;
    Transport protocol = Transport::other;

    bool operator==(const FlowKey&) const = default;
};

struct FlowKeyHash {
    size_t operator()(const FlowKey& k) const {
        uint64_t a = uint64_t(k.ip_lo) << 32 | k.ip_hi;
        uint64_t b = uint64_t(k.port_lo) << 24 | uint64_t(k.port_hi) << 8 | uint8_t(k.protocol);
        a ^= b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2);
        a *= 0xBF58476D1CE4E5B9ULL;
        return size_t(a ^ (a >> 29));
    }
};

// None for protocol=other; otherwise both directions of a conversation yield
// the same key (endpoints ordered lexicographically by (ip, port)).
inline std::optional<FlowKey> canonical_flow_key(const ParsedHeaders& h) {
    if (h.protocol == Transport::other) return std::nullopt;
    FlowKey k;
    k.protocol = h.protocol;
    if (std::pair(h.src_ip, h.src_port) <= std::pair(h.dst_ip, h.dst_port)) {
        k.ip_lo = h.src_ip; k.port_lo = h.src_port;
        k.ip_hi = h.dst_ip; k.port_hi = h.dst_port;
    } else {
        k.ip_lo = h.dst_ip; k.port_lo = h.dst_port;
        k.ip_hi = h.src_ip; k.port_hi = h.src_port;
    }
    return k;
}

struct FlowRecord {
    FlowKey key;
    uint32_t initiator_ip = 0;
    uint16_t initiator_port = 0;
    uint32_t responder_ip = 0;
    uint16_t responder_port = 0;
    uint64_t first_ts = 0;
    uint64_t last_ts = 0;
    std::vector<std::pair<uint64_t, Direction>> packet_indices; // ts-ordered
    bool terminated = false;
};

constexpr uint8_t kTcpFlagFin = 0x01;
constexpr uint8_t kTcpFlagRst = 0x04;

// packets and headers are parallel arrays in chronological order. Every
// TCP/UDP packet lands in exactly one flow: the live flow for its key when the
// idle gap is within the timeout and the flow is not terminated, a fresh flow
// otherwise. FIN or RST terminates after the carrying packet joins.
inline std::vector<FlowRecord> assemble_flows(const std::vector<RawPacket>& packets,
                                              const std::vector<ParsedHeaders>& headers,
                                              uint64_t timeout_us = 120'000'000) {
    std::vector<FlowRecord> flows;
    std::unordered_map<FlowKey, size_t, FlowKeyHash> live;

    for (size_t i = 0; i < packets.size(); ++i) {
        const auto& h = headers[i];
        auto key = canonical_flow_key(h);
        if (!key) continue;
        const uint64_t ts = packets[i].ts_us;

        size_t slot;
        auto it = live.find(*key);
        if (it != live.end() && !flows[it->second].terminated &&
            ts - flows[it->second].last_ts <= timeout_us) {
            slot = it->second;
        } else {
            FlowRecord rec;
            rec.key = *key;
            rec.initiator_ip = h.src_ip;
            rec.initiator_port = h.src_port;
            rec.responder_ip = h.dst_ip;
            rec.responder_port = h.dst_port;
            rec.first_ts = ts;
            rec.last_ts = ts;
            slot = flows.size();
            flows.push_back(std::move(rec));
            live[*key] = slot;
        }

        FlowRecord& f = flows[slot];
        const Direction dir = h.src_ip == f.initiator_ip ? Direction::forward : Direction::backward;
        f.packet_indices.emplace_back(i, dir); // position in the ordered stream
        f.last_ts = ts;
        if (h.protocol == Transport::tcp && (h.tcp_flags & (kTcpFlagFin | kTcpFlagRst)))
            f.terminated = true;
    }
    return flows;
}

struct LabelRule {
    std::string attack_name;
    uint64_t ts_start_us = 0;
    uint64_t ts_end_us = 0;
    uint32_t attacker_ip = 0;
    uint32_t victim_ip = 0;
    std::optional<uint16_t> victim_port; // empty = any
};

struct FlowLabeling {
    std::vector<int32_t> rule_of_flow; // index into rules, -1 = benign
    std::vector<std::string> warnings; // overlapping rules with differing names
};

namespace detail {

inline bool rule_matches(const LabelRule& r, const FlowRecord& f) {
    if (f.first_ts > r.ts_end_us || f.last_ts < r.ts_start_us) return false;
    uint16_t victim_side_port;
    if (f.initiator_ip == r.attacker_ip && f.responder_ip == r.victim_ip)
        victim_side_port = f.responder_port;
    else if (f.initiator_ip == r.victim_ip && f.responder_ip == r.attacker_ip)
        victim_side_port = f.initiator_port;
    else
        return false;
    return !r.victim_port || *r.victim_port == victim_side_port;
}

} // namespace detail

// Endpoint sets are unordered (a victim-initiated flow still matches); first
// matching rule in list order wins, later matches with a different attack name
// only produce a warning diagnostic.
inline FlowLabeling label_flows(const std::vector<FlowRecord>& flows,
                                const std::vector<LabelRule>& rules) {
    FlowLabeling out;
    out.rule_of_flow.assign(flows.size(), -1);
    for (size_t fi = 0; fi < flows.size(); ++fi) {
        for (size_t ri = 0; ri < rules.size(); ++ri) {
            if (!detail::rule_matches(rules[ri], flows[fi])) continue;
            if (out.rule_of_flow[fi] < 0) {
                out.rule_of_flow[fi] = int32_t(ri);
            } else if (rules[size_t(out.rule_of_flow[fi])].attack_name != rules[ri].attack_name) {
                out.warnings.push_back("flow " + std::to_string(fi) + ": rules '" +
                                       rules[size_t(out.rule_of_flow[fi])].attack_name + "' and '" +
                                       rules[ri].attack_name + "' both match; first wins");
            }
        }
    }
    return out;
}

struct PacketLabel {
    uint8_t label = 0;
    std::string attack_name; // empty when benign
    Direction direction = Direction::none;
};

// Projects flow labels onto packets. both_sides marks every packet of an
// attack flow; forward_only marks only packets sourced by the rule's attacker.
// Keyless packets stay benign with direction none.
inline std::vector<PacketLabel> label_packets(const std::vector<FlowRecord>& flows,
                                              const FlowLabeling& labeling,
                                              const std::vector<LabelRule>& rules,
                                              const std::vector<ParsedHeaders>& headers,
                                              LabelScheme scheme) {
    std::vector<PacketLabel> labels(headers.size());
    for (size_t fi = 0; fi < flows.size(); ++fi) {
        const FlowRecord& f = flows[fi];
        const int32_t ri = labeling.rule_of_flow[fi];
        for (const auto& [pkt_index, dir] : f.packet_indices) {
            PacketLabel& pl = labels.at(pkt_index);
            pl.direction = dir;
            if (ri < 0) continue;
            const LabelRule& rule = rules[size_t(ri)];
            const bool attacker_sourced = headers[pkt_index].src_ip == rule.attacker_ip;
            if (scheme == LabelScheme::both_sides || attacker_sourced) {
                pl.label = 1;
                pl.attack_name = rule.attack_name;
            }
        }
    }
    return labels;
}

// --- rule / label CSV interchange -------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

} // namespace detail

// Columns (exact): attack_name,ts_start_us,ts_end_us,attacker_ip,victim_ip,victim_port
inline std::vector<LabelRule> load_rules_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("rules: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("rules: missing header row in " + path.string());
    const auto header = detail::split_csv_line(line);
    const std::vector<std::string> expected = {"attack_name", "ts_start_us", "ts_end_us",
                                               "attacker_ip", "victim_ip", "victim_port"};
    if (std::vector<std::string>(header.begin(), header.end()) != expected)
        throw std::runtime_error("rules: unexpected header row in " + path.string());

    std::vector<LabelRule> rules;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 6)
            throw std::runtime_error("rules: line " + std::to_string(line_no) + ": want 6 fields");
        LabelRule r;
        r.attack_name = f[0];
        r.ts_start_us = std::stoull(f[1]);
        r.ts_end_us = std::stoull(f[2]);
        auto atk = parse_ipv4(f[3]);
        auto vic = parse_ipv4(f[4]);
        if (!atk || !vic)
            throw std::runtime_error("rules: line " + std::to_string(line_no) + ": bad IPv4 address");
        r.attacker_ip = *atk;
        r.victim_ip = *vic;
        if (!f[5].empty()) r.victim_port = uint16_t(std::stoul(f[5]));
        if (r.ts_start_us >= r.ts_end_us)
            throw std::runtime_error("rules: line " + std::to_string(line_no) +
                                     ": ts_start_us must be < ts_end_us");
        rules.push_back(std::move(r));
    }
    return rules;
}

inline const char* direction_name(Direction d) {
    switch (d) {
        case Direction::forward: return "forward";
        case Direction::backward: return "backward";
        default: return "none";
    }
}

// Columns: capture_id,packet_index,label,attack_name,direction
inline void write_labels_csv(const std::filesystem::path& path, uint32_t capture_id,
                             const std::vector<PacketLabel>& labels) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("labels: cannot write " + path.string());
    out << "capture_id,packet_index,label,attack_name,direction\n";
    for (size_t i = 0; i < labels.size(); ++i) {
        out << capture_id << ',' << i << ',' << int(labels[i].label) << ','
            << labels[i].attack_name << ',' << direction_name(labels[i].direction) << '\n';
    }
}

// packet_index -> label. attack_name/direction are ignored here; encode only
// needs the class bit.
inline std::unordered_map<uint64_t, uint8_t> load_labels_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("labels: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("labels: missing header row in " + path.string());
    std::unordered_map<uint64_t, uint8_t> out;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 5)
            throw std::runtime_error("labels: line " + std::to_string(line_no) + ": want 5 fields");
        out[std::stoull(f[1])] = uint8_t(std::stoul(f[2]));
    }
    return out;
}

} // namespace pktwin
