#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "pktwin/anonymize.hpp"
#include "pktwin/flow.hpp"
#include "pktwin/parse.hpp"

#include "support/oracle.hpp"
#include "support/synth.hpp"

using namespace pktwin;

namespace {

std::vector<ParsedHeaders> parse_all(const std::vector<RawPacket>& packets) {
    std::vector<ParsedHeaders> out;
    out.reserve(packets.size());
    for (const auto& p : packets) out.push_back(parse_headers(p));
    return out;
}

} // namespace

TEST_CASE("IPv4 header checksum") {
    SECTION("all-zero header complements to 0xFFFF") {
        std::vector<uint8_t> zeros(20, 0);
        CHECK(ipv4_header_checksum(zeros) == 0xFFFF);
    }

    SECTION("known header value") {
        const std::vector<uint8_t> header = {0x45, 0x00, 0x00, 0x3c, 0x1c, 0x46, 0x40,
                                             0x00, 0x40, 0x06, 0x00, 0x00, 0xac, 0x10,
                                             0x0a, 0x63, 0xac, 0x10, 0x0a, 0x0c};
        CHECK(ipv4_header_checksum(header) == 0xB1E6);
    }

    SECTION("short header is an error") {
        std::vector<uint8_t> tiny(19, 0);
        CHECK_THROWS_AS(ipv4_header_checksum(tiny), std::invalid_argument);
    }

    SECTION("filled header re-sums to 0xFFFF per the oracle") {
        synth::PacketSpec spec;
        spec.payload = {1, 2, 3};
        auto pkt = synth::make_packet(spec);
        CHECK(oracle::ip_header_valid(pkt.data));
    }
}

TEST_CASE("transport checksum") {
    SECTION("minimal UDP, zero payload, verified by oracle") {
        synth::PacketSpec spec;
        spec.protocol = 17;
        auto pkt = synth::make_packet(spec);
        CHECK(oracle::transport_valid(pkt.data));
    }

    SECTION("odd-length payload pads with a zero byte") {
        synth::PacketSpec spec;
        spec.protocol = 17;
        spec.payload = {0xAB, 0xCD, 0xEF};
        auto pkt = synth::make_packet(spec);
        CHECK(oracle::transport_valid(pkt.data));

        spec.protocol = 6;
        auto tcp = synth::make_packet(spec);
        CHECK(oracle::transport_valid(tcp.data));
    }

    SECTION("a UDP checksum that computes to zero is emitted as 0xFFFF") {
        // Search a 2-byte payload whose raw complement would be zero.
        bool found = false;
        for (uint32_t v = 0; v < 0x10000 && !found; ++v) {
            synth::PacketSpec spec;
            spec.protocol = 17;
            spec.payload = {uint8_t(v >> 8), uint8_t(v & 0xFF)};
            spec.fill_checksums = false;
            auto pkt = synth::make_packet(spec);
            auto h = parse_headers(pkt);
            const auto ck = transport_checksum({pkt.data.data(), pkt.data.size()}, h);
            REQUIRE(ck.computable);
            if (ck.value == 0xFFFF) {
                // Re-sum with the substituted value still verifies.
                store_be16(pkt.data.data() + h.transport_offset + 6, ck.value);
                CHECK(oracle::transport_valid(pkt.data));
                found = true;
            }
            CHECK(ck.value != 0); // the zero word itself must never be emitted
        }
        CHECK(found);
    }

    SECTION("truncated capture is uncomputable") {
        synth::PacketSpec spec;
        spec.payload.assign(100, 0x42);
        auto pkt = synth::make_packet(spec);
        pkt.data.resize(60); // 54-byte headers + a sliver of payload
        pkt.captured_len = 60;
        auto h = parse_headers(pkt);
        REQUIRE(h.protocol == Transport::tcp);
        const auto ck = transport_checksum({pkt.data.data(), pkt.data.size()}, h);
        CHECK(!ck.computable);
    }
}

TEST_CASE("replacement fields stay consistent across packets") {
    ReplacementMap map(7);

    synth::PacketSpec a;
    a.src_ip = 0x0A000001;
    a.src_port = 80;
    synth::PacketSpec b = a;
    b.dst_port = 9999; // same src ip and src port, different dst

    auto pa = synth::make_packet(a);
    auto pb = synth::make_packet(b);
    auto ha = parse_headers(pa);
    auto hb = parse_headers(pb);

    replace_fields(pa, ha, map);
    replace_fields(pb, hb, map);

    // Same original src IP -> same replacement in both packets.
    CHECK(load_be32(pa.data.data() + 26) == load_be32(pb.data.data() + 26));
    // Same original src port 80 -> same replacement.
    CHECK(load_be16(pa.data.data() + 34) == load_be16(pb.data.data() + 34));

    SECTION("an already-mapped value keeps its mapping") {
        const uint16_t first = map.map_port(80);
        CHECK(map.map_port(80) == first);
        CHECK(map.map_port(80) == load_be16(pa.data.data() + 34));
    }

    SECTION("non-IP packets only change MACs") {
        synth::PacketSpec arp_spec;
        arp_spec.payload = {0x11, 0x22};
        auto arp = synth::make_packet(arp_spec);
        store_be16(arp.data.data() + 12, 0x0806);
        auto original = arp.data;
        auto h = parse_headers(arp);
        REQUIRE(h.protocol == Transport::other);
        replace_fields(arp, h, map);
        CHECK(std::vector<uint8_t>(arp.data.begin(), arp.data.begin() + 12) !=
              std::vector<uint8_t>(original.begin(), original.begin() + 12));
        CHECK(std::vector<uint8_t>(arp.data.begin() + 12, arp.data.end()) ==
              std::vector<uint8_t>(original.begin() + 12, original.end()));
    }
}

TEST_CASE("replacement values avoid reserved ranges") {
    ReplacementMap map(13);
    for (uint32_t i = 0; i < 2000; ++i) {
        const uint32_t ip = map.map_ip(i);
        CHECK(ip != 0);
        CHECK(ip != 0xFFFFFFFFu);
        const uint16_t port = map.map_port(uint16_t(i));
        CHECK(port != 0);
        const uint64_t mac = map.map_mac(i);
        CHECK((mac >> 40 & 0x01) == 0); // unicast
        CHECK((mac >> 40 & 0x02) == 0x02); // locally administered
    }
}

TEST_CASE("a full port scan saturates the port map cleanly") {
    ReplacementMap map(3);
    for (uint32_t port = 0; port < 65535; ++port)
        map.map_port(uint16_t(port)); // consumes every usable replacement
    CHECK(map.port_map().size() == 65535);
    CHECK_THROWS_AS(map.map_port(65535), std::runtime_error);
}

TEST_CASE("anonymize_capture is deterministic and payload-preserving") {
    auto cap = synth::make_mixed_capture({.packet_count = 600, .seed = 3});
    auto headers = parse_all(cap.packets);

    auto run1 = anonymize_capture(cap.packets, headers, 7);
    auto run2 = anonymize_capture(cap.packets, headers, 7);
    auto run3 = anonymize_capture(cap.packets, headers, 8);

    REQUIRE(run1.packets.size() == cap.packets.size());
    bool mac_differs_across_seeds = false;
    for (size_t i = 0; i < cap.packets.size(); ++i) {
        CHECK(run1.packets[i].data == run2.packets[i].data);
        CHECK(run1.packets[i].ts_us == cap.packets[i].ts_us);

        const auto& h = headers[i];
        if (h.protocol != Transport::other) {
            // Payload beyond the transport header is untouched.
            CHECK(std::vector<uint8_t>(run1.packets[i].data.begin() + h.payload_offset,
                                       run1.packets[i].data.end()) ==
                  std::vector<uint8_t>(cap.packets[i].data.begin() + h.payload_offset,
                                       cap.packets[i].data.end()));
        }
        if (!std::equal(run1.packets[i].data.begin(), run1.packets[i].data.begin() + 12,
                        run3.packets[i].data.begin()))
            mac_differs_across_seeds = true;
    }
    CHECK(mac_differs_across_seeds);
}

TEST_CASE("property: maps are injective and flows are preserved") {
    auto cap = synth::make_mixed_capture({.packet_count = 3000, .seed = 17});
    auto headers = parse_all(cap.packets);

    ReplacementMap map(99);
    auto result = anonymize_capture(cap.packets, headers, map);
    CHECK(result.stats.uncomputable_checksums == 0);

    auto check_injective = [](const auto& m) {
        std::set<typename std::decay_t<decltype(m)>::mapped_type> values;
        for (const auto& [k, v] : m) CHECK(values.insert(v).second);
    };
    check_injective(map.mac_map());
    check_injective(map.ip_map());
    check_injective(map.port_map());

    // Flow structure: identical packet-index membership before and after.
    auto flows_before = assemble_flows(cap.packets, headers);
    auto flows_after = assemble_flows(result.packets, parse_all(result.packets));
    REQUIRE(flows_before.size() == flows_after.size());
    for (size_t i = 0; i < flows_before.size(); ++i)
        CHECK(flows_before[i].packet_indices == flows_after[i].packet_indices);
}

TEST_CASE("property: anonymized packets re-sum to 0xFFFF (oracle)") {
    auto cap = synth::make_mixed_capture({.packet_count = 400, .seed = 23});
    auto headers = parse_all(cap.packets);
    auto result = anonymize_capture(cap.packets, headers, 1234);

    size_t checked = 0;
    for (size_t i = 0; i < result.packets.size(); ++i) {
        if (headers[i].protocol == Transport::other) continue;
        CHECK(oracle::ip_header_valid(result.packets[i].data));
        CHECK(oracle::transport_valid(result.packets[i].data));
        ++checked;
    }
    CHECK(checked >= 100);
}

TEST_CASE("truncated packets pass through with a zeroed checksum") {
    synth::PacketSpec spec;
    spec.payload.assign(120, 0x31);
    auto pkt = synth::make_packet(spec);
    pkt.data.resize(64); // cut inside the payload
    pkt.captured_len = 64;
    pkt.original_len = uint32_t(14 + 20 + 20 + 120);

    auto h = parse_headers(pkt);
    ReplacementMap map(5);
    AnonymizeResult out = anonymize_capture({pkt}, {h}, map);
    CHECK(out.stats.uncomputable_checksums == 1);
    CHECK(load_be16(out.packets[0].data.data() + h.transport_offset + 16) == 0);
    // The IP header checksum is still valid.
    CHECK(oracle::ip_header_valid(out.packets[0].data));
}
