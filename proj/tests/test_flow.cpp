#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "pktwin/flow.hpp"
#include "pktwin/parse.hpp"

#include "support/synth.hpp"
#include "support/tmpdir.hpp"

using namespace pktwin;

namespace {

ParsedHeaders tcp_headers(uint32_t src_ip, uint16_t src_port, uint32_t dst_ip, uint16_t dst_port,
                          uint8_t flags = 0x18) {
    ParsedHeaders h;
    h.ip_version = 4;
    h.protocol = Transport::tcp;
    h.src_ip = src_ip;
    h.dst_ip = dst_ip;
    h.src_port = src_port;
    h.dst_port = dst_port;
    h.tcp_flags = flags;
    return h;
}

RawPacket at(uint64_t ts_us, uint64_t index = 0) {
    RawPacket p;
    p.ts_us = ts_us;
    p.index = index;
    return p;
}

std::vector<ParsedHeaders> parse_all(const std::vector<RawPacket>& packets) {
    std::vector<ParsedHeaders> out;
    out.reserve(packets.size());
    for (const auto& p : packets) out.push_back(parse_headers(p));
    return out;
}

} // namespace

TEST_CASE("canonical flow key is direction-symmetric") {
    auto a = canonical_flow_key(tcp_headers(0x0A000001, 80, 0x0A000002, 12345));
    auto b = canonical_flow_key(tcp_headers(0x0A000002, 12345, 0x0A000001, 80));
    REQUIRE(a);
    REQUIRE(b);
    CHECK(*a == *b);

    ParsedHeaders udp = tcp_headers(0x0A000001, 80, 0x0A000002, 12345);
    udp.protocol = Transport::udp;
    auto c = canonical_flow_key(udp);
    REQUIRE(c);
    CHECK(!(*a == *c)); // protocol is part of the key

    ParsedHeaders icmp;
    icmp.ip_version = 4;
    icmp.protocol = Transport::other;
    CHECK(!canonical_flow_key(icmp));
}

TEST_CASE("flow assembly: timeout splits, termination splits") {
    const auto fwd = tcp_headers(1, 10, 2, 20);

    SECTION("packets within the timeout share a flow") {
        std::vector<RawPacket> pkts = {at(0), at(1'000'000), at(2'000'000)};
        auto flows = assemble_flows(pkts, {fwd, fwd, fwd}, 120'000'000);
        REQUIRE(flows.size() == 1);
        CHECK(flows[0].packet_indices.size() == 3);
        CHECK(flows[0].first_ts == 0);
        CHECK(flows[0].last_ts == 2'000'000);
    }

    SECTION("an idle gap beyond the timeout opens a new flow") {
        std::vector<RawPacket> pkts = {at(0), at(200'000'000)};
        auto flows = assemble_flows(pkts, {fwd, fwd}, 120'000'000);
        REQUIRE(flows.size() == 2);
    }

    SECTION("SYN, FIN, then a new SYN gives two flows") {
        const auto syn = tcp_headers(1, 10, 2, 20, 0x02);
        const auto fin = tcp_headers(1, 10, 2, 20, 0x11);
        std::vector<RawPacket> pkts = {at(0), at(1000), at(2000)};
        auto flows = assemble_flows(pkts, {syn, fin, syn}, 120'000'000);
        REQUIRE(flows.size() == 2);
        CHECK(flows[0].packet_indices.size() == 2);
        CHECK(flows[0].terminated);
        CHECK(flows[1].packet_indices.size() == 1);
    }

    SECTION("RST also terminates") {
        const auto rst = tcp_headers(1, 10, 2, 20, 0x04);
        std::vector<RawPacket> pkts = {at(0), at(1000)};
        auto flows = assemble_flows(pkts, {rst, fwd}, 120'000'000);
        REQUIRE(flows.size() == 2);
    }

    SECTION("direction follows the initiator") {
        const auto back = tcp_headers(2, 20, 1, 10);
        std::vector<RawPacket> pkts = {at(0), at(100), at(200)};
        auto flows = assemble_flows(pkts, {fwd, back, fwd}, 120'000'000);
        REQUIRE(flows.size() == 1);
        CHECK(flows[0].initiator_ip == 1);
        CHECK(flows[0].responder_ip == 2);
        CHECK(flows[0].packet_indices[0].second == Direction::forward);
        CHECK(flows[0].packet_indices[1].second == Direction::backward);
        CHECK(flows[0].packet_indices[2].second == Direction::forward);
    }
}

TEST_CASE("flow labeling by rule schedule") {
    FlowRecord flow;
    flow.initiator_ip = 0xC0A80001; // A
    flow.initiator_port = 4000;
    flow.responder_ip = 0xC0A80002; // B
    flow.responder_port = 80;
    flow.first_ts = 1'000'000;
    flow.last_ts = 2'000'000;

    LabelRule rule;
    rule.attack_name = "dos";
    rule.ts_start_us = 500'000;
    rule.ts_end_us = 3'000'000;
    rule.attacker_ip = 0xC0A80001;
    rule.victim_ip = 0xC0A80002;

    SECTION("within the window: attack") {
        auto l = label_flows({flow}, {rule});
        CHECK(l.rule_of_flow[0] == 0);
    }

    SECTION("entirely after the window: benign") {
        FlowRecord late = flow;
        late.first_ts = 4'000'000;
        late.last_ts = 5'000'000;
        auto l = label_flows({late}, {rule});
        CHECK(l.rule_of_flow[0] == -1);
    }

    SECTION("victim-initiated flow still matches (unordered endpoints)") {
        FlowRecord reversed = flow;
        std::swap(reversed.initiator_ip, reversed.responder_ip);
        std::swap(reversed.initiator_port, reversed.responder_port);
        auto l = label_flows({reversed}, {rule});
        CHECK(l.rule_of_flow[0] == 0);
    }

    SECTION("victim_port narrows the match") {
        LabelRule port_rule = rule;
        port_rule.victim_port = 80;
        CHECK(label_flows({flow}, {port_rule}).rule_of_flow[0] == 0);
        port_rule.victim_port = 443;
        CHECK(label_flows({flow}, {port_rule}).rule_of_flow[0] == -1);
    }

    SECTION("first matching rule wins; conflicting second match warns") {
        LabelRule other = rule;
        other.attack_name = "scan";
        auto l = label_flows({flow}, {rule, other});
        CHECK(l.rule_of_flow[0] == 0);
        REQUIRE(l.warnings.size() == 1);
        CHECK(l.warnings[0].find("dos") != std::string::npos);

        // Same name twice is not worth a warning.
        LabelRule dup = rule;
        auto l2 = label_flows({flow}, {rule, dup});
        CHECK(l2.warnings.empty());
    }
}

TEST_CASE("packet labeling schemes") {
    // Attack flow: two attacker-sourced packets and one victim response.
    const uint32_t attacker = 0xC0A80001, victim = 0xC0A80002;
    std::vector<ParsedHeaders> headers = {
        tcp_headers(attacker, 4000, victim, 80),
        tcp_headers(attacker, 4000, victim, 80),
        tcp_headers(victim, 80, attacker, 4000),
    };
    std::vector<RawPacket> pkts = {at(0, 0), at(100, 1), at(200, 2)};
    auto flows = assemble_flows(pkts, headers, 120'000'000);
    REQUIRE(flows.size() == 1);

    LabelRule rule;
    rule.attack_name = "dos";
    rule.ts_start_us = 0;
    rule.ts_end_us = 10'000'000;
    rule.attacker_ip = attacker;
    rule.victim_ip = victim;
    auto labeling = label_flows(flows, {rule});

    SECTION("forward_only labels attacker-sourced packets") {
        auto labels = label_packets(flows, labeling, {rule}, headers, LabelScheme::forward_only);
        CHECK(labels[0].label == 1);
        CHECK(labels[1].label == 1);
        CHECK(labels[2].label == 0);
        CHECK(labels[0].attack_name == "dos");
        CHECK(labels[2].direction == Direction::backward);
    }

    SECTION("both_sides labels the whole flow") {
        auto labels = label_packets(flows, labeling, {rule}, headers, LabelScheme::both_sides);
        CHECK(labels[0].label == 1);
        CHECK(labels[1].label == 1);
        CHECK(labels[2].label == 1);
    }

    SECTION("benign flows stay zero under either scheme") {
        auto benign = label_flows(flows, {});
        for (auto scheme : {LabelScheme::forward_only, LabelScheme::both_sides}) {
            auto labels = label_packets(flows, benign, {}, headers, scheme);
            for (const auto& l : labels) CHECK(l.label == 0);
        }
    }
}

TEST_CASE("property: flows partition the TCP/UDP packets") {
    auto cap = synth::make_mixed_capture({.packet_count = 4000, .seed = 5});
    auto headers = parse_all(cap.packets);
    auto flows = assemble_flows(cap.packets, headers);

    std::set<uint64_t> seen;
    for (const auto& f : flows) {
        REQUIRE(!f.packet_indices.empty());
        uint64_t prev_ts = 0;
        for (const auto& [idx, dir] : f.packet_indices) {
            CHECK(seen.insert(idx).second); // no packet in two flows
            CHECK(cap.packets[idx].ts_us >= prev_ts);
            prev_ts = cap.packets[idx].ts_us;
        }
    }
    size_t keyed = 0;
    for (const auto& h : headers) keyed += h.protocol != Transport::other;
    CHECK(seen.size() == keyed);

    // Deterministic re-run.
    auto flows2 = assemble_flows(cap.packets, headers);
    REQUIRE(flows2.size() == flows.size());
    for (size_t i = 0; i < flows.size(); ++i)
        CHECK(flows2[i].packet_indices == flows[i].packet_indices);
}

TEST_CASE("property: forward_only attack set is a subset of both_sides") {
    auto cap = synth::make_mixed_capture({.packet_count = 4000, .seed = 9});
    auto headers = parse_all(cap.packets);
    auto flows = assemble_flows(cap.packets, headers);

    support::TempDir dir("flow");
    synth::write_rules_csv(dir.file("rules.csv"), cap);
    auto rules = load_rules_csv(dir.file("rules.csv"));
    auto labeling = label_flows(flows, rules);

    auto fwd = label_packets(flows, labeling, rules, headers, LabelScheme::forward_only);
    auto both = label_packets(flows, labeling, rules, headers, LabelScheme::both_sides);
    REQUIRE(fwd.size() == both.size());
    size_t n_fwd = 0, n_both = 0;
    for (size_t i = 0; i < fwd.size(); ++i) {
        if (fwd[i].label) CHECK(both[i].label); // subset
        n_fwd += fwd[i].label;
        n_both += both[i].label;
    }
    CHECK(n_fwd > 0);
    CHECK(n_both > n_fwd);

    // Ground truth recorded by the generator.
    size_t truth_both = 0, truth_fwd = 0;
    for (size_t i = 0; i < cap.packets.size(); ++i) {
        truth_both += cap.attack_flow[i];
        truth_fwd += cap.attacker_sourced[i];
    }
    CHECK(n_both == truth_both);
    CHECK(n_fwd == truth_fwd);
}

TEST_CASE("rule CSV loading validates structure") {
    support::TempDir dir("rules");

    SECTION("round trip with empty victim_port") {
        std::ofstream out(dir.file("r.csv"));
        out << "attack_name,ts_start_us,ts_end_us,attacker_ip,victim_ip,victim_port\n";
        out << "dos,100,200,10.0.0.1,10.0.0.2,\n";
        out << "scan,300,400,10.0.0.3,10.0.0.4,443\n";
        out.close();
        auto rules = load_rules_csv(dir.file("r.csv"));
        REQUIRE(rules.size() == 2);
        CHECK(rules[0].attack_name == "dos");
        CHECK(!rules[0].victim_port);
        CHECK(rules[1].victim_port == uint16_t(443));
        CHECK(rules[1].attacker_ip == 0x0A000003);
    }

    SECTION("bad header row") {
        std::ofstream out(dir.file("bad.csv"));
        out << "name,start,end,a,b,c\n";
        out.close();
        CHECK_THROWS(load_rules_csv(dir.file("bad.csv")));
    }

    SECTION("inverted time range") {
        std::ofstream out(dir.file("inv.csv"));
        out << "attack_name,ts_start_us,ts_end_us,attacker_ip,victim_ip,victim_port\n";
        out << "dos,200,100,10.0.0.1,10.0.0.2,\n";
        out.close();
        CHECK_THROWS(load_rules_csv(dir.file("inv.csv")));
    }

    SECTION("bad address") {
        std::ofstream out(dir.file("addr.csv"));
        out << "attack_name,ts_start_us,ts_end_us,attacker_ip,victim_ip,victim_port\n";
        out << "dos,100,200,10.0.0.999,10.0.0.2,\n";
        out.close();
        CHECK_THROWS(load_rules_csv(dir.file("addr.csv")));
    }
}

TEST_CASE("label CSV write/read") {
    support::TempDir dir("labels");
    std::vector<PacketLabel> labels(3);
    labels[1].label = 1;
    labels[1].attack_name = "dos";
    labels[1].direction = Direction::forward;
    labels[2].direction = Direction::backward;
    write_labels_csv(dir.file("l.csv"), 7, labels);

    auto m = load_labels_csv(dir.file("l.csv"));
    REQUIRE(m.size() == 3);
    CHECK(m[0] == 0);
    CHECK(m[1] == 1);
    CHECK(m[2] == 0);

    std::ifstream in(dir.file("l.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "capture_id,packet_index,label,attack_name,direction");
    std::getline(in, line);
    CHECK(line == "7,0,0,,none");
    std::getline(in, line);
    CHECK(line == "7,1,1,dos,forward");
}
