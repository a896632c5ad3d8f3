#include "catch_amalgamated.hpp"

#include <sstream>

#include "adlah/events.hpp"

using namespace adlah;

namespace {

AttackerProfile quiet_profile(double rate = 0.0) {
    AttackerProfile p;
    p.profile_id = "q0";
    p.kind = ProfileKind::quiet;
    p.event_rate = rate;
    p.burst_length = 1;
    p.port_pool = {53};
    return p;
}

AttackerProfile scripted(const std::string& id, std::vector<std::string> script) {
    AttackerProfile p;
    p.profile_id = id;
    p.kind = ProfileKind::scripted_bot;
    p.event_rate = 10.0 / 1440.0;
    p.burst_length = 2;
    p.port_pool = {23};
    p.engagement_script = std::move(script);
    return p;
}

std::string dump(const EventTrace& t) {
    std::ostringstream os;
    write_trace_jsonl(os, t);
    return os.str();
}

}  // namespace

TEST_CASE("generate_trace basics") {
    SECTION("zero-rate profile yields an empty trace") {
        const EventTrace t = generate_trace({quiet_profile(0.0)}, 3600, 7);
        CHECK(t.events.empty());
    }
    SECTION("empty profile list is a configuration error") {
        CHECK_THROWS_AS(generate_trace({}, 3600, 1), ConfigError);
    }
    SECTION("non-positive horizon is a configuration error") {
        CHECK_THROWS_AS(generate_trace({quiet_profile()}, 0, 1), ConfigError);
        CHECK_THROWS_AS(generate_trace({quiet_profile()}, -5, 1), ConfigError);
    }
    SECTION("same seed, same profiles: byte-identical traces") {
        const auto profiles = default_profiles(60);
        const EventTrace a = generate_trace(profiles, 86400, 42);
        const EventTrace b = generate_trace(profiles, 86400, 42);
        CHECK(dump(a) == dump(b));
        const EventTrace c = generate_trace(profiles, 86400, 43);
        CHECK(dump(a) != dump(c));
    }
}

TEST_CASE("per-profile streams are independent") {
    // adding a profile must not perturb the events of the existing ones
    auto p1 = scripted("bot-a", {"x"});
    auto p2 = scripted("bot-b", {"y"});
    auto p3 = scripted("bot-c", {"z"});
    p1.event_rate = p2.event_rate = p3.event_rate = 60.0 / 1440.0;

    const EventTrace two = generate_trace({p1, p2}, 86400, 5);
    const EventTrace three = generate_trace({p1, p2, p3}, 86400, 5);

    const auto ips = assign_src_ips({p1, p2, p3});
    auto filter = [&](const EventTrace& t, const std::string& ip) {
        std::ostringstream os;
        for (const auto& e : t.events)
            if (e.src_ip == ip) os << to_json(e).dump() << "\n";
        return os.str();
    };
    CHECK(filter(two, ips[0]) == filter(three, ips[0]));
    CHECK(filter(two, ips[1]) == filter(three, ips[1]));
    CHECK_FALSE(filter(three, ips[2]).empty());
}

TEST_CASE("default mix calibration: median per-IP daily events near 4") {
    const auto profiles = default_profiles(400);
    const EventTrace t = generate_trace(profiles, 86400, 11);
    std::map<std::string, std::size_t> per_ip;
    for (const auto& e : t.events) ++per_ip[e.src_ip];
    REQUIRE_FALSE(per_ip.empty());
    std::vector<double> counts;
    for (const auto& [ip, n] : per_ip) counts.push_back(double(n));
    std::sort(counts.begin(), counts.end());
    const double median = counts.size() % 2
                              ? counts[counts.size() / 2]
                              : 0.5 * (counts[counts.size() / 2 - 1] + counts[counts.size() / 2]);
    INFO("median per-IP events: " << median);
    CHECK(median >= 2.0);
    CHECK(median <= 6.0);
}

TEST_CASE("generated field values satisfy the event invariants (10^4 events)") {
    auto profiles = default_profiles(50);
    for (auto& p : profiles) p.event_rate *= 60.0;  // crank the rates for volume
    const EventTrace t = generate_trace(profiles, 86400, 3);
    REQUIRE(t.events.size() >= 10000);
    SimTime prev = std::numeric_limits<SimTime>::min();
    const auto ips = assign_src_ips(profiles);
    const std::set<std::string> known(ips.begin(), ips.end());
    for (const auto& e : t.events) {
        CHECK_NOTHROW(e.validate());
        CHECK(e.timestamp >= prev);
        prev = e.timestamp;
        CHECK(known.count(e.src_ip) == 1);
    }
}

TEST_CASE("engagement_logs") {
    SECTION("scanners never engage") {
        AttackerProfile p;
        p.profile_id = "s";
        p.kind = ProfileKind::scanner;
        p.event_rate = 1.0;
        p.burst_length = 3;
        p.port_pool = {80};
        CHECK(engagement_logs(p, 0, 100000, 1).empty());
        CHECK(engagement_logs(p, 5, 6, 99).empty());
    }
    SECTION("script length forces the log count over a full window") {
        const auto p = scripted("b", {"c1", "c2", "c3", "c4", "c5", "c6"});
        const auto logs = engagement_logs(p, 1000, 1000 + 3600, 7);
        REQUIRE(logs.size() == 6);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(logs[i].command == p.engagement_script[i]);
            CHECK(logs[i].timestamp >= 1000);
            CHECK(logs[i].timestamp < 1000 + 3600);
            if (i > 0) CHECK(logs[i].timestamp >= logs[i - 1].timestamp);
        }
    }
    SECTION("truncated window cuts the replay short") {
        const auto p = scripted("b", {"c1", "c2", "c3", "c4", "c5", "c6"});
        const auto full = engagement_logs(p, 1000, 1000 + 3600, 7);
        // replay the same schedule against a window that closes after c3
        const SimTime cutoff = full[3].timestamp;
        const auto cut = engagement_logs(p, 1000, cutoff, 7);
        REQUIRE(cut.size() == 3);
        for (std::size_t i = 0; i < cut.size(); ++i) {
            CHECK(cut[i].command == full[i].command);
            CHECK(cut[i].timestamp == full[i].timestamp);
        }
    }
    SECTION("persistent bots loop until the window closes") {
        AttackerProfile p;
        p.profile_id = "pb";
        p.kind = ProfileKind::persistent_bot;
        p.event_rate = 1.0 / 1440.0;
        p.burst_length = 1;
        p.port_pool = {22};
        p.engagement_script = {"a", "b"};
        const auto logs = engagement_logs(p, 0, 3600, 1);
        CHECK(logs.size() > 4);  // more than one pass
        CHECK(logs.back().timestamp < 3600);
    }
    SECTION("deterministic in (profile, window, seed)") {
        const auto p = scripted("b", {"c1", "c2"});
        const auto a = engagement_logs(p, 50, 4000, 9);
        const auto b = engagement_logs(p, 50, 4000, 9);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].timestamp == b[i].timestamp);
            CHECK(a[i].command == b[i].command);
        }
    }
    SECTION("bad window is rejected") {
        const auto p = scripted("b", {"c"});
        CHECK_THROWS_AS(engagement_logs(p, 10, 10, 1), ValidationError);
    }
}

TEST_CASE("profile invariants") {
    AttackerProfile p;
    p.profile_id = "x";
    p.kind = ProfileKind::scanner;
    p.event_rate = 1.0;
    p.burst_length = 1;
    p.engagement_script = {"oops"};  // scanners must not carry scripts
    CHECK_THROWS_AS(p.validate(), ValidationError);

    p.engagement_script.clear();
    p.kind = ProfileKind::scripted_bot;  // bots must carry one
    CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("trace JSONL round-trip") {
    auto profiles = default_profiles(40);
    const EventTrace t = generate_trace(profiles, 86400, 21);
    REQUIRE_FALSE(t.events.empty());

    std::stringstream ss;
    write_trace_jsonl(ss, t);
    const EventTrace back = read_trace_jsonl(ss);
    REQUIRE(back.events.size() == t.events.size());
    CHECK(dump(back) == dump(t));  // byte-identical re-serialization

    SECTION("binary payload survives the base64 leg") {
        NetworkEvent e = t.events[0];
        e.payload.clear();
        for (int i = 0; i < 256; ++i) e.payload += char(i);
        const NetworkEvent round = event_from_json(to_json(e));
        CHECK(round.payload == e.payload);
    }

    SECTION("decreasing timestamps are rejected on read") {
        std::stringstream bad;
        NetworkEvent e = t.events[0];
        e.timestamp = 100;
        bad << to_json(e).dump() << "\n";
        e.timestamp = 50;
        bad << to_json(e).dump() << "\n";
        CHECK_THROWS_AS(read_trace_jsonl(bad), ValidationError);
    }

    SECTION("malformed json names the line") {
        std::stringstream bad("not json\n");
        CHECK_THROWS_WITH(read_trace_jsonl(bad), Catch::Matchers::ContainsSubstring("line 1"));
    }
}

TEST_CASE("source ip assignment is stable and collision-free") {
    auto profiles = default_profiles(500);
    const auto ips = assign_src_ips(profiles);
    std::set<std::string> uniq(ips.begin(), ips.end());
    CHECK(uniq.size() == profiles.size());
    // stable: independent of the other profiles (absent hash collisions)
    for (std::size_t i = 0; i < 10; ++i) {
        const auto solo = assign_src_ips({profiles[i]});
        CHECK(solo[0] == ips[i]);
    }
}
