#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "adlah/errors.hpp"
#include "adlah/events.hpp"
#include "adlah/hash.hpp"
#include "adlah/sha1.hpp"
#include "adlah/textio.hpp"

namespace adlah {

// ---------------------------------------------------------------------------
// Observation layout. 163 = 6 core + 1 asn + 140 hashed indicators + 5
// activity + 2 time + 1 recency + 8 payload.
// ---------------------------------------------------------------------------
namespace obs {
inline constexpr int kCore = 0;           // 6: flow_duration, bytes_toserver,
                                          //    bytes_toclient, ip_ttl, dest_port, src_port
inline constexpr int kAsn = 6;            // 1
inline constexpr int kSrcCc = 7;          // 32
inline constexpr int kTcpFlags = 39;      // 32
inline constexpr int kFlowState = 71;     // 16
inline constexpr int kEventType = 87;     // 32
inline constexpr int kProto = 119;        // 8
inline constexpr int kPortCat = 127;      // 20
inline constexpr int kActivity = 147;     // 5: ev_5m, ports_5m, protos_5m,
                                          //    targets_5m, syn_ratio_5m
inline constexpr int kTimeSin = 152;
inline constexpr int kTimeCos = 153;
inline constexpr int kTimeSinceLast = 154;  // capped minutes since last event
inline constexpr int kPayload = 155;        // 4 stats + 4 truncated-hash values
inline constexpr int kDim = 163;

inline constexpr int kSrcCcDims = 32;
inline constexpr int kTcpFlagsDims = 32;
inline constexpr int kFlowStateDims = 16;
inline constexpr int kEventTypeDims = 32;
inline constexpr int kProtoDims = 8;
inline constexpr int kPortCatDims = 20;

// Scalar dims that pass through the Welford normalizer. Bounded dims
// (indicators, sin/cos, ratios, hash block) bypass it.
inline constexpr std::array<int, 15> kNormalizedDims = {
    0, 1, 2, 3, 4, 5, 6,            // core + asn
    147, 148, 149, 150, 151,        // activity counts/ratio
    154,                            // time_since_last_min
    155, 156};                      // payload length, payload entropy

inline constexpr const char* kLayoutTag = "obs-v1";
}  // namespace obs

struct Observation {
    std::array<double, obs::kDim> values{};
};

// Fixed-length history fed to the agent: last 10 observations, right-aligned,
// earlier rows zeroed with mask=false.
inline constexpr int kSequenceLength = 10;

struct ObservationSequence {
    std::array<std::array<double, obs::kDim>, kSequenceLength> steps{};
    std::array<bool, kSequenceLength> mask{};
    std::string src_ip;
};

inline ObservationSequence build_sequence(const std::vector<Observation>& history,
                                          const std::string& src_ip = {}) {
    if (history.empty())
        throw ValidationError("build_sequence: history is empty");
    ObservationSequence seq;
    seq.src_ip = src_ip;
    const std::size_t n = std::min<std::size_t>(history.size(), kSequenceLength);
    const std::size_t first = history.size() - n;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t row = kSequenceLength - n + i;
        seq.steps[row] = history[first + i].values;
        seq.mask[row] = true;
    }
    return seq;
}

// ---------------------------------------------------------------------------
// Elementary feature transforms
// ---------------------------------------------------------------------------

// Deterministic slot for a categorical value: stable 64-bit hash of
// "field:value" mod dims. "missing" is a legal value with its own slot.
inline int hashed_indicator(std::string_view field_name, std::string_view value, int dims) {
    if (dims <= 0) throw ValidationError("hashed_indicator: dims must be > 0");
    std::string key;
    key.reserve(field_name.size() + 1 + value.size());
    key.append(field_name);
    key.push_back(':');
    key.append(value);
    return static_cast<int>(fnv1a64(key) % static_cast<std::uint64_t>(dims));
}

// Port slots: named high-value ports get dedicated slots 3-8; everything else
// falls into well-known / registered / dynamic. Slots 9-19 reserved.
inline int port_category(int port) {
    if (port < 0 || port > 65535)
        throw ValidationError("port out of range [0,65535]: " + std::to_string(port));
    switch (port) {
        case 22: return 3;
        case 23: return 4;
        case 80: return 5;
        case 443: return 6;
        case 5060: return 7;
        case 123: return 8;
        default: break;
    }
    if (port <= 1023) return 0;
    if (port <= 49151) return 1;
    return 2;
}

// Time-of-day on the unit circle: angle = 2*pi * (seconds into day / 86400).
inline std::pair<double, double> time_features(SimTime timestamp) {
    const SimTime day = ((timestamp % 86400) + 86400) % 86400;
    const double angle = 2.0 * std::numbers::pi * double(day) / 86400.0;
    return {std::sin(angle), std::cos(angle)};
}

// Greedy LZ77 with a 4 KiB sliding window, minimum match length 3; literals
// cost 1 byte, matches cost 3. Fixed here so compress_ratio golden values
// stay stable.
inline std::size_t lz77_compressed_size(std::string_view data) {
    constexpr std::size_t kWindow = 4096;
    constexpr std::size_t kMinMatch = 3;
    std::size_t cost = 0;
    std::size_t i = 0;
    const std::size_t n = data.size();
    while (i < n) {
        std::size_t best_len = 0;
        const std::size_t lo = i > kWindow ? i - kWindow : 0;
        for (std::size_t j = lo; j < i; ++j) {
            std::size_t len = 0;
            while (i + len < n && data[j + len] == data[i + len]) ++len;
            if (len > best_len) best_len = len;
        }
        if (best_len >= kMinMatch) {
            cost += 3;
            i += best_len;
        } else {
            cost += 1;
            i += 1;
        }
    }
    return cost;
}

struct PayloadStats {
    double length = 0.0;
    double entropy = 0.0;            // Shannon, bits in [0, 8]
    double nonprintable_ratio = 0.0; // bytes outside 0x20..0x7e
    double compress_ratio = 0.0;     // LZ77 size / original size
};

inline PayloadStats payload_stats(std::string_view payload) {
    PayloadStats s;
    if (payload.empty()) return s;
    s.length = double(payload.size());

    std::array<std::size_t, 256> hist{};
    std::size_t nonprintable = 0;
    for (unsigned char c : payload) {
        ++hist[c];
        if (c < 0x20 || c > 0x7e) ++nonprintable;
    }
    for (std::size_t count : hist) {
        if (count == 0) continue;
        const double p = double(count) / double(payload.size());
        s.entropy -= p * std::log2(p);
    }
    s.nonprintable_ratio = double(nonprintable) / double(payload.size());
    s.compress_ratio = double(lz77_compressed_size(payload)) / double(payload.size());
    return s;
}

// SHA-1 of the payload; first 16 digest bytes as four big-endian u32, each
// scaled by 2^-32 into [0,1). Empty payload yields all zeros.
inline std::array<double, 4> payload_hash_block(std::string_view payload) {
    std::array<double, 4> out{};
    if (payload.empty()) return out;
    const auto digest = sha1(payload);
    for (int i = 0; i < 4; ++i) {
        std::uint32_t v = (std::uint32_t(digest[i * 4]) << 24) |
                          (std::uint32_t(digest[i * 4 + 1]) << 16) |
                          (std::uint32_t(digest[i * 4 + 2]) << 8) |
                          std::uint32_t(digest[i * 4 + 3]);
        out[i] = double(v) * 0x1.0p-32;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Online normalization (Welford)
// ---------------------------------------------------------------------------

struct WelfordAccumulator {
    std::uint64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void update(double x) {
        ++count;
        const double delta = x - mean;
        mean += delta / double(count);
        m2 += delta * (x - mean);
    }

    double variance() const {  // population variance
        return count > 0 ? m2 / double(count) : 0.0;
    }
};

class NormalizerState {
  public:
    explicit NormalizerState(double clip_bound = 5.0)
        : clip_bound_(clip_bound), dims_(obs::kDim) {}

    void update(int dim, double x) { acc_at(dim).update(x); }

    // z-score with stddev floored at 1e-6, hard-clipped to +/- clip_bound.
    // Returns 0 until two samples have been seen.
    double normalize(int dim, double x) const {
        const auto& a = acc_at(dim);
        if (a.count < 2) return 0.0;
        const double sd = std::max(std::sqrt(a.variance()), 1e-6);
        const double z = (x - a.mean) / sd;
        return std::clamp(z, -clip_bound_, clip_bound_);
    }

    const WelfordAccumulator& accumulator(int dim) const { return acc_at(dim); }
    double clip_bound() const { return clip_bound_; }

    // Persistence: plain text with hex floats so accumulators round-trip
    // exactly. Loading refuses any layout mismatch.
    void save(std::ostream& os) const {
        os << "adlah-normalizer v1\n";
        os << "layout " << obs::kLayoutTag << "\n";
        os << "dim " << dims_ << "\n";
        char buf[128];
        std::snprintf(buf, sizeof buf, "clip %a\n", clip_bound_);
        os << buf;
        for (int d = 0; d < dims_; ++d) {
            const auto& a = acc_[d];
            std::snprintf(buf, sizeof buf, "%d %llu %a %a\n", d,
                          static_cast<unsigned long long>(a.count), a.mean, a.m2);
            os << buf;
        }
    }

    static NormalizerState load(std::istream& is) {
        std::string magic, version;
        is >> magic >> version;
        if (magic != "adlah-normalizer" || version != "v1")
            throw IoError("normalizer file: bad header '" + magic + " " + version + "'");
        std::string key, layout;
        is >> key >> layout;
        if (key != "layout" || layout != obs::kLayoutTag)
            throw IoError("normalizer file: layout mismatch (have '" + layout +
                          "', want '" + obs::kLayoutTag + "')");
        int dim = 0;
        is >> key >> dim;
        if (key != "dim" || dim != obs::kDim)
            throw IoError("normalizer file: dim mismatch (" + std::to_string(dim) + ")");
        NormalizerState st;
        is >> key;
        if (key != "clip") throw IoError("normalizer file: missing clip bound");
        st.clip_bound_ = textio::read_double(is, "normalizer clip");
        for (int d = 0; d < dim; ++d) {
            int idx;
            unsigned long long count;
            if (!(is >> idx >> count))
                throw IoError("normalizer file: truncated at dim " + std::to_string(d));
            if (idx != d) throw IoError("normalizer file: dim index out of order");
            st.acc_[d].count = count;
            st.acc_[d].mean = textio::read_double(is, "normalizer mean");
            st.acc_[d].m2 = textio::read_double(is, "normalizer m2");
        }
        return st;
    }

    bool operator==(const NormalizerState& o) const {
        if (clip_bound_ != o.clip_bound_) return false;
        for (int d = 0; d < dims_; ++d) {
            if (acc_[d].count != o.acc_[d].count || acc_[d].mean != o.acc_[d].mean ||
                acc_[d].m2 != o.acc_[d].m2)
                return false;
        }
        return true;
    }

  private:
    WelfordAccumulator& acc_at(int dim) {
        if (dim < 0 || dim >= dims_)
            throw ValidationError("normalizer dim out of range: " + std::to_string(dim));
        return acc_[dim];
    }
    const WelfordAccumulator& acc_at(int dim) const {
        return const_cast<NormalizerState*>(this)->acc_at(dim);
    }

    double clip_bound_;
    int dims_;
    std::array<WelfordAccumulator, obs::kDim> acc_{};
};

// ---------------------------------------------------------------------------
// Rolling 5-minute activity window, per source IP
// ---------------------------------------------------------------------------

struct ActivityProfile {
    double ev_5m = 0;
    double ports_5m = 0;
    double protos_5m = 0;
    double targets_5m = 0;
    double syn_ratio_5m = 0;
    double minutes_since_last = 60.0;  // capped; cap applies to first-ever events
};

class RollingWindowState {
  public:
    static constexpr SimTime kWindowSeconds = 300;
    static constexpr double kRecencyCapMinutes = 60.0;

    // Adds the event and returns the activity block including it. The recency
    // value uses the previous event time (cap for an IP's first event).
    ActivityProfile update(const NetworkEvent& e) {
        auto& st = per_ip_[e.src_ip];
        ActivityProfile out;
        if (st.has_last) {
            const double minutes = double(e.timestamp - st.last_event_time) / 60.0;
            out.minutes_since_last = std::min(minutes, kRecencyCapMinutes);
        }
        st.last_event_time = e.timestamp;
        st.has_last = true;

        Entry entry;
        entry.timestamp = e.timestamp;
        entry.dest_port = e.dest_port;
        entry.proto = e.proto;
        entry.dest_ip = "sensor";  // single-sensor simulation: one destination
        entry.is_tcp = e.proto == "tcp";
        entry.is_syn = entry.is_tcp && e.tcp_flag_pattern == "S";
        st.entries.push_back(std::move(entry));

        while (!st.entries.empty() &&
               st.entries.front().timestamp < e.timestamp - kWindowSeconds + 1)
            st.entries.pop_front();

        std::set<int> ports;
        std::set<std::string> protos, targets;
        std::size_t syn = 0, tcp = 0;
        for (const auto& en : st.entries) {
            ports.insert(en.dest_port);
            protos.insert(en.proto);
            targets.insert(en.dest_ip);
            if (en.is_tcp) {
                ++tcp;
                if (en.is_syn) ++syn;
            }
        }
        out.ev_5m = double(st.entries.size());
        out.ports_5m = double(ports.size());
        out.protos_5m = double(protos.size());
        out.targets_5m = double(targets.size());
        out.syn_ratio_5m = tcp > 0 ? double(syn) / double(tcp) : 0.0;
        return out;
    }

    std::size_t tracked_ips() const { return per_ip_.size(); }

  private:
    struct Entry {
        SimTime timestamp;
        int dest_port;
        std::string proto;
        std::string dest_ip;
        bool is_syn;
        bool is_tcp;
    };
    struct PerIp {
        std::deque<Entry> entries;
        SimTime last_event_time = 0;
        bool has_last = false;
    };
    std::map<std::string, PerIp> per_ip_;
};

// ---------------------------------------------------------------------------
// Full observation extraction
// ---------------------------------------------------------------------------

// Fills every block of the observation layout. The window is advanced with
// this event (stats include it); the normalizer is updated with each raw
// scalar before the value is normalized.
inline Observation extract_observation(const NetworkEvent& event, RollingWindowState& window,
                                       NormalizerState& norm) {
    event.validate();

    Observation o;
    const ActivityProfile act = window.update(event);

    auto put_normalized = [&](int dim, double raw) {
        norm.update(dim, raw);
        o.values[dim] = norm.normalize(dim, raw);
    };

    put_normalized(0, event.flow_duration);
    put_normalized(1, double(event.bytes_toserver));
    put_normalized(2, double(event.bytes_toclient));
    put_normalized(3, double(event.ip_ttl));
    put_normalized(4, double(event.dest_port));
    put_normalized(5, double(event.src_port));
    put_normalized(obs::kAsn, double(event.asn));

    auto one_hot = [&](int base, std::string_view field, const std::string& value, int dims) {
        const std::string& v = value.empty() ? std::string("missing") : value;
        o.values[base + hashed_indicator(field, v, dims)] = 1.0;
    };
    one_hot(obs::kSrcCc, "src_cc", event.src_cc, obs::kSrcCcDims);
    one_hot(obs::kTcpFlags, "tcp_flag_pattern", event.tcp_flag_pattern, obs::kTcpFlagsDims);
    one_hot(obs::kFlowState, "flow_state", event.flow_state, obs::kFlowStateDims);
    one_hot(obs::kEventType, "event_type", event.event_type, obs::kEventTypeDims);
    one_hot(obs::kProto, "proto", event.proto, obs::kProtoDims);
    o.values[obs::kPortCat + port_category(event.dest_port)] = 1.0;

    put_normalized(obs::kActivity + 0, act.ev_5m);
    put_normalized(obs::kActivity + 1, act.ports_5m);
    put_normalized(obs::kActivity + 2, act.protos_5m);
    put_normalized(obs::kActivity + 3, act.targets_5m);
    put_normalized(obs::kActivity + 4, act.syn_ratio_5m);

    const auto [s, c] = time_features(event.timestamp);
    o.values[obs::kTimeSin] = s;
    o.values[obs::kTimeCos] = c;
    put_normalized(obs::kTimeSinceLast, act.minutes_since_last);

    const PayloadStats ps = payload_stats(event.payload);
    if (event.payload.empty()) {
        // payload sub-vector stays all zero, including the normalized slots
        norm.update(obs::kPayload + 0, 0.0);
        norm.update(obs::kPayload + 1, 0.0);
    } else {
        put_normalized(obs::kPayload + 0, ps.length);
        put_normalized(obs::kPayload + 1, ps.entropy);
        o.values[obs::kPayload + 2] = ps.nonprintable_ratio;
        o.values[obs::kPayload + 3] = ps.compress_ratio;
        const auto hash_block = payload_hash_block(event.payload);
        for (int i = 0; i < 4; ++i) o.values[obs::kPayload + 4 + i] = hash_block[i];
    }

    return o;
}

}  // namespace adlah
