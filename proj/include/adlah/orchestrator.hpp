#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adlah/agent.hpp"
#include "adlah/errors.hpp"
#include "adlah/events.hpp"
#include "adlah/features.hpp"
#include "adlah/valuation.hpp"

namespace adlah {

// ---------------------------------------------------------------------------
// World types
// ---------------------------------------------------------------------------

enum class PodState { pending, active, expired, terminated };

inline const char* to_string(PodState s) {
    switch (s) {
        case PodState::pending: return "pending";
        case PodState::active: return "active";
        case PodState::expired: return "expired";
        case PodState::terminated: return "terminated";
    }
    return "?";
}

struct PodRecord {
    std::string pod_id;
    std::string src_ip;  // label
    std::string pod_ip;
    PodState state = PodState::pending;
    SimTime created_at = 0;
    SimTime activated_at = 0;
    SimTime last_interaction_at = 0;
    SimTime provisioning_latency = 0;
    SimTime max_ttl = 0;
    std::int64_t accumulated_logs = 0;
    double runtime_cost = 0.0;  // sim-minutes, filled at completion
    std::vector<int> ports;
};

struct ForwardingEntry {
    std::string src_ip;
    std::string pod_ip;
    std::vector<int> ports;
    SimTime installed_at = 0;
    SimTime ttl = 0;

    bool covers(int port) const {
        for (int p : ports)
            if (p == port) return true;
        return false;
    }
};

struct ClusterState {
    double cpu_util = 0.0;
    double mem_util = 0.0;
    int active_pods = 0;  // pending + active (both hold slots)
    int capacity = 0;
};

// wait becomes deploy iff the cluster is underutilized and a slot is free;
// deploy always passes through.
inline int promote_if_underutilized(int action, const ClusterState& cluster,
                                    double threshold = 0.6) {
    if (action == kDeploy) return kDeploy;
    const double util = std::max(cluster.cpu_util, cluster.mem_util);
    if (util < threshold && cluster.active_pods < cluster.capacity) return kDeploy;
    return kWait;
}

struct PolicyConfig {
    std::string variant = "never_deploy";  // rl_agent | threshold | always_deploy |
                                           // never_deploy | random
    int threshold_k = 3;
    double random_p = 0.5;

    void validate() const {
        if (variant != "rl_agent" && variant != "threshold" && variant != "always_deploy" &&
            variant != "never_deploy" && variant != "random")
            throw ConfigError("policy.variant unknown: " + variant);
        if (threshold_k < 1) throw ConfigError("policy.threshold_k must be >= 1");
        if (random_p < 0.0 || random_p > 1.0) throw ConfigError("policy.random_p outside [0,1]");
    }
};

struct OrchestratorConfig {
    int capacity = 8;
    SimTime provisioning_latency = 2;    // pre-warmed pods
    SimTime inactivity_timeout = 1200;   // 20 sim-minutes
    SimTime max_ttl = 3600;
    SimTime wait_silence_timeout = 1800; // ends a wait trajectory
    double cpu_cost_per_pod = 1.0;       // capacity-slot fractions
    double mem_cost_per_pod = 0.8;
    bool promotion_enabled = true;       // rl_agent only
    double promotion_threshold = 0.6;
    QualityMode reward_mode = QualityMode::future;
    double cost_unit = 1.0;              // engagement cost per runtime sim-minute

    void validate() const {
        if (capacity < 1) throw ConfigError("orchestrator.capacity must be >= 1");
        if (provisioning_latency < 0) throw ConfigError("orchestrator.provisioning_latency < 0");
        if (inactivity_timeout <= 0 || max_ttl <= 0 || wait_silence_timeout <= 0)
            throw ConfigError("orchestrator timeouts must be > 0");
    }
};

// One pod engagement, kept for post-run analysis and chain export.
struct SessionRecord {
    std::string session_id;
    std::string src_ip;
    SimTime start = 0;
    SimTime end = 0;
    int dest_port = 0;
    std::string proto;
    std::vector<InteractionLog> logs;
    double anomaly_score = 0.0;
};

inline std::string ingress_proto_name(int port) {
    switch (port) {
        case 22: return "SSH";
        case 23: case 2323: return "TELNET";
        case 80: case 8080: return "HTTP";
        case 443: return "HTTPS";
        case 5060: return "SIP";
        default: return "TCP";
    }
}

inline nlohmann::json to_json(const SessionRecord& s) {
    nlohmann::json commands = nlohmann::json::array();
    for (const auto& log : s.logs)
        commands.push_back(nlohmann::json{{"t", log.timestamp}, {"cmd", log.command}});
    return nlohmann::json{{"session_id", s.session_id}, {"src_ip", s.src_ip},
                          {"start", s.start},           {"end", s.end},
                          {"dest_port", s.dest_port},   {"proto", s.proto},
                          {"anomaly_score", s.anomaly_score}, {"commands", commands}};
}

inline SessionRecord session_from_json(const nlohmann::json& j) {
    SessionRecord s;
    try {
        s.session_id = j.at("session_id").get<std::string>();
        s.src_ip = j.at("src_ip").get<std::string>();
        s.start = j.at("start").get<SimTime>();
        s.end = j.at("end").get<SimTime>();
        s.dest_port = j.at("dest_port").get<int>();
        s.proto = j.at("proto").get<std::string>();
        s.anomaly_score = j.at("anomaly_score").get<double>();
        for (const auto& c : j.at("commands"))
            s.logs.push_back({c.at("t").get<SimTime>(), s.src_ip,
                              c.at("cmd").get<std::string>()});
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError(std::string("session record: ") + ex.what());
    }
    return s;
}

inline void write_sessions_jsonl(std::ostream& os, const std::vector<SessionRecord>& sessions) {
    for (const auto& s : sessions) os << to_json(s).dump() << "\n";
}

inline std::vector<SessionRecord> read_sessions_jsonl(std::istream& is) {
    std::vector<SessionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(session_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& ex) {
            throw IoError("sessions line " + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

// Effects emitted by step(); primarily consumed by tests and metrics.
enum class EffectKind {
    observed,        // feature extraction ran
    routed,          // delivered to an active pod
    suppressed,      // live pod claim, event not routed (pending or port gap)
    decided_wait,
    decided_deploy,
    promoted,        // wait promoted to deploy by the utilization heuristic
    pod_created,
    deploy_skipped,  // resource pressure
    pod_activated,
    pod_expired,
    transition_completed,
};

struct Effect {
    EffectKind kind;
    std::string src_ip;
    SimTime time = 0;
    double value = 0.0;  // reward for transition_completed, L for pod_expired
};

struct Metrics {
    std::uint64_t events = 0;
    std::uint64_t routed_events = 0;
    std::uint64_t observations = 0;
    std::uint64_t decisions = 0;
    std::uint64_t deploys = 0;  // pods actually created
    std::uint64_t skips = 0;
    std::uint64_t promoted = 0;
    std::uint64_t completed_deployments = 0;
    std::uint64_t engaged_deployments = 0;  // completed with L > 0
    double total_runtime_cost_minutes = 0.0;
    double cumulative_reward = 0.0;
    std::vector<double> time_to_redirect;
    // per profile-kind decision counts: kind -> (decisions, deploy decisions)
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> per_kind;
    // deploy-decision quality vs ground-truth engagement labels (per IP)
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double train_loss_sum = 0.0;
    std::uint64_t train_loss_count = 0;
    double final_epsilon = 0.0;

    double deployment_efficiency() const {
        return completed_deployments ? double(engaged_deployments) / double(completed_deployments)
                                     : 0.0;
    }
    double mean_time_to_redirect() const {
        if (time_to_redirect.empty()) return 0.0;
        double s = 0.0;
        for (double v : time_to_redirect) s += v;
        return s / double(time_to_redirect.size());
    }
    double median_time_to_redirect() const {
        if (time_to_redirect.empty()) return 0.0;
        std::vector<double> v = time_to_redirect;
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
    double cost_per_engagement() const {
        return engaged_deployments ? total_runtime_cost_minutes / double(engaged_deployments)
                                   : 0.0;
    }
    double precision() const { return tp + fp ? double(tp) / double(tp + fp) : 0.0; }
    double recall() const { return tp + fn ? double(tp) / double(tp + fn) : 0.0; }

    nlohmann::json to_json() const {
        nlohmann::json per_kind_json = nlohmann::json::object();
        for (const auto& [kind, counts] : per_kind)
            per_kind_json[kind] = {{"decisions", counts.first},
                                   {"deploy_decisions", counts.second},
                                   {"deploy_rate", counts.first ? double(counts.second) /
                                                                      double(counts.first)
                                                                : 0.0}};
        return nlohmann::json{
            {"events", events},
            {"routed_events", routed_events},
            {"observations", observations},
            {"decisions", decisions},
            {"deploys", deploys},
            {"skips", skips},
            {"promoted", promoted},
            {"completed_deployments", completed_deployments},
            {"engaged_deployments", engaged_deployments},
            {"deployment_efficiency", deployment_efficiency()},
            {"mean_time_to_redirect", mean_time_to_redirect()},
            {"median_time_to_redirect", median_time_to_redirect()},
            {"total_runtime_cost_minutes", total_runtime_cost_minutes},
            {"cost_per_engagement", cost_per_engagement()},
            {"cumulative_reward", cumulative_reward},
            {"per_kind", per_kind_json},
            {"precision", precision()},
            {"recall", recall()},
            {"mean_train_loss",
             train_loss_count ? train_loss_sum / double(train_loss_count) : 0.0},
            {"final_epsilon", final_epsilon}};
    }
};

// ---------------------------------------------------------------------------
// The event loop
// ---------------------------------------------------------------------------

class Orchestrator {
  public:
    Orchestrator(OrchestratorConfig cfg, RewardConfig reward_cfg, PolicyConfig policy,
                 const std::vector<AttackerProfile>& profiles, std::uint64_t seed)
        : cfg_(cfg), reward_cfg_(reward_cfg), policy_(policy), profiles_(profiles),
          seed_(seed), policy_rng_(stream_seed(seed, "policy")),
          rolling_lbar_(reward_cfg.rolling_window),
          autoencoder_own_(stream_seed(seed, "autoencoder")),
          autoencoder_(&autoencoder_own_), normalizer_own_(),
          normalizer_(&normalizer_own_) {
        cfg_.validate();
        reward_cfg_.validate();
        policy_.validate();
        const auto ips = assign_src_ips(profiles_);
        for (std::size_t i = 0; i < profiles_.size(); ++i) profile_by_ip_[ips[i]] = i;
    }

    // Long-lived learning state may be shared across episodes.
    void attach_agent(Agent* agent, ReplayBuffer* replay, bool train, int train_every = 1) {
        agent_ = agent;
        replay_ = replay;
        train_ = train;
        train_every_ = std::max(1, train_every);
    }
    void attach_normalizer(NormalizerState* norm) { normalizer_ = norm; }
    void attach_autoencoder(Autoencoder* ae) { autoencoder_ = ae; }

    const std::map<std::string, PodRecord>& live_pods() const { return pods_; }
    const std::map<std::string, ForwardingEntry>& forwarding() const { return forwarding_; }
    const std::vector<SessionRecord>& sessions() const { return sessions_; }
    const Metrics& metrics() const { return metrics_; }
    SimTime now() const { return now_; }

    ClusterState cluster() const {
        ClusterState c;
        c.capacity = cfg_.capacity;
        c.active_pods = int(pods_.size());
        c.cpu_util = std::min(1.0, double(c.active_pods) * cfg_.cpu_cost_per_pod /
                                       double(cfg_.capacity));
        c.mem_util = std::min(1.0, double(c.active_pods) * cfg_.mem_cost_per_pod /
                                       double(cfg_.capacity));
        return c;
    }

    // Processes one sensor event. Events must arrive in timestamp order.
    std::vector<Effect> step(const NetworkEvent& event) {
        if (event.timestamp < now_)
            throw ConsistencyError("step: out-of-order event at t=" +
                                   std::to_string(event.timestamp) + " (now " +
                                   std::to_string(now_) + ")");
        effects_.clear();
        advance_to(event.timestamp);
        now_ = event.timestamp;
        ++metrics_.events;

        auto& ip = ip_state_[event.src_ip];
        ip.last_event_time = now_;
        ++ip.silence_token;  // cancels any scheduled silence completion

        auto pod_it = pods_.find(event.src_ip);
        if (pod_it != pods_.end()) {
            // Live claim: the trajectory is suspended until the deployment
            // completes. Route to the pod when it is up and the port is
            // covered; the rolling window still tracks the activity.
            windows_.update(event);
            PodRecord& pod = pod_it->second;
            const auto fwd = forwarding_.find(event.src_ip);
            if (pod.state == PodState::active && fwd != forwarding_.end() &&
                fwd->second.covers(event.dest_port)) {
                ++metrics_.routed_events;
                emit(EffectKind::routed, event.src_ip);
            } else {
                emit(EffectKind::suppressed, event.src_ip);
            }
            return effects_;
        }

        // Observation path
        const Observation obs = extract_observation(event, windows_, *normalizer_);
        ++metrics_.observations;
        ip.history.push_back(obs);
        if (ip.history.size() > std::size_t(kSequenceLength))
            ip.history.erase(ip.history.begin());
        ++ip.observed_events;
        emit(EffectKind::observed, event.src_ip);

        const AgentState state = make_state(ip.history, event.src_ip);

        // A pending wait transition completes with the newly observed state.
        if (ip.pending_wait) {
            Transition t = std::move(*ip.pending_wait);
            ip.pending_wait.reset();
            t.next_state = state;
            t.reward = 0.0;
            t.done = false;
            t.pending = false;
            deliver(std::move(t), event.src_ip);
        }

        // Decide
        int action = decide(ip, state);
        ++metrics_.decisions;
        const std::string kind = kind_of(event.src_ip);
        auto& kc = metrics_.per_kind[kind];
        ++kc.first;

        if (policy_.variant == "rl_agent" && cfg_.promotion_enabled && action == kWait) {
            // the heuristic is part of the RL event loop; static baselines
            // run exactly the policy they claim to be
            const int promoted_action =
                promote_if_underutilized(action, cluster(), cfg_.promotion_threshold);
            if (promoted_action != action) {
                action = promoted_action;
                ++metrics_.promoted;
                emit(EffectKind::promoted, event.src_ip);
            }
        }

        if (action == kDeploy) {
            ++kc.second;
            emit(EffectKind::decided_deploy, event.src_ip);
            deploy(event, state);
        } else {
            emit(EffectKind::decided_wait, event.src_ip);
            Transition t;
            t.state = state;
            t.action = kWait;
            t.pending = true;
            ip.pending_wait = std::move(t);
            schedule(now_ + cfg_.wait_silence_timeout, ItemKind::silence_check, event.src_ip,
                     {}, ip.silence_token);
        }

        if (agent_ && train_) {
            agent_->decay_epsilon();
            if (metrics_.decisions % std::uint64_t(train_every_) == 0) try_train();
        }
        return effects_;
    }

    // Advances the simulated clock, firing scheduled pod activations,
    // interactions, expiry checks and silence completions up to and
    // including time t.
    void advance_to(SimTime t) {
        while (!schedule_.empty() && schedule_.top().time <= t) {
            const ScheduledItem item = schedule_.top();
            schedule_.pop();
            switch (item.kind) {
                case ItemKind::activate: on_activate(item); break;
                case ItemKind::expiry_check: on_expiry_check(item); break;
                case ItemKind::interaction: on_interaction(item); break;
                case ItemKind::silence_check: on_silence_check(item); break;
            }
        }
        if (t > now_) now_ = t;
    }

    // End-of-run flush: everything still live completes so that each deploy
    // or skip yields exactly one reward.
    void finish(SimTime end_time) {
        advance_to(end_time);
        std::vector<std::string> live;
        for (const auto& [ip, pod] : pods_) live.push_back(ip);
        for (const auto& ip : live) expire_pod(ip, end_time, true);
        for (auto& [ip, st] : ip_state_) {
            if (st.pending_wait) {
                Transition t = std::move(*st.pending_wait);
                st.pending_wait.reset();
                t.next_state = t.state;
                t.reward = 0.0;
                t.done = true;
                t.pending = false;
                deliver(std::move(t), ip);
            }
        }
        finalize_ground_truth();
        if (agent_) metrics_.final_epsilon = agent_->epsilon();
    }

    // Runs a whole trace and settles everything at end_time (events past the
    // horizon would belong to the next episode).
    Metrics run_episode(const EventTrace& trace, SimTime end_time) {
        for (const auto& e : trace.events) step(e);
        finish(end_time);
        return metrics_;
    }

    // timestamp,active_pods,cpu_util,deploys,cumulative_reward rows appended
    // at every decision and completion.
    const std::vector<std::string>& timeseries() const { return timeseries_; }

  private:
    enum class ItemKind { activate = 0, expiry_check = 1, interaction = 2, silence_check = 3 };

    struct ScheduledItem {
        SimTime time;
        int kind_order;
        std::uint64_t seq;
        ItemKind kind;
        std::string src_ip;
        std::string command;
        std::uint64_t token;  // silence checks
        SimTime log_time;     // interactions

        bool operator>(const ScheduledItem& o) const {
            if (time != o.time) return time > o.time;
            if (kind_order != o.kind_order) return kind_order > o.kind_order;
            return seq > o.seq;
        }
    };

    struct IpState {
        std::vector<Observation> history;
        std::optional<Transition> pending_wait;
        SimTime last_event_time = 0;
        std::uint64_t silence_token = 0;
        std::uint64_t observed_events = 0;
        bool ever_deployed = false;
    };

    void schedule(SimTime time, ItemKind kind, const std::string& src_ip,
                  const std::string& command, std::uint64_t token = 0, SimTime log_time = 0) {
        schedule_.push(ScheduledItem{time, int(kind), schedule_seq_++, kind, src_ip, command,
                                     token, log_time});
    }

    void emit(EffectKind kind, const std::string& src_ip, double value = 0.0) {
        effects_.push_back(Effect{kind, src_ip, now_, value});
    }

    std::string kind_of(const std::string& src_ip) const {
        auto it = profile_by_ip_.find(src_ip);
        if (it == profile_by_ip_.end()) return "unknown";
        return to_string(profiles_[it->second].kind);
    }

    const AttackerProfile* profile_of(const std::string& src_ip) const {
        auto it = profile_by_ip_.find(src_ip);
        return it == profile_by_ip_.end() ? nullptr : &profiles_[it->second];
    }

    AgentState make_state(const std::vector<Observation>& history,
                          const std::string& src_ip) const {
        const ObservationSequence seq = build_sequence(history, src_ip);
        AgentState s;
        s.seq.reserve(std::size_t(kSequenceLength) * obs::kDim);
        for (const auto& row : seq.steps) s.seq.insert(s.seq.end(), row.begin(), row.end());
        s.mask.assign(seq.mask.begin(), seq.mask.end());
        const ClusterState c = cluster();
        s.runtime = {c.cpu_util, c.mem_util,
                     double(c.active_pods) / double(std::max(1, c.capacity))};
        return s;
    }

    int decide(const IpState& ip, const AgentState& state) {
        if (policy_.variant == "always_deploy") return kDeploy;
        if (policy_.variant == "never_deploy") return kWait;
        if (policy_.variant == "random")
            return policy_rng_.bernoulli(policy_.random_p) ? kDeploy : kWait;
        if (policy_.variant == "threshold")
            return ip.observed_events >= std::uint64_t(policy_.threshold_k) ? kDeploy : kWait;
        if (!agent_)
            throw ConsistencyError("policy rl_agent requires an attached agent");
        return agent_->select_action(state, train_ ? agent_->epsilon() : 0.0);
    }

    void deploy(const NetworkEvent& trigger, const AgentState& state) {
        const std::string& src_ip = trigger.src_ip;
        if (pods_.count(src_ip)) return;  // idempotent: one live pod per IP

        if (int(pods_.size()) >= cfg_.capacity) {
            ++metrics_.skips;
            emit(EffectKind::deploy_skipped, src_ip);
            Transition t;
            t.state = state;
            t.action = kDeploy;
            t.next_state = state;
            t.reward = terminal_penalty(TerminalKind::resource_skip, reward_cfg_);
            t.done = true;
            t.pending = false;
            deliver(std::move(t), src_ip);
            return;
        }

        PodRecord pod;
        pod.pod_id = "pod-" + std::to_string(pod_counter_);
        pod.pod_ip = "10.42.0." + std::to_string(2 + pod_counter_ % 250);
        ++pod_counter_;
        pod.src_ip = src_ip;
        pod.state = PodState::pending;
        pod.created_at = now_;
        pod.provisioning_latency = cfg_.provisioning_latency;
        pod.max_ttl = cfg_.max_ttl;
        pod.last_interaction_at = now_;
        const AttackerProfile* prof = profile_of(src_ip);
        pod.ports = prof && !prof->port_pool.empty() ? prof->port_pool
                                                     : std::vector<int>{trigger.dest_port};
        if (std::find(pod.ports.begin(), pod.ports.end(), trigger.dest_port) == pod.ports.end())
            pod.ports.push_back(trigger.dest_port);

        ForwardingEntry fwd;
        fwd.src_ip = src_ip;
        fwd.pod_ip = pod.pod_ip;
        fwd.ports = pod.ports;
        fwd.installed_at = now_;
        fwd.ttl = cfg_.max_ttl;
        forwarding_[src_ip] = std::move(fwd);

        Transition t;
        t.state = state;
        t.action = kDeploy;
        t.pending = true;
        pending_deploy_[src_ip] = PendingDeploy{std::move(t), now_, trigger.dest_port};

        schedule(now_ + cfg_.provisioning_latency, ItemKind::activate, src_ip, {});
        pods_[src_ip] = std::move(pod);
        ++metrics_.deploys;
        ip_state_[src_ip].ever_deployed = true;
        emit(EffectKind::pod_created, src_ip);
        timeseries_row();
    }

    void on_activate(const ScheduledItem& item) {
        auto it = pods_.find(item.src_ip);
        if (it == pods_.end() || it->second.state != PodState::pending) return;
        PodRecord& pod = it->second;
        now_ = std::max(now_, item.time);
        pod.state = PodState::active;
        pod.activated_at = item.time;
        pod.last_interaction_at = item.time;

        auto pd = pending_deploy_.find(item.src_ip);
        int trigger_port = pod.ports.empty() ? 0 : pod.ports.front();
        if (pd != pending_deploy_.end()) {
            metrics_.time_to_redirect.push_back(double(item.time - pd->second.decided_at));
            trigger_port = pd->second.trigger_port;
        }

        SessionRecord sess;
        sess.session_id = "sess-" + std::to_string(session_counter_++);
        sess.src_ip = item.src_ip;
        sess.start = item.time;
        sess.dest_port = trigger_port;
        sess.proto = ingress_proto_name(trigger_port);
        open_sessions_[item.src_ip] = std::move(sess);

        // The attacker's pod-side behavior is known up front (deterministic
        // replay); commands land on the schedule and the inactivity clock
        // decides how far they get.
        const AttackerProfile* prof = profile_of(item.src_ip);
        if (prof && prof->engages()) {
            const auto logs = engagement_logs(*prof, item.time, item.time + cfg_.max_ttl,
                                              stream_seed(seed_, "pods"));
            for (const auto& log : logs)
                schedule(log.timestamp, ItemKind::interaction, item.src_ip, log.command, 0,
                         log.timestamp);
        }
        schedule(item.time + cfg_.inactivity_timeout, ItemKind::expiry_check, item.src_ip, {});
        schedule(pod.created_at + cfg_.max_ttl, ItemKind::expiry_check, item.src_ip, {});
    }

    void on_interaction(const ScheduledItem& item) {
        auto it = pods_.find(item.src_ip);
        if (it == pods_.end() || it->second.state != PodState::active) return;
        PodRecord& pod = it->second;
        now_ = std::max(now_, item.time);
        pod.accumulated_logs += 1;
        pod.last_interaction_at = item.time;
        auto sess = open_sessions_.find(item.src_ip);
        if (sess != open_sessions_.end())
            sess->second.logs.push_back({item.log_time, item.src_ip, item.command});
        schedule(item.time + cfg_.inactivity_timeout, ItemKind::expiry_check, item.src_ip, {});
    }

    void on_expiry_check(const ScheduledItem& item) {
        auto it = pods_.find(item.src_ip);
        if (it == pods_.end() || it->second.state != PodState::active) return;
        const PodRecord& pod = it->second;
        const bool idle = item.time - pod.last_interaction_at >= cfg_.inactivity_timeout;
        const bool aged = item.time - pod.created_at >= cfg_.max_ttl;
        if (idle || aged) {
            now_ = std::max(now_, item.time);
            expire_pod(item.src_ip, item.time, false);
        }
    }

    void on_silence_check(const ScheduledItem& item) {
        auto ip_it = ip_state_.find(item.src_ip);
        if (ip_it == ip_state_.end()) return;
        IpState& ip = ip_it->second;
        if (!ip.pending_wait || ip.silence_token != item.token) return;
        now_ = std::max(now_, item.time);
        Transition t = std::move(*ip.pending_wait);
        ip.pending_wait.reset();
        t.next_state = t.state;
        t.reward = 0.0;
        t.done = true;  // trajectory ends after prolonged silence under wait
        t.pending = false;
        deliver(std::move(t), item.src_ip);
    }

    void expire_pod(const std::string& src_ip, SimTime at, bool forced) {
        auto it = pods_.find(src_ip);
        if (it == pods_.end()) return;
        PodRecord pod = std::move(it->second);
        pods_.erase(it);
        forwarding_.erase(src_ip);

        pod.state = forced ? PodState::terminated : PodState::expired;
        const SimTime active_since =
            pod.activated_at > 0 ? pod.activated_at : pod.created_at;
        const SimTime end = std::max(at, active_since);
        pod.runtime_cost = double(end - active_since) / 60.0;

        // close the session and score it
        std::vector<double> scores;
        auto sess_it = open_sessions_.find(src_ip);
        if (sess_it != open_sessions_.end()) {
            SessionRecord sess = std::move(sess_it->second);
            open_sessions_.erase(sess_it);
            sess.end = end;
            if (!sess.logs.empty()) {
                const SessionFeatureVector feats = build_session_features(sess.logs);
                sess.anomaly_score = autoencoder_->anomaly_score(feats);
                autoencoder_->online_update(feats);
                scores.push_back(sess.anomaly_score);
                sessions_.push_back(std::move(sess));
            }
        }

        // reward attribution
        const std::int64_t L = pod.accumulated_logs;
        const int port = pod.ports.empty() ? 0 : pod.ports.front();
        double reward;
        if (L == 0) {
            reward = terminal_penalty(TerminalKind::inactivity_timeout, reward_cfg_);
        } else {
            RewardConfig rc = reward_cfg_;
            if (rc.rolling_l_bar) rc.l_bar = rolling_lbar_.l_bar(port, rc.l_bar);
            reward = quality_reward(L, scores, rc, cfg_.reward_mode,
                                    pod.runtime_cost * cfg_.cost_unit);
        }
        rolling_lbar_.record(port, L);

        auto pd = pending_deploy_.find(src_ip);
        if (pd == pending_deploy_.end())
            throw ConsistencyError("expire: no pending transition for " + src_ip);
        Transition t = std::move(pd->second.transition);
        pending_deploy_.erase(pd);
        t.next_state = t.state;  // terminal; contents are irrelevant
        t.reward = reward;
        t.done = true;
        t.pending = false;

        ++metrics_.completed_deployments;
        if (L > 0) ++metrics_.engaged_deployments;
        metrics_.total_runtime_cost_minutes += pod.runtime_cost;
        emit(EffectKind::pod_expired, src_ip, double(L));
        deliver(std::move(t), src_ip);
        timeseries_row();
    }

    void deliver(Transition t, const std::string& src_ip) {
        metrics_.cumulative_reward += t.reward;
        emit(EffectKind::transition_completed, src_ip, t.reward);
        if (agent_ && train_ && replay_) replay_->push(std::move(t));
    }

    void try_train() {
        if (!agent_ || !replay_) return;
        if (auto loss = agent_->train_step(*replay_)) {
            metrics_.train_loss_sum += *loss;
            ++metrics_.train_loss_count;
        }
    }

    void finalize_ground_truth() {
        for (const auto& [ip, st] : ip_state_) {
            const AttackerProfile* prof = profile_of(ip);
            const bool engaging = prof && prof->engages();
            if (st.ever_deployed) {
                engaging ? ++metrics_.tp : ++metrics_.fp;
            } else {
                engaging ? ++metrics_.fn : ++metrics_.tn;
            }
        }
    }

    void timeseries_row() {
        const ClusterState c = cluster();
        timeseries_.push_back(std::to_string(now_) + "," + std::to_string(c.active_pods) + "," +
                              std::to_string(c.cpu_util) + "," +
                              std::to_string(metrics_.deploys) + "," +
                              std::to_string(metrics_.cumulative_reward));
    }

    struct PendingDeploy {
        Transition transition;
        SimTime decided_at = 0;
        int trigger_port = 0;
    };

    OrchestratorConfig cfg_;
    RewardConfig reward_cfg_;
    PolicyConfig policy_;
    std::vector<AttackerProfile> profiles_;
    std::uint64_t seed_;
    Rng policy_rng_;
    RollingLbar rolling_lbar_;

    Autoencoder autoencoder_own_;
    Autoencoder* autoencoder_;
    NormalizerState normalizer_own_;
    NormalizerState* normalizer_;

    Agent* agent_ = nullptr;
    ReplayBuffer* replay_ = nullptr;
    bool train_ = false;
    int train_every_ = 1;

    std::map<std::string, std::size_t> profile_by_ip_;
    std::map<std::string, IpState> ip_state_;
    std::map<std::string, PodRecord> pods_;  // live (pending/active) pods only
    std::map<std::string, ForwardingEntry> forwarding_;
    std::map<std::string, PendingDeploy> pending_deploy_;
    std::map<std::string, SessionRecord> open_sessions_;
    std::vector<SessionRecord> sessions_;
    RollingWindowState windows_;

    std::priority_queue<ScheduledItem, std::vector<ScheduledItem>, std::greater<>> schedule_;
    std::uint64_t schedule_seq_ = 0;
    std::uint64_t pod_counter_ = 0;
    std::uint64_t session_counter_ = 0;

    SimTime now_ = 0;
    Metrics metrics_;
    std::vector<Effect> effects_;
    std::vector<std::string> timeseries_;
};

}  // namespace adlah
