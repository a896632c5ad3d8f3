#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "adlah/chains.hpp"
#include "adlah/config.hpp"
#include "adlah/orchestrator.hpp"

// Command implementations behind the CLI binary. They are plain functions so
// the test suite can drive them directly and byte-compare their outputs.

namespace adlah::cli {

namespace fs = std::filesystem;

namespace detail {

inline void ensure_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("out_dir: cannot create " + cfg.out_dir + ": " + ec.message());
}

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

inline EventTrace load_or_generate_trace(const RunConfig& cfg,
                                         const std::vector<AttackerProfile>& profiles,
                                         std::uint64_t seed) {
    if (!cfg.trace_file.empty()) {
        std::ifstream in(cfg.trace_file);
        if (!in) throw IoError("trace_file: cannot open " + cfg.trace_file);
        return read_trace_jsonl(in);
    }
    return generate_trace(profiles, cfg.horizon, seed);
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct TraceSummary {
    std::size_t events = 0;
    std::size_t ips = 0;
    double mean_per_ip = 0.0;
    double median_per_ip = 0.0;
};

inline TraceSummary summarize_trace(const EventTrace& trace) {
    TraceSummary s;
    s.events = trace.events.size();
    std::map<std::string, std::size_t> per_ip;
    for (const auto& e : trace.events) ++per_ip[e.src_ip];
    s.ips = per_ip.size();
    if (!per_ip.empty()) {
        std::vector<double> counts;
        counts.reserve(per_ip.size());
        double sum = 0.0;
        for (const auto& [ip, n] : per_ip) {
            counts.push_back(double(n));
            sum += double(n);
        }
        s.mean_per_ip = sum / double(counts.size());
        s.median_per_ip = median(std::move(counts));
    }
    return s;
}

inline fs::path checkpoint_path(const RunConfig& cfg) {
    return fs::path(cfg.out_dir) / "checkpoint.txt";
}
inline fs::path normalizer_path(const RunConfig& cfg) {
    return fs::path(cfg.out_dir) / "normalizer.txt";
}
inline fs::path autoencoder_path(const RunConfig& cfg) {
    return fs::path(cfg.out_dir) / "autoencoder.txt";
}

inline void save_learning_state(const RunConfig& cfg, Agent& agent, NormalizerState& norm,
                                Autoencoder& ae, const ReplayBuffer* replay) {
    std::ostringstream agent_dump;
    agent.save(agent_dump, cfg.save_replay ? replay : nullptr);
    write_file(checkpoint_path(cfg), agent_dump.str());
    std::ostringstream norm_dump;
    norm.save(norm_dump);
    write_file(normalizer_path(cfg), norm_dump.str());
    std::ostringstream ae_dump;
    ae.save(ae_dump);
    write_file(autoencoder_path(cfg), ae_dump.str());
}

inline void write_resolved_config(const RunConfig& cfg) {
    write_file(fs::path(cfg.out_dir) / "run_config.json", to_json(cfg).dump(2) + "\n");
}

}  // namespace detail

// --- simulate ---------------------------------------------------------------

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out = std::cout) {
    cfg.validate();
    detail::ensure_out_dir(cfg);
    const auto profiles = make_profiles(cfg);
    const EventTrace trace = generate_trace(profiles, cfg.horizon, cfg.seed);

    std::ostringstream body;
    write_trace_jsonl(body, trace);
    detail::write_file(fs::path(cfg.out_dir) / "trace.jsonl", body.str());
    detail::write_resolved_config(cfg);

    const auto s = detail::summarize_trace(trace);
    out << "trace written: " << (fs::path(cfg.out_dir) / "trace.jsonl").string() << "\n";
    out << "events=" << s.events << " ips=" << s.ips << " mean_per_ip=" << s.mean_per_ip
        << " median_per_ip=" << s.median_per_ip << "\n";
    return 0;
}

// --- train ------------------------------------------------------------------

inline int cmd_train(const RunConfig& cfg, std::ostream& out = std::cout) {
    cfg.validate();
    detail::ensure_out_dir(cfg);

    nn::NetworkSpec spec;
    ReplayBuffer replay(cfg.agent.replay_capacity);
    NormalizerState norm(cfg.clip_bound);
    Autoencoder ae(stream_seed(cfg.seed, "autoencoder"));
    std::optional<Agent> agent;

    if (cfg.resume && fs::exists(detail::checkpoint_path(cfg))) {
        std::ifstream in(detail::checkpoint_path(cfg));
        agent.emplace(Agent::load(in, cfg.agent, cfg.adam, cfg.seed, &replay));
        if (fs::exists(detail::normalizer_path(cfg))) {
            std::ifstream nin(detail::normalizer_path(cfg));
            norm = NormalizerState::load(nin);
        }
        if (fs::exists(detail::autoencoder_path(cfg))) {
            std::ifstream ain(detail::autoencoder_path(cfg));
            ae = Autoencoder::load(ain);
        }
        out << "resumed: epsilon=" << agent->epsilon() << " train_steps=" << agent->train_steps()
            << "\n";
    } else {
        agent.emplace(spec, cfg.agent, cfg.adam, cfg.seed);
    }

    std::ostringstream csv;
    csv << "episode,cumulative_reward,epsilon,mean_loss,decisions,deploys\n";
    Metrics last;
    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const std::uint64_t ep_seed = cfg.seed + std::uint64_t(ep);
        const auto profiles = make_profiles(cfg);
        const EventTrace trace = detail::load_or_generate_trace(cfg, profiles, ep_seed);

        PolicyConfig policy;
        policy.variant = "rl_agent";
        Orchestrator orch(cfg.orchestrator, cfg.reward, policy, profiles, ep_seed);
        orch.attach_agent(&*agent, &replay, /*train=*/true, cfg.train_every);
        orch.attach_normalizer(&norm);
        orch.attach_autoencoder(&ae);
        last = orch.run_episode(trace, cfg.horizon);

        csv << ep << "," << last.cumulative_reward << "," << agent->epsilon() << ","
            << (last.train_loss_count ? last.train_loss_sum / double(last.train_loss_count)
                                      : 0.0)
            << "," << last.decisions << "," << last.deploys << "\n";
        out << "episode " << ep << ": reward=" << last.cumulative_reward
            << " epsilon=" << agent->epsilon() << " decisions=" << last.decisions
            << " deploys=" << last.deploys << "\n";
        if (cfg.max_decisions > 0 && agent->decisions() >= cfg.max_decisions) {
            out << "decision budget reached (" << agent->decisions() << ")\n";
            break;
        }
    }

    detail::save_learning_state(cfg, *agent, norm, ae, &replay);
    detail::write_file(fs::path(cfg.out_dir) / "training_metrics.csv", csv.str());
    detail::write_file(fs::path(cfg.out_dir) / "metrics.json", last.to_json().dump(2) + "\n");
    detail::write_resolved_config(cfg);
    out << "checkpoint written: " << detail::checkpoint_path(cfg).string() << "\n";
    return 0;
}

// --- evaluate ---------------------------------------------------------------

namespace detail {

// One evaluation run of a single policy over a fixed trace; shared by
// evaluate and compare.
inline Metrics run_policy(const RunConfig& cfg, const PolicyConfig& policy,
                          const std::vector<AttackerProfile>& profiles,
                          const EventTrace& trace, std::vector<SessionRecord>* sessions_out,
                          std::vector<std::string>* timeseries_out) {
    NormalizerState norm(cfg.clip_bound);
    Autoencoder ae(stream_seed(cfg.seed, "autoencoder"));
    ReplayBuffer replay(cfg.agent.replay_capacity);
    std::optional<Agent> agent;

    Orchestrator orch(cfg.orchestrator, cfg.reward, policy, profiles, cfg.seed);
    if (policy.variant == "rl_agent") {
        const auto path = checkpoint_path(cfg);
        if (!fs::exists(path))
            throw ConfigError("policy rl_agent needs a checkpoint at " + path.string() +
                              " (run train first)");
        std::ifstream in(path);
        agent.emplace(Agent::load(in, cfg.agent, cfg.adam, cfg.seed));
        if (fs::exists(normalizer_path(cfg))) {
            std::ifstream nin(normalizer_path(cfg));
            norm = NormalizerState::load(nin);
        }
        orch.attach_agent(&*agent, &replay, /*train=*/false);
    }
    orch.attach_normalizer(&norm);
    orch.attach_autoencoder(&ae);
    const Metrics m = orch.run_episode(trace, cfg.horizon);
    if (sessions_out) *sessions_out = orch.sessions();
    if (timeseries_out) *timeseries_out = orch.timeseries();
    return m;
}

}  // namespace detail

inline int cmd_evaluate(const RunConfig& cfg, std::ostream& out = std::cout) {
    cfg.validate();
    detail::ensure_out_dir(cfg);
    const auto profiles = make_profiles(cfg);
    const EventTrace trace = detail::load_or_generate_trace(cfg, profiles, cfg.seed);

    std::vector<SessionRecord> sessions;
    std::vector<std::string> timeseries;
    const Metrics m =
        detail::run_policy(cfg, cfg.policy, profiles, trace, &sessions, &timeseries);

    detail::write_file(fs::path(cfg.out_dir) / "metrics.json", m.to_json().dump(2) + "\n");
    std::ostringstream sess;
    write_sessions_jsonl(sess, sessions);
    detail::write_file(fs::path(cfg.out_dir) / "sessions.jsonl", sess.str());
    std::ostringstream ts;
    ts << "timestamp,active_pods,cpu_util,deploys,cumulative_reward\n";
    for (const auto& row : timeseries) ts << row << "\n";
    detail::write_file(fs::path(cfg.out_dir) / "timeseries.csv", ts.str());
    detail::write_resolved_config(cfg);

    out << "policy=" << cfg.policy.variant << " decisions=" << m.decisions
        << " deploys=" << m.deploys << " efficiency=" << m.deployment_efficiency()
        << " reward=" << m.cumulative_reward << " sessions=" << sessions.size() << "\n";
    return 0;
}

// --- compare ----------------------------------------------------------------

inline int cmd_compare(const RunConfig& cfg, const std::vector<std::string>& policy_names,
                       std::ostream& out = std::cout) {
    cfg.validate();
    if (policy_names.size() < 2)
        throw ConfigError("compare: need at least 2 policies, got " +
                          std::to_string(policy_names.size()));
    detail::ensure_out_dir(cfg);
    const auto profiles = make_profiles(cfg);
    const EventTrace trace = detail::load_or_generate_trace(cfg, profiles, cfg.seed);

    std::ostringstream csv;
    csv << "policy,decisions,deploys,skips,deployment_efficiency,median_time_to_redirect,"
           "total_cost_minutes,cumulative_reward,precision,recall\n";
    nlohmann::json table = nlohmann::json::array();

    out << "policy              deploys  skips  efficiency  med_ttr  cost_min     reward  "
           "precision  recall\n";
    for (const auto& name : policy_names) {
        PolicyConfig policy = cfg.policy;
        policy.variant = name;
        policy.validate();
        const Metrics m = detail::run_policy(cfg, policy, profiles, trace, nullptr, nullptr);

        char line[256];
        std::snprintf(line, sizeof line,
                      "%-18s %8llu %6llu %11.3f %8.1f %9.2f %10.3f %10.3f %7.3f",
                      name.c_str(), (unsigned long long)m.deploys,
                      (unsigned long long)m.skips, m.deployment_efficiency(),
                      m.median_time_to_redirect(), m.total_runtime_cost_minutes,
                      m.cumulative_reward, m.precision(), m.recall());
        out << line << "\n";

        csv << name << "," << m.decisions << "," << m.deploys << "," << m.skips << ","
            << m.deployment_efficiency() << "," << m.median_time_to_redirect() << ","
            << m.total_runtime_cost_minutes << "," << m.cumulative_reward << ","
            << m.precision() << "," << m.recall() << "\n";
        nlohmann::json row = m.to_json();
        row["policy"] = name;
        table.push_back(std::move(row));
    }

    detail::write_file(fs::path(cfg.out_dir) / "compare.csv", csv.str());
    detail::write_file(fs::path(cfg.out_dir) / "compare.json", table.dump(2) + "\n");
    detail::write_resolved_config(cfg);
    return 0;
}

// --- export-chains ----------------------------------------------------------

inline int cmd_export_chains(const RunConfig& cfg, std::ostream& out = std::cout) {
    cfg.validate();
    detail::ensure_out_dir(cfg);
    const fs::path sessions_path = cfg.sessions_file.empty()
                                       ? fs::path(cfg.out_dir) / "sessions.jsonl"
                                       : fs::path(cfg.sessions_file);

    std::vector<SessionRecord> sessions;
    if (fs::exists(sessions_path)) {
        std::ifstream in(sessions_path);
        sessions = read_sessions_jsonl(in);
    }

    ChainStore store(cfg.chains);
    if (sessions.empty()) {
        out << "no sessions found at " << sessions_path.string() << "; empty export\n";
    } else {
        std::stable_sort(sessions.begin(), sessions.end(),
                         [](const SessionRecord& a, const SessionRecord& b) {
                             return a.end < b.end;
                         });
        for (const auto& s : sessions) {
            if (s.logs.empty()) continue;
            CanonicalChain chain = canonicalize(s.logs);
            chain.source_sessions.push_back(s.session_id);
            store.add_chain(chain, s.end, s.proto, s.dest_port);
        }
    }

    detail::write_file(fs::path(cfg.out_dir) / "families.json",
                       store.to_json().dump(2) + "\n");

    std::ostringstream sigs;
    std::size_t promoted = 0;
    for (const Family* fam : store.families()) {
        const SignatureRecord sig = store.export_signature(*fam);
        sigs << sig.to_json().dump() << "\n";
        out << format_name(*fam) << "  members=" << fam->member_count
            << (sig.warning ? "  [warning: empty rule]" : "") << "\n";
        ++promoted;
    }
    detail::write_file(fs::path(cfg.out_dir) / "signatures.jsonl", sigs.str());
    detail::write_resolved_config(cfg);

    out << "families=" << promoted << " provisional="
        << (store.clusters().size() - promoted) << " sessions=" << sessions.size() << "\n";
    return 0;
}

}  // namespace adlah::cli
