#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "adlah/cli.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive honeynet orchestration sandbox: simulate attacker telemetry, "
                 "train and compare deployment policies, export bot-chain families"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string policy;
    std::string trace_file;
    std::string sessions_file;
    std::string policies = "threshold,always_deploy,never_deploy,random";
    std::string mix;
    std::uint64_t seed = 0;
    bool seed_set = false, episodes_set = false;
    int episodes = 0;
    long long horizon = 0;
    int n_ips = 0;
    bool resume = false;

    app.add_option("--config", config_path, "run configuration file (JSON)");
    app.add_option("--seed", seed, "override the run seed")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--episodes", episodes, "override the episode count")
        ->each([&](const std::string&) { episodes_set = true; });
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--policy", policy,
                   "policy variant (rl_agent|threshold|always_deploy|never_deploy|random)");
    app.add_option("--trace", trace_file, "replay an existing JSONL trace");
    app.add_option("--sessions", sessions_file, "sessions JSONL for export-chains");
    app.add_option("--mix", mix, "profile mix (default|scanner_only|quiet_only|smoke_ab)");
    app.add_option("--horizon", horizon, "simulation horizon in sim-seconds");
    app.add_option("--n-ips", n_ips, "number of attacker profiles");
    app.add_flag("--resume", resume, "continue training from the checkpoint in --out");

    auto* sim = app.add_subcommand("simulate", "generate a deterministic telemetry trace");
    auto* train = app.add_subcommand("train", "train the deployment agent");
    auto* eval = app.add_subcommand("evaluate", "run one policy over a trace and emit metrics");
    auto* compare = app.add_subcommand("compare", "replay one trace under several policies");
    compare->add_option("--policies", policies, "comma-separated policy list");
    auto* exportc = app.add_subcommand("export-chains",
                                       "canonicalize, cluster and version pod sessions");

    CLI11_PARSE(app, argc, argv);

    try {
        adlah::RunConfig cfg =
            config_path.empty() ? adlah::RunConfig{} : adlah::load_run_config(config_path);
        if (seed_set) cfg.seed = seed;
        if (episodes_set) cfg.episodes = episodes;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!policy.empty()) cfg.policy.variant = policy;
        if (!trace_file.empty()) cfg.trace_file = trace_file;
        if (!sessions_file.empty()) cfg.sessions_file = sessions_file;
        if (!mix.empty()) cfg.profile_mix = mix;
        if (horizon != 0) cfg.horizon = horizon;
        if (n_ips != 0) cfg.n_ips = n_ips;
        if (resume) cfg.resume = true;

        if (sim->parsed()) return adlah::cli::cmd_simulate(cfg);
        if (train->parsed()) return adlah::cli::cmd_train(cfg);
        if (eval->parsed()) return adlah::cli::cmd_evaluate(cfg);
        if (compare->parsed()) return adlah::cli::cmd_compare(cfg, split_csv(policies));
        if (exportc->parsed()) return adlah::cli::cmd_export_chains(cfg);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 1;
}
