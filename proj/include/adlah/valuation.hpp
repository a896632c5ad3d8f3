#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "adlah/errors.hpp"
#include "adlah/events.hpp"
#include "adlah/features.hpp"
#include "adlah/neural.hpp"

namespace adlah {

// ---------------------------------------------------------------------------
// Reward configuration and the reward equations
// ---------------------------------------------------------------------------

struct RewardConfig {
    double alpha = 1.0;        // deployment reward scale
    double l_bar = 10.0;       // log-count normalization constant
    double l_max = 5.0;        // cap on L / l_bar
    double delta = 0.1;        // no-logs penalty magnitude
    double beta = 0.0;         // anomaly weight ("future" mode)
    double a_max = 1.0;        // anomaly contribution cap
    double omega = 0.0;        // anomaly weight (log-count-multiplying mode)
    double lambda_cost = 0.0;  // engagement cost weight
    double skip_penalty = 0.05;
    double timeout_penalty = 0.05;

    // rolling per-port median of completed-deployment log counts replaces the
    // fixed l_bar when enabled
    bool rolling_l_bar = false;
    std::size_t rolling_window = 100;

    void validate() const {
        if (alpha <= 0.0) throw ConfigError("reward.alpha must be > 0");
        if (l_bar <= 0.0) throw ConfigError("reward.l_bar must be > 0");
        if (l_max < 0.0 || delta < 0.0 || beta < 0.0 || a_max < 0.0 || omega < 0.0 ||
            lambda_cost < 0.0 || skip_penalty < 0.0 || timeout_penalty < 0.0)
            throw ConfigError("reward: all magnitudes must be non-negative");
    }
};

// R_deploy = alpha * min(L / l_bar, l_max); no logs at all draws the mild
// penalty -delta instead.
inline double deploy_reward(std::int64_t log_count, const RewardConfig& cfg) {
    if (log_count < 0) throw ValidationError("deploy_reward: negative log count");
    if (log_count == 0) return -cfg.delta;
    return cfg.alpha * std::min(double(log_count) / cfg.l_bar, cfg.l_max);
}

// 10%-trimmed mean: drop ceil(trim*n) from each end of the sorted list,
// bounded so at least one value remains.
inline double trimmed_mean(std::vector<double> values, double trim = 0.1) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    std::size_t k = std::size_t(std::ceil(trim * double(n)));
    k = std::min(k, (n - 1) / 2);
    double sum = 0.0;
    for (std::size_t i = k; i < n - k; ++i) sum += values[i];
    return sum / double(n - 2 * k);
}

enum class QualityMode { future, eq2 };

// Quality-aware reward.
//   future: alpha*min(L/l_bar, l_max) + beta*clip(Agg(scores), 0, a_max),
//           with the no-logs penalty branch preserved (beta=0 reduces exactly
//           to deploy_reward).
//   eq2:    (1 + omega*clip(Agg(scores),0,1)) * L - lambda_cost * cost.
inline double quality_reward(std::int64_t log_count, const std::vector<double>& anomaly_scores,
                             const RewardConfig& cfg, QualityMode mode = QualityMode::future,
                             double cost = 0.0) {
    if (log_count < 0) throw ValidationError("quality_reward: negative log count");
    for (double s : anomaly_scores)
        if (s < 0.0 || !std::isfinite(s))
            throw ValidationError("quality_reward: anomaly scores must be finite and >= 0");
    const double agg = trimmed_mean(anomaly_scores);
    if (mode == QualityMode::eq2) {
        const double a_tilde = std::clamp(agg, 0.0, 1.0);
        return (1.0 + cfg.omega * a_tilde) * double(log_count) - cfg.lambda_cost * cost;
    }
    if (log_count == 0) return -cfg.delta;
    const double base = cfg.alpha * std::min(double(log_count) / cfg.l_bar, cfg.l_max);
    if (cfg.beta == 0.0) return base;
    return base + cfg.beta * std::clamp(agg, 0.0, cfg.a_max);
}

enum class TerminalKind { inactivity_timeout, resource_skip };

inline double terminal_penalty(TerminalKind kind, const RewardConfig& cfg) {
    switch (kind) {
        case TerminalKind::inactivity_timeout: return -cfg.timeout_penalty;
        case TerminalKind::resource_skip: return -cfg.skip_penalty;
    }
    return 0.0;
}

// Rolling per-port median of log counts over the last N completed
// deployments; used for l_bar when rolling_l_bar is set.
class RollingLbar {
  public:
    explicit RollingLbar(std::size_t window) : window_(window) {}

    void record(int port, std::int64_t log_count) {
        auto& v = by_port_[port];
        v.push_back(double(log_count));
        if (v.size() > window_) v.erase(v.begin());
    }

    double l_bar(int port, double fallback) const {
        auto it = by_port_.find(port);
        if (it == by_port_.end() || it->second.empty()) return fallback;
        std::vector<double> v = it->second;
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
        return std::max(med, 1.0);  // keep the normalizer strictly positive
    }

  private:
    std::size_t window_;
    std::map<int, std::vector<double>> by_port_;
};

// ---------------------------------------------------------------------------
// Session feature vector (d = 8)
// ---------------------------------------------------------------------------

inline constexpr int kSessionFeatureDim = 8;

using SessionFeatureVector = std::array<double, kSessionFeatureDim>;

// Summarizes one pod session: command volume/diversity, duration, download
// activity, pacing, payload texture. Scaled into roughly [0,1] so the online
// autoencoder trains without per-feature normalization state.
inline SessionFeatureVector build_session_features(const std::vector<InteractionLog>& logs) {
    SessionFeatureVector f{};
    if (logs.empty()) return f;

    std::set<std::string> distinct;
    std::size_t downloads = 0, errors = 0;
    double entropy_sum = 0.0;
    for (const auto& log : logs) {
        distinct.insert(log.command);
        const std::string& c = log.command;
        if (c.find("wget") != std::string::npos || c.find("curl") != std::string::npos ||
            c.find("tftp") != std::string::npos || c.find("ftpget") != std::string::npos)
            ++downloads;
        if (c.find("error") != std::string::npos || c.find("fail") != std::string::npos ||
            c.find("denied") != std::string::npos)
            ++errors;
        entropy_sum += payload_stats(c).entropy;
    }
    const double n = double(logs.size());
    const double duration = double(logs.back().timestamp - logs.front().timestamp);

    f[0] = n / 50.0;
    f[1] = double(distinct.size()) / 50.0;
    f[2] = duration / 3600.0;
    f[3] = double(downloads) / 10.0;
    f[4] = logs.size() > 1 ? (duration / (n - 1.0)) / 600.0 : 0.0;
    f[5] = (entropy_sum / n) / 8.0;
    f[6] = double(distinct.size()) / n;  // script coverage: distinct over total
    f[7] = double(errors) / n;
    return f;
}

// ---------------------------------------------------------------------------
// Adaptive autoencoder: dense(8 -> 4, tanh) -> dense(4 -> 8, linear),
// continuously retrained so "normal" drifts with the traffic.
// ---------------------------------------------------------------------------

class Autoencoder {
  public:
    explicit Autoencoder(std::uint64_t seed, double learning_rate = 0.01)
        : enc_(kSessionFeatureDim, kSessionFeatureDim / 2, nn::Activation::tanh),
          dec_(kSessionFeatureDim / 2, kSessionFeatureDim, nn::Activation::linear),
          adam_({.learning_rate = learning_rate, .clip_norm = 0.0}) {
        Rng rng(stream_seed(seed, "autoencoder"));
        enc_.init(rng);
        dec_.init(rng);
    }

    std::array<double, kSessionFeatureDim> reconstruct(const SessionFeatureVector& x) const {
        const nn::Vec xin(x.begin(), x.end());
        const nn::Vec h = enc_.forward(xin, 1, nullptr);
        const nn::Vec y = dec_.forward(h, 1, nullptr);
        std::array<double, kSessionFeatureDim> out{};
        std::copy(y.begin(), y.end(), out.begin());
        return out;
    }

    // Mean squared reconstruction error: s = (1/d) * sum_j (x_j - y_j)^2.
    double anomaly_score(const SessionFeatureVector& x) const {
        for (double v : x)
            if (!std::isfinite(v))
                throw ValidationError("anomaly_score: non-finite feature value");
        const auto y = reconstruct(x);
        double s = 0.0;
        for (int j = 0; j < kSessionFeatureDim; ++j) {
            const double e = x[j] - y[j];
            s += e * e;
        }
        return s / double(kSessionFeatureDim);
    }

    // One Adam step on the reconstruction error of x.
    void online_update(const SessionFeatureVector& x) {
        const nn::Vec xin(x.begin(), x.end());
        nn::Dense::Cache ec, dc;
        const nn::Vec h = enc_.forward(xin, 1, &ec);
        const nn::Vec y = dec_.forward(h, 1, &dc);
        nn::Vec dy(kSessionFeatureDim);
        for (int j = 0; j < kSessionFeatureDim; ++j)
            dy[j] = 2.0 * (y[j] - xin[j]) / double(kSessionFeatureDim);
        enc_.zero_grad();
        dec_.zero_grad();
        enc_.backward(ec, dec_.backward(dc, dy));
        adam_.apply(params());
    }

    void save(std::ostream& os) {
        os << "adlah-autoencoder v1\n";
        for (auto& p : params()) nn::io::write_array(os, p.name, *p.value);
        os << "adam " << adam_.step_count() << "\n";
        nn::io::write_array(os, "adam.m", adam_.moment1());
        nn::io::write_array(os, "adam.v", adam_.moment2());
    }

    static Autoencoder load(std::istream& is, std::uint64_t seed = 0) {
        std::string magic, version, key;
        is >> magic >> version;
        if (magic != "adlah-autoencoder" || version != "v1")
            throw IoError("autoencoder checkpoint: bad header");
        Autoencoder ae(seed);
        for (auto& p : ae.params()) *p.value = nn::io::read_array(is, p.name);
        std::uint64_t step = 0;
        is >> key >> step;
        if (key != "adam") throw IoError("autoencoder checkpoint: missing adam state");
        ae.adam_.set_step(step);
        ae.adam_.moment1() = nn::io::read_array(is, "adam.m");
        ae.adam_.moment2() = nn::io::read_array(is, "adam.v");
        return ae;
    }

    nn::Dense& encoder() { return enc_; }
    nn::Dense& decoder() { return dec_; }

  private:
    std::vector<nn::ParamView> params() {
        auto out = enc_.params("enc");
        for (auto& p : dec_.params("dec")) out.push_back(p);
        return out;
    }

    nn::Dense enc_, dec_;
    nn::Adam adam_;
};

}  // namespace adlah
