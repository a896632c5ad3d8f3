#pragma once

#include <cstdint>
#include <array>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "adlah/errors.hpp"
#include "adlah/neural.hpp"
#include "adlah/rng.hpp"
#include "adlah/textio.hpp"

namespace adlah {

enum Action : int { kWait = 0, kDeploy = 1 };

// Dynamically sized so the same agent code runs at toy dimensions in tests.
struct AgentState {
    nn::Vec seq;                     // seq_len x feature_dim
    std::vector<std::uint8_t> mask;  // seq_len
    nn::Vec runtime;                 // runtime_dim
};

struct Transition {
    AgentState state;
    int action = kWait;
    double reward = 0.0;
    AgentState next_state;
    bool done = false;
    bool pending = true;  // true until the reward has been attributed
};

struct AgentConfig {
    double gamma = 0.95;
    double epsilon_start = 1.0;
    double epsilon_min = 0.01;
    double epsilon_decay = 0.995;  // multiplicative, per decision
    // "linear" subtracts (start - min) / linear_decay_steps per decision
    std::string epsilon_decay_mode = "multiplicative";
    std::uint64_t linear_decay_steps = 1000;
    std::size_t replay_capacity = 10000;
    std::size_t batch_size = 32;
    std::uint64_t target_sync_every = 1000;  // training steps, hard update

    void validate() const {
        if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("agent.gamma outside (0,1]");
        if (epsilon_min < 0.0 || epsilon_min > epsilon_start || epsilon_start > 1.0)
            throw ConfigError("agent.epsilon bounds must satisfy 0<=min<=start<=1");
        if (epsilon_decay_mode != "multiplicative" && epsilon_decay_mode != "linear")
            throw ConfigError("agent.epsilon_decay_mode must be multiplicative|linear");
        if (batch_size == 0 || replay_capacity < batch_size)
            throw ConfigError("agent.replay_capacity must be >= batch_size > 0");
    }
};

// Ring buffer of completed transitions, FIFO eviction. Pending transitions
// live in the orchestrator's per-deployment ledger and only arrive here once
// their reward is attributed.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

    void push(Transition t) {
        if (t.pending)
            throw ConsistencyError("replay buffer: refusing to store a pending transition");
        if (buf_.size() == capacity_) buf_.pop_front();
        buf_.push_back(std::move(t));
    }

    std::size_t size() const { return buf_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return buf_[i]; }

    // Uniform sample of n distinct indices (partial Fisher-Yates).
    std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const {
        std::vector<std::size_t> idx(buf_.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = i + rng.uniform_int(idx.size() - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(n);
        return idx;
    }

  private:
    std::size_t capacity_;
    std::deque<Transition> buf_;
};

// y = r + (1 - done) * gamma * q_target[argmax_a q_online[a]]; argmax ties
// break toward the lower action index (wait).
inline double ddqn_target(double reward, bool done, double gamma, const nn::Vec& q_online_next,
                          const nn::Vec& q_target_next) {
    if (done) return reward;
    std::size_t best = 0;
    for (std::size_t a = 1; a < q_online_next.size(); ++a)
        if (q_online_next[a] > q_online_next[best]) best = a;
    return reward + gamma * q_target_next[best];
}

// The decision core: epsilon-greedy over {wait, deploy}, experience replay,
// target network, double-DQN updates.
class Agent {
  public:
    Agent(nn::NetworkSpec spec, AgentConfig cfg, nn::AdamConfig adam_cfg, std::uint64_t seed)
        : cfg_(cfg), online_(spec), target_(spec), adam_(adam_cfg),
          rng_(stream_seed(seed, "agent")), epsilon_(cfg.epsilon_start) {
        cfg_.validate();
        Rng init_rng(stream_seed(seed, "agent-init"));
        online_.init(init_rng);
        target_.copy_from(online_);
    }

    const AgentConfig& config() const { return cfg_; }
    double epsilon() const { return epsilon_; }
    std::uint64_t train_steps() const { return train_steps_; }
    std::uint64_t decisions() const { return decisions_; }
    nn::QNetwork& online() { return online_; }
    nn::QNetwork& target() { return target_; }
    Rng& rng() { return rng_; }

    nn::Vec q_values(const AgentState& s) const {
        return online_.forward_eval(to_batch({&s}));
    }

    // Epsilon-greedy: explore uniformly with prob epsilon, otherwise greedy
    // on the online network in eval mode; Q ties resolve to wait.
    int select_action(const AgentState& s, double epsilon) {
        ++decisions_;
        if (epsilon > 0.0 && rng_.uniform() < epsilon)
            return int(rng_.uniform_int(std::uint64_t(online_.spec().n_actions)));
        const nn::Vec q = q_values(s);
        int best = 0;
        for (int a = 1; a < online_.spec().n_actions; ++a)
            if (q[a] > q[best]) best = a;
        return best;
    }

    int select_action(const AgentState& s) { return select_action(s, epsilon_); }

    void decay_epsilon() {
        if (cfg_.epsilon_decay_mode == "linear") {
            const double step =
                (cfg_.epsilon_start - cfg_.epsilon_min) / double(cfg_.linear_decay_steps);
            epsilon_ = std::max(cfg_.epsilon_min, epsilon_ - step);
        } else {
            epsilon_ = std::max(cfg_.epsilon_min, epsilon_ * cfg_.epsilon_decay);
        }
    }

    // One double-DQN training step over a uniform minibatch. Returns the
    // batch Huber loss, or nullopt (no-op) while the buffer is short.
    std::optional<double> train_step(const ReplayBuffer& buffer) {
        if (buffer.size() < cfg_.batch_size) return std::nullopt;
        const auto idx = buffer.sample_indices(cfg_.batch_size, rng_);
        const int B = int(cfg_.batch_size);

        std::vector<const AgentState*> next_states(B);
        std::vector<const AgentState*> states(B);
        for (int i = 0; i < B; ++i) {
            states[i] = &buffer.at(idx[i]).state;
            next_states[i] = &buffer.at(idx[i]).next_state;
        }
        const nn::Batch next_batch = to_batch(next_states);
        const nn::Vec q_on_next = online_.forward_eval(next_batch);
        const nn::Vec q_tg_next = target_.forward_eval(next_batch);

        const int A = online_.spec().n_actions;
        nn::Vec y(B);
        for (int i = 0; i < B; ++i) {
            const Transition& t = buffer.at(idx[i]);
            nn::Vec qon(q_on_next.begin() + std::size_t(i) * A,
                        q_on_next.begin() + std::size_t(i + 1) * A);
            nn::Vec qtg(q_tg_next.begin() + std::size_t(i) * A,
                        q_tg_next.begin() + std::size_t(i + 1) * A);
            y[i] = ddqn_target(t.reward, t.done, cfg_.gamma, qon, qtg);
        }

        nn::QNetwork::Cache cache;
        const nn::Batch cur = to_batch(states);
        const nn::Vec q = online_.forward_train(cur, rng_, &cache);

        double loss = 0.0;
        nn::Vec dq(std::size_t(B) * A, 0.0);
        for (int i = 0; i < B; ++i) {
            const int a = buffer.at(idx[i]).action;
            const double pred = q[std::size_t(i) * A + a];
            loss += nn::huber(pred, y[i]);
            dq[std::size_t(i) * A + a] = nn::huber_grad(pred, y[i]) / double(B);
        }
        loss /= double(B);

        online_.zero_grad();
        online_.backward(cache, dq);
        adam_.apply(online_.params());

        ++train_steps_;
        if (cfg_.target_sync_every > 0 && train_steps_ % cfg_.target_sync_every == 0)
            target_.copy_from(online_);
        return loss;
    }

    // --- checkpointing ------------------------------------------------//
    // Delegates network state to the neural module; adds epsilon, counters,
    // Adam moments and (optionally) the replay buffer.

    void save(std::ostream& os, const ReplayBuffer* replay = nullptr) {
        os << "adlah-agent v1\n";
        os << "epsilon " << textio::format_double(epsilon_) << "\n";
        os << "train_steps " << train_steps_ << "\n";
        os << "decisions " << decisions_ << "\n";
        const auto rs = rng_.state();
        os << "rng " << rs[0] << " " << rs[1] << " " << rs[2] << " " << rs[3] << "\n";
        online_.save(os);
        target_.save(os);
        os << "adam " << adam_.step_count() << "\n";
        nn::io::write_array(os, "adam.m", adam_.moment1());
        nn::io::write_array(os, "adam.v", adam_.moment2());
        if (replay) {
            os << "replay " << replay->size() << "\n";
            for (std::size_t i = 0; i < replay->size(); ++i)
                write_transition(os, replay->at(i));
        } else {
            os << "replay 0\n";
        }
    }

    // Restores everything the save wrote. The caller supplies the same
    // AgentConfig the run uses; epsilon/step counters continue rather than
    // reset.
    static Agent load(std::istream& is, AgentConfig cfg, nn::AdamConfig adam_cfg,
                      std::uint64_t seed, ReplayBuffer* replay_out = nullptr) {
        std::string magic, version, key;
        is >> magic >> version;
        if (magic != "adlah-agent" || version != "v1")
            throw IoError("agent checkpoint: bad header '" + magic + " " + version + "'");
        is >> key;
        if (key != "epsilon") throw IoError("agent checkpoint: missing epsilon");
        const double eps = textio::read_double(is, "agent epsilon");
        std::uint64_t steps = 0, decisions = 0;
        is >> key >> steps;
        if (key != "train_steps") throw IoError("agent checkpoint: missing train_steps");
        is >> key >> decisions;
        if (key != "decisions") throw IoError("agent checkpoint: missing decisions");
        std::array<std::uint64_t, 4> rng_state{};
        is >> key >> rng_state[0] >> rng_state[1] >> rng_state[2] >> rng_state[3];
        if (key != "rng") throw IoError("agent checkpoint: missing rng state");

        nn::QNetwork online = nn::QNetwork::load(is);
        nn::QNetwork target = nn::QNetwork::load(is);
        Agent agent(online.spec(), cfg, adam_cfg, seed);
        agent.online_.copy_from(online);
        agent.target_.copy_from(target);
        agent.epsilon_ = eps;
        agent.train_steps_ = steps;
        agent.decisions_ = decisions;
        agent.rng_.restore(rng_state);

        std::uint64_t adam_step = 0;
        is >> key >> adam_step;
        if (key != "adam") throw IoError("agent checkpoint: missing adam state");
        agent.adam_.set_step(adam_step);
        agent.adam_.moment1() = nn::io::read_array(is, "adam.m");
        agent.adam_.moment2() = nn::io::read_array(is, "adam.v");

        std::size_t n_replay = 0;
        is >> key >> n_replay;
        if (key != "replay") throw IoError("agent checkpoint: missing replay section");
        for (std::size_t i = 0; i < n_replay; ++i) {
            Transition t = read_transition(is, agent.online_.spec());
            if (replay_out) replay_out->push(std::move(t));
        }
        return agent;
    }

  private:
    nn::Batch to_batch(const std::vector<const AgentState*>& states) const {
        const auto& spec = online_.spec();
        nn::Batch b;
        b.batch = int(states.size());
        b.seq.reserve(states.size() * spec.seq_len * spec.feature_dim);
        b.mask.reserve(states.size() * spec.seq_len);
        b.runtime.reserve(states.size() * spec.runtime_dim);
        for (const AgentState* s : states) {
            if (int(s->seq.size()) != spec.seq_len * spec.feature_dim ||
                int(s->mask.size()) != spec.seq_len ||
                int(s->runtime.size()) != spec.runtime_dim)
                throw ValidationError("agent state shape does not match network spec");
            b.seq.insert(b.seq.end(), s->seq.begin(), s->seq.end());
            b.mask.insert(b.mask.end(), s->mask.begin(), s->mask.end());
            b.runtime.insert(b.runtime.end(), s->runtime.begin(), s->runtime.end());
        }
        return b;
    }

    static void write_transition(std::ostream& os, const Transition& t) {
        os << "transition " << t.action << " " << textio::format_double(t.reward) << " "
           << (t.done ? 1 : 0) << "\n";
        nn::io::write_array(os, "s.seq", t.state.seq);
        nn::Vec m(t.state.mask.begin(), t.state.mask.end());
        nn::io::write_array(os, "s.mask", m);
        nn::io::write_array(os, "s.rt", t.state.runtime);
        nn::io::write_array(os, "n.seq", t.next_state.seq);
        nn::Vec m2(t.next_state.mask.begin(), t.next_state.mask.end());
        nn::io::write_array(os, "n.mask", m2);
        nn::io::write_array(os, "n.rt", t.next_state.runtime);
    }

    static Transition read_transition(std::istream& is, const nn::NetworkSpec&) {
        std::string key;
        Transition t;
        int done = 0;
        is >> key >> t.action;
        if (key != "transition") throw IoError("agent checkpoint: bad replay record");
        t.reward = textio::read_double(is, "replay reward");
        is >> done;
        t.done = done != 0;
        t.pending = false;
        t.state.seq = nn::io::read_array(is, "s.seq");
        for (double v : nn::io::read_array(is, "s.mask"))
            t.state.mask.push_back(v != 0.0);
        t.state.runtime = nn::io::read_array(is, "s.rt");
        t.next_state.seq = nn::io::read_array(is, "n.seq");
        for (double v : nn::io::read_array(is, "n.mask"))
            t.next_state.mask.push_back(v != 0.0);
        t.next_state.runtime = nn::io::read_array(is, "n.rt");
        return t;
    }

    AgentConfig cfg_;
    nn::QNetwork online_, target_;
    nn::Adam adam_;
    Rng rng_;
    double epsilon_;
    std::uint64_t train_steps_ = 0;
    std::uint64_t decisions_ = 0;
};

}  // namespace adlah
