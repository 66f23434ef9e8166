#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "offrl/error.hpp"
#include "offrl/ope.hpp"
#include "offrl/qnet.hpp"
#include "offrl/random.hpp"
#include "offrl/trajectory.hpp"

namespace offrl {

/// Which network picks the bootstrap action and which one values it.
enum class TargetRule {
    DoubleQ,      // argmax on the online network, valued by the target network
    TargetArgmax  // argmax on the target network, valued by the online network
};

struct TrainConfig {
    int epochs = 25;
    int batch_size = 512;
    double tau = 0.1;
    int sync_every = 0;  // N̄ in steps; 0 means one epoch
    double gamma = 0.99;
    double learning_rate = 0.01;
    double lr_decay = 0.999;
    std::uint64_t seed = 0;
    int ope_eval_every = 0;  // steps; 0 means one epoch; < 0 disables
    TargetRule target_rule = TargetRule::DoubleQ;
    bool gradient_on_sync_only = false;  // apply the gradient step only every N̄ steps
    int shared_units = 128;
    int stream_units = 32;

    void validate() const {
        OFFRL_REQUIRE(epochs >= 1, ConfigError, "epochs must be >= 1");
        OFFRL_REQUIRE(batch_size >= 1, ConfigError, "batch_size must be >= 1");
        OFFRL_REQUIRE(tau > 0.0 && tau <= 1.0, ConfigError, "tau must lie in (0, 1]");
        OFFRL_REQUIRE(sync_every >= 0, ConfigError, "sync_every must be >= 0");
        OFFRL_REQUIRE(gamma >= 0.0 && gamma <= 1.0, ConfigError, "gamma must lie in [0, 1]");
        OFFRL_REQUIRE(learning_rate > 0.0, ConfigError, "learning_rate must be > 0");
        OFFRL_REQUIRE(lr_decay > 0.0 && lr_decay <= 1.0, ConfigError, "lr_decay must lie in (0, 1]");
        OFFRL_REQUIRE(shared_units >= 1 && stream_units >= 1, ConfigError, "layer sizes must be >= 1");
    }
};

/// One transition flattened out of its trajectory, with the absorbing state
/// mapped to −1.
struct FlatTransition {
    int state = 0;
    int action = 0;
    double reward = 0.0;
    int next_state = kAbsorbing;
    bool terminal = false;
};

inline std::vector<FlatTransition> flatten(const Dataset& ds) {
    std::vector<FlatTransition> out;
    out.reserve(ds.m());
    for (const auto& traj : ds.trajectories)
        for (const auto& tr : traj.steps)
            out.push_back({tr.state, tr.action, tr.reward, tr.terminal ? kAbsorbing : tr.next_state, tr.terminal});
    return out;
}

/// Regression targets, one per transition. Terminal transitions regress to r;
/// otherwise y = r + γ Q_eval(s', argmax_a Q_select(s', a)) with ties to the lowest action.
inline std::vector<double> build_targets(std::span<const FlatTransition> batch, const DuelingQNet& net, double gamma,
                                         TargetRule rule = TargetRule::DoubleQ) {
    OFFRL_REQUIRE(!batch.empty(), ConfigError, "build_targets needs a nonempty batch");
    const bool select_on_target = rule == TargetRule::TargetArgmax;
    std::vector<std::optional<double>> cache(static_cast<std::size_t>(net.shape().n_states));
    std::vector<double> y(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& tr = batch[i];
        if (tr.terminal || tr.next_state == kAbsorbing) {
            y[i] = tr.reward;
            continue;
        }
        auto& cached = cache.at(static_cast<std::size_t>(tr.next_state));
        if (!cached) {
            const auto q_sel = net.q_values(tr.next_state, select_on_target);
            const auto q_val = net.q_values(tr.next_state, !select_on_target);
            const auto best = static_cast<std::size_t>(std::max_element(q_sel.begin(), q_sel.end()) - q_sel.begin());
            cached = q_val[best];
        }
        y[i] = tr.reward + gamma * *cached;
    }
    return y;
}

struct EvalRecord {
    long step = 0;
    double swdr = 0.0;
    double magic = 0.0;
    double swdr_score = 0.0;
    double magic_score = 0.0;
    friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct TrainLog {
    std::vector<double> loss;  // index = step
    std::vector<EvalRecord> evals;
    std::vector<double> epoch_seconds;
    std::vector<std::string> warnings;
    long steps_per_epoch = 0;
    long sync_every = 0;
};

/// Resumable training state.
struct TrainState {
    DuelingQNet net;
    AdamState adam;
    Rng rng;
    long step = 0;
};

inline long steps_per_epoch(std::size_t m, int batch_size) {
    return static_cast<long>((m + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
}

inline TrainState initial_train_state(int n_states, int n_actions, const TrainConfig& cfg) {
    const QNetShape shape{n_states, n_actions, cfg.shared_units, cfg.stream_units};
    TrainState st{DuelingQNet(shape, derive_seed(cfg.seed, 1)), AdamState::for_size(shape.size(), cfg.learning_rate, cfg.lr_decay),
                  Rng(derive_seed(cfg.seed, 2)), 0};
    return st;
}

struct TrainResult {
    DuelingQNet net;
    TrainLog log;
    TrainState state;
};

/// Offline dueling double Q-learning over a fixed transition batch. The only
/// stochastic input is minibatch indexing. `resume` continues a saved state;
/// `stop_after` halts once that many total steps have run (for checkpointing).
inline TrainResult train(const Dataset& ds, int n_states, int n_actions, const TrainConfig& cfg,
                         const OpeContext* ope = nullptr, std::optional<TrainState> resume = std::nullopt,
                         std::optional<long> stop_after = std::nullopt) {
    cfg.validate();
    OFFRL_REQUIRE(ds.has_discrete_states(), DataError, "training needs a discretized dataset");
    const auto transitions = flatten(ds);
    for (const auto& tr : transitions)
        OFFRL_REQUIRE(tr.state < n_states && tr.next_state < n_states && tr.action < n_actions, DataError,
                      "state/action id exceeds the declared dimensions");

    TrainResult res;
    auto& log = res.log;
    log.steps_per_epoch = steps_per_epoch(transitions.size(), cfg.batch_size);
    log.sync_every = cfg.sync_every > 0 ? cfg.sync_every : log.steps_per_epoch;
    const long eval_every = cfg.ope_eval_every == 0 ? log.steps_per_epoch : cfg.ope_eval_every;
    const long total_steps = log.steps_per_epoch * cfg.epochs;
    if (std::none_of(transitions.begin(), transitions.end(), [](const auto& t) { return t.terminal; }))
        log.warnings.emplace_back("dataset has no terminal transitions; value estimates may diverge");

    TrainState st = resume ? std::move(*resume) : initial_train_state(n_states, n_actions, cfg);
    OFFRL_REQUIRE(st.net.shape().n_states == n_states && st.net.shape().n_actions == n_actions, ConfigError,
                  "resumed network does not match the dataset dimensions");
    const QNetShape shape = st.net.shape();
    const long end_step = stop_after ? std::min(*stop_after, total_steps) : total_steps;

    std::vector<FlatTransition> batch(static_cast<std::size_t>(cfg.batch_size));
    std::vector<QSample> samples(batch.size());
    auto epoch_start = std::chrono::steady_clock::now();
    while (st.step < end_step) {
        for (auto& b : batch) b = transitions[uniform_index(st.rng, transitions.size())];
        const auto y = build_targets(batch, st.net, cfg.gamma, cfg.target_rule);
        for (std::size_t i = 0; i < batch.size(); ++i) samples[i] = {batch[i].state, batch[i].action, y[i]};
        const auto lg = loss_and_grad(shape, st.net.theta(), samples);
        log.loss.push_back(lg.loss);

        const long done = st.step + 1;
        const bool sync_now = done % log.sync_every == 0;
        if (!cfg.gradient_on_sync_only || sync_now) adam_step(st.adam, st.net.theta(), lg.grad);
        if (sync_now) st.net.target_sync(cfg.tau);
        if (ope != nullptr && eval_every > 0 && done % eval_every == 0) {
            const auto ev = evaluate_policy(*ope, to_policy(st.net, PolicyMode::epsilon_greedy(ope->epsilon)));
            log.evals.push_back({done, ev.swdr.estimate, ev.magic.estimate, ev.swdr_score.value, ev.magic_score.value});
        }
        st.step = done;
        if (done % log.steps_per_epoch == 0) {
            st.adam.end_epoch();
            const auto now = std::chrono::steady_clock::now();
            log.epoch_seconds.push_back(std::chrono::duration<double>(now - epoch_start).count());
            epoch_start = now;
        }
    }
    res.net = st.net;
    res.state = std::move(st);
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoint file: architecture, parameters, optimizer and sampler state.

inline nlohmann::json checkpoint_to_json(const TrainState& st, std::uint64_t seed) {
    std::ostringstream rng_state;
    rng_state << st.rng;
    return {{"format", "offrl-checkpoint"},
            {"version", 1},
            {"seed", seed},
            {"shape", to_json(st.net.shape())},
            {"step", st.step},
            {"theta", st.net.theta()},
            {"target", st.net.target()},
            {"adam", to_json(st.adam)},
            {"rng", rng_state.str()}};
}

inline TrainState checkpoint_from_json(const nlohmann::json& j) {
    OFFRL_REQUIRE(j.value("format", "") == "offrl-checkpoint" && j.value("version", 0) == 1, ParseError,
                  "not a version-1 checkpoint file");
    TrainState st;
    st.net = DuelingQNet::from_parameters(shape_from_json(j.at("shape")), j.at("theta").get<std::vector<double>>(),
                                          j.at("target").get<std::vector<double>>());
    st.adam = adam_from_json(j.at("adam"));
    st.step = j.at("step").get<long>();
    std::istringstream rng_state(j.at("rng").get<std::string>());
    rng_state >> st.rng;
    OFFRL_REQUIRE(!rng_state.fail(), ParseError, "corrupt sampler state in checkpoint");
    return st;
}

}  // namespace offrl
