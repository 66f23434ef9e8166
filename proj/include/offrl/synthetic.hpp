#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "offrl/error.hpp"
#include "offrl/random.hpp"
#include "offrl/trajectory.hpp"

namespace offrl {

/// Ground-truth episodic MDP used to generate verification datasets.
///
/// Entering a success or failure state ends the episode on that transition;
/// the transition into a success state earns reward 1. An episode still running
/// after `horizon_max` steps is closed as a terminal failure on its last step.
struct SyntheticMdpSpec {
    int n_states = 0;
    int n_actions = 0;
    int horizon_max = 1;
    std::vector<double> kernel;           // [s][a][s'], row-major, n_states*n_actions*n_states
    std::vector<int> success_states;
    std::vector<int> failure_states;
    std::vector<double> start_distribution;  // n_states, zero on terminal states
    std::vector<double> behavior_policy;     // [s][a]
    std::uint64_t seed = 0;

    double P(int s, int a, int next) const {
        return kernel[(static_cast<std::size_t>(s) * n_actions + a) * n_states + next];
    }
    double behavior(int s, int a) const { return behavior_policy[static_cast<std::size_t>(s) * n_actions + a]; }
    bool is_success(int s) const {
        return std::find(success_states.begin(), success_states.end(), s) != success_states.end();
    }
    bool is_terminal(int s) const {
        return is_success(s) || std::find(failure_states.begin(), failure_states.end(), s) != failure_states.end();
    }

    void validate() const {
        OFFRL_REQUIRE(n_states >= 1 && n_actions >= 1, ConfigError, "spec needs n_states >= 1 and n_actions >= 1");
        OFFRL_REQUIRE(horizon_max >= 1, ConfigError, "horizon_max must be >= 1");
        const auto S = static_cast<std::size_t>(n_states), A = static_cast<std::size_t>(n_actions);
        OFFRL_REQUIRE(kernel.size() == S * A * S, ConfigError, "transition kernel has wrong size");
        OFFRL_REQUIRE(behavior_policy.size() == S * A, ConfigError, "behavior policy has wrong size");
        OFFRL_REQUIRE(start_distribution.size() == S, ConfigError, "start distribution has wrong size");
        for (int s : success_states) OFFRL_REQUIRE(s >= 0 && s < n_states, ConfigError, "success state out of range");
        for (int s : failure_states) OFFRL_REQUIRE(s >= 0 && s < n_states, ConfigError, "failure state out of range");
        for (std::size_t row = 0; row < S * A; ++row) {
            double sum = 0.0;
            for (std::size_t k = 0; k < S; ++k) {
                OFFRL_REQUIRE(kernel[row * S + k] >= 0.0, ConfigError, "negative transition probability");
                sum += kernel[row * S + k];
            }
            OFFRL_REQUIRE(std::abs(sum - 1.0) <= 1e-9, ConfigError,
                          "transition row " + std::to_string(row) + " does not sum to 1");
        }
        for (std::size_t s = 0; s < S; ++s) {
            double sum = 0.0;
            for (std::size_t a = 0; a < A; ++a) {
                OFFRL_REQUIRE(behavior_policy[s * A + a] > 0.0, ConfigError,
                              "behavior policy must be strictly positive");
                sum += behavior_policy[s * A + a];
            }
            OFFRL_REQUIRE(std::abs(sum - 1.0) <= 1e-9, ConfigError,
                          "behavior policy row " + std::to_string(s) + " does not sum to 1");
        }
        double start_sum = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            OFFRL_REQUIRE(start_distribution[s] >= 0.0, ConfigError, "negative start probability");
            OFFRL_REQUIRE(start_distribution[s] == 0.0 || !is_terminal(static_cast<int>(s)), ConfigError,
                          "terminal states cannot be start states");
            start_sum += start_distribution[s];
        }
        OFFRL_REQUIRE(std::abs(start_sum - 1.0) <= 1e-9, ConfigError, "start distribution does not sum to 1");
    }

    std::span<const double> kernel_row(int s, int a) const {
        return {kernel.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states,
                static_cast<std::size_t>(n_states)};
    }
    std::span<const double> behavior_row(int s) const {
        return {behavior_policy.data() + static_cast<std::size_t>(s) * n_actions, static_cast<std::size_t>(n_actions)};
    }
};

/// Rolls out the spec's behavior policy. Deterministic given spec.seed.
inline Dataset generate_synthetic(const SyntheticMdpSpec& spec, std::size_t n_trajectories) {
    OFFRL_REQUIRE(spec.horizon_max >= 1, ConfigError, "horizon_max must be >= 1");
    spec.validate();
    OFFRL_REQUIRE(n_trajectories >= 1, ConfigError, "n_trajectories must be >= 1");
    Rng rng(spec.seed);
    Dataset ds;
    ds.trajectories.reserve(n_trajectories);
    for (std::size_t i = 0; i < n_trajectories; ++i) {
        Trajectory traj;
        traj.id = std::to_string(i);
        int s = static_cast<int>(sample_categorical(rng, spec.start_distribution));
        for (int t = 0; t < spec.horizon_max; ++t) {
            const int a = static_cast<int>(sample_categorical(rng, spec.behavior_row(s)));
            const int next = static_cast<int>(sample_categorical(rng, spec.kernel_row(s, a)));
            Transition tr;
            tr.state = s;
            tr.action = a;
            tr.terminal = spec.is_terminal(next) || t + 1 == spec.horizon_max;
            tr.success = spec.is_success(next);
            tr.reward = sparse_reward(tr.terminal, tr.success);
            tr.next_state = tr.terminal ? kAbsorbing : next;
            traj.steps.push_back(tr);
            if (tr.terminal) break;
            s = next;
        }
        ds.trajectories.push_back(std::move(traj));
    }
    return ds;
}

inline nlohmann::json to_json(const SyntheticMdpSpec& spec) {
    return {{"format", "offrl-mdp-spec"},
            {"version", 1},
            {"n_states", spec.n_states},
            {"n_actions", spec.n_actions},
            {"horizon_max", spec.horizon_max},
            {"kernel", spec.kernel},
            {"success_states", spec.success_states},
            {"failure_states", spec.failure_states},
            {"start_distribution", spec.start_distribution},
            {"behavior_policy", spec.behavior_policy},
            {"seed", spec.seed}};
}

inline SyntheticMdpSpec spec_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {"format",         "version",        "n_states",
                                                "n_actions",      "horizon_max",    "kernel",
                                                "success_states", "failure_states", "start_distribution",
                                                "behavior_policy", "seed"};
    for (const auto& [key, _] : j.items())
        OFFRL_REQUIRE(known.count(key), ConfigError, "unknown MDP spec key '" + key + "'");
    SyntheticMdpSpec spec;
    spec.n_states = j.at("n_states").get<int>();
    spec.n_actions = j.at("n_actions").get<int>();
    spec.horizon_max = j.at("horizon_max").get<int>();
    spec.kernel = j.at("kernel").get<std::vector<double>>();
    spec.success_states = j.value("success_states", std::vector<int>{});
    spec.failure_states = j.value("failure_states", std::vector<int>{});
    spec.start_distribution = j.at("start_distribution").get<std::vector<double>>();
    spec.behavior_policy = j.at("behavior_policy").get<std::vector<double>>();
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.validate();
    return spec;
}

inline SyntheticMdpSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    OFFRL_REQUIRE(in.good(), DataError, "cannot open MDP spec '" + path + "'");
    return spec_from_json(nlohmann::json::parse(in));
}

/// Options for random_spec.
struct RandomMdpOptions {
    int n_live = 6;              // non-terminal states
    int n_actions = 3;
    int horizon_max = 10;
    double terminal_mass = 0.3;  // mean probability of ending the episode per step
    double success_share = 0.5;  // mean share of the terminal mass routed to success
    int branching = 3;           // live successors per (s, a) row
    bool deterministic = false;  // one successor per (s, a); terminal_mass ignored
    double behavior_floor = 0.1;
    std::uint64_t seed = 1;
};

/// Random episodic MDP: states [0, n_live) are live, n_live is the success
/// state and n_live + 1 the failure state.
inline SyntheticMdpSpec random_spec(const RandomMdpOptions& o) {
    Rng rng(o.seed);
    SyntheticMdpSpec spec;
    spec.n_states = o.n_live + 2;
    spec.n_actions = o.n_actions;
    spec.horizon_max = o.horizon_max;
    spec.seed = derive_seed(o.seed, 99);
    const int success = o.n_live, failure = o.n_live + 1;
    spec.success_states = {success};
    spec.failure_states = {failure};
    const auto S = static_cast<std::size_t>(spec.n_states), A = static_cast<std::size_t>(spec.n_actions);
    spec.kernel.assign(S * S * A, 0.0);
    spec.behavior_policy.assign(S * A, 0.0);
    spec.start_distribution.assign(S, 0.0);

    for (int s = 0; s < spec.n_states; ++s) {
        for (int a = 0; a < spec.n_actions; ++a) {
            double* row = spec.kernel.data() + (static_cast<std::size_t>(s) * A + a) * S;
            if (s >= o.n_live) {
                row[s] = 1.0;
                continue;
            }
            if (o.deterministic) {
                row[uniform_index(rng, S)] = 1.0;
                continue;
            }
            const double end = std::clamp(o.terminal_mass * (0.5 + uniform01(rng)), 0.02, 0.95);
            const double succ = std::clamp(o.success_share * (0.3 + 1.4 * uniform01(rng)), 0.0, 1.0);
            row[success] = end * succ;
            row[failure] = end * (1.0 - succ);
            std::vector<double> w(static_cast<std::size_t>(o.branching));
            double total = 0.0;
            for (auto& x : w) total += (x = 0.1 + uniform01(rng));
            for (double x : w) row[uniform_index(rng, static_cast<std::size_t>(o.n_live))] += (1.0 - end) * x / total;
        }
        double total = 0.0;
        for (std::size_t a = 0; a < A; ++a) total += (spec.behavior_policy[s * A + a] = o.behavior_floor + uniform01(rng));
        for (std::size_t a = 0; a < A; ++a) spec.behavior_policy[s * A + a] /= total;
    }
    double total = 0.0;
    for (int s = 0; s < o.n_live; ++s) total += (spec.start_distribution[s] = 0.2 + uniform01(rng));
    for (int s = 0; s < o.n_live; ++s) spec.start_distribution[s] /= total;
    spec.validate();
    return spec;
}

}  // namespace offrl
