#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "offrl/error.hpp"
#include "offrl/synthetic.hpp"
#include "offrl/trajectory.hpp"

namespace offrl {

/// Row-stochastic S×A table of action probabilities.
class PolicyTable {
public:
    PolicyTable() = default;
    PolicyTable(int n_states, int n_actions)
        : n_states_(n_states), n_actions_(n_actions),
          probs_(static_cast<std::size_t>(n_states) * n_actions, 1.0 / n_actions) {}
    PolicyTable(int n_states, int n_actions, std::vector<double> probs)
        : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
        OFFRL_REQUIRE(probs_.size() == static_cast<std::size_t>(n_states) * n_actions, ConfigError,
                      "policy table has wrong size");
    }

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    double operator()(int s, int a) const { return probs_[index(s, a)]; }
    double& operator()(int s, int a) { return probs_[index(s, a)]; }
    std::span<const double> row(int s) const {
        return {probs_.data() + static_cast<std::size_t>(s) * n_actions_, static_cast<std::size_t>(n_actions_)};
    }
    const std::vector<double>& data() const { return probs_; }

    /// Greedy action of a row; ties go to the lowest action id.
    int argmax(int s) const {
        const auto r = row(s);
        return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }

    bool is_valid(double tol = 1e-9) const {
        for (int s = 0; s < n_states_; ++s) {
            double sum = 0.0;
            for (double p : row(s)) {
                if (!(p >= 0.0)) return false;
                sum += p;
            }
            if (std::abs(sum - 1.0) > tol) return false;
        }
        return true;
    }

    friend bool operator==(const PolicyTable&, const PolicyTable&) = default;

private:
    std::size_t index(int s, int a) const { return static_cast<std::size_t>(s) * n_actions_ + a; }

    int n_states_ = 0;
    int n_actions_ = 0;
    std::vector<double> probs_;
};

/// Empirical tabular MDP over S discrete states plus one absorbing state with
/// index S. Counts are kept so a dumped model can be refitted and audited.
struct TabularMDP {
    int n_states = 0;
    int n_actions = 0;
    double gamma = 0.99;
    int horizon = 1;
    std::vector<double> transition_counts;  // [S+1][A][S+1]
    std::vector<double> reward_sums;        // [S+1][A]
    std::vector<double> P_hat;              // [S+1][A][S+1]
    std::vector<double> R_hat;              // [S+1][A]

    int absorbing() const { return n_states; }
    int total_states() const { return n_states + 1; }

    std::size_t sa(int s, int a) const { return static_cast<std::size_t>(s) * n_actions + a; }
    double P(int s, int a, int next) const { return P_hat[sa(s, a) * total_states() + next]; }
    double R(int s, int a) const { return R_hat[sa(s, a)]; }
    std::span<const double> row(int s, int a) const {
        return {P_hat.data() + sa(s, a) * total_states(), static_cast<std::size_t>(total_states())};
    }
    double count(int s, int a) const {
        double c = 0.0;
        for (int k = 0; k < total_states(); ++k) c += transition_counts[sa(s, a) * total_states() + k];
        return c;
    }

    /// Recomputes P_hat and R_hat from the counts. Unobserved (s, a) pairs get a
    /// uniform next-state row over all S+1 states and zero reward; the absorbing
    /// state self-loops with zero reward.
    void normalize() {
        const int T = total_states();
        P_hat.assign(static_cast<std::size_t>(T) * n_actions * T, 0.0);
        R_hat.assign(static_cast<std::size_t>(T) * n_actions, 0.0);
        for (int s = 0; s < T; ++s)
            for (int a = 0; a < n_actions; ++a) {
                double* p = P_hat.data() + sa(s, a) * T;
                if (s == absorbing()) {
                    p[s] = 1.0;
                    continue;
                }
                const double c = count(s, a);
                if (c > 0.0) {
                    for (int k = 0; k < T; ++k) p[k] = transition_counts[sa(s, a) * T + k] / c;
                    R_hat[sa(s, a)] = reward_sums[sa(s, a)] / c;
                } else {
                    for (int k = 0; k < T; ++k) p[k] = 1.0 / T;
                }
            }
    }
};

/// Absorbing-state index for a transition's next state.
inline int model_next_state(const Transition& tr, int n_states) {
    return tr.terminal || tr.next_state == kAbsorbing ? n_states : tr.next_state;
}

/// Default model horizon: twice the longest logged trajectory.
inline int default_horizon(const Dataset& ds) { return static_cast<int>(2 * ds.max_length()); }

inline TabularMDP fit_mdp(const Dataset& ds, int n_states, int n_actions, double gamma, int horizon) {
    OFFRL_REQUIRE(ds.m() > 0, InsufficientDataError, "cannot fit an MDP to an empty dataset");
    OFFRL_REQUIRE(gamma >= 0.0 && gamma <= 1.0, ConfigError, "gamma must lie in [0, 1]");
    OFFRL_REQUIRE(horizon >= 0, ConfigError, "horizon must be >= 0");
    TabularMDP mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.gamma = gamma;
    mdp.horizon = horizon;
    const int T = mdp.total_states();
    mdp.transition_counts.assign(static_cast<std::size_t>(T) * n_actions * T, 0.0);
    mdp.reward_sums.assign(static_cast<std::size_t>(T) * n_actions, 0.0);
    for (const auto& traj : ds.trajectories)
        for (const auto& tr : traj.steps) {
            OFFRL_REQUIRE(tr.state >= 0 && tr.state < n_states, DataError,
                          "state id " + std::to_string(tr.state) + " out of range in episode '" + traj.id + "'");
            OFFRL_REQUIRE(tr.action >= 0 && tr.action < n_actions, DataError,
                          "action id " + std::to_string(tr.action) + " out of range in episode '" + traj.id + "'");
            const int next = model_next_state(tr, n_states);
            OFFRL_REQUIRE(next >= 0 && next <= n_states, DataError, "next state out of range");
            mdp.transition_counts[mdp.sa(tr.state, tr.action) * T + next] += 1.0;
            mdp.reward_sums[mdp.sa(tr.state, tr.action)] += tr.reward;
        }
    mdp.normalize();
    return mdp;
}

/// Exact model of a synthetic spec: transitions into terminal states are routed
/// to the absorbing state and the success probability becomes the expected reward.
inline TabularMDP model_from_spec(const SyntheticMdpSpec& spec, double gamma, int horizon) {
    TabularMDP mdp;
    mdp.n_states = spec.n_states;
    mdp.n_actions = spec.n_actions;
    mdp.gamma = gamma;
    mdp.horizon = horizon;
    const int T = mdp.total_states();
    mdp.transition_counts.assign(static_cast<std::size_t>(T) * spec.n_actions * T, 0.0);
    mdp.reward_sums.assign(static_cast<std::size_t>(T) * spec.n_actions, 0.0);
    for (int s = 0; s < spec.n_states; ++s)
        for (int a = 0; a < spec.n_actions; ++a) {
            double* c = mdp.transition_counts.data() + mdp.sa(s, a) * T;
            if (spec.is_terminal(s)) {
                c[mdp.absorbing()] = 1.0;
                continue;
            }
            for (int k = 0; k < spec.n_states; ++k) {
                const double p = spec.P(s, a, k);
                if (spec.is_terminal(k)) {
                    c[mdp.absorbing()] += p;
                    if (spec.is_success(k)) mdp.reward_sums[mdp.sa(s, a)] += p;
                } else {
                    c[k] += p;
                }
            }
        }
    mdp.normalize();
    return mdp;
}

/// The spec's own logging policy as a table.
inline PolicyTable spec_behavior(const SyntheticMdpSpec& spec) {
    PolicyTable pi(spec.n_states, spec.n_actions);
    for (int s = 0; s < spec.n_states; ++s)
        for (int a = 0; a < spec.n_actions; ++a) pi(s, a) = spec.behavior(s, a);
    return pi;
}

/// Laplace-smoothed behavior policy: (count(s,a) + alpha) / (count(s) + alpha * A).
inline PolicyTable estimate_behavior_policy(const Dataset& ds, int n_states, int n_actions, double alpha) {
    OFFRL_REQUIRE(alpha > 0.0, ConfigError, "smoothing alpha must be > 0");
    std::vector<double> counts(static_cast<std::size_t>(n_states) * n_actions, 0.0);
    for (const auto& traj : ds.trajectories)
        for (const auto& tr : traj.steps) {
            OFFRL_REQUIRE(tr.state >= 0 && tr.state < n_states && tr.action >= 0 && tr.action < n_actions, DataError,
                          "state/action id out of range in episode '" + traj.id + "'");
            counts[static_cast<std::size_t>(tr.state) * n_actions + tr.action] += 1.0;
        }
    PolicyTable pi(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        double total = 0.0;
        for (int a = 0; a < n_actions; ++a) total += counts[static_cast<std::size_t>(s) * n_actions + a];
        for (int a = 0; a < n_actions; ++a)
            pi(s, a) = (counts[static_cast<std::size_t>(s) * n_actions + a] + alpha) / (total + alpha * n_actions);
    }
    return pi;
}

struct RewardPrediction {
    double value = 0.0;
    bool truncated = false;  // t exceeded the model horizon
};

/// r̂(s, a, t): expected reward t steps after taking a in s and then following pi,
/// by exact propagation of the state distribution through P_hat.
inline RewardPrediction predict_reward(const TabularMDP& mdp, const PolicyTable& pi, int s, int a, int t) {
    OFFRL_REQUIRE(t >= 0, ConfigError, "t must be >= 0");
    OFFRL_REQUIRE(s >= 0 && s <= mdp.n_states && a >= 0 && a < mdp.n_actions, ConfigError, "state/action out of range");
    if (t > mdp.horizon) return {0.0, true};
    if (t == 0) return {mdp.R(s, a), false};
    const int T = mdp.total_states();
    std::vector<double> dist(mdp.row(s, a).begin(), mdp.row(s, a).end()), next(static_cast<std::size_t>(T));
    for (int step = 1; step < t; ++step) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int x = 0; x < T; ++x) {
            if (dist[x] == 0.0) continue;
            for (int b = 0; b < mdp.n_actions; ++b) {
                const double w = dist[x] * (x == mdp.absorbing() ? 1.0 / mdp.n_actions : pi(x, b));
                if (w == 0.0) continue;
                const auto r = mdp.row(x, b);
                for (int y = 0; y < T; ++y) next[y] += w * r[y];
            }
        }
        dist.swap(next);
    }
    double value = 0.0;
    for (int x = 0; x < mdp.n_states; ++x)
        for (int b = 0; b < mdp.n_actions; ++b) value += dist[x] * pi(x, b) * mdp.R(x, b);
    return {value, false};
}

/// Model state and action values for a policy. Index S is the absorbing state.
struct ModelValues {
    std::vector<double> v;  // S+1
    std::vector<double> q;  // (S+1)×A
    int n_actions = 0;

    double V(int s) const { return v[static_cast<std::size_t>(s)]; }
    double Q(int s, int a) const { return q[static_cast<std::size_t>(s) * n_actions + a]; }
};

/// q̂(s,a) = Σ_{t=0}^{horizon} γ^t r̂(s,a,t), v̂(s) = Σ_a π(a|s) q̂(s,a), computed
/// as horizon rounds of truncated policy evaluation on P_hat.
inline ModelValues model_values(const TabularMDP& mdp, const PolicyTable& pi) {
    OFFRL_REQUIRE(pi.n_states() >= mdp.n_states && pi.n_actions() == mdp.n_actions, ConfigError,
                  "policy does not match the model dimensions");
    const int T = mdp.total_states(), A = mdp.n_actions;
    ModelValues out;
    out.n_actions = A;
    out.q.assign(static_cast<std::size_t>(T) * A, 0.0);
    out.v.assign(static_cast<std::size_t>(T), 0.0);
    auto update_v = [&] {
        for (int s = 0; s < mdp.n_states; ++s) {
            double acc = 0.0;
            for (int a = 0; a < A; ++a) acc += pi(s, a) * out.q[static_cast<std::size_t>(s) * A + a];
            out.v[s] = acc;
        }
        out.v[mdp.absorbing()] = 0.0;
    };
    for (int s = 0; s < T; ++s)
        for (int a = 0; a < A; ++a) out.q[static_cast<std::size_t>(s) * A + a] = mdp.R(s, a);
    update_v();
    for (int h = 1; h <= mdp.horizon; ++h) {
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < A; ++a) {
                const auto r = mdp.row(s, a);
                double future = 0.0;
                for (int k = 0; k < T; ++k) future += r[k] * out.v[k];
                out.q[static_cast<std::size_t>(s) * A + a] = mdp.R(s, a) + mdp.gamma * future;
            }
        update_v();
    }
    return out;
}

/// Exact finite-horizon discounted value of pi under the true spec, by backward
/// induction. The reward for entering a success state is earned on that
/// transition; an episode is cut after `horizon` steps.
inline double exact_policy_value(const SyntheticMdpSpec& spec, const PolicyTable& pi, double gamma, int horizon) {
    spec.validate();
    OFFRL_REQUIRE(pi.n_states() >= spec.n_states && pi.n_actions() == spec.n_actions, ConfigError,
                  "policy does not match the spec dimensions");
    const auto S = static_cast<std::size_t>(spec.n_states);
    std::vector<double> v_next(S, 0.0), v(S, 0.0);
    for (int h = 1; h <= horizon; ++h) {
        for (int s = 0; s < spec.n_states; ++s) {
            if (spec.is_terminal(s)) {
                v[s] = 0.0;
                continue;
            }
            double acc = 0.0;
            for (int a = 0; a < spec.n_actions; ++a) {
                if (pi(s, a) == 0.0) continue;
                double qa = 0.0;
                for (int k = 0; k < spec.n_states; ++k) {
                    const double p = spec.P(s, a, k);
                    if (p == 0.0) continue;
                    qa += p * ((spec.is_success(k) ? 1.0 : 0.0) + (spec.is_terminal(k) ? 0.0 : gamma * v_next[k]));
                }
                acc += pi(s, a) * qa;
            }
            v[s] = acc;
        }
        v_next.swap(v);
    }
    double value = 0.0;
    for (std::size_t s = 0; s < S; ++s) value += spec.start_distribution[s] * v_next[s];
    return value;
}

/// Optimal discounted action values of the model by value iteration (stationary,
/// undiscounted horizon ignored). Used as a tabular reference for the learner.
inline std::vector<double> optimal_q_values(const TabularMDP& mdp, double tol = 1e-12, int max_iter = 100000) {
    const int T = mdp.total_states(), A = mdp.n_actions;
    std::vector<double> q(static_cast<std::size_t>(T) * A, 0.0), v(static_cast<std::size_t>(T), 0.0);
    for (int it = 0; it < max_iter; ++it) {
        double delta = 0.0;
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < A; ++a) {
                const auto r = mdp.row(s, a);
                double future = 0.0;
                for (int k = 0; k < T; ++k) future += r[k] * v[k];
                const double nq = mdp.R(s, a) + mdp.gamma * future;
                delta = std::max(delta, std::abs(nq - q[static_cast<std::size_t>(s) * A + a]));
                q[static_cast<std::size_t>(s) * A + a] = nq;
            }
        for (int s = 0; s < mdp.n_states; ++s)
            v[s] = *std::max_element(q.begin() + static_cast<std::ptrdiff_t>(s) * A,
                                     q.begin() + static_cast<std::ptrdiff_t>(s + 1) * A);
        if (delta < tol) break;
    }
    return q;
}

inline PolicyTable greedy_from_q(std::span<const double> q, int n_states, int n_actions) {
    PolicyTable pi(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        const auto row = q.subspan(static_cast<std::size_t>(s) * n_actions, static_cast<std::size_t>(n_actions));
        const int best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        for (int a = 0; a < n_actions; ++a) pi(s, a) = a == best ? 1.0 : 0.0;
    }
    return pi;
}

// ---------------------------------------------------------------------------
// Model file: counts and reward sums; probabilities are re-derived on load.

inline nlohmann::json to_json(const TabularMDP& mdp) {
    return {{"format", "offrl-tabular-mdp"}, {"version", 1},         {"n_states", mdp.n_states},
            {"n_actions", mdp.n_actions},    {"gamma", mdp.gamma},   {"horizon", mdp.horizon},
            {"transition_counts", mdp.transition_counts},           {"reward_sums", mdp.reward_sums}};
}

inline TabularMDP mdp_from_json(const nlohmann::json& j) {
    OFFRL_REQUIRE(j.value("format", "") == "offrl-tabular-mdp" && j.value("version", 0) == 1, ParseError,
                  "not a version-1 tabular MDP file");
    TabularMDP mdp;
    mdp.n_states = j.at("n_states").get<int>();
    mdp.n_actions = j.at("n_actions").get<int>();
    mdp.gamma = j.at("gamma").get<double>();
    mdp.horizon = j.at("horizon").get<int>();
    mdp.transition_counts = j.at("transition_counts").get<std::vector<double>>();
    mdp.reward_sums = j.at("reward_sums").get<std::vector<double>>();
    const auto T = static_cast<std::size_t>(mdp.total_states());
    OFFRL_REQUIRE(mdp.transition_counts.size() == T * mdp.n_actions * T &&
                      mdp.reward_sums.size() == T * mdp.n_actions,
                  ParseError, "tabular MDP arrays have wrong size");
    mdp.normalize();
    return mdp;
}

}  // namespace offrl
