#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "offrl/discretize.hpp"
#include "offrl/empirical_mdp.hpp"
#include "offrl/random.hpp"
#include "offrl/synthetic.hpp"
#include "offrl/trajectory.hpp"

namespace testing_support {

using namespace offrl;

inline std::string data_path(const std::string& name) { return std::string(OFFRL_DATA_DIR) + "/" + name; }

// 4 unit-variance blobs in 10-d; blob c sits at 8 on axis c.
inline PointMatrix blobs(std::uint64_t seed, int per, int n_blobs = 4, double sep = 8.0) {
    Rng rng(seed);
    PointMatrix x(n_blobs * per, 10);
    for (int c = 0; c < n_blobs; ++c)
        for (int i = 0; i < per; ++i)
            for (int d = 0; d < 10; ++d) x(c * per + i, d) = (d == c ? sep : 0.0) + standard_normal(rng);
    return x;
}

// Two interleaved half moons in the first two of 10 dims, `per` points each.
inline PointMatrix moons(std::uint64_t seed, int per, std::vector<int>* truth = nullptr, double noise = 0.06) {
    Rng rng(seed);
    PointMatrix x = PointMatrix::Zero(2 * per, 10);
    for (int i = 0; i < per; ++i) {
        const double t = M_PI * i / (per - 1);
        x(i, 0) = std::cos(t) + noise * standard_normal(rng);
        x(i, 1) = std::sin(t) + noise * standard_normal(rng);
        x(per + i, 0) = 1.0 - std::cos(t) + noise * standard_normal(rng);
        x(per + i, 1) = 0.5 - std::sin(t) + noise * standard_normal(rng);
    }
    if (truth) {
        truth->assign(static_cast<std::size_t>(2 * per), 0);
        for (int i = per; i < 2 * per; ++i) (*truth)[static_cast<std::size_t>(i)] = 1;
    }
    return x;
}

// Share of non-noise points whose label's majority class matches their own.
inline double purity(const std::vector<int>& labels, const std::vector<int>& truth, int noise_label) {
    std::vector<std::array<int, 2>> counts;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == noise_label) continue;
        if (static_cast<std::size_t>(labels[i]) >= counts.size()) counts.resize(static_cast<std::size_t>(labels[i]) + 1, {0, 0});
        counts[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(truth[i])]++;
    }
    int good = 0, total = 0;
    for (const auto& c : counts) {
        good += std::max(c[0], c[1]);
        total += c[0] + c[1];
    }
    return total ? static_cast<double>(good) / total : 0.0;
}

// Six-state chain: advance / retreat / gamble. States 6 (success) and 7 (failure).
inline SyntheticMdpSpec chain_spec(std::uint64_t seed = 7) {
    SyntheticMdpSpec spec;
    const int L = 6, S = 8, A = 3, succ = 6, fail = 7;
    spec.n_states = S;
    spec.n_actions = A;
    spec.horizon_max = 40;
    spec.seed = seed;
    spec.success_states = {succ};
    spec.failure_states = {fail};
    spec.kernel.assign(S * A * S, 0.0);
    auto P = [&](int s, int a, int k) -> double& { return spec.kernel[static_cast<std::size_t>((s * A + a) * S + k)]; };
    for (int s = 0; s < L; ++s) {
        P(s, 0, s + 1 < L ? s + 1 : succ) += 0.7;
        P(s, 0, s) += 0.2;
        P(s, 0, fail) += 0.1;
        P(s, 1, s > 0 ? s - 1 : 0) += 0.6;
        P(s, 1, fail) += 0.3;
        P(s, 1, succ) += 0.1;
        P(s, 2, succ) += 0.15;
        P(s, 2, fail) += 0.55;
        P(s, 2, (s + 3) % L) += 0.3;
    }
    for (int s = L; s < S; ++s)
        for (int a = 0; a < A; ++a) P(s, a, s) = 1.0;
    spec.behavior_policy.assign(S * A, 1.0 / A);
    spec.start_distribution.assign(S, 0.0);
    for (int s = 0; s < L; ++s) spec.start_distribution[static_cast<std::size_t>(s)] = 1.0 / L;
    spec.validate();
    return spec;
}

// Trajectory from (state, action) pairs; the last step is terminal.
inline Trajectory make_traj(const std::string& id, const std::vector<std::pair<int, int>>& sa, bool success) {
    Trajectory t;
    t.id = id;
    for (std::size_t k = 0; k < sa.size(); ++k) {
        Transition tr;
        tr.state = sa[k].first;
        tr.action = sa[k].second;
        tr.terminal = k + 1 == sa.size();
        tr.success = tr.terminal && success;
        tr.reward = sparse_reward(tr.terminal, tr.success);
        tr.next_state = tr.terminal ? kAbsorbing : sa[k + 1].first;
        t.steps.push_back(tr);
    }
    return t;
}

inline PolicyTable random_policy(int S, int A, Rng& rng, double floor = 0.05) {
    PolicyTable pi(S, A);
    for (int s = 0; s < S; ++s) {
        double total = 0.0;
        for (int a = 0; a < A; ++a) total += (pi(s, a) = floor + uniform01(rng));
        for (int a = 0; a < A; ++a) pi(s, a) /= total;
    }
    return pi;
}

inline PolicyTable eps_greedy(const std::vector<int>& greedy, int A, double eps) {
    PolicyTable pi(static_cast<int>(greedy.size()), A);
    for (int s = 0; s < pi.n_states(); ++s)
        for (int a = 0; a < A; ++a) pi(s, a) = eps / A + (a == greedy[static_cast<std::size_t>(s)] ? 1.0 - eps : 0.0);
    return pi;
}

// Deterministic acyclic kernel: (s, a) moves to a strictly later live state or
// to a terminal, so every episode ends within n_live steps. With `shared` every
// action of a state has the same successor.
inline SyntheticMdpSpec dag_spec(std::uint64_t seed, bool shared = false, int n_live = 6, int A = 3) {
    Rng rng(seed);
    SyntheticMdpSpec spec = random_spec({.n_live = n_live, .n_actions = A, .horizon_max = n_live + 4, .seed = seed});
    std::fill(spec.kernel.begin(), spec.kernel.end(), 0.0);
    const int S = spec.n_states;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            int next = s;
            if (shared && a > 0) next = -1;
            else if (s < n_live) {
                const auto k = uniform_index(rng, static_cast<std::size_t>(n_live - s + 1));
                next = s + 1 + static_cast<int>(k);
                if (next >= n_live) next = n_live + static_cast<int>(uniform_index(rng, 2));
            }
            if (next < 0)
                for (int k = 0; k < S; ++k)
                    spec.kernel[(static_cast<std::size_t>(s) * A + a) * S + k] = spec.kernel[static_cast<std::size_t>(s) * A * S + k];
            else
                spec.kernel[(static_cast<std::size_t>(s) * A + a) * S + next] = 1.0;
        }
    spec.validate();
    return spec;
}

// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("offrl_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing_support
