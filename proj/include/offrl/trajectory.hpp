#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "offrl/error.hpp"
#include "offrl/random.hpp"

namespace offrl {

inline constexpr std::size_t kFeatureDim = 10;

/// Discrete id used for the absorbing state reached after a terminal transition.
inline constexpr int kAbsorbing = -1;

/// Aggregated per-term student features, in this fixed order:
///   0 total program hours      1 suggested terms        2 maximum allowed terms
///   3 grade mean               4 grade std              5 course-hours mean
///   6 course-hours std         7 absence mean           8 absence std
///   9 completed-course count
using StateFeatures = std::array<double, kFeatureDim>;

inline constexpr std::array<const char*, kFeatureDim> kFeatureNames = {
    "program_hours", "suggested_terms", "max_terms",   "grade_mean",  "grade_std",
    "hours_mean",    "hours_std",       "absence_mean", "absence_std", "course_count"};

inline bool features_valid(const StateFeatures& f) {
    for (double v : f)
        if (!std::isfinite(v)) return false;
    return f[4] >= 0.0 && f[6] >= 0.0 && f[8] >= 0.0 && f[9] >= 0.0;
}

/// Student action: a supervised study plan flag crossed with one of five aid types.
struct ActionId {
    static constexpr int kPlanOptions = 2;
    static constexpr int kAidTypes = 5;
    static constexpr int kCount = kPlanOptions * kAidTypes;

    int index = 0;

    static ActionId from_parts(int plan_flag, int aid_type) {
        OFFRL_REQUIRE(plan_flag >= 0 && plan_flag < kPlanOptions, ConfigError, "plan flag out of range");
        OFFRL_REQUIRE(aid_type >= 0 && aid_type < kAidTypes, ConfigError, "aid type out of range");
        return ActionId{plan_flag * kAidTypes + aid_type};
    }
    int plan_flag() const { return index / kAidTypes; }
    int aid_type() const { return index % kAidTypes; }
    friend bool operator==(ActionId, ActionId) = default;
};

/// Sparse reward: 1 only on a terminal transition whose outcome is success.
inline double sparse_reward(bool terminal, bool success) { return terminal && success ? 1.0 : 0.0; }

struct Transition {
    int state = kAbsorbing;  // discrete id; kAbsorbing until discretized
    std::optional<StateFeatures> features;
    int action = 0;
    double reward = 0.0;
    int next_state = kAbsorbing;
    bool terminal = false;
    bool success = false;

    friend bool operator==(const Transition&, const Transition&) = default;
};

struct Trajectory {
    std::string id;
    std::vector<Transition> steps;

    std::size_t length() const { return steps.size(); }

    /// Σ_t γ^t r_t with the reward of step t discounted by γ^t.
    double discounted_return(double gamma) const {
        double g = 0.0, disc = 1.0;
        for (const auto& tr : steps) {
            g += disc * tr.reward;
            disc *= gamma;
        }
        return g;
    }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Dataset {
    std::vector<Trajectory> trajectories;

    std::size_t n() const { return trajectories.size(); }
    std::size_t m() const {
        std::size_t total = 0;
        for (const auto& t : trajectories) total += t.length();
        return total;
    }
    std::size_t max_length() const {
        std::size_t longest = 0;
        for (const auto& t : trajectories) longest = std::max(longest, t.length());
        return longest;
    }
    bool has_discrete_states() const {
        for (const auto& t : trajectories)
            for (const auto& s : t.steps)
                if (s.state < 0) return false;
        return !trajectories.empty();
    }
    double mean_discounted_return(double gamma) const {
        if (trajectories.empty()) return 0.0;
        double total = 0.0;
        for (const auto& t : trajectories) total += t.discounted_return(gamma);
        return total / static_cast<double>(trajectories.size());
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Checks the structural trajectory invariants; throws MalformedEpisodeError.
inline void validate(const Trajectory& traj) {
    OFFRL_REQUIRE(!traj.steps.empty(), MalformedEpisodeError, "episode '" + traj.id + "' has no recorded terms");
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const auto& tr = traj.steps[t];
        const bool last = t + 1 == traj.steps.size();
        OFFRL_REQUIRE(tr.terminal == last, MalformedEpisodeError,
                      "episode '" + traj.id + "' must have exactly one terminal transition, at its last step");
        OFFRL_REQUIRE(tr.reward == sparse_reward(tr.terminal, tr.success), MalformedEpisodeError,
                      "episode '" + traj.id + "' violates the sparse reward rule at step " + std::to_string(t));
        if (!last && tr.state >= 0) {
            OFFRL_REQUIRE(tr.next_state == traj.steps[t + 1].state, MalformedEpisodeError,
                          "episode '" + traj.id + "' next_state mismatch at step " + std::to_string(t));
        }
        if (last) {
            OFFRL_REQUIRE(tr.next_state == kAbsorbing, MalformedEpisodeError,
                          "episode '" + traj.id + "' terminal transition must lead to the absorbing state");
        }
    }
}

inline void validate(const Dataset& ds) {
    OFFRL_REQUIRE(ds.n() >= 1, InsufficientDataError, "dataset has no trajectories");
    for (const auto& t : ds.trajectories) validate(t);
}

/// True iff reward = 1 exactly when the transition is terminal and successful.
inline bool rewards_consistent(const Dataset& ds) {
    for (const auto& t : ds.trajectories)
        for (const auto& s : t.steps)
            if (s.reward != sparse_reward(s.terminal, s.success)) return false;
    return true;
}

/// One course taken in a term.
struct CourseRecord {
    double grade = 0.0;
    double course_hours = 0.0;
    double absences = 0.0;
};

/// Constant per-program attributes attached to every term.
struct ProgramConstants {
    double program_hours = 0.0;
    double suggested_terms = 0.0;
    double max_terms = 0.0;
};

namespace detail {
// Population mean and standard deviation (divide by n).
inline std::pair<double, double> mean_pstd(std::span<const double> xs) {
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / n)};
}
}  // namespace detail

/// Collapses the course rows of one term into the 10 state features.
/// Standard deviations use the population convention, so a single course gives 0.
inline StateFeatures aggregate_term(std::span<const CourseRecord> records, const ProgramConstants& program) {
    OFFRL_REQUIRE(!records.empty(), DataError, "empty term: at least one course record is required");
    std::vector<double> grades, hours, absences;
    for (const auto& r : records) {
        OFFRL_REQUIRE(std::isfinite(r.grade) && std::isfinite(r.course_hours) && std::isfinite(r.absences),
                      ParseError, "non-finite course record");
        grades.push_back(r.grade);
        hours.push_back(r.course_hours);
        absences.push_back(r.absences);
    }
    const auto [gm, gs] = detail::mean_pstd(grades);
    const auto [hm, hs] = detail::mean_pstd(hours);
    const auto [am, as] = detail::mean_pstd(absences);
    return {program.program_hours, program.suggested_terms, program.max_terms, gm, gs, hm, hs, am, as,
            static_cast<double>(records.size())};
}

/// Trajectory-level split into (train, eval). Eval receives round(n * fraction)
/// trajectories, clamped so both sides are nonempty when n >= 2.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double eval_fraction, std::uint64_t seed) {
    OFFRL_REQUIRE(eval_fraction > 0.0 && eval_fraction < 1.0, ConfigError, "eval_fraction must lie in (0, 1)");
    const std::size_t n = ds.n();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    auto n_eval = static_cast<std::size_t>(std::llround(static_cast<double>(n) * eval_fraction));
    if (n >= 2) n_eval = std::clamp<std::size_t>(n_eval, 1, n - 1);
    std::vector<bool> is_eval(n, false);
    for (std::size_t i = 0; i < n_eval; ++i) is_eval[order[i]] = true;

    // Keep the original relative order inside each side.
    Dataset train, eval;
    for (std::size_t i = 0; i < n; ++i)
        (is_eval[i] ? eval : train).trajectories.push_back(ds.trajectories[i]);
    return {std::move(train), std::move(eval)};
}

}  // namespace offrl
