#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "offrl/dataset_io.hpp"
#include "offrl/discretize.hpp"
#include "offrl/empirical_mdp.hpp"
#include "offrl/random.hpp"
#include "offrl/synthetic.hpp"
#include "offrl/trajectory.hpp"

// Synthetic stand-in for the student records: a latent (program, standing)
// chain observed through per-course rows that are aggregated into the ten
// term features. Actions are the 2 plan options x 5 aid types.
namespace offrl {

struct StandingProfile {
    double grade_mean = 6.0;
    double grade_sd = 1.5;
    double absence_mean = 4.0;
    int min_courses = 3;
    int max_courses = 6;
};

struct StudentWorld {
    static constexpr int kPrograms = 2;
    static constexpr int kStandings = 3;
    static constexpr int kLive = kPrograms * kStandings;
    static constexpr int kGraduated = kLive;
    static constexpr int kDropout = kLive + 1;

    SyntheticMdpSpec latent;  // states: program * kStandings + standing, then graduated, dropout
    std::array<ProgramConstants, kPrograms> programs{};
    std::array<StandingProfile, kStandings> standings{};
    std::array<double, 3> course_hours = {30.0, 60.0, 90.0};

    static int program_of(int z) { return z / kStandings; }
    static int standing_of(int z) { return z % kStandings; }
};

namespace detail {

// Per-term transition of one latent state under one action.
inline void student_row(int program, int standing, int plan, int aid, double* row) {
    const int base = program * StudentWorld::kStandings;
    // graduation needs standing; the extended plan trades speed for safety
    double grad = std::array{0.03, 0.10, 0.22}[standing] * (plan == 1 ? 0.8 : 1.0);
    double drop = std::array{0.22, 0.09, 0.04}[standing] * (plan == 1 ? 0.75 : 1.0);
    double up = 0.10, down = 0.10;
    switch (aid) {
        case 0: break;  // none
        case 1:         // tutoring: strong for weak students, mildly distracting otherwise
            up += standing == 0 ? 0.25 : 0.02;
            drop *= standing == 0 ? 0.7 : 1.05;
            break;
        case 2:  // financial
            drop *= 0.6;
            break;
        case 3:  // mentoring
            up += standing == 1 ? 0.20 : 0.05;
            grad *= standing == 2 ? 1.25 : 1.0;
            break;
        case 4:  // workload cut: slows everyone down
            grad *= 0.6;
            down += 0.05;
            break;
        default: break;
    }
    if (program == 1) {  // the longer program graduates later
        grad *= 0.8;
        drop *= 1.1;
    }
    if (standing == 0) down = 0.0;
    if (standing == StudentWorld::kStandings - 1) up = 0.0;
    const double stay = 1.0 - grad - drop - up - down;
    row[StudentWorld::kGraduated] += grad;
    row[StudentWorld::kDropout] += drop;
    if (up > 0.0) row[base + standing + 1] += up;
    if (down > 0.0) row[base + standing - 1] += down;
    row[base + standing] += stay;
}

}  // namespace detail

/// The fixed student world. The logging policy is the same in every state;
/// `horizon` caps the number of terms.
inline StudentWorld student_world(std::uint64_t seed, int horizon = 20) {
    StudentWorld w;
    auto& spec = w.latent;
    spec.n_states = StudentWorld::kLive + 2;
    spec.n_actions = ActionId::kCount;
    spec.horizon_max = horizon;
    spec.seed = seed;
    spec.success_states = {StudentWorld::kGraduated};
    spec.failure_states = {StudentWorld::kDropout};
    const auto S = static_cast<std::size_t>(spec.n_states), A = static_cast<std::size_t>(spec.n_actions);
    spec.kernel.assign(S * A * S, 0.0);
    for (int z = 0; z < spec.n_states; ++z)
        for (int a = 0; a < spec.n_actions; ++a) {
            double* row = spec.kernel.data() + (static_cast<std::size_t>(z) * A + a) * S;
            if (z >= StudentWorld::kLive) {
                row[z] = 1.0;
                continue;
            }
            detail::student_row(StudentWorld::program_of(z), StudentWorld::standing_of(z), a / 5, a % 5, row);
        }
    // Logged advisors mostly keep the default plan and rarely use mentoring.
    const std::array<double, ActionId::kCount> logged = {0.22, 0.08, 0.08, 0.03, 0.17, 0.12, 0.06, 0.06, 0.03, 0.15};
    spec.behavior_policy.clear();
    for (std::size_t s = 0; s < S; ++s) spec.behavior_policy.insert(spec.behavior_policy.end(), logged.begin(), logged.end());
    spec.start_distribution.assign(S, 0.0);
    const std::array<double, StudentWorld::kStandings> entry = {0.35, 0.45, 0.20};
    for (int p = 0; p < StudentWorld::kPrograms; ++p)
        for (int st = 0; st < StudentWorld::kStandings; ++st)
            spec.start_distribution[static_cast<std::size_t>(p * StudentWorld::kStandings + st)] =
                (p == 0 ? 0.6 : 0.4) * entry[static_cast<std::size_t>(st)];
    spec.validate();

    w.programs = {ProgramConstants{3200.0, 8.0, 12.0}, ProgramConstants{3800.0, 10.0, 15.0}};
    w.standings = {StandingProfile{4.8, 1.6, 9.0, 3, 5}, StandingProfile{6.6, 1.3, 5.0, 4, 6},
                   StandingProfile{8.4, 0.9, 2.0, 4, 7}};
    return w;
}

/// Course rows of one term for latent state z.
inline std::vector<CourseRecord> sample_term(const StudentWorld& w, int z, Rng& rng) {
    const auto& prof = w.standings[static_cast<std::size_t>(StudentWorld::standing_of(z))];
    const auto n_courses =
        prof.min_courses + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(prof.max_courses - prof.min_courses + 1)));
    std::vector<CourseRecord> rows;
    for (int c = 0; c < n_courses; ++c) {
        CourseRecord r;
        r.grade = std::clamp(prof.grade_mean + prof.grade_sd * standard_normal(rng), 0.0, 10.0);
        r.course_hours = w.course_hours[uniform_index(rng, w.course_hours.size())];
        // absences: rounded exponential around the profile mean
        r.absences = std::floor(-prof.absence_mean * std::log(1.0 - uniform01(rng)));
        rows.push_back(r);
    }
    return rows;
}

inline StateFeatures sample_features(const StudentWorld& w, int z, Rng& rng) {
    return aggregate_term(sample_term(w, z, rng), w.programs[static_cast<std::size_t>(StudentWorld::program_of(z))]);
}

/// One logged term at course granularity.
struct StudentTerm {
    std::string episode;
    int step = 0;
    int latent = 0;
    int action = 0;
    bool terminal = false;
    bool success = false;
    std::vector<CourseRecord> courses;
};

/// Rolls out the logging policy for n students. Deterministic given seed.
inline std::vector<StudentTerm> simulate_students(const StudentWorld& w, std::size_t n, std::uint64_t seed) {
    OFFRL_REQUIRE(n >= 1, ConfigError, "need at least one student");
    const auto& spec = w.latent;
    Rng rng(seed);
    std::vector<StudentTerm> terms;
    for (std::size_t i = 0; i < n; ++i) {
        int z = static_cast<int>(sample_categorical(rng, spec.start_distribution));
        for (int t = 0; t < spec.horizon_max; ++t) {
            StudentTerm term;
            term.episode = "s" + std::to_string(i);
            term.step = t;
            term.latent = z;
            term.courses = sample_term(w, z, rng);
            term.action = static_cast<int>(sample_categorical(rng, spec.behavior_row(z)));
            const int next = static_cast<int>(sample_categorical(rng, spec.kernel_row(z, term.action)));
            term.terminal = spec.is_terminal(next) || t + 1 == spec.horizon_max;
            term.success = spec.is_success(next);
            terms.push_back(std::move(term));
            if (terms.back().terminal) break;
            z = next;
        }
    }
    return terms;
}

/// Aggregated dataset with continuous features only (states not yet assigned).
inline Dataset students_to_dataset(const StudentWorld& w, const std::vector<StudentTerm>& terms) {
    Dataset ds;
    for (const auto& term : terms) {
        if (term.step == 0) ds.trajectories.push_back({term.episode, {}});
        Transition tr;
        tr.features = aggregate_term(term.courses, w.programs[static_cast<std::size_t>(StudentWorld::program_of(term.latent))]);
        tr.action = term.action;
        tr.terminal = term.terminal;
        tr.success = term.success;
        tr.reward = sparse_reward(tr.terminal, tr.success);
        ds.trajectories.back().steps.push_back(std::move(tr));
    }
    validate(ds);
    return ds;
}

/// Course-level CSV in the default schema (granularity = course).
inline void write_course_csv(std::ostream& out, const StudentWorld& w, const std::vector<StudentTerm>& terms) {
    const CsvSchema schema;
    out << schema.episode << ',' << schema.step << ',' << schema.action << ',' << schema.terminal << ',' << schema.success
        << ',' << schema.program_hours << ',' << schema.suggested_terms << ',' << schema.max_terms << ',' << schema.grade
        << ',' << schema.course_hours << ',' << schema.absences << '\n';
    for (const auto& term : terms) {
        const auto& prog = w.programs[static_cast<std::size_t>(StudentWorld::program_of(term.latent))];
        for (const auto& c : term.courses)
            out << term.episode << ',' << term.step << ',' << term.action << ',' << (term.terminal ? 1 : 0) << ','
                << (term.success ? 1 : 0) << ',' << format_double(prog.program_hours) << ','
                << format_double(prog.suggested_terms) << ',' << format_double(prog.max_terms) << ','
                << format_double(c.grade) << ',' << format_double(c.course_hours) << ',' << format_double(c.absences)
                << '\n';
    }
}

/// Latent-state policy induced by a policy over cluster ids: row z is the
/// average of pi over the clusters that z's term features fall into, estimated
/// from `samples` draws per latent state.
inline PolicyTable induced_latent_policy(const StudentWorld& w, const ClusterModel& model, const PolicyTable& pi,
                                         int samples, std::uint64_t seed) {
    const auto& spec = w.latent;
    PolicyTable out(spec.n_states, spec.n_actions);
    Rng rng(seed);
    for (int z = 0; z < spec.n_states; ++z) {
        if (z >= StudentWorld::kLive) {
            for (int a = 0; a < spec.n_actions; ++a) out(z, a) = 1.0 / spec.n_actions;
            continue;
        }
        std::vector<double> acc(static_cast<std::size_t>(spec.n_actions), 0.0);
        for (int k = 0; k < samples; ++k) {
            const int c = assign_state(model, sample_features(w, z, rng));
            for (int a = 0; a < spec.n_actions; ++a) acc[static_cast<std::size_t>(a)] += pi(c, a);
        }
        for (int a = 0; a < spec.n_actions; ++a) out(z, a) = acc[static_cast<std::size_t>(a)] / samples;
    }
    return out;
}

}  // namespace offrl
