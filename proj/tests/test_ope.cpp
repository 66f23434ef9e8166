#include <gtest/gtest.h>

#include "offrl/ope.hpp"
#include "support.hpp"

using namespace offrl;
using namespace testing_support;

namespace {

OpeData ope_data(const Dataset& ds, const PolicyTable& pi_e, const PolicyTable& pi_b, const TabularMDP& model) {
    return make_ope_data(ds, importance_ratios(ds, pi_e, pi_b), model_values(model, pi_e), model.gamma);
}

// g^(j) written term by term from the weight table: importance-weighted rewards,
// the model tail at step j+1 and the control variates, with w_{-1} = 1/n.
double eq4_oracle(const Dataset& ds, const ImportanceTable& imp, const ModelValues& mv, double gamma, ReturnLength j) {
    const double n = static_cast<double>(ds.n());
    if (j == kModelOnly) {
        double g = 0.0;
        for (const auto& t : ds.trajectories) g += mv.V(t.steps[0].state) / n;
        return g;
    }
    const long J = std::min<long>(j, imp.T_max - 1);
    double rewards = 0.0, tail = 0.0, control = 0.0;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const auto& steps = ds.trajectories[i].steps;
        for (long t = 0; t <= J && t < static_cast<long>(steps.size()); ++t) {
            const auto& s = steps[static_cast<std::size_t>(t)];
            const double w = imp.w_at(i, static_cast<int>(t));
            const double w_prev = t == 0 ? 1.0 / n : imp.w_at(i, static_cast<int>(t - 1));
            rewards += std::pow(gamma, t) * w * s.reward;
            control += std::pow(gamma, t) * (w * mv.Q(s.state, s.action) - w_prev * mv.V(s.state));
        }
        if (J + 1 < static_cast<long>(steps.size()))
            tail += std::pow(gamma, J + 1) * imp.w_at(i, static_cast<int>(J)) * mv.V(steps[static_cast<std::size_t>(J + 1)].state);
    }
    return rewards + tail - control;
}

double mean_return(const Dataset& ds, double gamma) { return ds.mean_discounted_return(gamma); }

}  // namespace

TEST(Importance, EqualPoliciesGiveUnitRatios) {
    const auto spec = random_spec({});
    const auto ds = generate_synthetic(spec, 50);
    const auto pi = spec_behavior(spec);
    const auto imp = importance_ratios(ds, pi, pi);
    for (std::size_t i = 0; i < imp.n; ++i)
        for (int t = 0; t < imp.T_max; ++t) {
            EXPECT_NEAR(imp.rho_at(i, t), 1.0, 1e-15);
            EXPECT_NEAR(imp.w_at(i, t), 1.0 / 50, 1e-15);
        }
}

TEST(Importance, SingleTrajectoryHasUnitWeight) {
    Dataset ds;
    ds.trajectories.push_back(make_traj("x", {{0, 0}, {1, 1}, {0, 1}}, true));
    Rng rng(1);
    const auto imp = importance_ratios(ds, random_policy(2, 2, rng), random_policy(2, 2, rng));
    for (int t = 0; t < 3; ++t) EXPECT_DOUBLE_EQ(imp.w_at(0, t), 1.0);
}

TEST(Importance, HandComputedTwoStateCase) {
    PolicyTable pi_b(2, 2), pi_e(2, 2);
    pi_b(0, 0) = 0.5, pi_b(0, 1) = 0.5, pi_b(1, 0) = 0.25, pi_b(1, 1) = 0.75;
    pi_e(0, 0) = 0.9, pi_e(0, 1) = 0.1, pi_e(1, 0) = 0.5, pi_e(1, 1) = 0.5;
    Dataset ds;
    ds.trajectories.push_back(make_traj("a", {{0, 0}, {1, 1}}, true));
    ds.trajectories.push_back(make_traj("b", {{1, 0}, {0, 1}, {1, 0}}, false));
    const auto imp = importance_ratios(ds, pi_e, pi_b);
    ASSERT_EQ(imp.T_max, 3);
    EXPECT_NEAR(imp.rho_at(0, 0), 1.8, 1e-14);
    EXPECT_NEAR(imp.rho_at(0, 1), 1.2, 1e-14);
    EXPECT_NEAR(imp.rho_at(0, 2), 1.2, 1e-14);  // carried past the end
    EXPECT_NEAR(imp.rho_at(1, 0), 2.0, 1e-14);
    EXPECT_NEAR(imp.rho_at(1, 1), 0.4, 1e-14);
    EXPECT_NEAR(imp.rho_at(1, 2), 0.8, 1e-14);
    EXPECT_NEAR(imp.w_at(0, 0), 1.8 / 3.8, 1e-14);
    EXPECT_NEAR(imp.w_at(1, 1), 0.4 / 1.6, 1e-14);
    EXPECT_NEAR(imp.w_at(0, 2), 0.6, 1e-14);
}

TEST(Importance, UnsupportedActionNamesPair) {
    PolicyTable pi_b(1, 2);
    pi_b(0, 0) = 1.0, pi_b(0, 1) = 0.0;
    Dataset ds;
    ds.trajectories.push_back(make_traj("a", {{0, 1}}, true));
    try {
        importance_ratios(ds, PolicyTable(1, 2), pi_b);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("s=0, a=1"), std::string::npos);
    }
}

TEST(Importance, ProductStructureAndNormalization) {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const auto spec = random_spec({.seed = 100 + static_cast<std::uint64_t>(trial)});
        const auto ds = generate_synthetic(spec, 1 + uniform_index(rng, 40));
        const auto pi_e = random_policy(8, 3, rng, 0.01), pi_b = spec_behavior(spec);
        const auto imp = importance_ratios(ds, pi_e, pi_b);
        for (std::size_t i = 0; i < imp.n; ++i) {
            const auto& steps = ds.trajectories[i].steps;
            double rho = 1.0;
            for (int t = 0; t < imp.T_max; ++t) {
                if (t < static_cast<int>(steps.size())) rho *= pi_e(steps[t].state, steps[t].action) / pi_b(steps[t].state, steps[t].action);
                EXPECT_GE(imp.rho_at(i, t), 0.0);
                EXPECT_NEAR(imp.rho_at(i, t), rho, 1e-12 * std::max(1.0, rho));
            }
        }
        for (int t = 0; t < imp.T_max; ++t) {
            double sum = 0.0;
            for (std::size_t i = 0; i < imp.n; ++i) sum += imp.w_at(i, t);
            EXPECT_NEAR(sum, 1.0, 1e-9);
        }
    }
}

TEST(JStep, MatchesTermByTermOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        const auto spec = random_spec({.seed = 200 + static_cast<std::uint64_t>(trial)});
        const auto ds = generate_synthetic(spec, 2 + uniform_index(rng, 60));
        const double gamma = trial % 3 == 0 ? 1.0 : 0.5 + 0.5 * uniform01(rng);
        const auto model = fit_mdp(ds, 8, 3, gamma, default_horizon(ds));
        const auto pi_e = random_policy(8, 3, rng, 0.05);
        const auto pi_b = estimate_behavior_policy(ds, 8, 3, 0.5);
        const auto imp = importance_ratios(ds, pi_e, pi_b);
        const auto mv = model_values(model, pi_e);
        const auto d = make_ope_data(ds, imp, mv, gamma);
        for (ReturnLength j : {kModelOnly, 0, 1, 2, 3, 5, 9, kInfiniteReturn})
            EXPECT_NEAR(j_step_return(d, j), eq4_oracle(ds, imp, mv, gamma, j), 1e-12) << "j=" << j;
    }
}

TEST(JStep, EndpointsAndZeroDiscount) {
    Rng rng(4);
    const auto spec = random_spec({.seed = 4});
    const auto ds = generate_synthetic(spec, 300);
    const auto model = fit_mdp(ds, 8, 3, 0.0, 20);
    const auto pi_e = random_policy(8, 3, rng), pi_b = estimate_behavior_policy(ds, 8, 3, 0.5);
    const auto d = ope_data(ds, pi_e, pi_b, model);
    const auto mv = model_values(model, pi_e);
    double start = 0.0;
    for (const auto& t : ds.trajectories) start += mv.V(t.steps[0].state);
    EXPECT_NEAR(j_step_return(d, kModelOnly), start / 300.0, 1e-12);
    EXPECT_EQ(j_step_return(d, d.T_max - 1), wdr(d));
    // γ = 0: only step 0 survives; with the model fitted on this data the
    // step-0 reward and q̂ terms need not cancel, but the value is the same for every j ≥ 0
    for (int j : {1, 2, 5}) EXPECT_NEAR(j_step_return(d, j), j_step_return(d, 0), 1e-12);
}

TEST(JStep, ExactModelCancelsOnDeterministicKernels) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto spec = dag_spec(seed);
        spec.seed = 500 + seed;
        const auto ds = generate_synthetic(spec, 400);
        const auto pi = spec_behavior(spec);
        const auto model = model_from_spec(spec, 0.95, 50);
        const auto d = ope_data(ds, pi, pi, model);
        // every g^(j) telescopes to the model value at the logged start states
        const double start = j_step_return(d, kModelOnly);
        for (ReturnLength j : {0, 1, 2, 3, 4, kInfiniteReturn}) EXPECT_NEAR(j_step_return(d, j), start, 1e-9);
        EXPECT_NEAR(magic(d, {.seed = seed}).estimate, start, 1e-6);
        EXPECT_NEAR(swdr(d, 200, seed), start, 1e-6);
    }
}

TEST(JStep, ExactModelGivesMeanReturnWhenActionsShareSuccessors) {
    // q̂(s,a) = v̂(s) here, so the control variates vanish sample by sample
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto spec = dag_spec(seed, true);
        spec.seed = 600 + seed;
        const auto ds = generate_synthetic(spec, 400);
        const auto pi = spec_behavior(spec);
        const auto d = ope_data(ds, pi, pi, model_from_spec(spec, 0.95, 50));
        const double mean = mean_return(ds, 0.95);
        for (ReturnLength j : {kModelOnly, 0, 1, 2, 3, 4, kInfiniteReturn}) EXPECT_NEAR(j_step_return(d, j), mean, 1e-9);
        EXPECT_NEAR(magic(d, {.seed = seed}).estimate, mean, 1e-6);
        EXPECT_NEAR(swdr(d, 200, seed), mean, 1e-6);
    }
}

TEST(Wdr, WithinBootstrapErrorOfExactValue) {
    auto spec = random_spec({.n_live = 4, .seed = 11});
    spec.seed = 12;
    const auto ds = generate_synthetic(spec, 10000);
    const auto pi_b = estimate_behavior_policy(ds, 6, 3, 0.5);
    std::vector<int> greedy{0, 1, 2, 0, 0, 0};
    const auto pi_e = eps_greedy(greedy, 3, 0.3);
    const auto model = fit_mdp(ds, 6, 3, 0.99, default_horizon(ds));
    const auto d = ope_data(ds, pi_e, pi_b, model);
    const auto boot = bootstrap_interval(d, 200, 1);
    double m = 0.0, sq = 0.0;
    for (double x : boot.resampled) m += x;
    m /= 200.0;
    for (double x : boot.resampled) sq += (x - m) * (x - m);
    const double se = std::sqrt(sq / 199.0);
    EXPECT_LT(std::abs(wdr(d) - exact_policy_value(spec, pi_e, 0.99, spec.horizon_max)), 3.0 * se);
}

TEST(Bootstrap, IdenticalTrajectoriesCollapse) {
    Dataset ds;
    for (int i = 0; i < 30; ++i) ds.trajectories.push_back(make_traj("x", {{0, 1}, {1, 0}}, true));
    Rng rng(5);
    const auto model = fit_mdp(ds, 2, 2, 0.9, 4);
    const auto d = ope_data(ds, random_policy(2, 2, rng), estimate_behavior_policy(ds, 2, 2, 0.5), model);
    const auto b = bootstrap_interval(d, 50, 3);
    EXPECT_NEAR(b.lower, b.wdr, 1e-12);
    EXPECT_NEAR(b.upper, b.wdr, 1e-12);
    EXPECT_THROW(bootstrap_interval(d, 19, 3), ConfigError);
}

TEST(Bootstrap, AlwaysContainsWdrAndIndexingVariants) {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const auto spec = random_spec({.seed = 700 + static_cast<std::uint64_t>(trial)});
        const auto ds = generate_synthetic(spec, 3 + uniform_index(rng, 80));
        const auto model = fit_mdp(ds, 8, 3, 0.99, default_horizon(ds));
        const auto d = ope_data(ds, random_policy(8, 3, rng, 0.01), estimate_behavior_policy(ds, 8, 3, 0.5), model);
        for (auto idx : {IntervalIndexing::Percentile, IntervalIndexing::Literal}) {
            const auto b = bootstrap_interval(d, 20 + static_cast<int>(uniform_index(rng, 100)), trial, idx);
            EXPECT_LE(b.lower, b.wdr);
            EXPECT_LE(b.wdr, b.upper);
            EXPECT_TRUE(std::is_sorted(b.resampled.begin(), b.resampled.end()));
        }
    }
}

TEST(Bootstrap, PercentilePositions) {
    const auto spec = random_spec({.seed = 8});
    const auto ds = generate_synthetic(spec, 40);
    const auto model = fit_mdp(ds, 8, 3, 0.99, default_horizon(ds));
    Rng rng(8);
    const auto d = ope_data(ds, random_policy(8, 3, rng), estimate_behavior_policy(ds, 8, 3, 0.5), model);
    const auto p = bootstrap_interval(d, 100, 2);
    EXPECT_EQ(p.lower, std::min(p.wdr, p.resampled[5]));
    EXPECT_EQ(p.upper, std::max(p.wdr, p.resampled[95]));
    const auto lit = bootstrap_interval(d, 100, 2, IntervalIndexing::Literal);
    EXPECT_EQ(lit.lower, std::min(lit.wdr, lit.resampled[2]));   // ⌊0.05·40⌋
    EXPECT_EQ(lit.upper, std::max(lit.wdr, lit.resampled[20]));  // ⌈0.5·40⌉
}

TEST(Bootstrap, WidthShrinksWithSampleSize) {
    auto spec = load_spec(data_path("standard_mdp.json"));
    const auto pi_e = eps_greedy({0, 1, 2, 0, 1, 2, 0, 0}, 3, 0.1);
    std::vector<double> widths;
    for (std::size_t n : {500u, 2000u, 8000u}) {
        double total = 0.0;
        for (std::uint64_t r = 0; r < 5; ++r) {
            spec.seed = 40 + r;
            const auto ds = generate_synthetic(spec, n);
            const auto model = fit_mdp(ds, 8, 3, 0.99, default_horizon(ds));
            const auto d = ope_data(ds, pi_e, estimate_behavior_policy(ds, 8, 3, 0.5), model);
            const auto b = bootstrap_interval(d, 200, r);
            total += b.resampled[189] - b.resampled[10];
        }
        widths.push_back(total / 5.0);
    }
    EXPECT_GT(widths[0], widths[1]);
    EXPECT_GT(widths[1], widths[2]);
    // 16× more data, ~4× narrower
    EXPECT_GT(widths[0] / widths[2], 2.5);
    EXPECT_LT(widths[0] / widths[2], 6.5);
}

TEST(Bias, CaseSplit) {
    const std::vector<double> g{0.5, 1.3, 0.8, 1.0, 0.0};
    const auto b = bias_vector(g, 0.0, 1.0);
    EXPECT_EQ(b[0], 0.0);
    EXPECT_NEAR(b[1], 0.3, 1e-15);
    EXPECT_EQ(b[3], 0.0);
    EXPECT_EQ(bias_vector(std::vector<double>{-0.2}, 0.0, 1.0)[0], -0.2);
    EXPECT_THROW(bias_vector(g, 1.0, 0.0), ConfigError);
}

TEST(Covariance, ZeroScalarAndTwoPassOracle) {
    EXPECT_EQ(covariance_matrix(Eigen::MatrixXd::Constant(5, 3, 2.5)).cwiseAbs().maxCoeff(), 0.0);
    Eigen::MatrixXd one(4, 1);
    one << 1, 2, 4, 7;
    // mean 3.5; squared deviations 6.25 + 2.25 + 0.25 + 12.25 = 21
    EXPECT_NEAR(covariance_matrix(one)(0, 0), 4.0 / 3.0 * 21.0, 1e-12);
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(uniform_index(rng, 50)), J = 1 + static_cast<int>(uniform_index(rng, 8));
        Eigen::MatrixXd c(n, J);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < J; ++j) c(i, j) = standard_normal(rng) * (1 + j);
        const auto omega = covariance_matrix(c);
        for (int a = 0; a < J; ++a)
            for (int b = 0; b < J; ++b) {
                double ma = 0.0, mb = 0.0;
                for (int i = 0; i < n; ++i) ma += c(i, a), mb += c(i, b);
                ma /= n, mb /= n;
                double s = 0.0;
                for (int i = 0; i < n; ++i) s += (c(i, a) - ma) * (c(i, b) - mb);
                EXPECT_NEAR(omega(a, b), static_cast<double>(n) / (n - 1) * s, 1e-12);
                EXPECT_EQ(omega(a, b), omega(b, a));
            }
    }
    EXPECT_THROW(covariance_matrix(Eigen::MatrixXd::Ones(1, 2)), InsufficientDataError);
}

TEST(Simplex, ClosedFormCases) {
    const auto a = simplex_minimize(Eigen::MatrixXd::Identity(2, 2));
    EXPECT_NEAR(a.x(0), 0.5, 1e-12);
    EXPECT_NEAR(a.x(1), 0.5, 1e-12);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
    m(1, 1) = 1.0;
    const auto b = simplex_minimize(m);
    EXPECT_NEAR(b.x(0), 1.0, 1e-12);
    EXPECT_NEAR(b.x(1), 0.0, 1e-12);
    EXPECT_EQ(simplex_minimize(Eigen::MatrixXd::Constant(1, 1, 3.0)).x(0), 1.0);
    EXPECT_FALSE(a.repaired);
}

TEST(Simplex, BeatsRandomSearchAndVertices) {
    Rng rng(10);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::MatrixXd B(4, 4);
        for (int i = 0; i < 16; ++i) B(i / 4, i % 4) = standard_normal(rng);
        const Eigen::MatrixXd M = B * B.transpose();
        const auto sol = simplex_minimize(M);
        double best = std::numeric_limits<double>::infinity();
        Eigen::VectorXd p(4);
        for (int k = 0; k < 1000000; ++k) {
            for (int i = 0; i < 4; ++i) p(i) = -std::log(1.0 - uniform01(rng));
            p /= p.sum();
            best = std::min(best, p.dot(M * p));
        }
        EXPECT_LE(sol.objective, best + 1e-8);
        for (int i = 0; i < 4; ++i) EXPECT_LE(sol.objective, M(i, i) + 1e-15);
        EXPECT_NEAR(sol.x.sum(), 1.0, 1e-12);
        EXPECT_GE(sol.x.minCoeff(), 0.0);
    }
}

TEST(Simplex, RepairsIndefiniteMatrix) {
    Eigen::MatrixXd m(2, 2);
    m << 1.0, 0.0, 0.0, -0.5;
    const auto sol = simplex_minimize(m);
    EXPECT_TRUE(sol.repaired);
    EXPECT_NEAR(sol.x(1), 1.0, 1e-12);
}

TEST(Magic, WrongModelShiftsWeightToImportanceSampling) {
    auto spec = load_spec(data_path("standard_mdp.json"));
    spec.seed = 3;
    const auto ds = generate_synthetic(spec, 20000);
    const auto pi_b = estimate_behavior_policy(ds, 8, 3, 0.5);
    const auto pi_e = eps_greedy({0, 1, 2, 0, 1, 2, 0, 0}, 3, 0.1);
    auto wrong = fit_mdp(ds, 8, 3, 0.99, default_horizon(ds));
    for (int s = 0; s < 8; ++s)
        for (int a = 0; a < 3; ++a) wrong.R_hat[wrong.sa(s, a)] = 1.0;
    const auto r = magic(ope_data(ds, pi_e, pi_b, wrong), {.lengths = {}, .seed = 1});
    ASSERT_EQ(r.lengths, (std::vector<ReturnLength>{kModelOnly, kInfiniteReturn}));
    EXPECT_GT(r.x(1), 0.99);
    EXPECT_GT(std::abs(r.b_hat[0]), 0.1);
}

TEST(Magic, SwdrIsMagicOverInfinity) {
    const auto spec = random_spec({.seed = 12});
    const auto ds = generate_synthetic(spec, 500);
    Rng rng(12);
    const auto d = ope_data(ds, random_policy(8, 3, rng), estimate_behavior_policy(ds, 8, 3, 0.5),
                            fit_mdp(ds, 8, 3, 0.99, default_horizon(ds)));
    const auto m = magic(d, {.lengths = {kInfiniteReturn}, .seed = 9});
    EXPECT_EQ(swdr(d, 200, 9), m.estimate);
    const auto strict = swdr_result(d, 200, 9, true);
    ASSERT_EQ(strict.lengths, (std::vector<ReturnLength>{kInfiniteReturn}));
    EXPECT_EQ(strict.estimate, wdr(d));
}

TEST(Magic, LengthsAreClippedAndAugmented) {
    EXPECT_EQ(effective_lengths({0, 1, 2, 4, 8, 16}, 5, true), (std::vector<ReturnLength>{-1, 0, 1, 2, kInfiniteReturn}));
    EXPECT_EQ(effective_lengths({3, 1, 1}, 10, false), (std::vector<ReturnLength>{1, 3}));
    EXPECT_THROW(effective_lengths({-2}, 10, true), ConfigError);
}

TEST(Magic, InvariantsOverRandomInstances) {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const auto spec = random_spec({.n_live = 2 + static_cast<int>(uniform_index(rng, 6)), .seed = 900 + static_cast<std::uint64_t>(trial)});
        const auto ds = generate_synthetic(spec, 2 + uniform_index(rng, 150));
        const int S = spec.n_states;
        const auto d = ope_data(ds, random_policy(S, 3, rng, 0.01), estimate_behavior_policy(ds, S, 3, 0.5),
                                fit_mdp(ds, S, 3, 0.9 + 0.1 * uniform01(rng), default_horizon(ds)));
        const auto r = magic(d, {.bootstrap_resamples = 20 + static_cast<int>(uniform_index(rng, 60)), .seed = static_cast<std::uint64_t>(trial)});
        const auto bad = magic_invariant_violations(r);
        EXPECT_TRUE(bad.empty()) << bad.front();
        EXPECT_EQ(r.g.front(), j_step_return(d, kModelOnly));
        EXPECT_EQ(r.g.back(), wdr(d));
    }
}

TEST(Score, Normalization) {
    Dataset ds;
    ds.trajectories.push_back(make_traj("a", {{0, 0}}, true));
    ds.trajectories.push_back(make_traj("b", {{0, 0}}, false));
    EXPECT_DOUBLE_EQ(ope_score(0.5, ds, 0.99).value, 1.0);
    EXPECT_DOUBLE_EQ(ope_score(0.75, ds, 0.99).value, 1.5);
    Dataset none;
    none.trajectories.push_back(make_traj("c", {{0, 0}}, false));
    const auto s = ope_score(0.3, none, 0.99);
    EXPECT_FALSE(s.defined);
    EXPECT_TRUE(std::isnan(s.value));
}

TEST(Actions, ConstantPolicyAndLoggedTotals) {
    auto spec = random_spec({.n_actions = 10, .seed = 14});
    std::fill(spec.behavior_policy.begin(), spec.behavior_policy.end(), 0.1);
    spec.seed = 15;
    const auto ds = generate_synthetic(spec, 5000);
    PolicyTable always3(8, 10);
    for (int s = 0; s < 8; ++s)
        for (int a = 0; a < 10; ++a) always3(s, a) = a == 3 ? 1.0 : 0.0;
    const auto pc = action_frequencies(always3, ds);
    EXPECT_EQ(pc[3], ds.m());
    const auto logged = action_frequencies(ds, 10);
    EXPECT_EQ(std::accumulate(logged.begin(), logged.end(), std::size_t{0}), ds.m());
    const double expected = static_cast<double>(ds.m()) / 10.0;
    double chi2 = 0.0;
    for (auto c : logged) chi2 += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
    EXPECT_LT(chi2, 21.666);  // χ²(9) at 1%
    EXPECT_THROW(action_frequencies(Dataset{}, 10), InsufficientDataError);
}
