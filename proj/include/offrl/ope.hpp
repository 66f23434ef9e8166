#pragma once

#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "offrl/empirical_mdp.hpp"
#include "offrl/error.hpp"
#include "offrl/random.hpp"
#include "offrl/trajectory.hpp"

namespace offrl {

/// Return length j of an off-policy j-step return. −1 is the pure model
/// estimate, kInfiniteReturn the full weighted doubly-robust estimate.
using ReturnLength = int;
inline constexpr ReturnLength kModelOnly = -1;
inline constexpr ReturnLength kInfiniteReturn = INT_MAX;

inline std::string return_length_name(ReturnLength j) {
    return j == kInfiniteReturn ? std::string("inf") : std::to_string(j);
}

/// Cumulative importance ratios ρ^i_t and per-step self-normalized weights
/// w^i_t = ρ^i_t / Σ_j ρ^j_t, both n × T_max row-major. Trajectories shorter than
/// T_max carry their last cumulative ratio forward (the absorbing state has a
/// ratio of one). Ratios are accumulated in log space.
struct ImportanceTable {
    std::size_t n = 0;
    int T_max = 0;
    std::vector<double> log_rho;
    std::vector<double> rho;
    std::vector<double> w;

    double rho_at(std::size_t i, int t) const { return rho[i * static_cast<std::size_t>(T_max) + t]; }
    double w_at(std::size_t i, int t) const { return w[i * static_cast<std::size_t>(T_max) + t]; }
};

namespace detail {
// Self-normalized weights of one column of log ratios, scaled by multiplicities.
// All-zero ratios give all-zero weights.
inline void normalized_column(std::span<const double> log_col, std::span<const double> mult, std::span<double> out) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < log_col.size(); ++i)
        if (mult[i] > 0.0) mx = std::max(mx, log_col[i]);
    if (!std::isfinite(mx)) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    double denom = 0.0;
    for (std::size_t i = 0; i < log_col.size(); ++i) {
        out[i] = mult[i] > 0.0 ? std::exp(log_col[i] - mx) : 0.0;
        denom += mult[i] * out[i];
    }
    for (double& x : out) x /= denom;
}
}  // namespace detail

inline ImportanceTable importance_ratios(const Dataset& ds, const PolicyTable& pi_e, const PolicyTable& pi_b) {
    OFFRL_REQUIRE(ds.n() >= 1, InsufficientDataError, "importance ratios need at least one trajectory");
    ImportanceTable tab;
    tab.n = ds.n();
    tab.T_max = static_cast<int>(ds.max_length());
    const auto T = static_cast<std::size_t>(tab.T_max);
    tab.log_rho.assign(tab.n * T, 0.0);
    for (std::size_t i = 0; i < tab.n; ++i) {
        const auto& steps = ds.trajectories[i].steps;
        double acc = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            if (t < steps.size()) {
                const auto& tr = steps[t];
                OFFRL_REQUIRE(tr.state >= 0 && tr.state < pi_b.n_states() && tr.action >= 0 &&
                                  tr.action < pi_b.n_actions() && tr.state < pi_e.n_states(),
                              DataError, "logged state/action outside the policy tables");
                const double pb = pi_b(tr.state, tr.action);
                if (!(pb > 0.0))
                    throw DataError("unsupported action: behavior policy gives zero probability to (s=" +
                                    std::to_string(tr.state) + ", a=" + std::to_string(tr.action) + ")");
                const double pe = pi_e(tr.state, tr.action);
                acc += pe > 0.0 ? std::log(pe) - std::log(pb) : -std::numeric_limits<double>::infinity();
            }
            tab.log_rho[i * T + t] = acc;
        }
    }
    tab.rho.resize(tab.log_rho.size());
    for (std::size_t k = 0; k < tab.log_rho.size(); ++k) tab.rho[k] = std::exp(tab.log_rho[k]);
    tab.w.assign(tab.n * T, 0.0);
    const std::vector<double> ones(tab.n, 1.0);
    std::vector<double> col(tab.n), wcol(tab.n);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < tab.n; ++i) col[i] = tab.log_rho[i * T + t];
        detail::normalized_column(col, ones, wcol);
        for (std::size_t i = 0; i < tab.n; ++i) tab.w[i * T + t] = wcol[i];
    }
    return tab;
}

/// Per-trajectory arrays the estimators consume: log ratios, rewards and the
/// model's q̂(S_t, A_t) and v̂(S_t), zero-padded to T_max.
struct OpeData {
    double gamma = 1.0;
    std::size_t n = 0;
    int T_max = 0;
    std::vector<int> length;
    std::vector<double> log_rho;
    std::vector<double> reward;
    std::vector<double> q;
    std::vector<double> v;

    std::size_t at(std::size_t i, int t) const { return i * static_cast<std::size_t>(T_max) + t; }
};

inline OpeData make_ope_data(const Dataset& ds, const ImportanceTable& imp, const ModelValues& values, double gamma) {
    OFFRL_REQUIRE(imp.n == ds.n(), ConfigError, "importance table does not match the dataset");
    OpeData d;
    d.gamma = gamma;
    d.n = ds.n();
    d.T_max = imp.T_max;
    d.log_rho = imp.log_rho;
    const std::size_t cells = d.n * static_cast<std::size_t>(d.T_max);
    d.reward.assign(cells, 0.0);
    d.q.assign(cells, 0.0);
    d.v.assign(cells, 0.0);
    const int n_model_states = static_cast<int>(values.v.size()) - 1;
    for (std::size_t i = 0; i < d.n; ++i) {
        const auto& steps = ds.trajectories[i].steps;
        d.length.push_back(static_cast<int>(steps.size()));
        for (std::size_t t = 0; t < steps.size(); ++t) {
            const auto& tr = steps[t];
            OFFRL_REQUIRE(tr.state >= 0 && tr.state < n_model_states, DataError, "state outside the model");
            d.reward[d.at(i, static_cast<int>(t))] = tr.reward;
            d.q[d.at(i, static_cast<int>(t))] = values.Q(tr.state, tr.action);
            d.v[d.at(i, static_cast<int>(t))] = values.V(tr.state);
        }
    }
    return d;
}

/// Trajectory i's share of g^(j) when trajectory i is present `mult[i]` times;
/// the shares sum to g^(j) of the (multi)set. j ≥ T_max − 1 coincides with j = ∞.
inline std::vector<double> j_step_contributions(const OpeData& d, ReturnLength j, std::span<const double> mult) {
    std::vector<double> g(d.n, 0.0);
    double n_eff = 0.0;
    for (double m : mult) n_eff += m;
    OFFRL_REQUIRE(n_eff > 0.0, InsufficientDataError, "empty trajectory set");
    const double w_start = 1.0 / n_eff;
    if (j == kModelOnly) {
        for (std::size_t i = 0; i < d.n; ++i) g[i] = mult[i] * w_start * d.v[d.at(i, 0)];
        return g;
    }
    OFFRL_REQUIRE(j >= 0, ConfigError, "return length must be >= -1");
    const int J = std::min<long long>(j, d.T_max - 1);
    std::vector<double> w_prev(d.n, w_start), w_cur(d.n), col(d.n);
    double disc = 1.0;
    for (int t = 0; t <= J; ++t) {
        for (std::size_t i = 0; i < d.n; ++i) col[i] = d.log_rho[d.at(i, t)];
        detail::normalized_column(col, mult, w_cur);
        for (std::size_t i = 0; i < d.n; ++i) {
            if (mult[i] == 0.0 || t >= d.length[i]) continue;
            const std::size_t c = d.at(i, t);
            g[i] += mult[i] * disc * (w_cur[i] * d.reward[c] - w_cur[i] * d.q[c] + w_prev[i] * d.v[c]);
        }
        disc *= d.gamma;
        w_prev.swap(w_cur);
    }
    // model tail: γ^{J+1} w_J v̂(S_{J+1}); v̂ of the absorbing state is 0
    for (std::size_t i = 0; i < d.n; ++i)
        if (mult[i] > 0.0 && J + 1 < d.length[i]) g[i] += mult[i] * disc * w_prev[i] * d.v[d.at(i, J + 1)];
    return g;
}

inline std::vector<double> j_step_contributions(const OpeData& d, ReturnLength j) {
    const std::vector<double> ones(d.n, 1.0);
    return j_step_contributions(d, j, ones);
}

/// Off-policy j-step return g^(j)(D).
inline double j_step_return(const OpeData& d, ReturnLength j) {
    double total = 0.0;
    for (double x : j_step_contributions(d, j)) total += x;
    return total;
}

/// Weighted doubly-robust estimate, g^(∞)(D).
inline double wdr(const OpeData& d) { return j_step_return(d, kInfiniteReturn); }

inline double wdr(const OpeData& d, std::span<const double> mult) {
    double total = 0.0;
    for (double x : j_step_contributions(d, kInfiniteReturn, mult)) total += x;
    return total;
}

/// Which sorted-resample positions bound the bootstrap interval.
enum class IntervalIndexing {
    Percentile,  // v[⌊0.05k⌋], v[⌈0.95k⌉] over the k resamples
    Literal,     // v[⌊0.05n⌋], v[⌈0.5n⌉] with n trajectories
};

struct BootstrapInterval {
    double lower = 0.0;
    double upper = 0.0;
    double wdr = 0.0;
    std::vector<double> resampled;  // sorted g^(∞) of each resample
};

inline constexpr int kMinBootstrapResamples = 20;

/// Percentile bootstrap interval for g^(∞), widened to contain WDR(D).
/// Resample r draws its n trajectories with a seed derived from (seed, r).
inline BootstrapInterval bootstrap_interval(const OpeData& d, int k, std::uint64_t seed,
                                            IntervalIndexing indexing = IntervalIndexing::Percentile) {
    OFFRL_REQUIRE(k >= kMinBootstrapResamples, ConfigError,
                  "bootstrap needs k >= " + std::to_string(kMinBootstrapResamples) + " resamples");
    BootstrapInterval out;
    out.wdr = wdr(d);
    out.resampled.reserve(static_cast<std::size_t>(k));
    std::vector<double> mult(d.n);
    for (int r = 0; r < k; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        std::fill(mult.begin(), mult.end(), 0.0);
        for (std::size_t draw = 0; draw < d.n; ++draw) mult[uniform_index(rng, d.n)] += 1.0;
        out.resampled.push_back(wdr(d, mult));
    }
    std::sort(out.resampled.begin(), out.resampled.end());
    const double base = indexing == IntervalIndexing::Percentile ? static_cast<double>(k) : static_cast<double>(d.n);
    const double hi_frac = indexing == IntervalIndexing::Percentile ? 0.95 : 0.5;
    const auto clamp_idx = [&](double x) {
        return static_cast<std::size_t>(std::clamp(x, 0.0, static_cast<double>(k - 1)));
    };
    const std::size_t lo_idx = clamp_idx(std::floor(0.05 * base));
    const std::size_t hi_idx = clamp_idx(std::ceil(hi_frac * base));
    out.lower = std::min(out.wdr, out.resampled[lo_idx]);
    out.upper = std::max(out.wdr, out.resampled[hi_idx]);
    return out;
}

/// Distance of each g outside [l, u]; zero inside.
inline std::vector<double> bias_vector(std::span<const double> g, double lower, double upper) {
    OFFRL_REQUIRE(lower <= upper, ConfigError, "bias interval needs l <= u");
    std::vector<double> b(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g[i] > upper) b[i] = g[i] - upper;
        else if (g[i] < lower) b[i] = g[i] - lower;
    }
    return b;
}

/// Ω̂(i, j) = n/(n−1) Σ_k (g^i_k − ḡ^i)(g^j_k − ḡ^j) over per-trajectory
/// contributions; column c of `contributions` holds return length 𝒥_c.
inline Eigen::MatrixXd covariance_matrix(const Eigen::MatrixXd& contributions) {
    const Eigen::Index n = contributions.rows();
    OFFRL_REQUIRE(n >= 2, InsufficientDataError, "covariance needs at least 2 trajectories");
    const Eigen::RowVectorXd mean = contributions.colwise().mean();
    const Eigen::MatrixXd centered = contributions.rowwise() - mean;
    const double nn = static_cast<double>(n);
    Eigen::MatrixXd omega = nn / (nn - 1.0) * (centered.transpose() * centered);
    return (omega + omega.transpose()) / 2.0;
}

struct SimplexSolution {
    Eigen::VectorXd x;
    double objective = 0.0;
    bool repaired = false;  // the matrix needed eigenvalue clamping
};

/// Euclidean projection onto the probability simplex (sort-based).
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& y) {
    const Eigen::Index d = y.size();
    std::vector<double> u(y.data(), y.data() + d);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0, theta = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        cumsum += u[static_cast<std::size_t>(i)];
        const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
        if (u[static_cast<std::size_t>(i)] - t > 0.0) theta = t;
    }
    Eigen::VectorXd x(d);
    for (Eigen::Index i = 0; i < d; ++i) x(i) = std::max(y(i) - theta, 0.0);
    const double s = x.sum();
    return s > 0.0 ? Eigen::VectorXd(x / s) : Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d));
}

inline constexpr double kPsdTolerance = 1e-9;

/// argmin over the probability simplex of xᵀ M x.
///
/// Accelerated projected gradient with adaptive restart on the trace-normalized
/// matrix, then a KKT solve on the active support, then a comparison with every
/// vertex. A matrix whose smallest eigenvalue is below −1e-9 (relative) is
/// repaired by clamping negative eigenvalues at 0.
inline SimplexSolution simplex_minimize(Eigen::MatrixXd M, int max_iter = 20000, double step_tol = 1e-13) {
    const Eigen::Index d = M.rows();
    OFFRL_REQUIRE(d >= 1 && M.cols() == d, ConfigError, "simplex_minimize needs a square matrix");
    OFFRL_REQUIRE(M.allFinite(), NumericalError, "simplex_minimize received non-finite entries");
    SimplexSolution sol;
    M = (M + M.transpose()) / 2.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
    const double scale = std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    if (eig.eigenvalues().minCoeff() < -kPsdTolerance * std::max(scale, 1.0)) {
        const Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
        M = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
        M = (M + M.transpose()) / 2.0;
        sol.repaired = true;
    }
    auto objective = [&](const Eigen::VectorXd& x) { return x.dot(M * x); };
    if (d == 1) {
        sol.x = Eigen::VectorXd::Ones(1);
        sol.objective = objective(sol.x);
        return sol;
    }

    const double lmax = std::max(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M).eigenvalues().maxCoeff(), 0.0);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d));
    if (lmax > 0.0) {
        const double step = 1.0 / (2.0 * lmax);
        Eigen::VectorXd y = x, x_prev = x;
        double momentum = 1.0;
        double f_prev = objective(x);
        for (int it = 0; it < max_iter; ++it) {
            const Eigen::VectorXd x_next = project_to_simplex(y - step * 2.0 * (M * y));
            const double f_next = objective(x_next);
            if (f_next > f_prev) {  // restart momentum
                momentum = 1.0;
                y = x;
                continue;
            }
            const double next_momentum = (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum)) / 2.0;
            y = x_next + ((momentum - 1.0) / next_momentum) * (x_next - x);
            x_prev = x;
            x = x_next;
            momentum = next_momentum;
            f_prev = f_next;
            if ((x - x_prev).norm() < step_tol) break;
        }
    }

    // Polish: solve the equality-constrained problem on the current support.
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < d; ++i)
        if (x(i) > 1e-12) support.push_back(i);
    if (support.size() >= 2) {
        const auto s = static_cast<Eigen::Index>(support.size());
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(s + 1, s + 1);
        for (Eigen::Index a = 0; a < s; ++a) {
            for (Eigen::Index b = 0; b < s; ++b) kkt(a, b) = 2.0 * M(support[a], support[b]);
            kkt(a, s) = 1.0;
            kkt(s, a) = 1.0;
        }
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s + 1);
        rhs(s) = 1.0;
        const Eigen::VectorXd z = kkt.completeOrthogonalDecomposition().solve(rhs);
        Eigen::VectorXd candidate = Eigen::VectorXd::Zero(d);
        bool feasible = z.allFinite();
        for (Eigen::Index a = 0; a < s && feasible; ++a) {
            if (z(a) < 0.0) feasible = false;
            candidate(support[a]) = z(a);
        }
        if (feasible && std::abs(candidate.sum() - 1.0) < 1e-9) {
            candidate /= candidate.sum();
            if (objective(candidate) <= objective(x)) x = candidate;
        }
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        if (M(i, i) < objective(x)) {
            x = Eigen::VectorXd::Zero(d);
            x(i) = 1.0;
        }
    }
    sol.x = x;
    sol.objective = objective(x);
    return sol;
}

struct MagicOptions {
    std::vector<ReturnLength> lengths = {kModelOnly, 0, 1, 2, 4, 8, 16, kInfiniteReturn};
    int bootstrap_resamples = 200;
    std::uint64_t seed = 0;
    IntervalIndexing indexing = IntervalIndexing::Percentile;
    bool augment = true;  // add −1 and ∞ to the return-length set
};

struct MagicResult {
    double estimate = 0.0;
    std::vector<ReturnLength> lengths;  // 𝒥 actually used, ascending, ∞ last
    std::vector<double> g;              // g^(𝒥_i)(D)
    Eigen::VectorXd x;
    double lower = 0.0;
    double upper = 0.0;
    double wdr = 0.0;
    std::vector<double> b_hat;
    Eigen::MatrixXd omega_hat;
    bool repaired = false;
};

/// Sorted, deduplicated 𝒥. Finite lengths ≥ T_max − 1 duplicate g^(∞) and are dropped.
inline std::vector<ReturnLength> effective_lengths(std::vector<ReturnLength> lengths, int T_max, bool augment) {
    if (augment) {
        lengths.push_back(kModelOnly);
        lengths.push_back(kInfiniteReturn);
    }
    std::vector<ReturnLength> out;
    for (ReturnLength j : lengths) {
        OFFRL_REQUIRE(j >= kModelOnly, ConfigError, "return lengths must be >= -1");
        if (j != kInfiniteReturn && j != kModelOnly && j >= T_max - 1) continue;
        out.push_back(j);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    OFFRL_REQUIRE(!out.empty(), ConfigError, "empty return-length set");
    return out;
}

/// Blends the j-step returns in 𝒥 with simplex weights minimizing the estimated
/// mean squared error xᵀ[Ω̂ + b̂ b̂ᵀ]x.
inline MagicResult magic(const OpeData& d, const MagicOptions& opt = {}) {
    MagicResult res;
    res.lengths = effective_lengths(opt.lengths, d.T_max, opt.augment);
    const auto J = static_cast<Eigen::Index>(res.lengths.size());
    Eigen::MatrixXd contrib(static_cast<Eigen::Index>(d.n), J);
    for (Eigen::Index c = 0; c < J; ++c) {
        const auto col = j_step_contributions(d, res.lengths[static_cast<std::size_t>(c)]);
        double total = 0.0;
        for (std::size_t i = 0; i < d.n; ++i) {
            contrib(static_cast<Eigen::Index>(i), c) = col[i];
            total += col[i];
        }
        res.g.push_back(total);
    }
    res.omega_hat = covariance_matrix(contrib);
    const auto interval = bootstrap_interval(d, opt.bootstrap_resamples, opt.seed, opt.indexing);
    res.lower = interval.lower;
    res.upper = interval.upper;
    res.wdr = interval.wdr;
    res.b_hat = bias_vector(res.g, res.lower, res.upper);
    const Eigen::Map<const Eigen::VectorXd> b(res.b_hat.data(), J);
    const auto sol = simplex_minimize(res.omega_hat + b * b.transpose());
    res.x = sol.x;
    res.repaired = sol.repaired;
    res.estimate = 0.0;
    for (Eigen::Index c = 0; c < J; ++c) res.estimate += res.x(c) * res.g[static_cast<std::size_t>(c)];
    return res;
}

/// SWDR: MAGIC over 𝒥 = {∞}. With `strict` false the set is still augmented
/// with −1 (the always-include rule); with `strict` true only ∞ is used.
inline MagicResult swdr_result(const OpeData& d, int bootstrap_resamples, std::uint64_t seed, bool strict = false,
                               IntervalIndexing indexing = IntervalIndexing::Percentile) {
    MagicOptions opt;
    opt.lengths = {kInfiniteReturn};
    opt.bootstrap_resamples = bootstrap_resamples;
    opt.seed = seed;
    opt.indexing = indexing;
    opt.augment = !strict;
    return magic(d, opt);
}

inline double swdr(const OpeData& d, int bootstrap_resamples, std::uint64_t seed, bool strict = false) {
    return swdr_result(d, bootstrap_resamples, seed, strict).estimate;
}

/// Invariant violations of a MAGIC result, empty when all hold.
inline std::vector<std::string> magic_invariant_violations(const MagicResult& r) {
    std::vector<std::string> bad;
    if ((r.x.array() < 0.0).any()) bad.emplace_back("negative blend weight");
    if (std::abs(r.x.sum() - 1.0) > 1e-9) bad.emplace_back("blend weights do not sum to 1");
    if ((r.omega_hat - r.omega_hat.transpose()).cwiseAbs().maxCoeff() > 1e-9) bad.emplace_back("omega not symmetric");
    if (r.omega_hat.size() > 0) {
        const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(r.omega_hat).eigenvalues().minCoeff();
        const double scale = std::max(1.0, r.omega_hat.cwiseAbs().maxCoeff());
        if (min_eig < -1e-9 * scale) bad.emplace_back("omega not positive semidefinite");
    }
    if (!(r.lower <= r.wdr && r.wdr <= r.upper)) bad.emplace_back("interval does not contain WDR");
    return bad;
}

struct OpeScore {
    double value = std::numeric_limits<double>::quiet_NaN();
    bool defined = false;
    double behavior_return = 0.0;
};

/// Estimate divided by the logged trajectories' mean discounted return.
inline OpeScore ope_score(double estimate, const Dataset& ds, double gamma) {
    OpeScore s;
    s.behavior_return = ds.mean_discounted_return(gamma);
    if (s.behavior_return == 0.0) return s;
    s.value = estimate / s.behavior_return;
    s.defined = true;
    return s;
}

/// Greedy action of the policy counted at every visited state of the dataset.
inline std::vector<std::size_t> action_frequencies(const PolicyTable& pi, const Dataset& eval) {
    OFFRL_REQUIRE(eval.m() > 0, InsufficientDataError, "action frequencies need a nonempty evaluation set");
    std::vector<std::size_t> counts(static_cast<std::size_t>(pi.n_actions()), 0);
    for (const auto& traj : eval.trajectories)
        for (const auto& tr : traj.steps) {
            OFFRL_REQUIRE(tr.state >= 0 && tr.state < pi.n_states(), DataError, "state outside the policy table");
            ++counts[static_cast<std::size_t>(pi.argmax(tr.state))];
        }
    return counts;
}

/// Raw logged action counts.
inline std::vector<std::size_t> action_frequencies(const Dataset& eval, int n_actions) {
    OFFRL_REQUIRE(eval.m() > 0, InsufficientDataError, "action frequencies need a nonempty evaluation set");
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_actions), 0);
    for (const auto& traj : eval.trajectories)
        for (const auto& tr : traj.steps) {
            OFFRL_REQUIRE(tr.action >= 0 && tr.action < n_actions, DataError, "action out of range");
            ++counts[static_cast<std::size_t>(tr.action)];
        }
    return counts;
}

/// Everything needed to score an evaluation policy on a fixed dataset.
struct OpeContext {
    Dataset eval;
    PolicyTable behavior;
    TabularMDP model;
    MagicOptions magic;
    bool strict_swdr = false;
    double gamma = 0.99;
    double epsilon = 0.05;  // softening of the greedy evaluation policy
};

struct OpeEvaluation {
    MagicResult swdr;
    MagicResult magic;
    OpeScore swdr_score;
    OpeScore magic_score;
};

inline OpeEvaluation evaluate_policy(const OpeContext& ctx, const PolicyTable& pi_e) {
    const auto values = model_values(ctx.model, pi_e);
    const auto imp = importance_ratios(ctx.eval, pi_e, ctx.behavior);
    const auto data = make_ope_data(ctx.eval, imp, values, ctx.gamma);
    OpeEvaluation out;
    out.swdr = swdr_result(data, ctx.magic.bootstrap_resamples, ctx.magic.seed, ctx.strict_swdr, ctx.magic.indexing);
    out.magic = magic(data, ctx.magic);
    out.swdr_score = ope_score(out.swdr.estimate, ctx.eval, ctx.gamma);
    out.magic_score = ope_score(out.magic.estimate, ctx.eval, ctx.gamma);
    return out;
}

}  // namespace offrl
