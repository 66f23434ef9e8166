#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "offrl/empirical_mdp.hpp"
#include "offrl/error.hpp"
#include "offrl/random.hpp"

namespace offrl {

/// Layer sizes of the dueling network: one-hot state input, a shared rectified
/// layer, then parallel value and advantage streams.
struct QNetShape {
    int n_states = 1;
    int n_actions = 1;
    int shared = 128;
    int stream = 32;

    // Offsets of each block inside the flat parameter vector.
    std::size_t w1() const { return 0; }
    std::size_t b1() const { return w1() + sz(shared) * sz(n_states); }
    std::size_t wv1() const { return b1() + sz(shared); }
    std::size_t bv1() const { return wv1() + sz(stream) * sz(shared); }
    std::size_t wv2() const { return bv1() + sz(stream); }
    std::size_t bv2() const { return wv2() + sz(stream); }
    std::size_t wa1() const { return bv2() + 1; }
    std::size_t ba1() const { return wa1() + sz(stream) * sz(shared); }
    std::size_t wa2() const { return ba1() + sz(stream); }
    std::size_t ba2() const { return wa2() + sz(n_actions) * sz(stream); }
    std::size_t size() const { return ba2() + sz(n_actions); }

    friend bool operator==(const QNetShape&, const QNetShape&) = default;

private:
    static std::size_t sz(int v) { return static_cast<std::size_t>(v); }
};

/// One regression sample for the squared TD loss.
struct QSample {
    int state = 0;
    int action = 0;
    double target = 0.0;
};

namespace detail {

// Activations of one state's forward pass.
struct QActivations {
    std::vector<double> h1, hv, ha, adv;
    double value = 0.0;
};

inline QActivations activate(const QNetShape& sh, std::span<const double> th, int s) {
    QActivations act;
    const auto H = static_cast<std::size_t>(sh.shared), K = static_cast<std::size_t>(sh.stream),
               A = static_cast<std::size_t>(sh.n_actions), S = static_cast<std::size_t>(sh.n_states);
    act.h1.resize(H);
    for (std::size_t h = 0; h < H; ++h)
        act.h1[h] = std::max(0.0, th[sh.w1() + h * S + static_cast<std::size_t>(s)] + th[sh.b1() + h]);
    auto stream = [&](std::size_t w, std::size_t b, std::vector<double>& out) {
        out.resize(K);
        for (std::size_t k = 0; k < K; ++k) {
            double z = th[b + k];
            const double* row = th.data() + w + k * H;
            for (std::size_t h = 0; h < H; ++h) z += row[h] * act.h1[h];
            out[k] = std::max(0.0, z);
        }
    };
    stream(sh.wv1(), sh.bv1(), act.hv);
    stream(sh.wa1(), sh.ba1(), act.ha);
    act.value = th[sh.bv2()];
    for (std::size_t k = 0; k < K; ++k) act.value += th[sh.wv2() + k] * act.hv[k];
    act.adv.resize(A);
    for (std::size_t a = 0; a < A; ++a) {
        double z = th[sh.ba2() + a];
        for (std::size_t k = 0; k < K; ++k) z += th[sh.wa2() + a * K + k] * act.ha[k];
        act.adv[a] = z;
    }
    return act;
}

inline void combine(const QActivations& act, std::span<double> q) {
    double mean = 0.0;
    for (double x : act.adv) mean += x;
    mean /= static_cast<double>(act.adv.size());
    for (std::size_t a = 0; a < act.adv.size(); ++a) q[a] = act.value + act.adv[a] - mean;
}

}  // namespace detail

/// Q(s, ·) = V(s) + A(s, ·) − mean_a A(s, a) for one state under parameters th.
inline std::vector<double> q_row(const QNetShape& sh, std::span<const double> th, int s) {
    OFFRL_REQUIRE(s >= 0 && s < sh.n_states, ConfigError, "state id " + std::to_string(s) + " out of bounds");
    std::vector<double> q(static_cast<std::size_t>(sh.n_actions));
    detail::combine(detail::activate(sh, th, s), q);
    return q;
}

struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Mean squared error over the batch and its gradient with respect to th.
/// Targets are constants. Samples are grouped by state so each distinct state
/// is propagated once.
inline LossAndGrad loss_and_grad(const QNetShape& sh, std::span<const double> th, std::span<const QSample> batch) {
    LossAndGrad out;
    out.grad.assign(sh.size(), 0.0);
    if (batch.empty()) return out;
    const auto H = static_cast<std::size_t>(sh.shared), K = static_cast<std::size_t>(sh.stream),
               A = static_cast<std::size_t>(sh.n_actions), S = static_cast<std::size_t>(sh.n_states);
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    std::vector<std::vector<const QSample*>> by_state(S);
    for (const auto& smp : batch) {
        OFFRL_REQUIRE(smp.state >= 0 && smp.state < sh.n_states && smp.action >= 0 && smp.action < sh.n_actions,
                      ConfigError, "sample state/action out of bounds");
        by_state[static_cast<std::size_t>(smp.state)].push_back(&smp);
    }
    auto& g = out.grad;
    std::vector<double> q(A), gq(A), g_adv(A), g_hv(K), g_ha(K), g_h1(H);
    for (std::size_t s = 0; s < S; ++s) {
        if (by_state[s].empty()) continue;
        const auto act = detail::activate(sh, th, static_cast<int>(s));
        detail::combine(act, q);
        std::fill(gq.begin(), gq.end(), 0.0);
        for (const QSample* smp : by_state[s]) {
            const double err = smp->target - q[static_cast<std::size_t>(smp->action)];
            out.loss += err * err * inv_b;
            gq[static_cast<std::size_t>(smp->action)] += -2.0 * err * inv_b;
        }
        double g_value = 0.0, gq_sum = 0.0;
        for (double x : gq) gq_sum += x;
        g_value = gq_sum;
        for (std::size_t a = 0; a < A; ++a) g_adv[a] = gq[a] - gq_sum / static_cast<double>(A);

        // value head
        g[sh.bv2()] += g_value;
        for (std::size_t k = 0; k < K; ++k) {
            g[sh.wv2() + k] += g_value * act.hv[k];
            g_hv[k] = act.hv[k] > 0.0 ? g_value * th[sh.wv2() + k] : 0.0;
        }
        // advantage head
        for (std::size_t k = 0; k < K; ++k) g_ha[k] = 0.0;
        for (std::size_t a = 0; a < A; ++a) {
            g[sh.ba2() + a] += g_adv[a];
            for (std::size_t k = 0; k < K; ++k) {
                g[sh.wa2() + a * K + k] += g_adv[a] * act.ha[k];
                g_ha[k] += g_adv[a] * th[sh.wa2() + a * K + k];
            }
        }
        for (std::size_t k = 0; k < K; ++k)
            if (act.ha[k] <= 0.0) g_ha[k] = 0.0;
        // stream hidden layers
        std::fill(g_h1.begin(), g_h1.end(), 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            g[sh.bv1() + k] += g_hv[k];
            g[sh.ba1() + k] += g_ha[k];
            for (std::size_t h = 0; h < H; ++h) {
                g[sh.wv1() + k * H + h] += g_hv[k] * act.h1[h];
                g[sh.wa1() + k * H + h] += g_ha[k] * act.h1[h];
                g_h1[h] += g_hv[k] * th[sh.wv1() + k * H + h] + g_ha[k] * th[sh.wa1() + k * H + h];
            }
        }
        // shared layer: one-hot input touches a single column of W1
        for (std::size_t h = 0; h < H; ++h) {
            if (act.h1[h] <= 0.0) continue;
            g[sh.b1() + h] += g_h1[h];
            g[sh.w1() + h * S + s] += g_h1[h];
        }
    }
    return out;
}

/// Dueling Q-network: online parameters θ and the target copy θ̄.
class DuelingQNet {
public:
    DuelingQNet() = default;

    /// Uniform fan-in initialization U(−1/√fan_in, 1/√fan_in) for weights, zero biases;
    /// the target starts as an exact copy.
    DuelingQNet(const QNetShape& shape, std::uint64_t seed) : shape_(shape) {
        OFFRL_REQUIRE(shape.n_states >= 1 && shape.n_actions >= 1 && shape.shared >= 1 && shape.stream >= 1,
                      ConfigError, "network dimensions must be positive");
        theta_.assign(shape.size(), 0.0);
        Rng rng(seed);
        auto fill = [&](std::size_t offset, std::size_t count, int fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t i = 0; i < count; ++i) theta_[offset + i] = bound * (2.0 * uniform01(rng) - 1.0);
        };
        const auto H = static_cast<std::size_t>(shape.shared), K = static_cast<std::size_t>(shape.stream);
        // one-hot input has a single active unit, so each hidden unit sees fan-in 1
        fill(shape.w1(), H * static_cast<std::size_t>(shape.n_states), 1);
        fill(shape.wv1(), K * H, shape.shared);
        fill(shape.wv2(), K, shape.stream);
        fill(shape.wa1(), K * H, shape.shared);
        fill(shape.wa2(), static_cast<std::size_t>(shape.n_actions) * K, shape.stream);
        target_ = theta_;
    }

    static DuelingQNet zeros(const QNetShape& shape) {
        DuelingQNet net;
        net.shape_ = shape;
        net.theta_.assign(shape.size(), 0.0);
        net.target_ = net.theta_;
        return net;
    }

    static DuelingQNet from_parameters(const QNetShape& shape, std::vector<double> theta, std::vector<double> target) {
        OFFRL_REQUIRE(theta.size() == shape.size() && target.size() == shape.size(), ParseError,
                      "parameter vectors do not match the network shape");
        DuelingQNet net;
        net.shape_ = shape;
        net.theta_ = std::move(theta);
        net.target_ = std::move(target);
        return net;
    }

    const QNetShape& shape() const { return shape_; }
    std::vector<double>& theta() { return theta_; }
    const std::vector<double>& theta() const { return theta_; }
    std::vector<double>& target() { return target_; }
    const std::vector<double>& target() const { return target_; }

    /// Batch × n_actions Q-matrix (row-major) from the online or the target parameters.
    std::vector<double> forward(std::span<const int> states, bool use_target = false) const {
        const auto A = static_cast<std::size_t>(shape_.n_actions);
        std::vector<double> out(states.size() * A);
        for (std::size_t i = 0; i < states.size(); ++i) {
            const auto row = q_row(shape_, use_target ? target_ : theta_, states[i]);
            std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(i * A));
        }
        return out;
    }

    std::vector<double> q_values(int s, bool use_target = false) const {
        return q_row(shape_, use_target ? target_ : theta_, s);
    }

    /// θ̄ ← τθ + (1−τ)θ̄.
    void target_sync(double tau) {
        OFFRL_REQUIRE(tau > 0.0 && tau <= 1.0, ConfigError, "target update rate must lie in (0, 1]");
        if (tau == 1.0) {
            target_ = theta_;
            return;
        }
        for (std::size_t i = 0; i < theta_.size(); ++i) target_[i] = tau * theta_[i] + (1.0 - tau) * target_[i];
    }

    friend bool operator==(const DuelingQNet&, const DuelingQNet&) = default;

private:
    QNetShape shape_;
    std::vector<double> theta_;
    std::vector<double> target_;
};

/// ADAM optimizer state with a per-epoch learning-rate multiplier.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
    double learning_rate = 0.01;
    double decay = 0.999;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_size(std::size_t n, double learning_rate = 0.01, double decay = 0.999) {
        AdamState s;
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
        s.learning_rate = learning_rate;
        s.decay = decay;
        return s;
    }

    /// Applied once at the end of every epoch.
    void end_epoch() { learning_rate *= decay; }

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected ADAM update of theta in place. A zero gradient leaves theta
/// untouched (the moments decay, t still advances).
inline void adam_step(AdamState& st, std::span<double> theta, std::span<const double> grad) {
    OFFRL_REQUIRE(theta.size() == grad.size() && st.m.size() == theta.size() && st.v.size() == theta.size(),
                  ConfigError, "adam shapes do not match");
    ++st.t;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
        const double m_hat = st.m[i] / c1;
        const double v_hat = st.v[i] / c2;
        theta[i] -= st.learning_rate * m_hat / (std::sqrt(v_hat) + st.epsilon);
    }
}

struct PolicyMode {
    enum class Kind { Greedy, Epsilon, Softmax };
    Kind kind = Kind::Greedy;
    double param = 0.0;  // epsilon or temperature

    static PolicyMode greedy() { return {Kind::Greedy, 0.0}; }
    static PolicyMode epsilon_greedy(double eps) { return {Kind::Epsilon, eps}; }
    static PolicyMode softmax(double temperature) { return {Kind::Softmax, temperature}; }
};

/// Policy table over every state from a row of Q-values per state.
inline PolicyTable policy_from_q_rows(const std::vector<std::vector<double>>& q_rows, int n_actions, PolicyMode mode) {
    if (mode.kind == PolicyMode::Kind::Epsilon)
        OFFRL_REQUIRE(mode.param >= 0.0 && mode.param <= 1.0, ConfigError, "epsilon must lie in [0, 1]");
    if (mode.kind == PolicyMode::Kind::Softmax)
        OFFRL_REQUIRE(mode.param > 0.0, ConfigError, "softmax temperature must be > 0");
    PolicyTable pi(static_cast<int>(q_rows.size()), n_actions);
    for (std::size_t s = 0; s < q_rows.size(); ++s) {
        const auto& q = q_rows[s];
        const int best = static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
        const int si = static_cast<int>(s);
        switch (mode.kind) {
        case PolicyMode::Kind::Greedy:
            for (int a = 0; a < n_actions; ++a) pi(si, a) = a == best ? 1.0 : 0.0;
            break;
        case PolicyMode::Kind::Epsilon:
            for (int a = 0; a < n_actions; ++a)
                pi(si, a) = mode.param / n_actions + (a == best ? 1.0 - mode.param : 0.0);
            break;
        case PolicyMode::Kind::Softmax: {
            double total = 0.0;
            for (int a = 0; a < n_actions; ++a) total += (pi(si, a) = std::exp((q[a] - q[best]) / mode.param));
            for (int a = 0; a < n_actions; ++a) pi(si, a) /= total;
            break;
        }
        }
    }
    return pi;
}

inline PolicyTable to_policy(const DuelingQNet& net, PolicyMode mode) {
    std::vector<std::vector<double>> rows;
    for (int s = 0; s < net.shape().n_states; ++s) rows.push_back(net.q_values(s));
    return policy_from_q_rows(rows, net.shape().n_actions, mode);
}

inline nlohmann::json to_json(const QNetShape& sh) {
    return {{"n_states", sh.n_states}, {"n_actions", sh.n_actions}, {"shared", sh.shared}, {"stream", sh.stream}};
}

inline QNetShape shape_from_json(const nlohmann::json& j) {
    return {j.at("n_states").get<int>(), j.at("n_actions").get<int>(), j.at("shared").get<int>(),
            j.at("stream").get<int>()};
}

inline nlohmann::json to_json(const AdamState& s) {
    return {{"m", s.m},         {"v", s.v},         {"t", s.t},         {"learning_rate", s.learning_rate},
            {"decay", s.decay}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"epsilon", s.epsilon}};
}

inline AdamState adam_from_json(const nlohmann::json& j) {
    AdamState s;
    s.m = j.at("m").get<std::vector<double>>();
    s.v = j.at("v").get<std::vector<double>>();
    s.t = j.at("t").get<std::uint64_t>();
    s.learning_rate = j.at("learning_rate").get<double>();
    s.decay = j.at("decay").get<double>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.epsilon = j.at("epsilon").get<double>();
    return s;
}

}  // namespace offrl
