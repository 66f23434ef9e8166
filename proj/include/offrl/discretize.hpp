#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "offrl/error.hpp"
#include "offrl/random.hpp"
#include "offrl/trajectory.hpp"

namespace offrl {

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double squared_distance(const double* a, const double* b, Eigen::Index dim) {
    double d = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) {
        const double diff = a[i] - b[i];
        d += diff * diff;
    }
    return d;
}

/// Per-dimension affine normalization x -> (x - offset) / scale.
struct FeatureScaler {
    std::vector<double> offset;
    std::vector<double> scale;

    static constexpr double kVarianceFloor = 1e-12;

    static FeatureScaler identity(Eigen::Index dim) {
        return {std::vector<double>(static_cast<std::size_t>(dim), 0.0),
                std::vector<double>(static_cast<std::size_t>(dim), 1.0)};
    }

    /// Zero mean, unit (population) variance per column, variance floored.
    static FeatureScaler standardize(const PointMatrix& x) {
        const Eigen::Index n = x.rows(), d = x.cols();
        FeatureScaler s = identity(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            double mean = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) mean += x(i, j);
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
            var /= static_cast<double>(n);
            s.offset[j] = mean;
            s.scale[j] = std::sqrt(std::max(var, kVarianceFloor));
        }
        return s;
    }

    PointMatrix apply(const PointMatrix& x) const {
        PointMatrix out(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - offset[j]) / scale[j];
        return out;
    }

    std::vector<double> apply(std::span<const double> x) const {
        std::vector<double> out(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - offset[j]) / scale[j];
        return out;
    }

    friend bool operator==(const FeatureScaler&, const FeatureScaler&) = default;
};

enum class ClusterMethod { KMeans, XMeans, Optics };

inline const char* to_string(ClusterMethod m) {
    switch (m) {
    case ClusterMethod::KMeans: return "kmeans";
    case ClusterMethod::XMeans: return "xmeans";
    case ClusterMethod::Optics: return "optics";
    }
    return "?";
}

/// One accepted X-means split: the parent cluster's local BIC and its children's.
struct SplitRecord {
    int parent = 0;
    double parent_bic = 0.0;
    double child_bic = 0.0;
};

/// Fitted discretizer. Centroid methods store k centroids in scaled space; OPTICS
/// stores every labeled training point instead, and when it marks noise the
/// noise points form one extra state with id k.
struct ClusterModel {
    ClusterMethod method = ClusterMethod::KMeans;
    int k = 0;
    FeatureScaler scaler;
    PointMatrix centroids;       // k × d, centroid methods
    PointMatrix labeled_points;  // N × d, optics
    std::vector<int> labels;     // training labels in [0, n_states())
    bool has_noise = false;

    // fit diagnostics
    std::vector<double> wcss_history;
    std::vector<SplitRecord> splits;

    int noise_label() const { return has_noise ? k : -1; }
    int n_states() const { return k + (has_noise ? 1 : 0); }
    Eigen::Index dim() const { return static_cast<Eigen::Index>(scaler.offset.size()); }
};

namespace detail {

// Nearest row of `centers` to `p`; ties go to the lowest index.
inline int nearest_center(const double* p, const PointMatrix& centers) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
        const double d = squared_distance(p, centers.row(c).data(), centers.cols());
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

inline PointMatrix kmeanspp_init(const PointMatrix& x, int k, Rng& rng) {
    const Eigen::Index n = x.rows();
    PointMatrix centers(k, x.cols());
    centers.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = squared_distance(x.row(i).data(), centers.row(0).data(), x.cols());
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        Eigen::Index pick;
        if (total > 0.0)
            pick = static_cast<Eigen::Index>(sample_categorical(rng, d2));
        else
            pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
        centers.row(c) = x.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], squared_distance(x.row(i).data(), centers.row(c).data(), x.cols()));
    }
    return centers;
}

inline double wcss(const PointMatrix& x, const PointMatrix& centers, const std::vector<int>& labels) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        total += squared_distance(x.row(i).data(), centers.row(labels[i]).data(), x.cols());
    return total;
}

struct LloydResult {
    PointMatrix centers;
    std::vector<int> labels;
    std::vector<double> wcss_history;
};

inline constexpr int kMaxLloydIterations = 300;

// Lloyd iteration from the given centers until the assignment is a fixpoint.
// Empty clusters keep their previous center.
inline LloydResult lloyd(const PointMatrix& x, PointMatrix centers) {
    const Eigen::Index n = x.rows(), d = x.cols(), k = centers.rows();
    LloydResult res;
    res.labels.assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = nearest_center(x.row(i).data(), centers);
            if (c != res.labels[i]) {
                res.labels[i] = c;
                changed = true;
            }
        }
        const double w = wcss(x, centers, res.labels);
        if (!res.wcss_history.empty() && w > res.wcss_history.back() * (1.0 + 1e-12) + 1e-12)
            throw NumericalError("k-means WCSS increased between Lloyd iterations");
        res.wcss_history.push_back(w);
        if (!changed && iter > 0) break;
        PointMatrix sums = PointMatrix::Zero(k, d);
        std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(res.labels[i]) += x.row(i);
            counts[res.labels[i]] += 1.0;
        }
        for (Eigen::Index c = 0; c < k; ++c)
            if (counts[c] > 0.0) centers.row(c) = sums.row(c) / counts[c];
    }
    res.centers = std::move(centers);
    return res;
}

// Pelleg–Moore identical-spherical-Gaussian BIC of a hard assignment:
// log-likelihood minus (p/2) ln N with p = k (d + 1) + 1.
inline double bic_from_assignment(const PointMatrix& x, const PointMatrix& centers, const std::vector<int>& labels) {
    const double R = static_cast<double>(x.rows());
    const double M = static_cast<double>(x.cols());
    const Eigen::Index k = centers.rows();
    std::vector<double> sizes(static_cast<std::size_t>(k), 0.0);
    for (int l : labels) sizes[l] += 1.0;
    const double denom = std::max(R - static_cast<double>(k), 1.0);
    const double variance = std::max(wcss(x, centers, labels) / denom, FeatureScaler::kVarianceFloor);
    double loglik = 0.0;
    for (double Rn : sizes) {
        if (Rn <= 0.0) continue;
        loglik += Rn * std::log(Rn) - Rn * std::log(R) - Rn / 2.0 * std::log(2.0 * std::numbers::pi) -
                  Rn * M / 2.0 * std::log(variance) - (Rn - static_cast<double>(k)) / 2.0;
    }
    const double p = static_cast<double>(k) * (M + 1.0) + 1.0;
    return loglik - p / 2.0 * std::log(R);
}

inline PointMatrix rows_of(const PointMatrix& x, const std::vector<Eigen::Index>& idx) {
    PointMatrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    return out;
}

// Removes clusters without members and renumbers the survivors in id order.
inline void drop_empty_clusters(PointMatrix& centers, std::vector<int>& labels) {
    std::vector<int> count(static_cast<std::size_t>(centers.rows()), 0);
    for (int l : labels) ++count[l];
    std::vector<int> remap(count.size(), -1);
    int next = 0;
    for (std::size_t c = 0; c < count.size(); ++c)
        if (count[c] > 0) remap[c] = next++;
    if (next == centers.rows()) return;
    PointMatrix kept(next, centers.cols());
    for (std::size_t c = 0; c < count.size(); ++c)
        if (remap[c] >= 0) kept.row(remap[c]) = centers.row(static_cast<Eigen::Index>(c));
    for (int& l : labels) l = remap[l];
    centers = std::move(kept);
}

}  // namespace detail

inline PointMatrix to_matrix(std::span<const StateFeatures> rows) {
    PointMatrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kFeatureDim));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < kFeatureDim; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return x;
}

inline void require_finite(const PointMatrix& x) {
    OFFRL_REQUIRE(x.allFinite(), DataError, "clustering input contains non-finite values");
}

/// k-means with k-means++ seeding. With `standardize` false the identity scaler is used.
inline ClusterModel kmeans_fit(const PointMatrix& points, int k, std::uint64_t seed, bool standardize = true) {
    OFFRL_REQUIRE(k >= 1, ConfigError, "k must be >= 1");
    OFFRL_REQUIRE(points.rows() >= k, InsufficientDataError,
                  "k-means needs at least k=" + std::to_string(k) + " points, got " + std::to_string(points.rows()));
    require_finite(points);
    ClusterModel model;
    model.method = ClusterMethod::KMeans;
    model.scaler = standardize ? FeatureScaler::standardize(points) : FeatureScaler::identity(points.cols());
    const PointMatrix x = model.scaler.apply(points);
    Rng rng(seed);
    auto res = detail::lloyd(x, detail::kmeanspp_init(x, k, rng));
    model.k = k;
    model.centroids = std::move(res.centers);
    model.labels = std::move(res.labels);
    model.wcss_history = std::move(res.wcss_history);
    return model;
}

/// Within-cluster sum of squares of the model's training assignment, in scaled space.
inline double model_wcss(const PointMatrix& points, const ClusterModel& model) {
    return detail::wcss(model.scaler.apply(points), model.centroids, model.labels);
}

/// BIC of a centroid model on `points` (higher is better). Points are scaled
/// with the model's scaler and assigned to their nearest centroid.
inline double bic_score(const PointMatrix& points, const ClusterModel& model) {
    OFFRL_REQUIRE(model.method != ClusterMethod::Optics, ConfigError, "BIC is defined for centroid models only");
    OFFRL_REQUIRE(points.cols() == model.centroids.cols(), ConfigError, "dimensionality mismatch");
    const PointMatrix x = model.scaler.apply(points);
    std::vector<int> labels(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) labels[i] = detail::nearest_center(x.row(i).data(), model.centroids);
    return detail::bic_from_assignment(x, model.centroids, labels);
}

/// X-means: starts at k = 2 and repeatedly offers every cluster a 2-means split,
/// keeping it iff the local BIC of the children beats the parent's.
inline ClusterModel xmeans_fit(const PointMatrix& points, int k_max, std::uint64_t seed, bool standardize = true) {
    OFFRL_REQUIRE(k_max >= 2, ConfigError, "xmeans k_max must be >= 2");
    OFFRL_REQUIRE(points.rows() >= 2, InsufficientDataError, "xmeans needs at least 2 points");
    require_finite(points);
    ClusterModel model;
    model.method = ClusterMethod::XMeans;
    model.scaler = standardize ? FeatureScaler::standardize(points) : FeatureScaler::identity(points.cols());
    const PointMatrix x = model.scaler.apply(points);

    Rng rng(seed);
    auto state = detail::lloyd(x, detail::kmeanspp_init(x, 2, rng));
    detail::drop_empty_clusters(state.centers, state.labels);
    std::uint64_t round = 0;
    while (state.centers.rows() < k_max) {
        const Eigen::Index k = state.centers.rows();
        std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(k));
        for (Eigen::Index i = 0; i < x.rows(); ++i) members[state.labels[i]].push_back(i);

        std::vector<Eigen::VectorXd> next_centers;
        Eigen::Index budget = k_max - k;
        bool split_any = false;
        for (Eigen::Index c = 0; c < k; ++c) {
            const auto& idx = members[c];
            if (budget == 0 || idx.size() < 2) {
                next_centers.emplace_back(state.centers.row(c).transpose());
                continue;
            }
            const PointMatrix sub = detail::rows_of(x, idx);
            const PointMatrix parent_center = state.centers.row(c);
            const std::vector<int> parent_labels(idx.size(), 0);
            const double parent_bic = detail::bic_from_assignment(sub, parent_center, parent_labels);

            Rng child_rng(derive_seed(seed, round * 1000003ULL + static_cast<std::uint64_t>(c)));
            auto child = detail::lloyd(sub, detail::kmeanspp_init(sub, 2, child_rng));
            const double child_bic = detail::bic_from_assignment(sub, child.centers, child.labels);
            if (child_bic > parent_bic) {
                model.splits.push_back({static_cast<int>(c), parent_bic, child_bic});
                next_centers.emplace_back(child.centers.row(0).transpose());
                next_centers.emplace_back(child.centers.row(1).transpose());
                --budget;
                split_any = true;
            } else {
                next_centers.emplace_back(state.centers.row(c).transpose());
            }
        }
        ++round;
        if (!split_any) break;
        PointMatrix centers(static_cast<Eigen::Index>(next_centers.size()), x.cols());
        for (std::size_t c = 0; c < next_centers.size(); ++c) centers.row(static_cast<Eigen::Index>(c)) = next_centers[c].transpose();
        state = detail::lloyd(x, std::move(centers));
        detail::drop_empty_clusters(state.centers, state.labels);
    }
    for (const auto& s : model.splits)
        if (!(s.child_bic > s.parent_bic)) throw NumericalError("accepted an X-means split that did not improve BIC");

    model.k = static_cast<int>(state.centers.rows());
    model.centroids = std::move(state.centers);
    model.labels = std::move(state.labels);
    model.wcss_history = std::move(state.wcss_history);
    return model;
}

/// Discrete state of a feature vector: nearest centroid for centroid models,
/// label of the nearest stored training point for OPTICS. Ties go to the lowest id.
inline int assign_state(const ClusterModel& model, std::span<const double> features) {
    OFFRL_REQUIRE(static_cast<Eigen::Index>(features.size()) == model.dim(), ConfigError, "feature dimension mismatch");
    const auto z = model.scaler.apply(features);
    if (model.method != ClusterMethod::Optics) return detail::nearest_center(z.data(), model.centroids);
    int best_label = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < model.labeled_points.rows(); ++i) {
        const double d = squared_distance(z.data(), model.labeled_points.row(i).data(), model.labeled_points.cols());
        if (d < best_d || (d == best_d && model.labels[i] < best_label)) {
            best_d = d;
            best_label = model.labels[i];
        }
    }
    return best_label;
}

inline int assign_state(const ClusterModel& model, const StateFeatures& features) {
    return assign_state(model, std::span<const double>(features.data(), features.size()));
}

/// Replaces each transition's state with its cluster id; next_state follows.
inline Dataset discretize_dataset(const Dataset& ds, const ClusterModel& model) {
    Dataset out = ds;
    for (auto& traj : out.trajectories) {
        for (auto& tr : traj.steps) {
            OFFRL_REQUIRE(tr.features.has_value(), DataError, "episode '" + traj.id + "' lacks state features");
            tr.state = assign_state(model, *tr.features);
        }
        for (std::size_t t = 0; t < traj.steps.size(); ++t)
            traj.steps[t].next_state = t + 1 < traj.steps.size() ? traj.steps[t + 1].state : kAbsorbing;
    }
    return out;
}

inline std::vector<StateFeatures> collect_features(const Dataset& ds) {
    std::vector<StateFeatures> rows;
    rows.reserve(ds.m());
    for (const auto& traj : ds.trajectories)
        for (const auto& tr : traj.steps) {
            OFFRL_REQUIRE(tr.features.has_value(), DataError, "episode '" + traj.id + "' lacks state features");
            rows.push_back(*tr.features);
        }
    return rows;
}

// ---------------------------------------------------------------------------
// Model file

namespace detail {
inline nlohmann::json matrix_to_json(const PointMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row(i).data(), m.row(i).data() + m.cols()));
    return rows;
}
inline PointMatrix matrix_from_json(const nlohmann::json& j, Eigen::Index cols) {
    PointMatrix m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto row = j[i].get<std::vector<double>>();
        OFFRL_REQUIRE(static_cast<Eigen::Index>(row.size()) == cols, ParseError, "matrix row has wrong width");
        for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = row[static_cast<std::size_t>(c)];
    }
    return m;
}
}  // namespace detail

inline nlohmann::json to_json(const ClusterModel& m) {
    nlohmann::json j = {{"format", "offrl-cluster-model"},
                        {"version", 1},
                        {"method", to_string(m.method)},
                        {"k", m.k},
                        {"has_noise", m.has_noise},
                        {"scaler", {{"offset", m.scaler.offset}, {"scale", m.scaler.scale}}}};
    if (m.method == ClusterMethod::Optics) {
        j["labeled_points"] = detail::matrix_to_json(m.labeled_points);
        j["labels"] = m.labels;
    } else {
        j["centroids"] = detail::matrix_to_json(m.centroids);
    }
    return j;
}

inline ClusterModel cluster_model_from_json(const nlohmann::json& j) {
    OFFRL_REQUIRE(j.value("format", "") == "offrl-cluster-model" && j.value("version", 0) == 1, ParseError,
                  "not a version-1 cluster model file");
    ClusterModel m;
    const auto method = j.at("method").get<std::string>();
    if (method == "kmeans") m.method = ClusterMethod::KMeans;
    else if (method == "xmeans") m.method = ClusterMethod::XMeans;
    else if (method == "optics") m.method = ClusterMethod::Optics;
    else throw ParseError("unknown cluster method '" + method + "'");
    m.k = j.at("k").get<int>();
    m.has_noise = j.at("has_noise").get<bool>();
    m.scaler.offset = j.at("scaler").at("offset").get<std::vector<double>>();
    m.scaler.scale = j.at("scaler").at("scale").get<std::vector<double>>();
    if (m.method == ClusterMethod::Optics) {
        m.labeled_points = detail::matrix_from_json(j.at("labeled_points"), m.dim());
        m.labels = j.at("labels").get<std::vector<int>>();
    } else {
        m.centroids = detail::matrix_from_json(j.at("centroids"), m.dim());
    }
    return m;
}

}  // namespace offrl
