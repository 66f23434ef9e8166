#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

#include "offrl/discretize.hpp"

namespace offrl {

/// OPTICS cluster ordering. Reachability and core distances are indexed by
/// point; `order` lists point indices in processing order.
struct OpticsOrdering {
    std::vector<std::size_t> order;
    std::vector<double> reachability;
    std::vector<double> core_distance;
    std::vector<long> predecessor;  // -1 when none
};

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Core distance is the distance to the min_pts-th nearest point, counting the
// point itself. Points whose core distance exceeds max_eps are not core points,
// and only neighbors within max_eps get a reachability.
inline OpticsOrdering optics_order(const PointMatrix& x, int min_pts, double max_eps = kInf) {
    const auto n = static_cast<std::size_t>(x.rows());
    const Eigen::Index d = x.cols();
    OpticsOrdering o;
    o.reachability.assign(n, kInf);
    o.core_distance.assign(n, kInf);
    o.predecessor.assign(n, -1);
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            dist[j] = squared_distance(x.row(static_cast<Eigen::Index>(i)).data(), x.row(static_cast<Eigen::Index>(j)).data(), d);
        std::nth_element(dist.begin(), dist.begin() + (min_pts - 1), dist.end());
        o.core_distance[i] = std::sqrt(dist[static_cast<std::size_t>(min_pts - 1)]);
        if (o.core_distance[i] > max_eps) o.core_distance[i] = kInf;
    }

    std::vector<bool> processed(n, false);
    o.order.reserve(n);
    // Next point: smallest reachability among unprocessed points, ties to the
    // lowest index; when all are infinite, the lowest unprocessed index.
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t p = n;
        double best = kInf;
        for (std::size_t j = 0; j < n; ++j) {
            if (processed[j]) continue;
            if (p == n || o.reachability[j] < best) {
                p = j;
                best = o.reachability[j];
            }
        }
        processed[p] = true;
        o.order.push_back(p);
        const double core = o.core_distance[p];
        if (std::isinf(core)) continue;
        const double* xp = x.row(static_cast<Eigen::Index>(p)).data();
        for (std::size_t j = 0; j < n; ++j) {
            if (processed[j]) continue;
            const double dj = std::sqrt(squared_distance(xp, x.row(static_cast<Eigen::Index>(j)).data(), d));
            if (dj > max_eps) continue;
            const double r = std::max(core, dj);
            if (r < o.reachability[j]) {
                o.reachability[j] = r;
                o.predecessor[j] = static_cast<long>(p);
            }
        }
    }
    return o;
}

struct SteepDownArea {
    std::size_t start = 0;
    std::size_t end = 0;
    double mib = 0.0;
};

inline std::size_t extend_region(const std::vector<bool>& steep, const std::vector<bool>& xward, std::size_t start,
                                 int min_pts) {
    std::size_t end = start;
    int non_xward = 0;
    for (std::size_t index = start; index < steep.size(); ++index) {
        if (steep[index]) {
            non_xward = 0;
            end = index;
        } else if (!xward[index]) {
            if (++non_xward > min_pts) break;
        } else {
            return end;
        }
    }
    return end;
}

inline void update_filter_sdas(std::vector<SteepDownArea>& sdas, double mib, double xi_complement,
                               const std::vector<double>& r) {
    if (std::isinf(mib)) {
        sdas.clear();
        return;
    }
    std::vector<SteepDownArea> kept;
    for (auto sda : sdas)
        if (mib <= r[sda.start] * xi_complement) {
            sda.mib = std::max(sda.mib, mib);
            kept.push_back(sda);
        }
    sdas = std::move(kept);
}

inline std::optional<std::pair<std::size_t, std::size_t>> correct_predecessor(const std::vector<double>& r,
                                                                              const std::vector<long>& pred_plot,
                                                                              const std::vector<std::size_t>& order,
                                                                              std::size_t s, std::size_t e) {
    while (s < e) {
        if (r[s] > r[e]) return std::pair{s, e};
        const long p_e = pred_plot[e];
        for (std::size_t i = s; i < e; ++i)
            if (p_e == static_cast<long>(order[i])) return std::pair{s, e};
        --e;
    }
    return std::nullopt;
}

// Xi-steep cluster extraction on the reachability plot (positions in the ordering).
inline std::vector<std::pair<std::size_t, std::size_t>> xi_clusters(const OpticsOrdering& o, double xi, int min_pts,
                                                                    std::size_t min_cluster_size) {
    const std::size_t n = o.order.size();
    std::vector<double> r(n + 1);
    std::vector<long> pred_plot(n);
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = o.reachability[o.order[i]];
        pred_plot[i] = o.predecessor[o.order[i]];
    }
    r[n] = kInf;
    const double xi_complement = 1.0 - xi;
    std::vector<bool> steep_up(n), steep_down(n), down(n), up(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double ratio = r[i] / r[i + 1];  // NaN for inf/inf: every comparison false
        steep_up[i] = ratio <= xi_complement;
        steep_down[i] = ratio >= 1.0 / xi_complement;
        down[i] = ratio > 1.0;
        up[i] = ratio < 1.0;
    }

    std::vector<SteepDownArea> sdas;
    std::vector<std::pair<std::size_t, std::size_t>> clusters;
    std::size_t index = 0;
    double mib = 0.0;
    for (std::size_t steep_index = 0; steep_index < n; ++steep_index) {
        if (!(steep_up[steep_index] || steep_down[steep_index]) || steep_index < index) continue;
        for (std::size_t t = index; t <= steep_index; ++t) mib = std::max(mib, r[t]);
        if (steep_down[steep_index]) {
            update_filter_sdas(sdas, mib, xi_complement, r);
            const std::size_t d_end = extend_region(steep_down, up, steep_index, min_pts);
            sdas.push_back({steep_index, d_end, 0.0});
            index = d_end + 1;
            mib = r[index];
        } else {
            update_filter_sdas(sdas, mib, xi_complement, r);
            const std::size_t u_start = steep_index;
            const std::size_t u_end = extend_region(steep_up, down, u_start, min_pts);
            index = u_end + 1;
            mib = r[index];
            std::vector<std::pair<std::size_t, std::size_t>> u_clusters;
            for (const auto& D : sdas) {
                std::size_t c_start = D.start, c_end = u_end;
                if (r[c_end + 1] * xi_complement < D.mib) continue;
                const double d_max = r[D.start];
                if (d_max * xi_complement >= r[c_end + 1]) {
                    while (r[c_start + 1] > r[c_end + 1] && c_start < D.end) ++c_start;
                } else if (r[c_end + 1] * xi_complement >= d_max) {
                    while (c_end > u_start && r[c_end - 1] > d_max) --c_end;
                }
                const auto corrected = correct_predecessor(r, pred_plot, o.order, c_start, c_end);
                if (!corrected) continue;
                std::tie(c_start, c_end) = *corrected;
                if (c_end - c_start + 1 < min_cluster_size) continue;
                if (c_start > D.end) continue;
                if (c_end < u_start) continue;
                u_clusters.emplace_back(c_start, c_end);
            }
            std::reverse(u_clusters.begin(), u_clusters.end());
            clusters.insert(clusters.end(), u_clusters.begin(), u_clusters.end());
        }
    }
    return clusters;
}

}  // namespace detail

/// OPTICS (epsilon = max_eps, unbounded by default) followed by xi-steepness extraction. Points
/// outside every extracted cluster receive the noise label. The returned model
/// keeps all scaled training points for nearest-labeled-neighbor assignment.
inline std::pair<OpticsOrdering, ClusterModel> optics_fit(const PointMatrix& points, int min_pts, double xi,
                                                          bool standardize = true, double max_eps = detail::kInf) {
    OFFRL_REQUIRE(max_eps > 0.0, ConfigError, "optics max_eps must be > 0");
    OFFRL_REQUIRE(min_pts >= 2, ConfigError, "optics min_pts must be >= 2");
    OFFRL_REQUIRE(xi > 0.0 && xi < 1.0, ConfigError, "optics xi must lie in (0, 1)");
    OFFRL_REQUIRE(points.rows() >= min_pts, InsufficientDataError,
                  "optics needs at least min_pts=" + std::to_string(min_pts) + " points");
    require_finite(points);
    ClusterModel model;
    model.method = ClusterMethod::Optics;
    model.scaler = standardize ? FeatureScaler::standardize(points) : FeatureScaler::identity(points.cols());
    model.labeled_points = model.scaler.apply(points);

    auto ordering = detail::optics_order(model.labeled_points, min_pts, max_eps);
    const auto clusters = detail::xi_clusters(ordering, xi, min_pts, static_cast<std::size_t>(min_pts));

    const std::size_t n = ordering.order.size();
    std::vector<int> by_position(n, -1);
    int next = 0;
    for (const auto& [s, e] : clusters) {
        bool free = true;
        for (std::size_t i = s; i <= e; ++i) free = free && by_position[i] == -1;
        if (!free) continue;
        for (std::size_t i = s; i <= e; ++i) by_position[i] = next;
        ++next;
    }
    model.k = next;
    model.labels.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) model.labels[ordering.order[i]] = by_position[i];
    model.has_noise = std::any_of(model.labels.begin(), model.labels.end(), [](int l) { return l < 0; });
    for (int& l : model.labels)
        if (l < 0) l = model.k;
    return {std::move(ordering), std::move(model)};
}

}  // namespace offrl
