#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>

#include "offrl/discretize.hpp"

namespace offrl {

struct PcaResult {
    PointMatrix projected;                    // N × dims
    std::vector<double> explained_variance;   // descending, length dims
    PointMatrix components;                   // dims × d, unit rows
    std::vector<double> mean;                 // mean of the (scaled) data
    FeatureScaler scaler;

    /// Projects new raw points into the component space.
    PointMatrix project(const PointMatrix& raw) const {
        PointMatrix z = scaler.apply(raw);
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) -= mean[static_cast<std::size_t>(j)];
        return z * components.transpose();
    }
};

/// Principal component projection of the (optionally standardized) data.
/// Eigenvalues are population variances; each component's sign is fixed so its
/// largest-magnitude loading is positive.
inline PcaResult pca_project(const PointMatrix& points, int dims = 3, bool standardize = true) {
    OFFRL_REQUIRE(dims >= 1 && dims <= points.cols(), ConfigError, "pca dims must lie in [1, d]");
    OFFRL_REQUIRE(points.rows() >= dims, InsufficientDataError,
                  "pca needs at least dims=" + std::to_string(dims) + " points");
    require_finite(points);
    PcaResult res;
    res.scaler = standardize ? FeatureScaler::standardize(points) : FeatureScaler::identity(points.cols());
    PointMatrix z = res.scaler.apply(points);
    const Eigen::Index n = z.rows(), d = z.cols();
    res.mean.assign(static_cast<std::size_t>(d), 0.0);
    for (Eigen::Index j = 0; j < d; ++j) {
        double m = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) m += z(i, j);
        res.mean[static_cast<std::size_t>(j)] = m / static_cast<double>(n);
        for (Eigen::Index i = 0; i < n; ++i) z(i, j) -= res.mean[static_cast<std::size_t>(j)];
    }
    const Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    OFFRL_REQUIRE(eig.info() == Eigen::Success, NumericalError, "PCA eigendecomposition failed");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return eig.eigenvalues()(a) > eig.eigenvalues()(b); });
    res.components.resize(dims, d);
    for (int c = 0; c < dims; ++c) {
        Eigen::VectorXd v = eig.eigenvectors().col(order[static_cast<std::size_t>(c)]);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        res.components.row(c) = v.transpose();
        res.explained_variance.push_back(std::max(eig.eigenvalues()(order[static_cast<std::size_t>(c)]), 0.0));
    }
    res.projected = z * res.components.transpose();
    return res;
}

}  // namespace offrl
