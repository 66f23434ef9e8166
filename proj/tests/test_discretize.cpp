#include <gtest/gtest.h>

#include "offrl/discretize.hpp"
#include "offrl/optics.hpp"
#include "offrl/pca.hpp"
#include "support.hpp"

using namespace offrl;
using namespace testing_support;

namespace {

ClusterModel centroid_model(const PointMatrix& centers) {
    ClusterModel m;
    m.method = ClusterMethod::KMeans;
    m.k = static_cast<int>(centers.rows());
    m.scaler = FeatureScaler::identity(centers.cols());
    m.centroids = centers;
    return m;
}

std::vector<int> cluster_sizes(const ClusterModel& m) {
    std::vector<int> sizes(static_cast<std::size_t>(m.k), 0);
    for (int l : m.labels)
        if (l != m.noise_label()) ++sizes[static_cast<std::size_t>(l)];
    return sizes;
}

}  // namespace

TEST(KMeans, IdenticalPointsSingleCentroid) {
    PointMatrix x = PointMatrix::Constant(30, 10, 2.5);
    const auto m = kmeans_fit(x, 1, 0);
    EXPECT_EQ(model_wcss(x, m), 0.0);
    const std::vector<double> p(10, 2.5);
    EXPECT_EQ(assign_state(m, p), 0);
    // centroid maps back to the input point
    for (Eigen::Index d = 0; d < 10; ++d)
        EXPECT_NEAR(m.centroids(0, d) * m.scaler.scale[static_cast<std::size_t>(d)] + m.scaler.offset[static_cast<std::size_t>(d)],
                    2.5, 1e-12);
}

TEST(KMeans, TwoBlobsRecoverMeans) {
    const auto x = blobs(3, 4000, 2);
    const auto m = kmeans_fit(x, 2, 1);
    // true blob means in scaled space
    for (int c = 0; c < 2; ++c) {
        std::vector<double> mean(10, 0.0);
        mean[static_cast<std::size_t>(c)] = 8.0;
        const auto z = m.scaler.apply(mean);
        const int label = assign_state(m, mean);
        double d2 = 0.0;
        for (std::size_t d = 0; d < 10; ++d) d2 += std::pow(z[d] - m.centroids(label, static_cast<Eigen::Index>(d)), 2);
        EXPECT_LT(std::sqrt(d2), 0.1) << "blob " << c;
    }
}

TEST(KMeans, SaturatedClustering) {
    const auto x = blobs(4, 5, 4);
    const auto m = kmeans_fit(x, static_cast<int>(x.rows()), 2);
    EXPECT_NEAR(model_wcss(x, m), 0.0, 1e-20);
}

TEST(KMeans, WcssNeverIncreasesAcrossIterations) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        PointMatrix x(80, 10);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng) * (1 + i % 3);
        const auto m = kmeans_fit(x, 2 + static_cast<int>(seed % 6), seed);
        for (std::size_t i = 1; i < m.wcss_history.size(); ++i)
            EXPECT_LE(m.wcss_history[i], m.wcss_history[i - 1] * (1 + 1e-12) + 1e-12);
    }
}

TEST(Bic, PenaltyFavorsFewerClustersAtEqualLikelihood) {
    PointMatrix x = PointMatrix::Constant(40, 10, 1.0);
    PointMatrix one = PointMatrix::Constant(1, 10, 1.0), two = PointMatrix::Constant(2, 10, 1.0);
    const double b1 = bic_score(x, centroid_model(one)), b2 = bic_score(x, centroid_model(two));
    EXPECT_TRUE(std::isfinite(b1));
    EXPECT_GT(b1, b2);
}

TEST(Bic, ThreeBlobsPeakAtThree) {
    const auto x = blobs(6, 150, 3);
    const double b2 = bic_score(x, kmeans_fit(x, 2, 1, false));
    const double b3 = bic_score(x, kmeans_fit(x, 3, 1, false));
    const double b4 = bic_score(x, kmeans_fit(x, 4, 1, false));
    EXPECT_GT(b3, b2);
    EXPECT_GT(b3, b4);
}

TEST(XMeans, TightBlobStaysAtLowerBound) {
    Rng rng(2);
    PointMatrix x(200, 10);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 0.01 * standard_normal(rng);
    const auto m = xmeans_fit(x, 10, 0);
    EXPECT_EQ(m.k, 2);
    EXPECT_TRUE(m.splits.empty());
}

TEST(XMeans, FourBlobsFoundInMostSeeds) {
    int hits = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto m = xmeans_fit(blobs(s, 100), 16, s);
        hits += m.k == 4;
        for (int l : m.labels) ASSERT_TRUE(l >= 0 && l < m.k);
        for (const auto& split : m.splits) EXPECT_GT(split.child_bic, split.parent_bic);
    }
    EXPECT_GE(hits, 18);
}

TEST(Scaling, PrescaledIdentityEqualsRawStandardized) {
    const auto x = blobs(8, 60);
    const auto raw = kmeans_fit(x, 4, 3, true);
    const auto pre = kmeans_fit(raw.scaler.apply(x), 4, 3, false);
    EXPECT_EQ(raw.labels, pre.labels);
    EXPECT_LT((raw.centroids - pre.centroids).cwiseAbs().maxCoeff(), 1e-9);
    const auto xr = xmeans_fit(x, 8, 3, true), xp = xmeans_fit(raw.scaler.apply(x), 8, 3, false);
    EXPECT_EQ(xr.labels, xp.labels);
}

TEST(AssignState, ExactCentroidAndTies) {
    PointMatrix c = PointMatrix::Zero(5, 10);
    for (int i = 0; i < 5; ++i) c(i, 0) = i;
    const auto m = centroid_model(c);
    std::vector<double> p(10, 0.0);
    p[0] = 3.0;
    EXPECT_EQ(assign_state(m, p), 3);
    p[0] = 2.5;  // equidistant from 2 and 3
    EXPECT_EQ(assign_state(m, p), 2);
    EXPECT_THROW(assign_state(m, std::vector<double>(3, 0.0)), ConfigError);
}

TEST(AssignState, TrainingPointsMapToTrainingLabels) {
    const auto x = blobs(11, 50);
    for (const auto& m : {kmeans_fit(x, 4, 0), xmeans_fit(x, 8, 0), optics_fit(x, 10, 0.05).second}) {
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            ASSERT_EQ(assign_state(m, std::span<const double>(x.row(i).data(), 10)), m.labels[static_cast<std::size_t>(i)]);
    }
}

TEST(AssignState, TotalAndDeterministicOnRandomVectors) {
    const auto x = blobs(12, 40);
    const auto km = xmeans_fit(x, 8, 1);
    const auto op = optics_fit(x, 8, 0.05).second;
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> p(10);
        for (auto& v : p) v = 20.0 * (uniform01(rng) - 0.5);
        const int a = assign_state(km, p), b = assign_state(op, p);
        EXPECT_TRUE(a >= 0 && a < km.n_states());
        EXPECT_TRUE(b >= 0 && b < op.n_states());
        EXPECT_EQ(a, assign_state(km, p));
        EXPECT_EQ(b, assign_state(op, p));
    }
}

TEST(ClusterModelFile, RoundTrip) {
    const auto x = blobs(13, 30);
    for (const auto& m : {xmeans_fit(x, 8, 0), optics_fit(x, 10, 0.05).second}) {
        const auto back = cluster_model_from_json(nlohmann::json::parse(to_json(m).dump()));
        EXPECT_EQ(back.k, m.k);
        EXPECT_EQ(back.has_noise, m.has_noise);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const std::span<const double> p(x.row(i).data(), 10);
            EXPECT_EQ(assign_state(back, p), assign_state(m, p));
        }
    }
    EXPECT_THROW(cluster_model_from_json({{"format", "other"}}), ParseError);
}

TEST(Optics, HalfMoonsSeparatedWhereKMeansFails) {
    std::vector<int> truth;
    const auto x = moons(3, 150, &truth);
    const auto km = kmeans_fit(x, 2, 1);
    const auto [ord, om] = optics_fit(x, 20, 0.1);
    EXPECT_EQ(om.k, 2);
    EXPECT_GT(purity(om.labels, truth, om.noise_label()), 0.98);
    EXPECT_LT(purity(km.labels, truth, -1), 0.9);
}

TEST(Optics, SparseUniformNoiseIsAllNoise) {
    // 60 points in the unit 10-cube sit ~1.2 apart; no point has 10 neighbors within 0.5
    Rng rng(1);
    PointMatrix x(60, 10);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform01(rng);
    const auto [ord, m] = optics_fit(x, 10, 0.05, false, 0.5);
    for (double r : ord.reachability) EXPECT_TRUE(std::isinf(r));
    EXPECT_EQ(m.k, 0);
    EXPECT_TRUE(m.has_noise);
    for (int l : m.labels) EXPECT_EQ(l, m.noise_label());
}

TEST(Optics, FirstReachabilityInfiniteAndDeterministic) {
    const auto x = moons(5, 60);
    const auto [o1, m1] = optics_fit(x, 5, 0.05);
    const auto [o2, m2] = optics_fit(x, 5, 0.05);
    EXPECT_TRUE(std::isinf(o1.reachability[o1.order[0]]));
    EXPECT_EQ(o1.order, o2.order);
    EXPECT_EQ(m1.labels, m2.labels);
}

// Frozen from scikit-learn 1.x OPTICS(min_samples, xi, cluster_method="xi") on
// the same points (unscaled).
TEST(Optics, MatchesReferenceImplementationMoonsA) {
    const auto x = moons(3, 150);
    const auto [ord, m] = optics_fit(x, 20, 0.1, false);
    EXPECT_EQ(cluster_sizes(m), (std::vector<int>{146, 148}));
    EXPECT_EQ(std::count(m.labels.begin(), m.labels.end(), m.noise_label()), 6);
    EXPECT_EQ(std::vector<std::size_t>(ord.order.begin(), ord.order.begin() + 8),
              (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
    const double reach[] = {0.40807472072788, 0.382749144788159, 0.382749144788159};
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(ord.reachability[ord.order[static_cast<std::size_t>(i + 1)]], reach[i], 1e-12);
}

TEST(Optics, MatchesReferenceImplementationMoonsB) {
    const auto x = moons(4, 150);
    const auto [ord, m] = optics_fit(x, 5, 0.03, false);
    EXPECT_EQ(cluster_sizes(m), (std::vector<int>{7, 10, 12, 5, 5, 11, 15, 8, 6, 9, 25, 7, 5, 8, 7, 6, 7, 7, 10, 13, 7, 5, 8}));
    EXPECT_EQ(std::count(m.labels.begin(), m.labels.end(), m.noise_label()), 97);
    EXPECT_EQ(std::vector<std::size_t>(ord.order.begin(), ord.order.begin() + 8),
              (std::vector<std::size_t>{0, 2, 1, 3, 4, 6, 9, 5}));
    const double reach[] = {0.084812039549715, 0.0721955992892, 0.0721955992892};
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(ord.reachability[ord.order[static_cast<std::size_t>(i + 1)]], reach[i], 1e-12);
}

TEST(Pca, RankDeficientPlane) {
    Rng rng(4);
    PointMatrix x(100, 10);
    for (Eigen::Index i = 0; i < 100; ++i) {
        const double a = standard_normal(rng), b = standard_normal(rng);
        for (Eigen::Index d = 0; d < 10; ++d) x(i, d) = a * (d + 1) + b * (d % 3 == 0 ? 1.0 : -0.5);
    }
    const auto p = pca_project(x, 3, false);
    EXPECT_NEAR(p.explained_variance[2], 0.0, 1e-9);
}

TEST(Pca, FullRankPreservesDistancesAndOrdersVariance) {
    Rng rng(6);
    PointMatrix x(40, 10);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng) * (1.0 + static_cast<double>(i % 10));
    const auto p = pca_project(x, 10, false);
    for (std::size_t k = 1; k < p.explained_variance.size(); ++k)
        EXPECT_LE(p.explained_variance[k], p.explained_variance[k - 1]);
    for (Eigen::Index i = 0; i < 40; ++i)
        for (Eigen::Index j = i + 1; j < 40; ++j)
            EXPECT_NEAR((x.row(i) - x.row(j)).norm(), (p.projected.row(i) - p.projected.row(j)).norm(), 1e-9);
}

TEST(Discretize, DatasetStatesFollowModel) {
    Dataset ds;
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        auto t = make_traj(std::to_string(i), {{0, 0}, {0, 1}, {0, 2}}, i % 2 == 0);
        for (auto& s : t.steps) {
            StateFeatures f{};
            for (auto& v : f) v = standard_normal(rng) + (i % 2) * 5.0;
            s.features = f;
        }
        ds.trajectories.push_back(t);
    }
    const auto m = kmeans_fit(to_matrix(collect_features(ds)), 2, 0);
    const auto dd = discretize_dataset(ds, m);
    EXPECT_TRUE(dd.has_discrete_states());
    EXPECT_NO_THROW(validate(dd));
    for (const auto& t : dd.trajectories)
        for (std::size_t k = 0; k + 1 < t.steps.size(); ++k) EXPECT_EQ(t.steps[k].next_state, t.steps[k + 1].state);
}
