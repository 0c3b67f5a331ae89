#include <gtest/gtest.h>

#include <cmath>
#include <iostream>

#include "fcnz/kmeans.hpp"
#include "oracles.hpp"

using namespace fcnz;
using fcnz::testing::optimal_kmeans_sse;

namespace {

double recomputed_sse(std::span<const double> values, const KMeansResult& r) {
    double e = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - r.codebook.centroids.at(r.assignments[i]);
        e += d * d;
    }
    return e;
}

} // namespace

TEST(KMeans, IdenticalValuesSingleCluster) {
    const std::vector<double> v(7, -0.25);
    const auto r = kmeans_fit(v, 1, 3);
    EXPECT_EQ(r.codebook.centroids, (std::vector<double>{-0.25}));
    EXPECT_EQ(r.sse, 0.0);
    // more clusters than distinct values collapse to one centroid
    EXPECT_EQ(kmeans_fit(v, 4, 3).codebook.size(), 1U);
}

TEST(KMeans, TwoSeparatedPairs) {
    const std::vector<double> v{1, 2, 9, 10};
    const auto r = kmeans_fit(v, 2, 1);
    EXPECT_EQ(r.codebook.centroids, (std::vector<double>{1.5, 9.5}));
    EXPECT_EQ(r.assignments, (std::vector<std::uint32_t>{0, 0, 1, 1}));
    EXPECT_EQ(r.sse, 1.0);
    EXPECT_EQ(optimal_kmeans_sse(v, 2), 1.0);
}

TEST(KMeans, DistinctCountClustersReconstructExactly) {
    const std::vector<double> v{0.3, -1.2, 0.3, 5.0, -1.2, 2.5};
    const auto r = kmeans_fit(v, 4, 9);
    EXPECT_EQ(r.sse, 0.0);
    EXPECT_EQ(r.codebook.centroids, (std::vector<double>{-1.2, 0.3, 2.5, 5.0}));
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(r.codebook.centroids[r.assignments[i]], v[i]);
}

TEST(KMeans, MatchesExactOptimumOnSmallSets) {
    // Lloyd-type search can settle in a local optimum that no single-point
    // move escapes; such sets are listed, and must stay rare.
    Rng rng(51);
    std::size_t gaps = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.index(12), k = 1 + rng.index(4);
        std::vector<double> v(n);
        for (auto& x : v) x = rng.normal();
        const auto r = kmeans_fit(v, k, rng.next());
        const double best = optimal_kmeans_sse(v, k);
        EXPECT_GE(r.sse, best * (1.0 - 1e-9) - 1e-15);
        EXPECT_NEAR(recomputed_sse(v, r), r.sse, 1e-12);
        if (std::abs(r.sse - best) > 1e-9 * best + 1e-15) {
            ++gaps;
            std::cout << "gap: trial " << trial << " n=" << n << " k=" << k << " lloyd=" << r.sse
                      << " optimum=" << best << '\n';
        }
    }
    EXPECT_LE(gaps, 2U);
}

TEST(KMeans, OptimumNonIncreasingInK) {
    Rng rng(52);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> v(2 + rng.index(11));
        for (auto& x : v) x = rng.uniform(-1, 1);
        for (std::size_t k = 2; k <= 5; ++k) EXPECT_LE(optimal_kmeans_sse(v, k), optimal_kmeans_sse(v, k - 1));
    }
}

TEST(KMeans, CodebookSortedAndDistinct) {
    Rng rng(53);
    std::vector<double> v(500);
    for (auto& x : v) x = rng.normal();
    const auto r = kmeans_fit(v, 16, 4);
    EXPECT_EQ(r.codebook.size(), 16U);
    for (std::size_t c = 1; c < r.codebook.size(); ++c) EXPECT_LT(r.codebook.centroids[c - 1], r.codebook.centroids[c]);
    for (auto a : r.assignments) EXPECT_LT(a, r.codebook.size());
    EXPECT_LE(r.iterations, 300U);
}

TEST(KMeans, DeterministicUnderSeed) {
    Rng rng(54);
    std::vector<double> v(300);
    for (auto& x : v) x = rng.normal();
    const auto a = kmeans_fit(v, 8, 77);
    const auto b = kmeans_fit(v, 8, 77);
    EXPECT_EQ(a.codebook, b.codebook);
    EXPECT_EQ(a.assignments, b.assignments);
    EXPECT_EQ(a.sse, b.sse);
}

TEST(KMeans, NearestBreaksTiesTowardLowerIndex) {
    const std::vector<double> c{0.0, 2.0};
    EXPECT_EQ(detail::nearest(1.0, c), 0U);
}

TEST(KMeans, RejectsBadInput) {
    const std::vector<double> v{1.0, 2.0};
    EXPECT_THROW(kmeans_fit(v, 0, 1), ParameterError);
    EXPECT_THROW(kmeans_fit(v, kMaxClusters + 1, 1), ParameterError);
    EXPECT_THROW(kmeans_fit(std::span<const double>{}, 2, 1), DegenerateInputError);
    const std::vector<double> bad{1.0, std::nan("")};
    EXPECT_THROW(kmeans_fit(bad, 1, 1), DegenerateInputError);
}
