#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace fcnz {

/// Sorted, duplicate-free centroids.
struct Codebook {
    std::vector<double> centroids;

    [[nodiscard]] std::size_t size() const noexcept { return centroids.size(); }

    friend bool operator==(const Codebook&, const Codebook&) = default;
};

struct KMeansResult {
    Codebook codebook;
    std::vector<std::uint32_t> assignments; // index into codebook.centroids
    double sse = 0.0;                       // within-cluster squared error
    std::size_t iterations = 0;             // of the winning restart
};

struct KMeansOptions {
    std::size_t restarts = 8;
    std::size_t max_iterations = 300;
};

inline constexpr std::size_t kMaxClusters = std::size_t{1} << 16;

namespace detail {

/// Nearest centroid; ties go to the lower index.
inline std::uint32_t nearest(double v, std::span<const double> centroids) {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = (v - centroids[c]) * (v - centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::uint32_t>(c);
        }
    }
    return best;
}

/// k-means++ seeding. Stops early once every point coincides with a
/// centroid, so fewer than k centroids may come back.
inline std::vector<double> seed_plus_plus(std::span<const double> values, std::size_t k, Rng& rng) {
    std::vector<double> centroids{values[rng.index(values.size())]};
    std::vector<double> d2(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) d2[i] = (values[i] - centroids[0]) * (values[i] - centroids[0]);
    while (centroids.size() < k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        if (!(total > 0.0)) break;
        const double target = rng.uniform() * total;
        double run = 0.0;
        std::size_t pick = values.size();
        for (std::size_t i = 0; i < values.size(); ++i) {
            run += d2[i];
            if (d2[i] > 0.0 && run > target) {
                pick = i;
                break;
            }
        }
        if (pick == values.size()) {
            // rounding left target at the very end; take the last positive-weight point
            for (std::size_t i = values.size(); i-- > 0;) {
                if (d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        const double c = values[pick];
        centroids.push_back(c);
        for (std::size_t i = 0; i < values.size(); ++i) d2[i] = std::min(d2[i], (values[i] - c) * (values[i] - c));
    }
    return centroids;
}

struct LloydRun {
    std::vector<double> centroids;
    std::vector<std::uint32_t> assignments;
    double sse = 0.0;
    std::size_t iterations = 0;
};

/// Hartigan single-point transfers: moves value i from cluster a to b when
/// n_b/(n_b+1) (x-m_b)^2 < n_a/(n_a-1) (x-m_a)^2, i.e. when the move lowers
/// the total squared error. Centroids stay exact cluster means.
inline void transfer_refine(std::span<const double> values, std::vector<double>& centroids,
                            std::vector<std::uint32_t>& assign, std::size_t max_passes) {
    const std::size_t k = centroids.size();
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        sum[assign[i]] += values[i];
        ++count[assign[i]];
    }
    for (std::size_t pass = 0; pass < max_passes; ++pass) {
        bool moved = false;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double x = values[i];
            const std::uint32_t a = assign[i];
            if (count[a] < 2) continue;
            const double na = static_cast<double>(count[a]);
            const double da = x - sum[a] / na;
            const double removal_gain = na / (na - 1.0) * da * da;
            std::uint32_t best = a;
            double best_cost = removal_gain;
            for (std::uint32_t b = 0; b < k; ++b) {
                if (b == a || count[b] == 0) continue;
                const double nb = static_cast<double>(count[b]);
                const double db = x - sum[b] / nb;
                const double cost = nb / (nb + 1.0) * db * db;
                // relative margin keeps rounding noise from cycling a point
                if (cost < best_cost * (1.0 - 1e-12)) {
                    best_cost = cost;
                    best = b;
                }
            }
            if (best == a) continue;
            sum[a] -= x;
            --count[a];
            sum[best] += x;
            ++count[best];
            assign[i] = best;
            moved = true;
        }
        if (!moved) break;
    }
    // recompute sums from scratch so the means carry no incremental drift
    std::ranges::fill(sum, 0.0);
    std::ranges::fill(count, 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        sum[assign[i]] += values[i];
        ++count[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (count[c] > 0) centroids[c] = sum[c] / static_cast<double>(count[c]);
    }
}

inline LloydRun lloyd(std::span<const double> values, std::vector<double> centroids, std::size_t max_iterations) {
    const std::size_t n = values.size();
    const std::size_t k = centroids.size();
    std::vector<std::uint32_t> assign(n, std::numeric_limits<std::uint32_t>::max());
    std::vector<double> sum(k);
    std::vector<std::size_t> count(k);
    std::size_t it = 0;
    for (; it < max_iterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const auto a = nearest(values[i], centroids);
            changed |= a != assign[i];
            assign[i] = a;
        }
        if (!changed) break;

        std::ranges::fill(sum, 0.0);
        std::ranges::fill(count, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sum[assign[i]] += values[i];
            ++count[assign[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] > 0) centroids[c] = sum[c] / static_cast<double>(count[c]);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] > 0) continue;
            // re-seed an empty cluster at the point farthest from its centroid
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = std::abs(values[i] - centroids[assign[i]]);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            centroids[c] = values[far];
        }
    }
    transfer_refine(values, centroids, assign, max_iterations);
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = values[i] - centroids[assign[i]];
        sse += e * e;
    }
    return {std::move(centroids), std::move(assign), sse, it};
}

} // namespace detail

/// 1-D k-means: k-means++ seeding, Lloyd iterations until assignments settle
/// (or the iteration cap), single-point transfer refinement, best of
/// `restarts` runs by squared error.
///
/// The returned codebook is sorted with duplicates and empty clusters
/// dropped, so it can hold fewer than k centroids. When k is at least the
/// number of distinct values the error is exactly zero.
inline KMeansResult kmeans_fit(std::span<const double> values, std::size_t k, std::uint64_t seed,
                               KMeansOptions options = {}) {
    if (k < 1 || k > kMaxClusters) throw ParameterError("kmeans_fit: k must lie in [1, 65536]");
    if (values.empty()) throw DegenerateInputError("kmeans_fit: no values");
    if (options.restarts == 0) throw ParameterError("kmeans_fit: restarts must be positive");
    for (double v : values) {
        if (!std::isfinite(v)) throw DegenerateInputError("kmeans_fit: non-finite value");
    }

    detail::LloydRun best;
    best.sse = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < options.restarts; ++r) {
        Rng rng(derive_seed(seed, {r}));
        auto run = detail::lloyd(values, detail::seed_plus_plus(values, k, rng), options.max_iterations);
        if (run.sse < best.sse) best = std::move(run);
        if (best.sse == 0.0) break;
    }

    // sort used centroids, merge equal ones, remap assignments
    std::vector<std::uint8_t> used(best.centroids.size(), 0);
    for (auto a : best.assignments) used[a] = 1;
    std::vector<std::uint32_t> order;
    for (std::uint32_t c = 0; c < best.centroids.size(); ++c) {
        if (used[c]) order.push_back(c);
    }
    std::ranges::sort(order, [&](auto a, auto b) { return best.centroids[a] < best.centroids[b]; });
    KMeansResult out;
    std::vector<std::uint32_t> remap(best.centroids.size(), 0);
    for (auto c : order) {
        if (out.codebook.centroids.empty() || out.codebook.centroids.back() != best.centroids[c]) {
            out.codebook.centroids.push_back(best.centroids[c]);
        }
        remap[c] = static_cast<std::uint32_t>(out.codebook.centroids.size() - 1);
    }
    out.assignments.resize(best.assignments.size());
    for (std::size_t i = 0; i < best.assignments.size(); ++i) out.assignments[i] = remap[best.assignments[i]];
    out.sse = best.sse;
    out.iterations = best.iterations;
    return out;
}

} // namespace fcnz
