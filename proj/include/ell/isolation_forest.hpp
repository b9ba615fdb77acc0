#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "ell/error.hpp"
#include "ell/random.hpp"

namespace ell {

/// Average path length of an unsuccessful BST search over n points; the
/// normalizer for isolation depths.
inline double average_path_length(double n) {
    if (n <= 1.0) return 0.0;
    if (n == 2.0) return 1.0;
    constexpr double kEulerGamma = 0.5772156649015329;
    return 2.0 * (std::log(n - 1.0) + kEulerGamma) - 2.0 * (n - 1.0) / n;
}

class IsolationForest {
public:
    struct Node {
        int feature = -1;  // -1: leaf
        double split = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        std::size_t size = 0;  // leaf population
    };
    using Tree = std::vector<Node>;

    IsolationForest(const std::vector<std::vector<double>>& points, std::size_t trees, std::uint64_t seed,
                    std::size_t sample_size = 256) {
        if (points.empty()) throw Error(ErrorCode::EmptyInput, "isolation forest on an empty point set");
        if (trees == 0) throw Error(ErrorCode::InvalidConfig, "isolation forest needs at least one tree");
        sample_size_ = std::min(sample_size, points.size());
        const auto height_limit = static_cast<std::size_t>(std::ceil(std::log2(std::max<double>(2.0, static_cast<double>(sample_size_)))));
        Rng rng(seed);
        std::vector<std::size_t> all(points.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        forest_.reserve(trees);
        for (std::size_t t = 0; t < trees; ++t) {
            // Partial Fisher-Yates: first sample_size_ entries form the subsample.
            for (std::size_t i = 0; i < sample_size_; ++i) std::swap(all[i], all[i + rng.index(all.size() - i)]);
            std::vector<std::size_t> sample(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(sample_size_));
            Tree tree;
            grow(tree, points, sample, 0, height_limit, rng);
            forest_.push_back(std::move(tree));
        }
    }

    double path_length(std::span<const double> x, const Tree& tree) const {
        std::int32_t node = 0;
        double depth = 0.0;
        while (tree[static_cast<std::size_t>(node)].feature >= 0) {
            const auto& nd = tree[static_cast<std::size_t>(node)];
            node = x[static_cast<std::size_t>(nd.feature)] < nd.split ? nd.left : nd.right;
            depth += 1.0;
        }
        return depth + average_path_length(static_cast<double>(tree[static_cast<std::size_t>(node)].size));
    }

    double mean_path_length(std::span<const double> x) const {
        double s = 0.0;
        for (const auto& t : forest_) s += path_length(x, t);
        return s / static_cast<double>(forest_.size());
    }

    /// Anomaly score in (0, 1]: 2^(-E[h(x)] / c(sample_size)). Higher is more
    /// anomalous.
    double score(std::span<const double> x) const {
        const double c = average_path_length(static_cast<double>(sample_size_));
        if (c <= 0.0) return 0.5;
        return std::exp2(-mean_path_length(x) / c);
    }

    const std::vector<Tree>& trees() const { return forest_; }
    std::size_t sample_size() const { return sample_size_; }

private:
    static std::int32_t grow(Tree& tree, const std::vector<std::vector<double>>& points, std::vector<std::size_t>& idx,
                             std::size_t depth, std::size_t limit, Rng& rng) {
        const auto id = static_cast<std::int32_t>(tree.size());
        tree.push_back({});
        std::vector<int> splittable;
        const std::size_t dim = points[idx.front()].size();
        std::vector<double> lo(dim), hi(dim);
        if (idx.size() > 1 && depth < limit) {
            for (std::size_t f = 0; f < dim; ++f) {
                lo[f] = hi[f] = points[idx.front()][f];
                for (auto i : idx) {
                    lo[f] = std::min(lo[f], points[i][f]);
                    hi[f] = std::max(hi[f], points[i][f]);
                }
                if (hi[f] > lo[f]) splittable.push_back(static_cast<int>(f));
            }
        }
        if (splittable.empty()) {
            tree[static_cast<std::size_t>(id)].size = idx.size();
            return id;
        }
        const int f = splittable[rng.index(splittable.size())];
        const auto uf = static_cast<std::size_t>(f);
        double split = rng.uniform(lo[uf], hi[uf]);
        if (split <= lo[uf]) split = std::nextafter(lo[uf], hi[uf]);
        std::vector<std::size_t> left, right;
        for (auto i : idx) (points[i][uf] < split ? left : right).push_back(i);
        tree[static_cast<std::size_t>(id)].feature = f;
        tree[static_cast<std::size_t>(id)].split = split;
        const auto l = grow(tree, points, left, depth + 1, limit, rng);
        const auto r = grow(tree, points, right, depth + 1, limit, rng);
        tree[static_cast<std::size_t>(id)].left = l;
        tree[static_cast<std::size_t>(id)].right = r;
        return id;
    }

    std::size_t sample_size_ = 0;
    std::vector<Tree> forest_;
};

inline std::vector<double> isolation_forest_scores(const std::vector<std::vector<double>>& points, std::size_t trees,
                                                   std::uint64_t seed) {
    IsolationForest forest(points, trees, seed);
    std::vector<double> scores(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) scores[i] = forest.score(points[i]);
    return scores;
}

inline std::size_t contamination_count(double contamination, std::size_t n) {
    // Guard against 0.1 * 30 = 3.0000000000000004 rounding up to 4.
    const double raw = contamination * static_cast<double>(n);
    return std::min(n, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

/// Remove the ceil(contamination * n) most anomalous points (ties broken by
/// lower index first) and return the kept indices in ascending order.
inline std::vector<std::size_t> isolation_forest_filter(const std::vector<std::vector<double>>& points, double contamination = 0.1,
                                                        std::size_t trees = 100, std::uint64_t seed = 0) {
    if (points.size() < 2) throw Error(ErrorCode::EmptyInput, "isolation forest filter needs at least two points");
    if (!(contamination >= 0.0 && contamination < 1.0)) throw Error(ErrorCode::InvalidConfig, "contamination must be in [0,1)");
    const auto scores = isolation_forest_scores(points, trees, seed);
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    const auto drop = contamination_count(contamination, points.size());
    std::vector<std::size_t> kept(order.begin() + static_cast<std::ptrdiff_t>(drop), order.end());
    std::sort(kept.begin(), kept.end());
    return kept;
}

}  // namespace ell
