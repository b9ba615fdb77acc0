#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ell/error.hpp"

namespace ell {

inline constexpr int kNoise = -1;

inline double euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// DBSCAN with Euclidean distance.
///
/// A point's eps-neighborhood includes the point itself and is closed
/// (distance <= eps); core points have at least min_pts neighbors. Clusters
/// are the connected components of core points, numbered in order of their
/// lowest-index core. A non-core point within eps of some core point joins
/// the cluster of the lowest-index such core; every other point is noise.
/// This fixes the border assignment that classic DBSCAN leaves to visiting
/// order.
inline std::vector<int> dbscan(const std::vector<std::vector<double>>& points, double eps = 0.5, std::size_t min_pts = 5) {
    if (points.empty()) throw Error(ErrorCode::EmptyInput, "dbscan on an empty point set");
    if (!(eps > 0.0) || min_pts == 0) throw Error(ErrorCode::InvalidConfig, "dbscan requires eps > 0 and min_pts >= 1");
    const std::size_t n = points.size();
    const std::size_t dim = points.front().size();
    for (const auto& p : points)
        if (p.size() != dim) throw Error(ErrorCode::InvalidConfig, "dbscan points differ in dimension");

    std::vector<std::vector<std::size_t>> neighbors(n);
    for (std::size_t i = 0; i < n; ++i) {
        neighbors[i].push_back(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            if (euclidean(points[i], points[j]) <= eps) {
                neighbors[i].push_back(j);
                neighbors[j].push_back(i);
            }
        }
    }
    std::vector<char> core(n, 0);
    for (std::size_t i = 0; i < n; ++i) core[i] = neighbors[i].size() >= min_pts;

    std::vector<int> label(n, kNoise);
    int next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i] || label[i] != kNoise) continue;
        label[i] = next;
        stack.assign(1, i);
        while (!stack.empty()) {
            const auto p = stack.back();
            stack.pop_back();
            for (auto q : neighbors[p]) {
                if (core[q] && label[q] == kNoise) {
                    label[q] = next;
                    stack.push_back(q);
                }
            }
        }
        ++next;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        std::size_t best = n;
        for (auto q : neighbors[i])
            if (core[q] && q < best) best = q;
        if (best < n) label[i] = label[best];
    }
    return label;
}

}  // namespace ell
