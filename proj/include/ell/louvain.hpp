#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ell/error.hpp"
#include "ell/random.hpp"

namespace ell {

struct WeightedEdge {
    std::uint32_t u = 0;
    std::uint32_t v = 0;
    double weight = 0.0;
};

/// Undirected weighted graph held as a symmetric adjacency matrix A in
/// sparse rows. A self-loop of weight w is stored as A_ii = 2w, so that
/// degree k_i = sum_j A_ij and 2m = sum_i k_i.
class WeightedGraph {
public:
    using Row = std::vector<std::pair<std::uint32_t, double>>;

    WeightedGraph() = default;

    WeightedGraph(std::size_t n, std::span<const WeightedEdge> edges) : rows_(n) {
        for (const auto& e : edges) {
            if (e.u >= n || e.v >= n) throw Error(ErrorCode::InvariantViolation, "edge endpoint out of range");
            if (!(e.weight >= 0.0)) throw Error(ErrorCode::InvariantViolation, "negative edge weight");
            if (e.weight == 0.0) continue;
            if (e.u == e.v) {
                rows_[e.u].emplace_back(e.u, 2.0 * e.weight);
            } else {
                rows_[e.u].emplace_back(e.v, e.weight);
                rows_[e.v].emplace_back(e.u, e.weight);
            }
        }
        finalize();
    }

    static WeightedGraph from_rows(std::vector<Row> rows) {
        WeightedGraph g;
        g.rows_ = std::move(rows);
        g.finalize();
        return g;
    }

    std::size_t size() const { return rows_.size(); }
    const Row& neighbors(std::uint32_t u) const { return rows_[u]; }
    double degree(std::uint32_t u) const { return degree_[u]; }
    double self_loop(std::uint32_t u) const {
        for (const auto& [v, w] : rows_[u])
            if (v == u) return w;
        return 0.0;
    }
    // Sum of all A_ij, i.e. 2m.
    double total_degree() const { return total_; }

private:
    void finalize() {
        degree_.assign(rows_.size(), 0.0);
        total_ = 0.0;
        for (std::size_t u = 0; u < rows_.size(); ++u) {
            auto& row = rows_[u];
            std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            Row merged;
            for (const auto& [v, w] : row) {
                if (!merged.empty() && merged.back().first == v) merged.back().second += w;
                else merged.emplace_back(v, w);
            }
            row = std::move(merged);
            for (const auto& [v, w] : row) degree_[u] += w;
            total_ += degree_[u];
        }
    }

    std::vector<Row> rows_;
    std::vector<double> degree_;
    double total_ = 0.0;
};

/// Newman modularity with resolution: sum_c [in_c/2m - gamma (tot_c/2m)^2].
/// A graph without edges has modularity 0.
inline double modularity(const WeightedGraph& g, std::span<const std::uint32_t> partition, double resolution = 1.0) {
    const double two_m = g.total_degree();
    if (two_m <= 0.0) return 0.0;
    std::unordered_map<std::uint32_t, std::pair<double, double>> comm;  // in, tot
    for (std::uint32_t u = 0; u < g.size(); ++u) {
        auto& [in, tot] = comm[partition[u]];
        tot += g.degree(u);
        for (const auto& [v, w] : g.neighbors(u))
            if (partition[v] == partition[u]) in += w;
    }
    double q = 0.0;
    for (const auto& [c, it] : comm) q += it.first / two_m - resolution * (it.second / two_m) * (it.second / two_m);
    return q;
}

namespace detail {

// One level of local moving. Returns the community of each node and whether
// any node changed community.
inline std::pair<std::vector<std::uint32_t>, bool> louvain_local_moves(const WeightedGraph& g, double resolution, Rng& rng) {
    const auto n = static_cast<std::uint32_t>(g.size());
    const double two_m = g.total_degree();
    std::vector<std::uint32_t> comm(n);
    std::vector<double> tot(n);
    for (std::uint32_t u = 0; u < n; ++u) {
        comm[u] = u;
        tot[u] = g.degree(u);
    }
    std::vector<std::uint32_t> order(n);
    for (std::uint32_t u = 0; u < n; ++u) order[u] = u;
    rng.shuffle(order);

    std::vector<double> link(n, 0.0);
    std::vector<std::uint32_t> touched;
    bool any_move = false;
    constexpr double kMinGain = 1e-12;
    for (int pass = 0; pass < 1000; ++pass) {
        bool moved = false;
        for (auto u : order) {
            const double ku = g.degree(u);
            const auto old = comm[u];
            touched.clear();
            for (const auto& [v, w] : g.neighbors(u)) {
                if (v == u) continue;
                if (link[comm[v]] == 0.0) touched.push_back(comm[v]);
                link[comm[v]] += w;
            }
            tot[old] -= ku;
            auto gain = [&](std::uint32_t c) { return link[c] - resolution * tot[c] * ku / two_m; };
            std::uint32_t best = old;
            double best_gain = gain(old);
            for (auto c : touched) {
                const double gc = gain(c);
                if (gc > best_gain + kMinGain) {
                    best = c;
                    best_gain = gc;
                }
            }
            tot[best] += ku;
            comm[u] = best;
            if (best != old) moved = true;
            for (auto c : touched) link[c] = 0.0;
        }
        if (!moved) break;
        any_move = true;
    }
    return {std::move(comm), any_move};
}

inline WeightedGraph louvain_aggregate(const WeightedGraph& g, const std::vector<std::uint32_t>& comm, std::uint32_t count) {
    std::vector<std::unordered_map<std::uint32_t, double>> acc(count);
    for (std::uint32_t u = 0; u < g.size(); ++u)
        for (const auto& [v, w] : g.neighbors(u)) acc[comm[u]][comm[v]] += w;
    std::vector<WeightedGraph::Row> rows(count);
    for (std::uint32_t c = 0; c < count; ++c) rows[c].assign(acc[c].begin(), acc[c].end());
    return WeightedGraph::from_rows(std::move(rows));
}

// Renumber labels by first appearance in node order.
inline std::uint32_t relabel(std::vector<std::uint32_t>& labels) {
    std::unordered_map<std::uint32_t, std::uint32_t> map;
    for (auto& l : labels) {
        auto [it, inserted] = map.emplace(l, static_cast<std::uint32_t>(map.size()));
        l = it->second;
    }
    return static_cast<std::uint32_t>(map.size());
}

}  // namespace detail

/// Louvain community detection (local moving + aggregation, repeated until
/// no node moves). Node visiting order is shuffled from `seed`, so results
/// are reproducible per seed. Community ids are numbered by first
/// appearance in node order.
inline std::vector<std::uint32_t> louvain_communities(const WeightedGraph& graph, double resolution = 1.0, std::uint64_t seed = 0) {
    if (graph.size() == 0) throw Error(ErrorCode::EmptyGraph, "louvain on a graph without nodes");
    std::vector<std::uint32_t> membership(graph.size());
    for (std::uint32_t u = 0; u < graph.size(); ++u) membership[u] = u;
    if (graph.total_degree() <= 0.0) return membership;

    Rng rng(seed);
    WeightedGraph level = graph;
    for (int depth = 0; depth < 64; ++depth) {
        auto [comm, moved] = detail::louvain_local_moves(level, resolution, rng);
        if (!moved) break;
        const auto count = detail::relabel(comm);
        for (auto& m : membership) m = comm[m];
        if (count == level.size()) break;
        level = detail::louvain_aggregate(level, comm, count);
    }
    detail::relabel(membership);
    return membership;
}

}  // namespace ell
