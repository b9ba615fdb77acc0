#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ell/detect.hpp"
#include "ell/model.hpp"
#include "ell/random.hpp"

namespace ell {

// Slot layout of an address feature vector, grouped by family.
namespace feature_slot {
inline constexpr std::size_t kTxPerDay = 0;
inline constexpr std::size_t kUsdMean = 1;
inline constexpr std::size_t kUsdStd = 2;
inline constexpr std::size_t kTxCount = 3;
inline constexpr std::size_t kGasMean = 4;
inline constexpr std::size_t kInDegree = 5;
inline constexpr std::size_t kOutDegree = 6;
inline constexpr std::size_t kBetweennessRank = 7;
inline constexpr std::size_t kPageRank = 8;
inline constexpr std::size_t kHour0 = 9;  // 24 slots: share of sent transfers per UTC hour
inline constexpr std::size_t kInterTransferMedianHours = 33;
inline constexpr std::size_t kBalance = 34;
inline constexpr std::size_t kHoldingDays = 35;
inline constexpr std::size_t kDistinctTokens = 36;
inline constexpr std::size_t kCounterparties = 37;
inline constexpr std::size_t kCentroidJaccard = 38;
inline constexpr std::size_t kLabel0 = 39;  // 6 slots, one-hot per LabelCategory
inline constexpr std::size_t kCount = 45;
}  // namespace feature_slot

inline std::vector<std::string> feature_names() {
    std::vector<std::string> names = {"tx_per_day", "usd_mean", "usd_std", "tx_count", "gas_mean",
                                      "in_degree",  "out_degree", "betweenness_rank", "pagerank"};
    for (int h = 0; h < 24; ++h) names.push_back("hour_" + std::to_string(h));
    names.insert(names.end(), {"inter_transfer_median_hours", "balance", "holding_days", "distinct_tokens", "counterparties",
                               "centroid_jaccard"});
    for (auto c : kAllCategories) names.push_back("label_" + std::string(to_string(c)));
    return names;
}

/// Per-address feature vectors, raw and z-scored per slot over the
/// address universe (constant slots standardize to 0).
struct FeatureTable {
    std::vector<Address> addresses;  // sorted
    std::vector<std::vector<double>> raw;
    std::vector<std::vector<double>> standardized;

    std::optional<std::size_t> index_of(const Address& a) const {
        auto it = std::lower_bound(addresses.begin(), addresses.end(), a);
        if (it == addresses.end() || *it != a) return std::nullopt;
        return static_cast<std::size_t>(it - addresses.begin());
    }

    std::span<const double> row(const Address& a) const {
        auto i = index_of(a);
        if (!i) throw Error(ErrorCode::InvariantViolation, "no features for " + a.str());
        return standardized[*i];
    }

    std::span<const double> raw_row(const Address& a) const {
        auto i = index_of(a);
        if (!i) throw Error(ErrorCode::InvariantViolation, "no features for " + a.str());
        return raw[*i];
    }
};

/// PageRank by power iteration on the directed transfer graph, edges
/// weighted by transfer count. Dangling mass is spread uniformly.
inline std::vector<double> pagerank(const TransactionGraph& g, double damping = 0.85, double tol = 1e-13, int max_iter = 1000) {
    const auto n = g.node_count();
    if (n == 0) return {};
    std::vector<double> out_w(n, 0.0);
    for (const auto& e : g.edges()) out_w[e.from] += static_cast<double>(e.transfer_count);
    std::vector<double> pr(n, 1.0 / static_cast<double>(n)), next(n);
    for (int it = 0; it < max_iter; ++it) {
        double dangling = 0.0;
        for (std::size_t u = 0; u < n; ++u)
            if (out_w[u] == 0.0) dangling += pr[u];
        const double base = (1.0 - damping) / static_cast<double>(n) + damping * dangling / static_cast<double>(n);
        std::fill(next.begin(), next.end(), base);
        for (const auto& e : g.edges()) next[e.to] += damping * pr[e.from] * static_cast<double>(e.transfer_count) / out_w[e.from];
        double diff = 0.0;
        for (std::size_t u = 0; u < n; ++u) diff += std::abs(next[u] - pr[u]);
        pr.swap(next);
        if (diff < tol) break;
    }
    return pr;
}

/// Betweenness centrality on the undirected, unweighted transfer graph,
/// estimated with Brandes' algorithm from up to `samples` seeded sources.
inline std::vector<double> approximate_betweenness(const TransactionGraph& g, std::size_t samples, std::uint64_t seed) {
    const auto n = g.node_count();
    std::vector<double> bc(n, 0.0);
    if (n == 0) return bc;
    std::vector<std::vector<std::uint32_t>> adj(n);
    for (const auto& e : g.edges()) {
        if (e.from == e.to) continue;
        adj[e.from].push_back(e.to);
        adj[e.to].push_back(e.from);
    }
    for (auto& a : adj) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    std::vector<std::uint32_t> sources(n);
    std::iota(sources.begin(), sources.end(), 0u);
    if (samples < n) {
        Rng rng(seed);
        rng.shuffle(sources);
        sources.resize(samples);
        std::sort(sources.begin(), sources.end());
    }
    std::vector<double> sigma(n), delta(n);
    std::vector<std::int64_t> dist(n);
    std::vector<std::uint32_t> stack;
    std::vector<std::vector<std::uint32_t>> pred(n);
    for (auto s : sources) {
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        std::fill(dist.begin(), dist.end(), -1);
        for (auto& p : pred) p.clear();
        stack.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        std::queue<std::uint32_t> q;
        q.push(s);
        while (!q.empty()) {
            auto v = q.front();
            q.pop();
            stack.push_back(v);
            for (auto w : adj[v]) {
                if (dist[w] < 0) {
                    dist[w] = dist[v] + 1;
                    q.push(w);
                }
                if (dist[w] == dist[v] + 1) {
                    sigma[w] += sigma[v];
                    pred[w].push_back(v);
                }
            }
        }
        for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
            const auto w = *it;
            for (auto v : pred[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            if (w != s) bc[w] += delta[w];
        }
    }
    const double scale = static_cast<double>(n) / static_cast<double>(sources.size());
    for (auto& b : bc) b *= scale;
    return bc;
}

// Fractional ranks in [0,1], ties averaged.
inline std::vector<double> rank_normalize(std::span<const double> v) {
    const auto n = v.size();
    std::vector<double> out(n, 0.0);
    if (n <= 1) return out;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i + j) / 2.0) / static_cast<double>(n - 1);
        for (std::size_t k = i; k <= j; ++k) out[order[k]] = r;
        i = j + 1;
    }
    return out;
}

inline void standardize_columns(const std::vector<std::vector<double>>& raw, std::vector<std::vector<double>>& out) {
    out = raw;
    if (raw.empty()) return;
    const auto dim = raw.front().size();
    const auto n = static_cast<double>(raw.size());
    for (std::size_t f = 0; f < dim; ++f) {
        double mean = 0.0;
        for (const auto& r : raw) mean += r[f];
        mean /= n;
        double var = 0.0;
        for (const auto& r : raw) var += (r[f] - mean) * (r[f] - mean);
        const double sd = std::sqrt(var / n);
        for (std::size_t i = 0; i < raw.size(); ++i) out[i][f] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? (raw[i][f] - mean) / sd : 0.0;
    }
}

struct FeatureOptions {
    std::size_t betweenness_samples = 64;
    std::uint64_t seed = 0;
};

/// Build feature vectors for every graph node, every address with a
/// balance and every member of `groups`.
///
/// `groups` (typically the merged detector super-groups) only feeds the
/// centroid-Jaccard slot: the centroid of a group is the set of
/// counterparties shared by at least half its members. Addresses outside
/// any group get 0 there.
inline FeatureTable extract_features(const TransactionGraph& graph, const std::map<Address, double>& balances,
                                     std::span<const AddressLabel> labels,
                                     std::span<const std::vector<Address>> groups = {}, const FeatureOptions& opts = {}) {
    namespace fs = feature_slot;
    FeatureTable table;
    {
        std::vector<Address> all = graph.nodes();
        for (const auto& [a, b] : balances) all.push_back(a);
        for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        table.addresses = std::move(all);
    }
    const auto n = table.addresses.size();
    table.raw.assign(n, std::vector<double>(fs::kCount, 0.0));
    const auto& transfers = graph.transfers();

    std::int64_t t_end = 0;
    for (const auto& t : transfers) t_end = std::max(t_end, t.timestamp);

    const auto pr = pagerank(graph);
    const auto bc_rank = rank_normalize(approximate_betweenness(graph, opts.betweenness_samples, opts.seed));
    const LabelIndex label_index(labels);

    std::vector<std::vector<std::uint32_t>> counterparties(graph.node_count());
    for (std::uint32_t u = 0; u < graph.node_count(); ++u) {
        for (auto eid : graph.out_edges(u))
            if (graph.edge(eid).to != u) counterparties[u].push_back(graph.edge(eid).to);
        for (auto eid : graph.in_edges(u))
            if (graph.edge(eid).from != u) counterparties[u].push_back(graph.edge(eid).from);
        std::sort(counterparties[u].begin(), counterparties[u].end());
        counterparties[u].erase(std::unique(counterparties[u].begin(), counterparties[u].end()), counterparties[u].end());
    }

    for (std::size_t i = 0; i < n; ++i) {
        auto& f = table.raw[i];
        const auto& addr = table.addresses[i];
        if (auto it = balances.find(addr); it != balances.end()) f[fs::kBalance] = it->second;
        if (const auto* cats = label_index.categories(addr))
            for (auto c : *cats) f[fs::kLabel0 + static_cast<std::size_t>(c)] = 1.0;
        const auto node = graph.find(addr);
        if (!node) continue;
        const auto u = *node;

        std::vector<double> usd, gas;
        std::vector<std::int64_t> times;
        std::set<std::string> tokens;
        std::int64_t first_in = -1;
        std::size_t in_deg = 0, out_deg = 0;
        double sent = 0.0;
        for (auto eid : graph.out_edges(u)) {
            const auto& e = graph.edge(eid);
            ++out_deg;
            for (auto tid : e.transfers) {
                const auto& t = transfers[tid];
                usd.push_back(t.usd_value);
                gas.push_back(t.gas_fee);
                times.push_back(t.timestamp);
                tokens.insert(t.token);
                f[fs::kHour0 + static_cast<std::size_t>(hour_of_day(t.timestamp))] += 1.0;
                sent += 1.0;
            }
        }
        for (auto eid : graph.in_edges(u)) {
            const auto& e = graph.edge(eid);
            ++in_deg;
            if (e.from == u) continue;  // self-transfers already counted as sent
            for (auto tid : e.transfers) {
                const auto& t = transfers[tid];
                usd.push_back(t.usd_value);
                times.push_back(t.timestamp);
                tokens.insert(t.token);
                if (first_in < 0 || t.timestamp < first_in) first_in = t.timestamp;
            }
        }
        if (sent > 0)
            for (std::size_t h = 0; h < 24; ++h) f[fs::kHour0 + h] /= sent;

        const auto count = static_cast<double>(usd.size());
        std::sort(times.begin(), times.end());
        if (!times.empty()) {
            const double span_days = std::max(1.0, static_cast<double>(times.back() - times.front()) / 86400.0);
            f[fs::kTxPerDay] = count / span_days;
        }
        if (!usd.empty()) {
            std::vector<double> sorted = usd;
            const double mean = TransactionGraph::sorted_sum(sorted) / count;
            double var = 0.0;
            for (double v : sorted) var += (v - mean) * (v - mean);
            f[fs::kUsdMean] = mean;
            f[fs::kUsdStd] = std::sqrt(var / count);
        }
        f[fs::kTxCount] = count;
        if (!gas.empty()) f[fs::kGasMean] = TransactionGraph::sorted_sum(gas) / static_cast<double>(gas.size());
        f[fs::kInDegree] = static_cast<double>(in_deg);
        f[fs::kOutDegree] = static_cast<double>(out_deg);
        f[fs::kBetweennessRank] = bc_rank[u];
        f[fs::kPageRank] = pr[u];
        if (times.size() >= 2) {
            std::vector<double> gaps;
            for (std::size_t k = 1; k < times.size(); ++k) gaps.push_back(static_cast<double>(times[k] - times[k - 1]) / 3600.0);
            std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
            double med = gaps[gaps.size() / 2];
            if (gaps.size() % 2 == 0) {
                const double lower = *std::max_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2));
                med = (med + lower) / 2.0;
            }
            f[fs::kInterTransferMedianHours] = med;
        }
        if (f[fs::kBalance] > 0 && first_in >= 0) f[fs::kHoldingDays] = static_cast<double>(t_end - first_in) / 86400.0;
        f[fs::kDistinctTokens] = static_cast<double>(tokens.size());
        f[fs::kCounterparties] = static_cast<double>(counterparties[u].size());
    }

    for (const auto& grp : groups) {
        std::map<std::uint32_t, std::size_t> freq;
        std::vector<std::uint32_t> nodes;
        for (const auto& m : grp) {
            if (auto u = graph.find(m)) {
                nodes.push_back(*u);
                for (auto c : counterparties[*u]) ++freq[c];
            }
        }
        std::vector<std::uint32_t> centroid;
        for (const auto& [c, k] : freq)
            if (2 * k >= grp.size()) centroid.push_back(c);
        for (const auto& m : grp) {
            auto u = graph.find(m);
            auto i = table.index_of(m);
            if (!u || !i) continue;
            table.raw[*i][fs::kCentroidJaccard] = jaccard(counterparties[*u], centroid);
        }
    }

    standardize_columns(table.raw, table.standardized);
    return table;
}

}  // namespace ell
