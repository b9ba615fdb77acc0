#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ell/error.hpp"
#include "ell/louvain.hpp"
#include "ell/model.hpp"

namespace ell {

inline constexpr std::string_view kDetectorSourceOfFunds = "source_of_funds";
inline constexpr std::string_view kDetectorDestinationOfFunds = "destination_of_funds";
inline constexpr std::string_view kDetectorBehavioral = "behavioral";
inline constexpr std::string_view kDetectorAnomalous = "anomalous";

struct DetectorConfig {
    std::size_t min_fanout = 5;
    double min_amount_usd = 10.0;
    std::size_t anomaly_min_tx = 5;
    double anomaly_min_amount_usd = 5.0;
    double amount_identity_tolerance = 0.001;
    double chain_forward_fraction = 0.7;
    std::int64_t chain_window_seconds = 86400;
    std::size_t max_cycle_length = 5;
    double circular_return_fraction = 0.95;
    double similarity_edge_threshold = 0.5;
    double weight_direct = 0.5;
    double weight_temporal = 0.25;
    double weight_contract = 0.25;
    double direct_saturation = 3.0;  // transfers at which direct similarity reaches 1
    double louvain_resolution = 1.0;

    void validate() const {
        auto fraction = [](double v, const char* name) {
            if (!(v > 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidConfig, std::string(name) + " must be in (0,1]");
        };
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0)) throw Error(ErrorCode::InvalidConfig, std::string(name) + " must be positive");
        };
        positive(static_cast<double>(min_fanout), "min_fanout");
        positive(min_amount_usd, "min_amount_usd");
        positive(static_cast<double>(anomaly_min_tx), "anomaly_min_tx");
        positive(anomaly_min_amount_usd, "anomaly_min_amount_usd");
        fraction(amount_identity_tolerance, "amount_identity_tolerance");
        fraction(chain_forward_fraction, "chain_forward_fraction");
        positive(static_cast<double>(chain_window_seconds), "chain_window_seconds");
        if (max_cycle_length < 2) throw Error(ErrorCode::InvalidConfig, "max_cycle_length must be >= 2");
        fraction(circular_return_fraction, "circular_return_fraction");
        fraction(similarity_edge_threshold, "similarity_edge_threshold");
        positive(direct_saturation, "direct_saturation");
        positive(louvain_resolution, "louvain_resolution");
        if (weight_direct < 0 || weight_temporal < 0 || weight_contract < 0 ||
            std::abs(weight_direct + weight_temporal + weight_contract - 1.0) > 1e-9)
            throw Error(ErrorCode::InvalidConfig, "similarity weights must be non-negative and sum to 1");
    }
};

namespace detail {

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    // Smaller root wins, so the final forest does not depend on union order.
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent_[b] = a;
    }

private:
    std::vector<std::size_t> parent_;
};

inline EntityGroup make_group(const TransactionGraph& g, std::span<const std::uint32_t> nodes, std::string_view detector,
                              std::string detail, double weight) {
    EntityGroup grp;
    grp.members.reserve(nodes.size());
    for (auto n : nodes) grp.members.push_back(g.node(n));
    grp.evidence.push_back({std::string(detector), std::move(detail), weight});
    grp.normalize();
    return grp;
}

template <typename Pred>
std::vector<std::uint32_t> qualifying_transfers(const EdgeStats& e, const TransactionGraph& g, Pred pred) {
    std::vector<std::uint32_t> out;
    for (auto id : e.transfers)
        if (pred(g.transfers()[id])) out.push_back(id);
    return out;
}

inline std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace detail

/// Source-of-funds detector: diffusion (one funder seeding many fresh
/// wallets) and sequential diffusion (funds hopping wallet to wallet).
///
/// Diffusion: a recipient counts for funder F when its very first inbound
/// transfer comes from F and clears min_amount_usd. Unlabeled funders with
/// at least min_fanout such recipients form {F} + recipients.
///
/// Sequential: a qualifying x->a transfer links to a qualifying a->b
/// transfer (b not in {a, x}) sent within chain_window_seconds that carries
/// at least chain_forward_fraction of the received USD. Each connected set
/// of linked transfers spanning three or more addresses is one group.
inline std::vector<EntityGroup> detect_source_of_funds(const TransactionGraph& graph, std::span<const AddressLabel> labels,
                                                       const DetectorConfig& config) {
    config.validate();
    const LabelIndex index(labels);
    const auto& transfers = graph.transfers();
    const auto n = static_cast<std::uint32_t>(graph.node_count());
    std::vector<EntityGroup> out;

    // Diffusion.
    std::map<std::uint32_t, std::vector<std::uint32_t>> funded;
    for (std::uint32_t r = 0; r < n; ++r) {
        const Transfer* first = nullptr;
        for (auto eid : graph.in_edges(r)) {
            const auto& e = graph.edge(eid);
            if (e.from == r) continue;
            const auto& t = transfers[e.transfers.front()];
            if (!first || canonical_less(t, *first)) first = &t;
        }
        if (!first || first->usd_value < config.min_amount_usd) continue;
        const auto funder = *graph.find(first->from);
        if (index.labeled(first->from)) continue;
        funded[funder].push_back(r);
    }
    for (auto& [funder, recipients] : funded) {
        if (recipients.size() < config.min_fanout) continue;
        std::vector<std::uint32_t> members = recipients;
        members.push_back(funder);
        out.push_back(detail::make_group(graph, members, kDetectorSourceOfFunds,
                                         "diffusion funder=" + graph.node(funder).str() +
                                             " recipients=" + std::to_string(recipients.size()),
                                         1.0));
    }

    // Sequential diffusion.
    auto qualifies = [&](std::uint32_t tid) {
        const auto& t = transfers[tid];
        return t.usd_value >= config.min_amount_usd && t.from != t.to && !index.labeled(t.from) && !index.labeled(t.to);
    };
    detail::UnionFind links(transfers.size());
    std::vector<char> linked(transfers.size(), 0);
    for (std::uint32_t a = 0; a < n; ++a) {
        std::vector<std::uint32_t> inbound, outbound;
        for (auto eid : graph.in_edges(a))
            for (auto tid : graph.edge(eid).transfers)
                if (qualifies(tid)) inbound.push_back(tid);
        for (auto eid : graph.out_edges(a))
            for (auto tid : graph.edge(eid).transfers)
                if (qualifies(tid)) outbound.push_back(tid);
        if (inbound.empty() || outbound.empty()) continue;
        auto by_time = [&](std::uint32_t x, std::uint32_t y) {
            return transfers[x].timestamp != transfers[y].timestamp ? transfers[x].timestamp < transfers[y].timestamp
                                                                    : canonical_less(transfers[x], transfers[y]);
        };
        std::sort(outbound.begin(), outbound.end(), by_time);
        for (auto in : inbound) {
            const auto& tin = transfers[in];
            auto it = std::lower_bound(outbound.begin(), outbound.end(), tin.timestamp,
                                       [&](std::uint32_t tid, std::int64_t ts) { return transfers[tid].timestamp < ts; });
            for (; it != outbound.end() && transfers[*it].timestamp <= tin.timestamp + config.chain_window_seconds; ++it) {
                const auto& tout = transfers[*it];
                if (tout.to == tin.from) continue;
                if (tout.usd_value >= config.chain_forward_fraction * tin.usd_value) {
                    links.unite(in, *it);
                    linked[in] = linked[*it] = 1;
                }
            }
        }
    }
    std::map<std::size_t, std::vector<std::uint32_t>> chains;  // root -> transfer ids
    for (std::uint32_t tid = 0; tid < transfers.size(); ++tid)
        if (linked[tid]) chains[links.find(tid)].push_back(tid);
    std::vector<std::pair<std::vector<std::uint32_t>, std::uint32_t>> found;  // nodes, earliest transfer
    for (auto& [root, tids] : chains) {
        std::vector<std::uint32_t> nodes;
        for (auto tid : tids) {
            nodes.push_back(*graph.find(transfers[tid].from));
            nodes.push_back(*graph.find(transfers[tid].to));
        }
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        if (nodes.size() < 3) continue;
        const auto first = *std::min_element(tids.begin(), tids.end(),
                                             [&](auto x, auto y) { return canonical_less(transfers[x], transfers[y]); });
        found.emplace_back(std::move(nodes), first);
    }
    std::sort(found.begin(), found.end(),
              [&](const auto& a, const auto& b) { return canonical_less(transfers[a.second], transfers[b.second]); });
    for (const auto& [nodes, first] : found)
        out.push_back(detail::make_group(graph, nodes, kDetectorSourceOfFunds,
                                         "sequential_chain origin=" + transfers[first].from.str() +
                                             " hops_addresses=" + std::to_string(nodes.size()),
                                         1.0));
    return out;
}

/// Destination-of-funds detector ("many-to-one").
///
/// A sender qualifies for collector C when its qualifying USD sent to C is at
/// least chain_forward_fraction of everything it sent out. Unlabeled
/// collectors with at least min_fanout qualifying senders form
/// {C} + senders. The share's denominator is total outbound USD regardless
/// of the floor, which keeps the detector monotone in min_amount_usd.
inline std::vector<EntityGroup> detect_destination_of_funds(const TransactionGraph& graph, std::span<const AddressLabel> labels,
                                                            const DetectorConfig& config) {
    config.validate();
    const LabelIndex index(labels);
    const auto& transfers = graph.transfers();
    const auto n = static_cast<std::uint32_t>(graph.node_count());
    std::vector<double> outbound_usd(n, 0.0);
    for (std::uint32_t u = 0; u < n; ++u) {
        std::vector<double> vals;
        for (auto eid : graph.out_edges(u)) {
            const auto& e = graph.edge(eid);
            if (e.to == u) continue;
            for (auto tid : e.transfers) vals.push_back(transfers[tid].usd_value);
        }
        outbound_usd[u] = TransactionGraph::sorted_sum(vals);
    }
    std::vector<EntityGroup> out;
    for (std::uint32_t c = 0; c < n; ++c) {
        if (index.labeled(graph.node(c))) continue;
        std::vector<std::uint32_t> senders;
        for (auto eid : graph.in_edges(c)) {
            const auto& e = graph.edge(eid);
            if (e.from == c || index.labeled(graph.node(e.from))) continue;
            std::vector<double> vals;
            for (auto tid : e.transfers)
                if (transfers[tid].usd_value >= config.min_amount_usd) vals.push_back(transfers[tid].usd_value);
            if (vals.empty()) continue;
            const double to_c = TransactionGraph::sorted_sum(vals);
            if (outbound_usd[e.from] > 0 && to_c >= config.chain_forward_fraction * outbound_usd[e.from]) senders.push_back(e.from);
        }
        if (senders.size() < config.min_fanout) continue;
        const auto count = senders.size();
        senders.push_back(c);
        out.push_back(detail::make_group(graph, senders, kDetectorDestinationOfFunds,
                                         "collector=" + graph.node(c).str() + " senders=" + std::to_string(count), 1.0));
    }
    return out;
}

/// Behavioral similarity graph over active addresses (at least one
/// transfer clearing min_amount_usd).
struct SimilarityGraph {
    std::vector<std::uint32_t> nodes;  // TransactionGraph node ids
    WeightedGraph graph;               // over positions in `nodes`
    std::vector<WeightedEdge> edges;   // kept edges, u < v
};

/// Per-address activity profile used by the similarity measures.
struct ActivityProfile {
    std::array<double, 24> hours{};  // hour-of-day counts of transfers the address sends
    std::vector<std::uint32_t> counterparties;  // sorted node ids
};

inline double cosine(std::span<const double> a, std::span<const double> b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0 || nb <= 0) return 0.0;
    return dot / std::sqrt(na * nb);
}

inline double jaccard(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0, i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (a[i] < b[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

inline int hour_of_day(std::int64_t ts) {
    auto h = (ts % 86400 + 86400) % 86400 / 3600;
    return static_cast<int>(h);
}

inline std::vector<ActivityProfile> activity_profiles(const TransactionGraph& graph, double min_amount_usd) {
    const auto& transfers = graph.transfers();
    std::vector<ActivityProfile> prof(graph.node_count());
    for (const auto& e : graph.edges()) {
        if (e.from == e.to) continue;
        bool any = false;
        for (auto tid : e.transfers) {
            const auto& t = transfers[tid];
            if (t.usd_value < min_amount_usd) continue;
            prof[e.from].hours[static_cast<std::size_t>(hour_of_day(t.timestamp))] += 1.0;
            any = true;
        }
        if (any) {
            prof[e.from].counterparties.push_back(e.to);
            prof[e.to].counterparties.push_back(e.from);
        }
    }
    for (auto& p : prof) {
        std::sort(p.counterparties.begin(), p.counterparties.end());
        p.counterparties.erase(std::unique(p.counterparties.begin(), p.counterparties.end()), p.counterparties.end());
    }
    return prof;
}

/// w(u,v) = wd*direct + wt*temporal + wc*contract where direct saturates at
/// direct_saturation qualifying transfers between u and v (either way),
/// temporal is the cosine of hour-of-day send histograms and contract the
/// Jaccard index of counterparty sets. Edges are kept when w reaches the
/// threshold or the pair transacted directly.
///
/// Pairs with neither a direct transfer nor a shared counterparty have
/// w <= wt, so when wt is below the threshold only direct and two-hop pairs
/// are scored. The result is identical to scoring every pair.
inline SimilarityGraph build_similarity_graph(const TransactionGraph& graph, const DetectorConfig& config) {
    config.validate();
    const auto profiles = activity_profiles(graph, config.min_amount_usd);
    const auto& transfers = graph.transfers();
    const auto n = static_cast<std::uint32_t>(graph.node_count());

    SimilarityGraph sg;
    std::vector<std::int64_t> pos(n, -1);
    for (std::uint32_t u = 0; u < n; ++u) {
        if (profiles[u].counterparties.empty()) continue;
        pos[u] = static_cast<std::int64_t>(sg.nodes.size());
        sg.nodes.push_back(u);
    }

    std::unordered_map<std::uint64_t, double> direct_count;
    auto key = [](std::uint32_t a, std::uint32_t b) {
        if (a > b) std::swap(a, b);
        return (static_cast<std::uint64_t>(a) << 32) | b;
    };
    for (const auto& e : graph.edges()) {
        if (e.from == e.to) continue;
        double c = 0;
        for (auto tid : e.transfers)
            if (transfers[tid].usd_value >= config.min_amount_usd) c += 1;
        if (c > 0) direct_count[key(e.from, e.to)] += c;
    }

    std::vector<std::uint64_t> candidates;
    candidates.reserve(direct_count.size());
    for (const auto& [k, c] : direct_count) candidates.push_back(k);
    if (config.weight_temporal >= config.similarity_edge_threshold) {
        for (std::size_t i = 0; i < sg.nodes.size(); ++i)
            for (std::size_t j = i + 1; j < sg.nodes.size(); ++j) candidates.push_back(key(sg.nodes[i], sg.nodes[j]));
    } else {
        for (std::uint32_t x = 0; x < n; ++x) {
            const auto& cp = profiles[x].counterparties;
            for (std::size_t i = 0; i < cp.size(); ++i)
                for (std::size_t j = i + 1; j < cp.size(); ++j) candidates.push_back(key(cp[i], cp[j]));
        }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    for (auto k : candidates) {
        const auto u = static_cast<std::uint32_t>(k >> 32);
        const auto v = static_cast<std::uint32_t>(k & 0xffffffffu);
        if (pos[u] < 0 || pos[v] < 0) continue;
        auto it = direct_count.find(k);
        const double direct = it == direct_count.end() ? 0.0 : std::min(1.0, it->second / config.direct_saturation);
        const double temporal = cosine(profiles[u].hours, profiles[v].hours);
        const double contract = jaccard(profiles[u].counterparties, profiles[v].counterparties);
        const double w = config.weight_direct * direct + config.weight_temporal * temporal + config.weight_contract * contract;
        if (w >= config.similarity_edge_threshold || direct > 0)
            sg.edges.push_back({static_cast<std::uint32_t>(pos[u]), static_cast<std::uint32_t>(pos[v]), w});
    }
    sg.graph = WeightedGraph(sg.nodes.size(), sg.edges);
    return sg;
}

/// Louvain over the similarity graph; communities of two or more addresses
/// become groups. Evidence detail carries the community's modularity
/// contribution; the evidence weight is the mean internal edge weight.
inline std::vector<EntityGroup> detect_behavioral_similarity(const TransactionGraph& graph, const DetectorConfig& config,
                                                             std::uint64_t seed) {
    const auto sg = build_similarity_graph(graph, config);
    std::vector<EntityGroup> out;
    if (sg.nodes.empty()) return out;
    const auto part = louvain_communities(sg.graph, config.louvain_resolution, seed);
    const auto count = part.empty() ? 0u : *std::max_element(part.begin(), part.end()) + 1;
    std::vector<std::vector<std::uint32_t>> members(count);
    for (std::uint32_t i = 0; i < part.size(); ++i) members[part[i]].push_back(i);
    std::vector<double> in_w(count, 0.0), tot(count, 0.0), wsum(count, 0.0);
    std::vector<std::size_t> ecount(count, 0);
    for (const auto& e : sg.edges) {
        if (part[e.u] != part[e.v]) continue;
        wsum[part[e.u]] += e.weight;
        ++ecount[part[e.u]];
    }
    const double two_m = sg.graph.total_degree();
    for (std::uint32_t u = 0; u < sg.graph.size(); ++u) {
        tot[part[u]] += sg.graph.degree(u);
        for (const auto& [v, w] : sg.graph.neighbors(u))
            if (part[v] == part[u]) in_w[part[u]] += w;
    }
    for (std::uint32_t c = 0; c < count; ++c) {
        if (members[c].size() < 2 || ecount[c] == 0) continue;
        const double contribution =
            two_m > 0 ? in_w[c] / two_m - config.louvain_resolution * (tot[c] / two_m) * (tot[c] / two_m) : 0.0;
        std::vector<std::uint32_t> nodes;
        for (auto p : members[c]) nodes.push_back(sg.nodes[p]);
        const double mean_w = std::clamp(wsum[c] / static_cast<double>(ecount[c]), 0.0, 1.0);
        out.push_back(detail::make_group(graph, nodes, kDetectorBehavioral, "modularity_contribution=" + detail::fixed(contribution),
                                         mean_w));
    }
    return out;
}

/// Simple directed cycles (length 2..max_cycle_length) over transfers
/// clearing anomaly_min_amount_usd whose per-edge token totals stay within
/// circular_return_fraction of each other (min edge >= fraction * max
/// edge). Each cycle is rotated to start at its smallest node id; the list
/// is sorted.
inline std::vector<std::vector<std::uint32_t>> find_circular_cycles(const TransactionGraph& graph, const DetectorConfig& config) {
    const auto& transfers = graph.transfers();
    const auto n = static_cast<std::uint32_t>(graph.node_count());
    std::vector<std::vector<std::pair<std::uint32_t, long double>>> adj(n);
    for (const auto& e : graph.edges()) {
        if (e.from == e.to) continue;
        long double amount = 0;
        bool any = false;
        for (auto tid : e.transfers) {
            if (transfers[tid].usd_value < config.anomaly_min_amount_usd) continue;
            amount += transfers[tid].raw_amount.to_long_double();
            any = true;
        }
        if (any) adj[e.from].emplace_back(e.to, amount);
    }
    std::vector<std::vector<std::uint32_t>> cycles;
    std::vector<std::uint32_t> path;
    std::vector<long double> amounts;
    std::vector<char> on_path(n, 0);
    const auto frac = static_cast<long double>(config.circular_return_fraction);
    auto accept = [&]() {
        const auto [lo, hi] = std::minmax_element(amounts.begin(), amounts.end());
        return *lo >= frac * *hi;
    };
    // Depth-first from each start s through nodes greater than s only, so each
    // cycle is found exactly once (from its smallest node).
    auto dfs = [&](auto&& self, std::uint32_t s, std::uint32_t u) -> void {
        for (const auto& [v, amt] : adj[u]) {
            if (v == s && path.size() >= 2) {
                amounts.push_back(amt);
                if (accept()) cycles.push_back(path);
                amounts.pop_back();
                continue;
            }
            if (v <= s || on_path[v] || path.size() >= config.max_cycle_length) continue;
            on_path[v] = 1;
            path.push_back(v);
            amounts.push_back(amt);
            self(self, s, v);
            amounts.pop_back();
            path.pop_back();
            on_path[v] = 0;
        }
    };
    for (std::uint32_t s = 0; s < n; ++s) {
        if (adj[s].empty()) continue;
        path.assign(1, s);
        on_path[s] = 1;
        dfs(dfs, s, s);
        on_path[s] = 0;
    }
    std::sort(cycles.begin(), cycles.end());
    return cycles;
}

/// Anomalous transaction behavior, three sub-rules over transfers clearing
/// anomaly_min_amount_usd:
///  - identical amounts: transfers are bucketed by raw amount on a
///    logarithmic grid of relative width amount_identity_tolerance; within
///    a bucket holding at least anomaly_min_tx transfers, each connected set
///    of addresses carrying at least anomaly_min_tx of those transfers is a
///    group;
///  - high frequency: a pair with at least anomaly_min_tx transfers inside
///    one chain_window_seconds window is a group;
///  - circular: every qualifying simple cycle is a group.
inline std::vector<EntityGroup> detect_anomalous_behavior(const TransactionGraph& graph, const DetectorConfig& config) {
    config.validate();
    const auto& transfers = graph.transfers();
    std::vector<EntityGroup> out;
    std::vector<std::uint32_t> qualifying;
    for (const auto& e : graph.edges()) {
        if (e.from == e.to) continue;
        for (auto tid : e.transfers)
            if (transfers[tid].usd_value >= config.anomaly_min_amount_usd) qualifying.push_back(tid);
    }

    // Identical amounts.
    {
        const long double step = std::log1p(static_cast<long double>(config.amount_identity_tolerance));
        std::map<std::int64_t, std::vector<std::uint32_t>> buckets;
        for (auto tid : qualifying) {
            const auto amt = transfers[tid].raw_amount.to_long_double();
            const auto b = amt <= 0 ? std::int64_t{-1} : static_cast<std::int64_t>(std::floor(std::log(amt) / step));
            buckets[b].push_back(tid);
        }
        for (const auto& [bucket, tids] : buckets) {
            if (tids.size() < config.anomaly_min_tx) continue;
            std::vector<std::uint32_t> nodes;
            for (auto tid : tids) {
                nodes.push_back(*graph.find(transfers[tid].from));
                nodes.push_back(*graph.find(transfers[tid].to));
            }
            std::sort(nodes.begin(), nodes.end());
            nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
            auto local = [&](const Address& a) {
                return static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), *graph.find(a)) - nodes.begin());
            };
            detail::UnionFind uf(nodes.size());
            for (auto tid : tids) uf.unite(local(transfers[tid].from), local(transfers[tid].to));
            std::map<std::size_t, std::size_t> tx_per_root;
            for (auto tid : tids) ++tx_per_root[uf.find(local(transfers[tid].from))];
            std::map<std::size_t, std::vector<std::uint32_t>> comps;
            for (std::size_t i = 0; i < nodes.size(); ++i) comps[uf.find(i)].push_back(nodes[i]);
            for (const auto& [root, comp] : comps) {
                if (comp.size() < 2 || tx_per_root[root] < config.anomaly_min_tx) continue;
                out.push_back(detail::make_group(graph, comp, kDetectorAnomalous,
                                                 "identical_amounts amount~" + transfers[tids.front()].raw_amount.to_string() +
                                                     " transfers=" + std::to_string(tx_per_root[root]),
                                                 1.0));
            }
        }
    }

    // High frequency.
    {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::int64_t>> pair_times;
        for (auto tid : qualifying) {
            auto a = *graph.find(transfers[tid].from);
            auto b = *graph.find(transfers[tid].to);
            if (a > b) std::swap(a, b);
            pair_times[{a, b}].push_back(transfers[tid].timestamp);
        }
        for (auto& [pair, times] : pair_times) {
            if (times.size() < config.anomaly_min_tx) continue;
            std::sort(times.begin(), times.end());
            std::size_t best = 0;
            for (std::size_t lo = 0, hi = 0; hi < times.size(); ++hi) {
                while (times[hi] - times[lo] >= config.chain_window_seconds) ++lo;
                best = std::max(best, hi - lo + 1);
            }
            if (best < config.anomaly_min_tx) continue;
            const std::uint32_t nodes[] = {pair.first, pair.second};
            out.push_back(detail::make_group(graph, nodes, kDetectorAnomalous, "high_frequency max_in_window=" + std::to_string(best), 1.0));
        }
    }

    // Circular trading.
    {
        std::set<std::vector<std::uint32_t>> seen;
        for (auto& cycle : find_circular_cycles(graph, config)) {
            auto members = cycle;
            std::sort(members.begin(), members.end());
            if (!seen.insert(members).second) continue;
            out.push_back(detail::make_group(graph, members, kDetectorAnomalous, "circular length=" + std::to_string(cycle.size()), 1.0));
        }
    }
    return out;
}

struct DetectorOutput {
    std::vector<EntityGroup> source_of_funds;
    std::vector<EntityGroup> destination_of_funds;
    std::vector<EntityGroup> behavioral;
    std::vector<EntityGroup> anomalous;

    // Concatenation in detector order with group ids 0..n-1.
    std::vector<EntityGroup> all() const {
        std::vector<EntityGroup> out;
        for (const auto* list : {&source_of_funds, &destination_of_funds, &behavioral, &anomalous})
            out.insert(out.end(), list->begin(), list->end());
        for (std::size_t i = 0; i < out.size(); ++i) out[i].group_id = static_cast<std::int64_t>(i);
        return out;
    }
};

/// Run the four detectors; with jobs > 1 they run concurrently over the
/// shared graph. Output is the same either way.
inline DetectorOutput run_detectors(const TransactionGraph& graph, std::span<const AddressLabel> labels, const DetectorConfig& config,
                                    std::uint64_t seed, unsigned jobs = 1) {
    config.validate();
    DetectorOutput out;
    if (jobs <= 1) {
        out.source_of_funds = detect_source_of_funds(graph, labels, config);
        out.destination_of_funds = detect_destination_of_funds(graph, labels, config);
        out.behavioral = detect_behavioral_similarity(graph, config, seed);
        out.anomalous = detect_anomalous_behavior(graph, config);
        return out;
    }
    auto sof = std::async(std::launch::async, [&] { return detect_source_of_funds(graph, labels, config); });
    auto dof = std::async(std::launch::async, [&] { return detect_destination_of_funds(graph, labels, config); });
    auto beh = std::async(std::launch::async, [&] { return detect_behavioral_similarity(graph, config, seed); });
    out.anomalous = detect_anomalous_behavior(graph, config);
    out.source_of_funds = sof.get();
    out.destination_of_funds = dof.get();
    out.behavioral = beh.get();
    return out;
}

inline nlohmann::ordered_json group_to_json(const EntityGroup& g, bool with_probability) {
    nlohmann::ordered_json j;
    j["group_id"] = g.group_id;
    auto members = nlohmann::ordered_json::array();
    for (const auto& m : g.members) members.push_back(m.str());
    j["members"] = std::move(members);
    if (with_probability) {
        j["linkage_probability"] = g.linkage_probability;
        j["flags"] = g.flags;
    }
    auto ev = nlohmann::ordered_json::array();
    for (const auto& e : g.evidence) ev.push_back({{"detector", e.detector}, {"detail", e.detail}, {"weight", e.weight}});
    j["evidence"] = std::move(ev);
    return j;
}

inline EntityGroup group_from_json(const nlohmann::json& j) {
    EntityGroup g;
    try {
        g.group_id = j.at("group_id").get<std::int64_t>();
        for (const auto& m : j.at("members")) g.members.emplace_back(m.get<std::string>());
        if (j.contains("linkage_probability")) g.linkage_probability = j["linkage_probability"].get<double>();
        if (j.contains("flags")) g.flags = j["flags"].get<std::vector<std::string>>();
        if (j.contains("evidence"))
            for (const auto& e : j["evidence"])
                g.evidence.push_back({e.at("detector").get<std::string>(), e.value("detail", std::string()), e.value("weight", 1.0)});
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, std::string("group entry: ") + e.what());
    }
    g.normalize();
    g.validate();
    return g;
}

inline nlohmann::ordered_json groups_to_json(std::span<const EntityGroup> groups) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& g : groups) arr.push_back(group_to_json(g, false));
    return arr;
}

inline std::vector<EntityGroup> groups_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error(ErrorCode::SchemaMismatch, "detector groups must be an array");
    std::vector<EntityGroup> out;
    for (const auto& g : j) out.push_back(group_from_json(g));
    return out;
}

}  // namespace ell
