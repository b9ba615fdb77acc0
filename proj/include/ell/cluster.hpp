#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ell/dbscan.hpp"
#include "ell/detect.hpp"
#include "ell/features.hpp"
#include "ell/isolation_forest.hpp"
#include "ell/model.hpp"
#include "ell/random.hpp"

namespace ell {

struct LinkageWeights {
    double pattern = 0.25;
    double similarity = 0.25;
    double flow = 0.25;
    double temporal = 0.25;
};

struct ClusterConfig {
    double dbscan_eps = 0.5;
    std::size_t dbscan_min_pts = 5;
    double contamination = 0.1;
    std::size_t isolation_trees = 100;
    double probability_threshold = 0.7;
    LinkageWeights weights;
    std::uint64_t market_maker_min_transfers = 10000;
    double market_maker_lifetime_fraction = 0.9;
    std::size_t betweenness_samples = 64;
    std::size_t max_scored_pairs = 200000;  // larger groups are scored on a seeded pair sample

    void validate() const {
        if (!(dbscan_eps > 0.0) || dbscan_min_pts == 0) throw Error(ErrorCode::InvalidConfig, "dbscan requires eps > 0 and min_pts >= 1");
        if (!(contamination >= 0.0 && contamination < 1.0)) throw Error(ErrorCode::InvalidConfig, "contamination must be in [0,1)");
        if (isolation_trees == 0) throw Error(ErrorCode::InvalidConfig, "isolation_trees must be >= 1");
        if (!(probability_threshold >= 0.0 && probability_threshold <= 1.0))
            throw Error(ErrorCode::InvalidConfig, "probability_threshold must be in [0,1]");
        const auto& w = weights;
        if (w.pattern < 0 || w.similarity < 0 || w.flow < 0 || w.temporal < 0 ||
            std::abs(w.pattern + w.similarity + w.flow + w.temporal - 1.0) > 1e-9)
            throw Error(ErrorCode::InvalidConfig, "linkage weights must be non-negative and sum to 1");
        if (!(market_maker_lifetime_fraction >= 0.0 && market_maker_lifetime_fraction <= 1.0))
            throw Error(ErrorCode::InvalidConfig, "market_maker_lifetime_fraction must be in [0,1]");
        if (max_scored_pairs == 0) throw Error(ErrorCode::InvalidConfig, "max_scored_pairs must be >= 1");
    }
};

/// The four linkage sub-scores, each in [0,1].
///
/// pattern:    mean over member pairs of the strongest detector evidence
///             weight shared by the pair (0 when no detector group holds both)
/// similarity: mean pairwise cosine of standardized feature vectors, clipped to [0,1]
/// flow:       share of member pairs joined by a transfer path of at most two
///             hops through group members, ignoring direction
/// temporal:   mean pairwise cosine of sent-transfer hour histograms
struct LinkageScores {
    double pattern = 0.0;
    double similarity = 0.0;
    double flow = 0.0;
    double temporal = 0.0;

    double combine(const LinkageWeights& w = {}) const {
        const double p = w.pattern * pattern + w.similarity * similarity + w.flow * flow + w.temporal * temporal;
        return std::clamp(p, 0.0, 1.0);
    }
};

/// Union-find merge of groups sharing any address. Returns super-groups
/// with sorted members, ordered by smallest member. Independent of input
/// order.
inline std::vector<std::vector<Address>> merge_groups(std::span<const EntityGroup> groups) {
    std::vector<Address> all;
    for (const auto& g : groups) all.insert(all.end(), g.members.begin(), g.members.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    auto idx = [&](const Address& a) { return static_cast<std::size_t>(std::lower_bound(all.begin(), all.end(), a) - all.begin()); };
    detail::UnionFind uf(all.size());
    for (const auto& g : groups)
        for (std::size_t i = 1; i < g.members.size(); ++i) uf.unite(idx(g.members[0]), idx(g.members[i]));
    std::map<std::size_t, std::vector<Address>> comps;
    for (std::size_t i = 0; i < all.size(); ++i) comps[uf.find(i)].push_back(all[i]);
    std::vector<std::vector<Address>> out;
    out.reserve(comps.size());
    for (auto& [root, members] : comps) out.push_back(std::move(members));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return out;
}

namespace detail {

// Index from address to the detector groups containing it.
class EvidenceIndex {
public:
    explicit EvidenceIndex(std::span<const EntityGroup> groups) : groups_(groups) {
        for (std::size_t i = 0; i < groups.size(); ++i)
            for (const auto& m : groups[i].members) by_address_[m].push_back(i);
    }

    double shared_weight(const Address& a, const Address& b) const {
        auto ia = by_address_.find(a);
        auto ib = by_address_.find(b);
        if (ia == by_address_.end() || ib == by_address_.end()) return 0.0;
        double best = 0.0;
        const auto& la = ia->second;
        const auto& lb = ib->second;
        std::size_t i = 0, j = 0;
        while (i < la.size() && j < lb.size()) {
            if (la[i] == lb[j]) {
                for (const auto& e : groups_[la[i]].evidence) best = std::max(best, e.weight);
                ++i;
                ++j;
            } else if (la[i] < lb[j]) {
                ++i;
            } else {
                ++j;
            }
        }
        return std::clamp(best, 0.0, 1.0);
    }

    std::vector<std::size_t> groups_touching(std::span<const Address> members) const {
        std::vector<std::size_t> out;
        for (const auto& m : members)
            if (auto it = by_address_.find(m); it != by_address_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

private:
    std::span<const EntityGroup> groups_;
    std::unordered_map<Address, std::vector<std::size_t>, AddressHash> by_address_;
};

// All member index pairs (i < j), or a seeded sample of max_pairs of them.
inline std::vector<std::pair<std::size_t, std::size_t>> member_pairs(std::size_t k, std::size_t max_pairs, std::uint64_t seed) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    const auto total = k * (k - 1) / 2;
    if (total <= max_pairs) {
        pairs.reserve(total);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = i + 1; j < k; ++j) pairs.emplace_back(i, j);
        return pairs;
    }
    Rng rng(seed);
    pairs.reserve(max_pairs);
    while (pairs.size() < max_pairs) {
        auto i = rng.index(k);
        auto j = rng.index(k - 1);
        if (j >= i) ++j;
        pairs.emplace_back(std::min(i, j), std::max(i, j));
    }
    return pairs;
}

// Undirected in-group adjacency over graph node ids.
inline std::vector<std::vector<std::size_t>> group_adjacency(std::span<const Address> members, const TransactionGraph& graph) {
    std::unordered_map<std::uint32_t, std::size_t> local;
    for (std::size_t i = 0; i < members.size(); ++i)
        if (auto u = graph.find(members[i])) local.emplace(*u, i);
    std::vector<std::vector<std::size_t>> adj(members.size());
    for (const auto& [u, i] : local) {
        for (auto eid : graph.out_edges(u)) {
            const auto v = graph.edge(eid).to;
            if (v == u) continue;
            if (auto it = local.find(v); it != local.end()) {
                adj[i].push_back(it->second);
                adj[it->second].push_back(i);
            }
        }
    }
    for (auto& a : adj) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    return adj;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    for (unsigned t = 0; t < std::min<std::size_t>(jobs, n); ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

inline LinkageScores linkage_scores(std::span<const Address> members, const FeatureTable& features, const TransactionGraph& graph,
                                    std::span<const EntityGroup> detector_groups, std::size_t max_pairs = 200000,
                                    std::uint64_t seed = 0) {
    if (members.size() < 2) throw Error(ErrorCode::SingletonGroup, "linkage needs at least two members");
    const detail::EvidenceIndex evidence(detector_groups);
    const auto k = members.size();
    std::vector<std::span<const double>> z(k), hours(k);
    for (std::size_t i = 0; i < k; ++i) {
        z[i] = features.row(members[i]);
        hours[i] = features.raw_row(members[i]).subspan(feature_slot::kHour0, 24);
    }
    const auto adj = detail::group_adjacency(members, graph);
    const auto pairs = detail::member_pairs(k, max_pairs, seed);
    auto within_two = [&](std::size_t i, std::size_t j) {
        if (std::binary_search(adj[i].begin(), adj[i].end(), j)) return true;
        const auto& a = adj[i];
        const auto& b = adj[j];
        std::size_t x = 0, y = 0;
        while (x < a.size() && y < b.size()) {
            if (a[x] == b[y]) return true;
            if (a[x] < b[y]) ++x;
            else ++y;
        }
        return false;
    };
    LinkageScores s;
    for (const auto& [i, j] : pairs) {
        s.pattern += evidence.shared_weight(members[i], members[j]);
        s.similarity += std::clamp(cosine(z[i], z[j]), 0.0, 1.0);
        s.flow += within_two(i, j) ? 1.0 : 0.0;
        s.temporal += std::clamp(cosine(hours[i], hours[j]), 0.0, 1.0);
    }
    const auto n = static_cast<double>(pairs.size());
    s.pattern /= n;
    s.similarity /= n;
    s.flow /= n;
    s.temporal /= n;
    return s;
}

inline double linkage_probability(const EntityGroup& group, const FeatureTable& features, const TransactionGraph& graph,
                                  std::span<const EntityGroup> detector_groups, const ClusterConfig& config = {}) {
    return linkage_scores(group.members, features, graph, detector_groups, config.max_scored_pairs).combine(config.weights);
}

struct RefineStats {
    std::size_t detector_groups = 0;
    std::size_t detector_addresses = 0;
    std::size_t super_groups = 0;
    std::size_t dbscan_noise_removed = 0;
    std::size_t isolation_removed = 0;
    std::size_t outliers_retained = 0;  // flagged but kept because of a direct transfer inside the group
    std::size_t rejected_size = 0;
    std::size_t rejected_probability = 0;
    std::size_t final_groups = 0;
    std::size_t final_addresses = 0;
    std::size_t market_maker_flags = 0;
};

struct RefineResult {
    GroupSet groups;
    RefineStats stats;
};

/// Merge detector groups into super-groups and refine each one.
///
/// Per super-group: DBSCAN noise (only when DBSCAN finds at least one
/// cluster) and the isolation-forest contamination share are outlier
/// candidates; a candidate is dropped unless it has a direct transfer with
/// another member. What remains is kept when it has two or more members and
/// linkage probability >= threshold. Kept groups get the
/// suspected_market_maker flag when their members' transfers reach the
/// configured count and span the configured share of the token lifetime.
inline RefineResult merge_and_refine(std::span<const EntityGroup> detector_groups, const FeatureTable& features,
                                     const TransactionGraph& graph, const ClusterConfig& config = {}, std::uint64_t seed = 0,
                                     unsigned jobs = 1) {
    config.validate();
    RefineResult result;
    auto& st = result.stats;
    st.detector_groups = detector_groups.size();
    const auto supers = merge_groups(detector_groups);
    st.super_groups = supers.size();
    for (const auto& s : supers) st.detector_addresses += s.size();

    std::int64_t t_min = 0, t_max = 0;
    if (!graph.transfers().empty()) {
        t_min = t_max = graph.transfers().front().timestamp;
        for (const auto& t : graph.transfers()) {
            t_min = std::min(t_min, t.timestamp);
            t_max = std::max(t_max, t.timestamp);
        }
    }
    const detail::EvidenceIndex evidence(detector_groups);

    struct Outcome {
        std::vector<Address> members;
        double probability = 0.0;
        std::size_t dbscan_removed = 0, if_removed = 0, retained = 0;
        bool size_ok = false, prob_ok = false, market_maker = false;
    };
    std::vector<Outcome> outcomes(supers.size());

    detail::parallel_for(supers.size(), jobs, [&](std::size_t gi) {
        const auto& members = supers[gi];
        auto& out = outcomes[gi];
        const auto k = members.size();
        std::vector<char> candidate(k, 0);
        if (k >= 2) {
            std::vector<std::vector<double>> pts(k);
            for (std::size_t i = 0; i < k; ++i) {
                auto r = features.row(members[i]);
                pts[i].assign(r.begin(), r.end());
            }
            const auto labels = dbscan(pts, config.dbscan_eps, config.dbscan_min_pts);
            if (std::any_of(labels.begin(), labels.end(), [](int l) { return l != kNoise; }))
                for (std::size_t i = 0; i < k; ++i)
                    if (labels[i] == kNoise) candidate[i] = 1;
            std::vector<char> dbscan_flag = candidate;
            const auto local_seed = fnv1a64(members.front().str(), seed);
            const auto kept = isolation_forest_filter(pts, config.contamination, config.isolation_trees, local_seed);
            std::vector<char> if_flag(k, 1);
            for (auto i : kept) if_flag[i] = 0;
            const auto adj = detail::group_adjacency(members, graph);
            for (std::size_t i = 0; i < k; ++i) {
                if (!dbscan_flag[i] && !if_flag[i]) {
                    out.members.push_back(members[i]);
                } else if (!adj[i].empty()) {
                    out.members.push_back(members[i]);
                    ++out.retained;
                } else if (dbscan_flag[i]) {
                    ++out.dbscan_removed;
                } else {
                    ++out.if_removed;
                }
            }
        } else {
            out.members = members;
        }
        out.size_ok = out.members.size() >= 2;
        if (!out.size_ok) return;
        const auto touching = evidence.groups_touching(out.members);
        std::vector<EntityGroup> local;
        local.reserve(touching.size());
        for (auto i : touching) local.push_back(detector_groups[i]);
        out.probability = linkage_scores(out.members, features, graph, local, config.max_scored_pairs, fnv1a64(members.front().str(), seed))
                              .combine(config.weights);
        out.prob_ok = out.probability >= config.probability_threshold;
        if (!out.prob_ok) return;

        std::set<std::uint32_t> tids;
        for (const auto& m : out.members) {
            auto u = graph.find(m);
            if (!u) continue;
            for (auto eid : graph.out_edges(*u)) tids.insert(graph.edge(eid).transfers.begin(), graph.edge(eid).transfers.end());
            for (auto eid : graph.in_edges(*u)) tids.insert(graph.edge(eid).transfers.begin(), graph.edge(eid).transfers.end());
        }
        if (!tids.empty() && tids.size() >= config.market_maker_min_transfers) {
            std::int64_t lo = graph.transfers()[*tids.begin()].timestamp, hi = lo;
            for (auto t : tids) {
                lo = std::min(lo, graph.transfers()[t].timestamp);
                hi = std::max(hi, graph.transfers()[t].timestamp);
            }
            const double lifetime = static_cast<double>(t_max - t_min);
            out.market_maker = static_cast<double>(hi - lo) >= config.market_maker_lifetime_fraction * lifetime;
        }
    });

    std::vector<Address> universe = features.addresses;
    for (const auto& s : supers) universe.insert(universe.end(), s.begin(), s.end());
    GroupSet gs({}, std::move(universe));
    std::int64_t next_id = 0;
    for (auto& out : outcomes) {
        st.dbscan_noise_removed += out.dbscan_removed;
        st.isolation_removed += out.if_removed;
        st.outliers_retained += out.retained;
        if (!out.size_ok) {
            ++st.rejected_size;
            continue;
        }
        if (!out.prob_ok) {
            ++st.rejected_probability;
            continue;
        }
        EntityGroup g;
        g.group_id = next_id++;
        g.members = std::move(out.members);
        g.linkage_probability = out.probability;
        std::set<std::pair<std::string, std::string>> seen;
        for (auto i : evidence.groups_touching(g.members))
            for (const auto& e : detector_groups[i].evidence)
                if (seen.emplace(e.detector, e.detail).second) g.evidence.push_back(e);
        std::sort(g.evidence.begin(), g.evidence.end(), [](const Evidence& a, const Evidence& b) {
            return std::tie(a.detector, a.detail, a.weight) < std::tie(b.detector, b.detail, b.weight);
        });
        if (out.market_maker) {
            g.flags.emplace_back(kFlagSuspectedMarketMaker);
            ++st.market_maker_flags;
        }
        st.final_addresses += g.members.size();
        gs.add(std::move(g));
    }
    st.final_groups = gs.groups().size();
    result.groups = std::move(gs);
    return result;
}

/// Full cluster stage: super-groups feed the centroid slot of the feature
/// table, then merge_and_refine.
inline RefineResult cluster_groups(std::span<const EntityGroup> detector_groups, const TransactionGraph& graph,
                                   const std::map<Address, double>& balances, std::span<const AddressLabel> labels,
                                   const ClusterConfig& config = {}, std::uint64_t seed = 0, unsigned jobs = 1) {
    const auto supers = merge_groups(detector_groups);
    const auto features = extract_features(graph, balances, labels, supers, {config.betweenness_samples, seed});
    return merge_and_refine(detector_groups, features, graph, config, seed, jobs);
}

inline nlohmann::ordered_json groupset_to_json(const GroupSet& gs) {
    nlohmann::ordered_json j;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& g : gs.groups()) arr.push_back(group_to_json(g, true));
    j["groups"] = std::move(arr);
    j["universe_size"] = gs.universe().size();
    j["singleton_count"] = gs.singleton_count();
    return j;
}

/// Read a GroupSet document. The universe is `universe` plus every member
/// (the document only records its size).
inline GroupSet groupset_from_json(const nlohmann::json& j, std::vector<Address> universe = {}) {
    if (!j.is_object() || !j.contains("groups")) throw Error(ErrorCode::SchemaMismatch, "groupset document needs a groups array");
    auto groups = groups_from_json(j.at("groups"));
    for (const auto& g : groups) universe.insert(universe.end(), g.members.begin(), g.members.end());
    return GroupSet(std::move(groups), std::move(universe));
}

inline std::string groupset_fingerprint(const GroupSet& gs) { return hex64(fnv1a64(groupset_to_json(gs).dump())); }

inline nlohmann::ordered_json to_json(const RefineStats& s) {
    return {{"detector_groups", s.detector_groups},
            {"detector_addresses", s.detector_addresses},
            {"super_groups", s.super_groups},
            {"dbscan_noise_removed", s.dbscan_noise_removed},
            {"isolation_removed", s.isolation_removed},
            {"outliers_retained", s.outliers_retained},
            {"rejected_size", s.rejected_size},
            {"rejected_probability", s.rejected_probability},
            {"final_groups", s.final_groups},
            {"final_addresses", s.final_addresses},
            {"market_maker_flags", s.market_maker_flags}};
}

}  // namespace ell
