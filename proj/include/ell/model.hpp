#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ell/amount.hpp"
#include "ell/error.hpp"

namespace ell {

/// Chain account identifier in canonical (trimmed, lowercase) form.
class Address {
public:
    Address() = default;

    explicit Address(std::string_view raw) {
        while (!raw.empty() && std::isspace(static_cast<unsigned char>(raw.front()))) raw.remove_prefix(1);
        while (!raw.empty() && std::isspace(static_cast<unsigned char>(raw.back()))) raw.remove_suffix(1);
        if (raw.empty()) throw Error(ErrorCode::InvariantViolation, "address must be non-empty");
        value_.reserve(raw.size());
        for (char c : raw) value_.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }

    const std::string& str() const { return value_; }
    bool empty() const { return value_.empty(); }

    friend bool operator==(const Address&, const Address&) = default;
    friend auto operator<=>(const Address&, const Address&) = default;

private:
    std::string value_;
};

struct AddressHash {
    std::size_t operator()(const Address& a) const noexcept { return std::hash<std::string>{}(a.str()); }
};

struct Transfer {
    std::string tx_hash;
    std::uint64_t block_number = 0;
    std::int64_t timestamp = 0;  // UTC unix seconds
    Address from;
    Address to;
    std::string token;
    TokenAmount raw_amount;
    double usd_value = 0.0;
    double gas_fee = 0.0;

    friend bool operator==(const Transfer&, const Transfer&) = default;
};

// Total order on transfer content. Anything that must not depend on input
// row order ("first inbound", per-edge drill-down lists) sorts with this.
inline bool canonical_less(const Transfer& a, const Transfer& b) {
    return std::tie(a.block_number, a.timestamp, a.tx_hash, a.from, a.to, a.raw_amount, a.usd_value, a.gas_fee, a.token) <
           std::tie(b.block_number, b.timestamp, b.tx_hash, b.from, b.to, b.raw_amount, b.usd_value, b.gas_fee, b.token);
}

enum class LabelCategory { SmartContract, HotWallet, Project, MultiSendContract, Exchange, Other };

inline constexpr std::array<LabelCategory, 6> kAllCategories{
    LabelCategory::SmartContract, LabelCategory::HotWallet, LabelCategory::Project,
    LabelCategory::MultiSendContract, LabelCategory::Exchange, LabelCategory::Other};

inline std::string_view to_string(LabelCategory c) {
    switch (c) {
        case LabelCategory::SmartContract: return "smart_contract";
        case LabelCategory::HotWallet: return "hot_wallet";
        case LabelCategory::Project: return "project";
        case LabelCategory::MultiSendContract: return "multi_send_contract";
        case LabelCategory::Exchange: return "exchange";
        case LabelCategory::Other: return "other";
    }
    return "other";
}

inline std::optional<LabelCategory> parse_category(std::string_view s) {
    for (auto c : kAllCategories)
        if (to_string(c) == s) return c;
    return std::nullopt;
}

struct AddressLabel {
    Address address;
    LabelCategory category = LabelCategory::Other;
    std::string source;

    friend bool operator==(const AddressLabel&, const AddressLabel&) = default;
};

/// Address -> set of categories. An address may carry several labels.
class LabelIndex {
public:
    LabelIndex() = default;
    explicit LabelIndex(std::span<const AddressLabel> labels) {
        for (const auto& l : labels) by_address_[l.address].insert(l.category);
    }

    bool labeled(const Address& a) const { return by_address_.contains(a); }

    bool has(const Address& a, LabelCategory c) const {
        auto it = by_address_.find(a);
        return it != by_address_.end() && it->second.contains(c);
    }

    const std::set<LabelCategory>* categories(const Address& a) const {
        auto it = by_address_.find(a);
        return it == by_address_.end() ? nullptr : &it->second;
    }

private:
    std::unordered_map<Address, std::set<LabelCategory>, AddressHash> by_address_;
};

/// Aggregated statistics for one directed (from, to) address pair.
struct EdgeStats {
    std::uint32_t from = 0;
    std::uint32_t to = 0;
    std::uint64_t transfer_count = 0;
    double total_usd = 0.0;
    std::int64_t first_timestamp = 0;
    std::int64_t last_timestamp = 0;
    std::vector<std::uint32_t> transfers;  // indices into TransactionGraph::transfers(), canonical order
};

/// Directed multigraph over addresses, aggregated per ordered pair.
///
/// Nodes are sorted by address and edges by (from, to), so two graphs built
/// from permutations of the same transfer list compare equal on every
/// aggregate. Edge totals are summed over sorted values for the same reason.
class TransactionGraph {
public:
    TransactionGraph() = default;

    explicit TransactionGraph(std::vector<Transfer> transfers) : transfers_(std::move(transfers)) {
        std::vector<Address> nodes;
        nodes.reserve(transfers_.size() * 2);
        for (const auto& t : transfers_) {
            nodes.push_back(t.from);
            nodes.push_back(t.to);
        }
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        nodes_ = std::move(nodes);
        index_.reserve(nodes_.size());
        for (std::uint32_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i].str(), i);

        std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::uint32_t>> grouped;
        for (std::uint32_t i = 0; i < transfers_.size(); ++i)
            grouped[{index_.at(transfers_[i].from.str()), index_.at(transfers_[i].to.str())}].push_back(i);

        out_.assign(nodes_.size(), {});
        in_.assign(nodes_.size(), {});
        edges_.reserve(grouped.size());
        for (auto& [key, ids] : grouped) {
            std::sort(ids.begin(), ids.end(), [&](auto a, auto b) { return canonical_less(transfers_[a], transfers_[b]); });
            EdgeStats e;
            e.from = key.first;
            e.to = key.second;
            e.transfer_count = ids.size();
            std::vector<double> usd;
            usd.reserve(ids.size());
            e.first_timestamp = transfers_[ids.front()].timestamp;
            e.last_timestamp = transfers_[ids.front()].timestamp;
            for (auto id : ids) {
                usd.push_back(transfers_[id].usd_value);
                e.first_timestamp = std::min(e.first_timestamp, transfers_[id].timestamp);
                e.last_timestamp = std::max(e.last_timestamp, transfers_[id].timestamp);
            }
            e.total_usd = sorted_sum(usd);
            e.transfers = std::move(ids);
            const auto edge_id = static_cast<std::uint32_t>(edges_.size());
            out_[e.from].push_back(edge_id);
            in_[e.to].push_back(edge_id);
            edges_.push_back(std::move(e));
        }
    }

    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<Address>& nodes() const { return nodes_; }
    const Address& node(std::uint32_t i) const { return nodes_[i]; }

    std::optional<std::uint32_t> find(const Address& a) const {
        auto it = index_.find(a.str());
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::vector<EdgeStats>& edges() const { return edges_; }
    const EdgeStats& edge(std::uint32_t id) const { return edges_[id]; }
    const std::vector<std::uint32_t>& out_edges(std::uint32_t node) const { return out_[node]; }
    const std::vector<std::uint32_t>& in_edges(std::uint32_t node) const { return in_[node]; }

    const EdgeStats* find_edge(std::uint32_t from, std::uint32_t to) const {
        const auto& outs = out_[from];
        auto it = std::lower_bound(outs.begin(), outs.end(), to,
                                   [&](std::uint32_t eid, std::uint32_t target) { return edges_[eid].to < target; });
        if (it == outs.end() || edges_[*it].to != to) return nullptr;
        return &edges_[*it];
    }

    const std::vector<Transfer>& transfers() const { return transfers_; }

    static double sorted_sum(std::vector<double>& values) {
        std::sort(values.begin(), values.end());
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }

private:
    std::vector<Transfer> transfers_;
    std::vector<Address> nodes_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::vector<EdgeStats> edges_;
    std::vector<std::vector<std::uint32_t>> out_;
    std::vector<std::vector<std::uint32_t>> in_;
};

struct Evidence {
    std::string detector;
    std::string detail;
    double weight = 1.0;  // in [0, 1]

    friend bool operator==(const Evidence&, const Evidence&) = default;
};

inline constexpr std::string_view kFlagSuspectedMarketMaker = "suspected_market_maker";

struct EntityGroup {
    std::int64_t group_id = 0;
    std::vector<Address> members;  // sorted, unique
    std::vector<Evidence> evidence;
    double linkage_probability = 0.0;
    std::vector<std::string> flags;

    void normalize() {
        std::sort(members.begin(), members.end());
        members.erase(std::unique(members.begin(), members.end()), members.end());
        std::sort(flags.begin(), flags.end());
        flags.erase(std::unique(flags.begin(), flags.end()), flags.end());
    }

    bool has_flag(std::string_view f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }

    bool contains(const Address& a) const { return std::binary_search(members.begin(), members.end(), a); }

    void validate() const {
        if (members.empty()) throw Error(ErrorCode::InvariantViolation, "group " + std::to_string(group_id) + " has no members");
        if (!(linkage_probability >= 0.0 && linkage_probability <= 1.0))
            throw Error(ErrorCode::InvariantViolation, "group " + std::to_string(group_id) + " probability outside [0,1]");
        for (const auto& e : evidence)
            if (!(e.weight >= 0.0 && e.weight <= 1.0))
                throw Error(ErrorCode::InvariantViolation, "evidence weight outside [0,1]");
    }

    friend bool operator==(const EntityGroup&, const EntityGroup&) = default;
};

/// Disjoint entity groups over an address universe. Addresses in the
/// universe but in no group are implicit singleton entities.
class GroupSet {
public:
    GroupSet() = default;

    GroupSet(std::vector<EntityGroup> groups, std::vector<Address> universe) : universe_(std::move(universe)) {
        std::sort(universe_.begin(), universe_.end());
        universe_.erase(std::unique(universe_.begin(), universe_.end()), universe_.end());
        for (auto& g : groups) add(std::move(g));
    }

    void add(EntityGroup g) {
        g.normalize();
        g.validate();
        const auto idx = groups_.size();
        for (const auto& m : g.members) {
            if (!std::binary_search(universe_.begin(), universe_.end(), m))
                throw Error(ErrorCode::InvariantViolation, "group member " + m.str() + " not in universe");
            if (owner_.contains(m))
                throw Error(ErrorCode::InvariantViolation, "address " + m.str() + " appears in two groups");
        }
        for (const auto& m : g.members) owner_.emplace(m, idx);
        groups_.push_back(std::move(g));
    }

    const std::vector<EntityGroup>& groups() const { return groups_; }
    const std::vector<Address>& universe() const { return universe_; }
    bool empty() const { return groups_.empty(); }

    // Index of the group containing `a`, if any.
    std::optional<std::size_t> group_of(const Address& a) const {
        auto it = owner_.find(a);
        if (it == owner_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t grouped_address_count() const { return owner_.size(); }
    std::size_t singleton_count() const { return universe_.size() - owner_.size(); }

private:
    std::vector<EntityGroup> groups_;
    std::vector<Address> universe_;
    std::unordered_map<Address, std::size_t, AddressHash> owner_;
};

struct LiquiditySnapshot {
    double q_a = 0.0;  // token units in pool
    double q_b = 0.0;
    double p_a = 0.0;  // USD per unit
    double p_b = 0.0;
    std::int64_t timestamp = 0;

    void validate() const {
        if (!(q_a >= 0 && q_b >= 0 && p_a >= 0 && p_b >= 0))
            throw Error(ErrorCode::InvariantViolation, "pool snapshot quantities and prices must be >= 0");
    }
};

struct MarketSnapshot {
    double volume_24h = 0.0;
    double market_cap = 0.0;
    std::map<Address, double> balances;
    std::int64_t timestamp = 0;

    void validate() const {
        if (!(volume_24h >= 0 && market_cap >= 0))
            throw Error(ErrorCode::InvariantViolation, "market snapshot volume and market cap must be >= 0");
        for (const auto& [a, b] : balances)
            if (!(b >= 0)) throw Error(ErrorCode::InvariantViolation, "negative balance for " + a.str());
    }
};

enum class Indicator { Top10Position, Hhi, Vmtv, Volatility, PoolLiquidity, Holders };

// Radar axis order. Fixed.
inline constexpr std::array<Indicator, 6> kIndicators{Indicator::Top10Position, Indicator::Hhi, Indicator::Vmtv,
                                                      Indicator::Volatility, Indicator::PoolLiquidity, Indicator::Holders};

inline std::string_view to_string(Indicator i) {
    switch (i) {
        case Indicator::Top10Position: return "top10_position";
        case Indicator::Hhi: return "hhi";
        case Indicator::Vmtv: return "vmtv";
        case Indicator::Volatility: return "volatility";
        case Indicator::PoolLiquidity: return "pool_liquidity";
        case Indicator::Holders: return "holders";
    }
    return "";
}

inline std::string_view positive_axis_name(Indicator i) {
    switch (i) {
        case Indicator::Top10Position: return "top10_pos";
        case Indicator::Hhi: return "hhi_pos";
        case Indicator::Vmtv: return "vmtv_pos";
        case Indicator::Volatility: return "volatility_pos";
        case Indicator::PoolLiquidity: return "liquidity_pos";
        case Indicator::Holders: return "holders_pos";
    }
    return "";
}

struct IndicatorValues {
    double top10_position = 0.0;
    double hhi = 0.0;
    double vmtv = 0.0;
    double volatility = 0.0;  // V / L: a turnover ratio, not statistical volatility
    double pool_liquidity = 0.0;
    std::uint64_t holders = 0;

    double get(Indicator i) const {
        switch (i) {
            case Indicator::Top10Position: return top10_position;
            case Indicator::Hhi: return hhi;
            case Indicator::Vmtv: return vmtv;
            case Indicator::Volatility: return volatility;
            case Indicator::PoolLiquidity: return pool_liquidity;
            case Indicator::Holders: return static_cast<double>(holders);
        }
        return 0.0;
    }

    friend bool operator==(const IndicatorValues&, const IndicatorValues&) = default;
};

struct PositiveCaps {
    double vmtv_cap = 1.0;
    double volatility_cap = 5.0;
    double liquidity_cap = 0.0;  // <= 0: token-relative default
    double holders_cap = 0.0;    // <= 0: token-relative default

    friend bool operator==(const PositiveCaps&, const PositiveCaps&) = default;
};

struct IndicatorReport {
    std::string token;
    std::int64_t time_from = 0;
    std::int64_t time_to = 0;
    std::string groupset_fingerprint;

    IndicatorValues raw;
    IndicatorValues adjusted;
    PositiveCaps caps;
    std::array<double, 6> positive_raw{};       // in kIndicators order
    std::array<double, 6> positive_adjusted{};  // in kIndicators order

    double raw_volume_24h = 0.0;
    double adjusted_volume_24h = 0.0;
    std::uint64_t entity_groups = 0;
    std::uint64_t excluded_groups = 0;
    std::uint64_t balance_discrepancies = 0;
};

}  // namespace ell
