#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ell/cluster.hpp"
#include "ell/error.hpp"
#include "ell/ingest.hpp"
#include "ell/model.hpp"

namespace ell {

struct Holder {
    std::string id;  // address, or "group:<id>" for an entity
    double balance = 0.0;
};

struct HolderDistribution {
    std::vector<Holder> entries;
    double total = 0.0;
};

inline HolderDistribution make_distribution(std::vector<Holder> entries) {
    HolderDistribution d;
    std::sort(entries.begin(), entries.end(), [](const Holder& a, const Holder& b) { return a.id < b.id; });
    std::vector<double> values;
    values.reserve(entries.size());
    for (const auto& h : entries) {
        if (!(h.balance >= 0.0)) throw Error(ErrorCode::InvariantViolation, "negative balance for holder " + h.id);
        values.push_back(h.balance);
    }
    d.total = TransactionGraph::sorted_sum(values);
    d.entries = std::move(entries);
    return d;
}

inline HolderDistribution address_distribution(const std::map<Address, double>& balances) {
    std::vector<Holder> entries;
    entries.reserve(balances.size());
    for (const auto& [a, b] : balances) entries.push_back({a.str(), b});
    return make_distribution(std::move(entries));
}

/// Per-entity distribution: each group holds the sum of its members'
/// balances, ungrouped addresses hold their own. Members of groups carrying
/// any flag in `exclude_flags` are dropped entirely.
inline HolderDistribution entity_balances(const std::map<Address, double>& balances, const GroupSet& groups,
                                          const std::set<std::string>& exclude_flags = {}) {
    std::vector<char> excluded(groups.groups().size(), 0);
    for (std::size_t i = 0; i < groups.groups().size(); ++i)
        for (const auto& f : groups.groups()[i].flags)
            if (exclude_flags.contains(f)) excluded[i] = 1;
    std::vector<std::vector<double>> group_values(groups.groups().size());
    std::vector<Holder> entries;
    for (const auto& [a, b] : balances) {
        if (auto gi = groups.group_of(a)) {
            if (!excluded[*gi]) group_values[*gi].push_back(b);
        } else {
            entries.push_back({a.str(), b});
        }
    }
    for (std::size_t i = 0; i < group_values.size(); ++i)
        if (!excluded[i] && !group_values[i].empty())
            entries.push_back({"group:" + std::to_string(groups.groups()[i].group_id), TransactionGraph::sorted_sum(group_values[i])});
    return make_distribution(std::move(entries));
}

/// Share of the held supply owned by the 10 largest holders.
inline double top10_position(const HolderDistribution& d) {
    if (!(d.total > 0.0)) throw Error(ErrorCode::ZeroSupply, "top10_position on a distribution with zero total");
    std::vector<double> v;
    v.reserve(d.entries.size());
    for (const auto& h : d.entries) v.push_back(h.balance);
    const auto k = std::min<std::size_t>(10, v.size());
    std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(), std::greater<>());
    v.resize(k);
    return std::min(1.0, TransactionGraph::sorted_sum(v) / d.total);
}

/// Herfindahl-Hirschman index: sum of squared holder shares.
inline double hhi(const HolderDistribution& d) {
    if (!(d.total > 0.0)) throw Error(ErrorCode::ZeroSupply, "hhi on a distribution with zero total");
    std::vector<double> sq;
    sq.reserve(d.entries.size());
    for (const auto& h : d.entries) {
        const double p = h.balance / d.total;
        sq.push_back(p * p);
    }
    return TransactionGraph::sorted_sum(sq);
}

/// 24h volume over market cap.
inline double vmtv(double volume_24h, double market_cap) {
    if (!(market_cap > 0.0)) throw Error(ErrorCode::ZeroMarketCap, "vmtv with non-positive market cap");
    return volume_24h / market_cap;
}

/// 24h volume over pool liquidity. This is a turnover ratio, kept under the
/// name "volatility"; it is not a statistical volatility of returns.
inline double volatility(double volume_24h, double pool_liquidity) {
    if (!(pool_liquidity > 0.0)) throw Error(ErrorCode::ZeroLiquidity, "volatility with non-positive pool liquidity");
    return volume_24h / pool_liquidity;
}

inline double pool_value(const LiquiditySnapshot& s) {
    s.validate();
    return s.q_a * s.p_a + s.q_b * s.p_b;
}

inline std::uint64_t holders(const HolderDistribution& d) {
    return static_cast<std::uint64_t>(std::count_if(d.entries.begin(), d.entries.end(), [](const Holder& h) { return h.balance > 0.0; }));
}

/// USD over [from, to] (inclusive) of transfers between different entities.
/// Ungrouped addresses are their own entity; an empty GroupSet yields the
/// raw window volume.
inline double adjusted_volume(std::span<const Transfer> transfers, const GroupSet& groups, std::int64_t from, std::int64_t to) {
    if (from > to) throw Error(ErrorCode::InvariantViolation, "volume window starts after it ends");
    std::vector<double> usd;
    for (const auto& t : transfers) {
        if (t.timestamp < from || t.timestamp > to) continue;
        if (t.from == t.to) continue;
        const auto gf = groups.group_of(t.from);
        if (gf && gf == groups.group_of(t.to)) continue;
        usd.push_back(t.usd_value);
    }
    return TransactionGraph::sorted_sum(usd);
}

/// Token balances by replaying every transfer; addresses that end negative
/// (mint or bridge sources) are clamped to 0.
inline std::map<Address, double> replay_balances(std::span<const Transfer> transfers) {
    std::map<Address, long double> acc;
    for (const auto& t : transfers) {
        const auto v = t.raw_amount.to_long_double();
        acc[t.from] -= v;
        acc[t.to] += v;
    }
    std::map<Address, double> out;
    for (const auto& [a, v] : acc) out.emplace_hint(out.end(), a, v > 0 ? static_cast<double>(v) : 0.0);
    return out;
}

struct MetricsConfig {
    PositiveCaps caps;
    std::set<std::string> exclude_flags;
    std::int64_t volume_window_seconds = 86400;
    std::string token;  // empty: taken from the transfers

    void validate() const {
        if (!(caps.vmtv_cap > 0.0) || !(caps.volatility_cap > 0.0)) throw Error(ErrorCode::InvalidConfig, "vmtv and volatility caps must be > 0");
        if (volume_window_seconds <= 0) throw Error(ErrorCode::InvalidConfig, "volume_window_seconds must be > 0");
    }
};

inline double clamp01(double v) { return std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0; }

/// Positive (higher is better) form of each indicator in radar axis order.
/// Caps <= 0 fall back to the report's own raw value.
inline std::array<double, 6> positive_values(const IndicatorValues& v, const PositiveCaps& caps, const IndicatorValues& raw) {
    const double liq_cap = caps.liquidity_cap > 0 ? caps.liquidity_cap : raw.pool_liquidity;
    const double hold_cap = caps.holders_cap > 0 ? caps.holders_cap : static_cast<double>(raw.holders);
    return {clamp01(1.0 - v.top10_position),
            clamp01(1.0 - v.hhi),
            clamp01(v.vmtv / caps.vmtv_cap),
            clamp01(v.volatility / caps.volatility_cap),
            liq_cap > 0 ? clamp01(v.pool_liquidity / liq_cap) : 0.0,
            hold_cap > 0 ? clamp01(static_cast<double>(v.holders) / hold_cap) : 0.0};
}

inline void apply_caps(IndicatorReport& r, const PositiveCaps& caps) {
    r.caps = caps;
    if (r.caps.liquidity_cap <= 0) r.caps.liquidity_cap = r.raw.pool_liquidity;
    if (r.caps.holders_cap <= 0) r.caps.holders_cap = static_cast<double>(r.raw.holders);
    r.positive_raw = positive_values(r.raw, r.caps, r.raw);
    r.positive_adjusted = positive_values(r.adjusted, r.caps, r.raw);
}

/// Raw (per-address) and entity-adjusted indicators for one token.
///
/// Balances come from the market snapshot; when it has none they are
/// replayed from `transfers`. With both available, addresses whose replayed
/// balance disagrees with the snapshot are counted and the snapshot wins.
/// Adjusted 24h volume scales the snapshot volume by the share of window
/// transfer value that crosses entity boundaries.
inline IndicatorReport compute_report(std::span<const Transfer> transfers, const std::optional<LiquiditySnapshot>& pool,
                                      const std::optional<MarketSnapshot>& market, const GroupSet& groups,
                                      const MetricsConfig& config = {}) {
    config.validate();
    if (!market) throw Error(ErrorCode::MissingSnapshot, "market snapshot (market.json) is required for metrics");
    if (!pool) throw Error(ErrorCode::MissingSnapshot, "pool snapshot (pool.json) is required for metrics");
    IndicatorReport r;
    r.token = config.token;
    if (r.token.empty() && !transfers.empty()) r.token = transfers.front().token;
    if (!transfers.empty()) {
        r.time_from = r.time_to = transfers.front().timestamp;
        for (const auto& t : transfers) {
            r.time_from = std::min(r.time_from, t.timestamp);
            r.time_to = std::max(r.time_to, t.timestamp);
        }
    }
    r.groupset_fingerprint = groupset_fingerprint(groups);

    std::map<Address, double> balances = market->balances;
    if (balances.empty()) {
        balances = replay_balances(transfers);
    } else if (!transfers.empty()) {
        const auto replayed = replay_balances(transfers);
        auto differs = [](double a, double b) { return std::abs(a - b) > 1e-9 * std::max({1.0, std::abs(a), std::abs(b)}); };
        for (const auto& [a, b] : balances) {
            auto it = replayed.find(a);
            if (differs(b, it == replayed.end() ? 0.0 : it->second)) ++r.balance_discrepancies;
        }
        for (const auto& [a, b] : replayed)
            if (!balances.contains(a) && differs(b, 0.0)) ++r.balance_discrepancies;
    }

    const auto raw_dist = address_distribution(balances);
    const auto ent_dist = entity_balances(balances, groups, config.exclude_flags);
    for (const auto& g : groups.groups()) {
        bool excluded = false;
        for (const auto& f : g.flags) excluded = excluded || config.exclude_flags.contains(f);
        if (excluded) ++r.excluded_groups;
        else ++r.entity_groups;
    }

    const std::int64_t now = market->timestamp > 0 ? market->timestamp : r.time_to;
    const GroupSet none({}, {});
    const double window_raw = adjusted_volume(transfers, none, now - config.volume_window_seconds, now);
    const double window_adj = adjusted_volume(transfers, groups, now - config.volume_window_seconds, now);
    r.raw_volume_24h = market->volume_24h;
    r.adjusted_volume_24h = window_raw > 0 ? market->volume_24h * (window_adj / window_raw) : market->volume_24h;

    const double liquidity = pool_value(*pool);
    r.raw.top10_position = top10_position(raw_dist);
    r.raw.hhi = hhi(raw_dist);
    r.raw.vmtv = vmtv(r.raw_volume_24h, market->market_cap);
    r.raw.volatility = volatility(r.raw_volume_24h, liquidity);
    r.raw.pool_liquidity = liquidity;
    r.raw.holders = holders(raw_dist);

    r.adjusted.top10_position = top10_position(ent_dist);
    r.adjusted.hhi = hhi(ent_dist);
    r.adjusted.vmtv = vmtv(r.adjusted_volume_24h, market->market_cap);
    r.adjusted.volatility = volatility(r.adjusted_volume_24h, liquidity);
    r.adjusted.pool_liquidity = liquidity;
    r.adjusted.holders = holders(ent_dist);

    apply_caps(r, config.caps);
    return r;
}

inline IndicatorReport compute_report(const DatasetBundle& bundle, const GroupSet& groups, const MetricsConfig& config = {}) {
    return compute_report(bundle.transfers, bundle.pool, bundle.market, groups, config);
}

inline nlohmann::ordered_json to_json(const IndicatorValues& v) {
    return {{"top10_position", v.top10_position}, {"hhi", v.hhi},
            {"vmtv", v.vmtv},                     {"volatility", v.volatility},
            {"pool_liquidity", v.pool_liquidity}, {"holders", v.holders}};
}

inline IndicatorValues indicator_values_from_json(const nlohmann::json& j) {
    IndicatorValues v;
    v.top10_position = j.at("top10_position").get<double>();
    v.hhi = j.at("hhi").get<double>();
    v.vmtv = j.at("vmtv").get<double>();
    v.volatility = j.at("volatility").get<double>();
    v.pool_liquidity = j.at("pool_liquidity").get<double>();
    v.holders = j.at("holders").get<std::uint64_t>();
    return v;
}

inline nlohmann::ordered_json radar_payload(const IndicatorReport& r) {
    auto axes = nlohmann::ordered_json::array();
    for (auto i : kIndicators) axes.push_back(positive_axis_name(i));
    return {{"axes", std::move(axes)}, {"raw", r.positive_raw}, {"adjusted", r.positive_adjusted}};
}

inline nlohmann::ordered_json to_json(const IndicatorReport& r) {
    return {{"token", r.token},
            {"time_from", r.time_from},
            {"time_to", r.time_to},
            {"groupset_fingerprint", r.groupset_fingerprint},
            {"raw", to_json(r.raw)},
            {"adjusted", to_json(r.adjusted)},
            {"raw_volume_24h", r.raw_volume_24h},
            {"adjusted_volume_24h", r.adjusted_volume_24h},
            {"entity_groups", r.entity_groups},
            {"excluded_groups", r.excluded_groups},
            {"balance_discrepancies", r.balance_discrepancies},
            {"caps",
             {{"vmtv_cap", r.caps.vmtv_cap},
              {"volatility_cap", r.caps.volatility_cap},
              {"liquidity_cap", r.caps.liquidity_cap},
              {"holders_cap", r.caps.holders_cap}}},
            {"radar", radar_payload(r)}};
}

inline IndicatorReport indicator_report_from_json(const nlohmann::json& j) {
    IndicatorReport r;
    try {
        r.token = j.at("token").get<std::string>();
        r.time_from = j.value("time_from", std::int64_t{0});
        r.time_to = j.value("time_to", std::int64_t{0});
        r.groupset_fingerprint = j.value("groupset_fingerprint", std::string());
        r.raw = indicator_values_from_json(j.at("raw"));
        r.adjusted = indicator_values_from_json(j.at("adjusted"));
        r.raw_volume_24h = j.value("raw_volume_24h", 0.0);
        r.adjusted_volume_24h = j.value("adjusted_volume_24h", 0.0);
        r.entity_groups = j.value("entity_groups", std::uint64_t{0});
        r.excluded_groups = j.value("excluded_groups", std::uint64_t{0});
        r.balance_discrepancies = j.value("balance_discrepancies", std::uint64_t{0});
        PositiveCaps caps;
        if (auto it = j.find("caps"); it != j.end()) {
            caps.vmtv_cap = it->value("vmtv_cap", caps.vmtv_cap);
            caps.volatility_cap = it->value("volatility_cap", caps.volatility_cap);
            caps.liquidity_cap = it->value("liquidity_cap", caps.liquidity_cap);
            caps.holders_cap = it->value("holders_cap", caps.holders_cap);
        }
        apply_caps(r, caps);
        if (auto it = j.find("radar"); it != j.end()) {
            const auto& axes = it->at("axes");
            if (axes.size() != kIndicators.size()) throw Error(ErrorCode::MismatchedAxes, "radar must have six axes");
            for (std::size_t i = 0; i < kIndicators.size(); ++i)
                if (axes[i].get<std::string>() != positive_axis_name(kIndicators[i]))
                    throw Error(ErrorCode::MismatchedAxes, "radar axis " + std::to_string(i) + " is " + axes[i].get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, std::string("indicator report: ") + e.what());
    }
    return r;
}

}  // namespace ell
