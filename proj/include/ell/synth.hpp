#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ell/cluster.hpp"
#include "ell/error.hpp"
#include "ell/ingest.hpp"
#include "ell/model.hpp"
#include "ell/random.hpp"

namespace ell {

enum class Pattern { Diffusion, SequentialChain, Collector, WashPair, Circular, Airdrop, PublicHub };

inline constexpr std::array<Pattern, 7> kAllPatterns{Pattern::Diffusion, Pattern::SequentialChain, Pattern::Collector, Pattern::WashPair,
                                                     Pattern::Circular,  Pattern::Airdrop,         Pattern::PublicHub};

inline std::string_view to_string(Pattern p) {
    switch (p) {
        case Pattern::Diffusion: return "diffusion";
        case Pattern::SequentialChain: return "sequential_chain";
        case Pattern::Collector: return "collector";
        case Pattern::WashPair: return "wash_pair";
        case Pattern::Circular: return "circular";
        case Pattern::Airdrop: return "airdrop";
        case Pattern::PublicHub: return "public_hub";
    }
    return "";
}

inline std::optional<Pattern> parse_pattern(std::string_view s) {
    for (auto p : kAllPatterns)
        if (to_string(p) == s) return p;
    return std::nullopt;
}

struct ScenarioSpec {
    std::size_t n_retail = 1000;
    std::size_t n_entities = 10;
    std::size_t entity_size_min = 3;
    std::size_t entity_size_max = 8;
    std::set<Pattern> patterns{kAllPatterns.begin(), kAllPatterns.end()};
    double volume_scale = 500.0;  // typical USD size of an entity transfer
    int duration_days = 30;
    std::uint64_t seed = 0;
    double retail_tx_mean = 3.0;   // pool swaps per retail address
    double p2p_fraction = 0.1;     // share of retail making one direct transfer to another retail address
    std::size_t airdrop_campaigns = 2;
    std::size_t airdrop_recipients = 20;
    double token_price = 1e-4;     // USD per whole token
    double total_supply = 1e12;    // whole tokens

    void validate() const {
        auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidSpec, why); };
        if (entity_size_min < 2 || entity_size_min > entity_size_max) bad("entity_size_range must satisfy 2 <= min <= max");
        if (!(volume_scale >= 50.0) || !std::isfinite(volume_scale)) bad("volume_scale must be >= 50 USD");
        if (duration_days < 4) bad("duration_days must be >= 4");
        if (!(retail_tx_mean >= 1.0)) bad("retail_tx_mean must be >= 1");
        if (!(p2p_fraction >= 0.0 && p2p_fraction <= 0.5)) bad("p2p_fraction must be in [0, 0.5]");
        if (!(token_price > 0.0) || !(total_supply > 0.0)) bad("token_price and total_supply must be positive");
        if (airdrop_recipients < 5 && patterns.contains(Pattern::Airdrop)) bad("airdrop_recipients must be >= 5");
        if (n_entities > 0 && entity_patterns().empty()) bad("entities requested but no entity pattern enabled");
    }

    // Patterns realized by planted entities; airdrops are campaigns, not entities.
    std::vector<Pattern> entity_patterns() const {
        std::vector<Pattern> out;
        for (auto p : kAllPatterns)
            if (p != Pattern::Airdrop && patterns.contains(p)) out.push_back(p);
        return out;
    }
};

inline nlohmann::ordered_json to_json(const ScenarioSpec& s) {
    auto pats = nlohmann::ordered_json::array();
    for (auto p : kAllPatterns)
        if (s.patterns.contains(p)) pats.push_back(to_string(p));
    return {{"n_retail", s.n_retail},
            {"n_entities", s.n_entities},
            {"entity_size_range", {s.entity_size_min, s.entity_size_max}},
            {"patterns", std::move(pats)},
            {"volume_scale", s.volume_scale},
            {"duration_days", s.duration_days},
            {"seed", s.seed},
            {"retail_tx_mean", s.retail_tx_mean},
            {"p2p_fraction", s.p2p_fraction},
            {"airdrop_campaigns", s.airdrop_campaigns},
            {"airdrop_recipients", s.airdrop_recipients},
            {"token_price", s.token_price},
            {"total_supply", s.total_supply}};
}

/// Missing fields keep their defaults.
inline ScenarioSpec scenario_from_json(const nlohmann::json& j) {
    ScenarioSpec s;
    try {
        s.n_retail = j.value("n_retail", s.n_retail);
        s.n_entities = j.value("n_entities", s.n_entities);
        if (auto it = j.find("entity_size_range"); it != j.end()) {
            if (!it->is_array() || it->size() != 2) throw Error(ErrorCode::InvalidSpec, "entity_size_range must be [min, max]");
            s.entity_size_min = (*it)[0].get<std::size_t>();
            s.entity_size_max = (*it)[1].get<std::size_t>();
        }
        if (auto it = j.find("patterns"); it != j.end()) {
            s.patterns.clear();
            for (const auto& p : *it) {
                auto parsed = parse_pattern(p.get<std::string>());
                if (!parsed) throw Error(ErrorCode::InvalidSpec, "unknown pattern: " + p.get<std::string>());
                s.patterns.insert(*parsed);
            }
        }
        s.volume_scale = j.value("volume_scale", s.volume_scale);
        s.duration_days = j.value("duration_days", s.duration_days);
        s.seed = j.value("seed", s.seed);
        s.retail_tx_mean = j.value("retail_tx_mean", s.retail_tx_mean);
        s.p2p_fraction = j.value("p2p_fraction", s.p2p_fraction);
        s.airdrop_campaigns = j.value("airdrop_campaigns", s.airdrop_campaigns);
        s.airdrop_recipients = j.value("airdrop_recipients", s.airdrop_recipients);
        s.token_price = j.value("token_price", s.token_price);
        s.total_supply = j.value("total_supply", s.total_supply);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidSpec, std::string("scenario spec: ") + e.what());
    }
    s.validate();
    return s;
}

struct Scenario {
    DatasetBundle bundle;
    GroupSet ground_truth;
    std::vector<Pattern> entity_patterns;  // pattern of ground-truth group i
};

/// Smallest and largest entity size a pattern can be planted with so that
/// it clears the default detector thresholds (fanout 5, cycles up to 5).
inline std::pair<std::size_t, std::size_t> pattern_size_bounds(Pattern p) {
    switch (p) {
        case Pattern::Diffusion: return {6, 64};
        case Pattern::Collector: return {6, 64};
        case Pattern::PublicHub: return {7, 64};
        case Pattern::SequentialChain: return {3, 5};
        case Pattern::Circular: return {3, 5};
        case Pattern::WashPair: return {2, 4};
        case Pattern::Airdrop: return {0, 0};
    }
    return {2, 2};
}

namespace detail {

inline constexpr std::int64_t kScenarioStart = 1699920000;  // 2023-11-14T00:00:00Z
inline constexpr std::uint64_t kScenarioBaseBlock = 33000000;
inline constexpr long double kRawPerToken = 1e9L;

class ScenarioBuilder {
public:
    explicit ScenarioBuilder(const ScenarioSpec& spec) : spec_(spec), rng_(spec.seed) {
        token_ = make_address("token", 0);
        end_ = kScenarioStart + static_cast<std::int64_t>(spec.duration_days) * 86400;
    }

    Address make_address(std::string_view kind, std::size_t i) const {
        const std::string key = std::string(kind) + ":" + std::to_string(i);
        const auto h1 = fnv1a64(key, spec_.seed ^ 0x9e3779b97f4a7c15ull);
        const auto h2 = fnv1a64(key + "#", h1);
        const auto h3 = fnv1a64(key + "##", h2);
        return Address("0x" + hex64(h1) + hex64(h2) + hex64(h3).substr(0, 8));
    }

    std::string next_hash() {
        const auto k = std::to_string(tx_counter_++);
        std::string h = "0x";
        std::uint64_t v = spec_.seed;
        for (int i = 0; i < 4; ++i) {
            v = fnv1a64(k + ":" + std::to_string(i), v);
            h += hex64(v);
        }
        return h;
    }

    TokenAmount raw_for_usd(double usd) const {
        const long double raw = static_cast<long double>(usd) / static_cast<long double>(spec_.token_price) * kRawPerToken;
        return TokenAmount(static_cast<unsigned __int128>(std::max<long double>(1.0L, std::floor(raw))));
    }

    double usd_for_raw(TokenAmount raw) const {
        return static_cast<double>(raw.to_long_double() / kRawPerToken * static_cast<long double>(spec_.token_price));
    }

    TokenAmount balance(const Address& a) const {
        auto it = balances_.find(a);
        return it == balances_.end() ? TokenAmount{} : it->second;
    }

    // Records a transfer; senders other than the mint must hold the amount.
    void emit(std::int64_t ts, const Address& from, const Address& to, TokenAmount amount, double gas, const std::string& hash = {}) {
        if (amount.value() == 0) return;
        if (from != mint_) {
            auto& b = balances_[from];
            if (b < amount) throw Error(ErrorCode::InvariantViolation, "generator overdraft at " + from.str());
            b -= amount;
        }
        balances_[to] += amount;
        Transfer t;
        t.tx_hash = hash.empty() ? next_hash() : hash;
        t.timestamp = std::clamp<std::int64_t>(ts, kScenarioStart, end_ - 1);
        t.block_number = kScenarioBaseBlock + static_cast<std::uint64_t>((t.timestamp - kScenarioStart) / 3);
        t.from = from;
        t.to = to;
        t.token = token_.str();
        t.raw_amount = amount;
        t.usd_value = usd_for_raw(amount);
        t.gas_fee = gas;
        transfers_.push_back(std::move(t));
    }

    void emit_usd(std::int64_t ts, const Address& from, const Address& to, double usd, double gas) {
        emit(ts, from, to, raw_for_usd(usd), gas);
    }

    static TokenAmount fraction(TokenAmount a, std::uint64_t num, std::uint64_t den) {
        return TokenAmount(a.value() / den * num + a.value() % den * num / den);
    }

    double retail_gas() { return 0.0002 + 0.0028 * rng_.uniform(); }

    Scenario build() {
        const auto entity_patterns = spec_.entity_patterns();
        pool_ = make_address("pool", 0);
        hot_wallet_ = make_address("hot_wallet", 0);
        project_ = make_address("project", 0);
        multisend_ = make_address("multisend", 0);
        labels_.push_back({pool_, LabelCategory::SmartContract, "synthetic"});
        labels_.push_back({hot_wallet_, LabelCategory::HotWallet, "synthetic"});
        labels_.push_back({project_, LabelCategory::Project, "synthetic"});
        labels_.push_back({multisend_, LabelCategory::MultiSendContract, "synthetic"});

        const auto supply = raw_for_usd(spec_.total_supply * spec_.token_price);
        emit(kScenarioStart, mint_, pool_, fraction(supply, 5, 10), 0.001);
        emit(kScenarioStart, mint_, hot_wallet_, fraction(supply, 2, 10), 0.001);
        emit(kScenarioStart, mint_, project_, fraction(supply, 1, 10), 0.001);

        retail_.reserve(spec_.n_retail);
        for (std::size_t i = 0; i < spec_.n_retail; ++i) retail_.push_back(make_address("retail", i));
        generate_retail();

        std::vector<EntityGroup> truth;
        Scenario sc;
        for (std::size_t e = 0; e < spec_.n_entities; ++e) {
            const auto pattern = entity_patterns[e % entity_patterns.size()];
            auto [lo, hi] = pattern_size_bounds(pattern);
            auto size = static_cast<std::size_t>(rng_.uniform_int(static_cast<std::int64_t>(spec_.entity_size_min),
                                                                  static_cast<std::int64_t>(spec_.entity_size_max)));
            size = std::clamp(size, lo, hi);
            std::vector<Address> members;
            for (std::size_t m = 0; m < size; ++m) members.push_back(make_address("entity" + std::to_string(e), m));
            plant(pattern, members);
            EntityGroup g;
            g.group_id = static_cast<std::int64_t>(e);
            g.members = members;
            g.linkage_probability = 1.0;
            g.evidence.push_back({"ground_truth", "pattern=" + std::string(to_string(pattern)), 1.0});
            truth.push_back(std::move(g));
            sc.entity_patterns.push_back(pattern);
        }
        if (spec_.patterns.contains(Pattern::Airdrop)) generate_airdrops();

        std::sort(transfers_.begin(), transfers_.end(), canonical_less);
        std::vector<Address> universe;
        for (const auto& t : transfers_) {
            universe.push_back(t.from);
            universe.push_back(t.to);
        }
        sc.ground_truth = GroupSet(std::move(truth), std::move(universe));

        LiquiditySnapshot pool;
        pool.q_a = static_cast<double>(balance(pool_).to_long_double() / kRawPerToken);
        pool.p_a = spec_.token_price;
        pool.q_b = pool.q_a * spec_.token_price;
        pool.p_b = 1.0;
        pool.timestamp = end_;

        MarketSnapshot market;
        market.timestamp = end_;
        market.market_cap = spec_.total_supply * 0.8 * spec_.token_price;
        std::vector<double> window;
        for (const auto& t : transfers_)
            if (t.timestamp >= end_ - 86400) window.push_back(t.usd_value);
        market.volume_24h = TransactionGraph::sorted_sum(window);
        for (const auto& [a, b] : balances_)
            if (a != mint_ && b.value() > 0) market.balances[a] = static_cast<double>(b.to_long_double());

        sc.bundle.transfers = std::move(transfers_);
        sc.bundle.labels = labels_;
        sc.bundle.pool = pool;
        sc.bundle.market = std::move(market);
        return sc;
    }

private:
    std::int64_t random_time() { return kScenarioStart + 3600 + rng_.uniform_int(0, end_ - kScenarioStart - 3601); }

    void generate_retail() {
        const auto n = retail_.size();
        std::vector<std::int64_t> first_buy(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& a = retail_[i];
            const auto swaps = static_cast<std::size_t>(1 + rng_.uniform_int(0, static_cast<std::int64_t>(std::llround(2.0 * (spec_.retail_tx_mean - 1.0)))));
            std::vector<std::int64_t> times(swaps);
            for (auto& t : times) t = random_time();
            std::sort(times.begin(), times.end());
            first_buy[i] = times.front();
            if (rng_.bernoulli(0.05)) {
                emit_usd(times.front() - 600, hot_wallet_, a, std::exp(rng_.uniform(std::log(20.0), std::log(2000.0))), retail_gas());
            }
            for (std::size_t k = 0; k < swaps; ++k) {
                const bool buy = k == 0 || rng_.bernoulli(0.6) || balance(a).value() == 0;
                if (buy) {
                    emit_usd(times[k], pool_, a, std::exp(rng_.uniform(std::log(10.0), std::log(2000.0))), retail_gas());
                } else {
                    emit(times[k], a, pool_, fraction(balance(a), static_cast<std::uint64_t>(rng_.uniform_int(10, 60)), 100), retail_gas());
                }
            }
        }
        // Direct retail-to-retail transfers: senders and receivers are disjoint.
        if (n < 2) return;
        const auto senders = std::min<std::size_t>(n / 2, static_cast<std::size_t>(std::llround(spec_.p2p_fraction * static_cast<double>(n))));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng_.shuffle(order);
        for (std::size_t s = 0; s < senders; ++s) {
            const auto i = order[s];
            const auto r = order[senders + rng_.index(n - senders)];
            if (balance(retail_[i]).value() == 0) continue;
            const auto ts = std::min(end_ - 1, first_buy[i] + rng_.uniform_int(600, 5 * 86400));
            emit(ts, retail_[i], retail_[r], fraction(balance(retail_[i]), static_cast<std::uint64_t>(rng_.uniform_int(10, 50)), 100), retail_gas());
        }
    }

    void generate_airdrops() {
        if (retail_.empty()) return;
        const auto per = std::min(spec_.airdrop_recipients, retail_.size());
        if (per < 5) return;
        for (std::size_t c = 0; c < spec_.airdrop_campaigns; ++c) {
            // Project batch: one transaction, near-identical amounts.
            const auto ts = random_time();
            const auto hash = next_hash();
            const double base = 20.0 + 80.0 * rng_.uniform();
            std::vector<std::size_t> pick(retail_.size());
            std::iota(pick.begin(), pick.end(), std::size_t{0});
            rng_.shuffle(pick);
            for (std::size_t k = 0; k < per; ++k) emit_usd(ts, project_, retail_[pick[k]], base * (1.0 + 0.02 * (rng_.uniform() - 0.5)), 0.002);
            // Multi-send contract campaign.
            const auto ts2 = random_time();
            emit_usd(ts2 - 300, project_, multisend_, base * static_cast<double>(per) * 1.1, 0.002);
            rng_.shuffle(pick);
            for (std::size_t k = 0; k < per; ++k) emit_usd(ts2 + static_cast<std::int64_t>(k), multisend_, retail_[pick[k]], base, 0.002);
        }
    }

    struct Clock {
        std::int64_t day0 = 0;
        std::int64_t hour = 0;
        std::int64_t at(std::int64_t day, std::int64_t minute) const { return day0 + day * 86400 + hour * 3600 + minute * 60; }
    };

    void plant(Pattern p, const std::vector<Address>& m) {
        Clock clk;
        clk.hour = rng_.uniform_int(0, 23);
        const auto last_start = static_cast<std::int64_t>(spec_.duration_days) - 4;
        clk.day0 = kScenarioStart + 86400 * rng_.uniform_int(0, std::max<std::int64_t>(0, last_start));
        const double gas = 0.0005 + 0.002 * rng_.uniform();
        auto g = [&] { return gas * (0.97 + 0.06 * rng_.uniform()); };
        auto jitter = [&] { return rng_.uniform_int(0, 40); };
        const double vs = spec_.volume_scale;
        const auto k = m.size();
        switch (p) {
            case Pattern::Diffusion: {
                emit_usd(clk.at(0, 0) - 7200, pool_, m[0], vs * 3.0 * static_cast<double>(k), g());
                std::vector<TokenAmount> sent(k);
                for (std::size_t i = 1; i < k; ++i) {
                    sent[i] = raw_for_usd(vs * (0.8 + 0.4 * rng_.uniform()));
                    emit(clk.at(0, static_cast<std::int64_t>(i)) + jitter(), m[0], m[i], sent[i], g());
                }
                for (std::size_t i = 1; i < k; ++i) {
                    emit(clk.at(1, static_cast<std::int64_t>(i)) + jitter(), m[i], m[0], fraction(sent[i], static_cast<std::uint64_t>(rng_.uniform_int(40, 60)), 100), g());
                    emit(clk.at(1, 30 + static_cast<std::int64_t>(i)) + jitter(), m[i], pool_, fraction(balance(m[i]), 30, 100), g());
                }
                break;
            }
            case Pattern::SequentialChain: {
                emit_usd(clk.at(0, 0) - 7200, pool_, m[0], vs * 4.0, g());
                for (std::int64_t round = 0; round < 3; ++round) {
                    auto amount = raw_for_usd(vs * (0.8 + 0.4 * rng_.uniform()));
                    for (std::size_t i = 0; i < k; ++i) {
                        const auto& from = m[i];
                        const auto& to = m[(i + 1) % k];
                        emit(clk.at(round, 5 * static_cast<std::int64_t>(i)) + jitter(), from, to, amount, g());
                        amount = fraction(amount, static_cast<std::uint64_t>(rng_.uniform_int(80, 95)), 100);
                    }
                }
                break;
            }
            case Pattern::Collector: {
                std::vector<TokenAmount> bought(k);
                for (std::size_t i = 1; i < k; ++i) {
                    bought[i] = raw_for_usd(vs * (1.0 + rng_.uniform()));
                    emit(clk.at(0, static_cast<std::int64_t>(i)) + jitter(), pool_, m[i], bought[i], g());
                }
                std::vector<TokenAmount> delivered(k);
                for (std::size_t i = 1; i < k; ++i) {
                    delivered[i] = fraction(bought[i], 85, 100);
                    emit(clk.at(1, static_cast<std::int64_t>(i)) + jitter(), m[i], m[0], delivered[i], g());
                }
                for (std::size_t i = 1; i < k; ++i)
                    emit(clk.at(2, static_cast<std::int64_t>(i)) + jitter(), m[0], m[i], fraction(delivered[i], 20, 100), g());
                break;
            }
            case Pattern::WashPair: {
                // Ring of identical-amount trades on the final day.
                Clock last = clk;
                last.day0 = end_ - 86400;
                const auto z = raw_for_usd(vs * (1.0 + 2.0 * rng_.uniform()));
                emit(last.at(0, 0) - 7200, pool_, m[0], TokenAmount(z.value() * (3 * k + 2)), g());
                for (std::size_t i = 1; i < k; ++i) emit(last.at(0, 0) - 3600 + static_cast<std::int64_t>(i) * 60, m[0], m[i], TokenAmount(z.value() * 2), g());
                for (std::int64_t round = 0; round < 6; ++round)
                    for (std::size_t i = 0; i < k; ++i)
                        emit(last.at(0, 2 * (round * static_cast<std::int64_t>(k) + static_cast<std::int64_t>(i))), m[i], m[(i + 1) % k], z, g());
                break;
            }
            case Pattern::Circular: {
                emit_usd(clk.at(0, 0) - 7200, pool_, m[0], vs * 4.0, g());
                const auto x = raw_for_usd(vs * (0.8 + 0.4 * rng_.uniform()));
                for (std::int64_t loop = 0; loop < 3; ++loop) {
                    auto amount = x;
                    for (std::size_t i = 0; i < k; ++i) {
                        emit(clk.at(loop, 5 * static_cast<std::int64_t>(i)) + jitter(), m[i], m[(i + 1) % k], amount, g());
                        amount = fraction(amount, 99, 100);
                    }
                }
                break;
            }
            case Pattern::PublicHub: {
                // Exchange-funded members trading with two shared sinks m[0], m[1].
                std::vector<TokenAmount> funded(k);
                for (std::size_t i = 2; i < k; ++i) {
                    funded[i] = raw_for_usd(vs * (1.0 + rng_.uniform()));
                    emit(clk.at(0, static_cast<std::int64_t>(i)) + jitter(), hot_wallet_, m[i], funded[i], 0.001);
                }
                for (std::size_t i = 2; i < k; ++i) {
                    emit(clk.at(1, static_cast<std::int64_t>(i)) + jitter(), m[i], m[0], fraction(funded[i], 80, 100), g());
                    emit(clk.at(1, 20 + static_cast<std::int64_t>(i)) + jitter(), m[i], m[1], fraction(funded[i], 15, 100), g());
                }
                for (std::size_t i = 2; i < k; ++i) {
                    emit(clk.at(2, static_cast<std::int64_t>(i)) + jitter(), m[0], m[i], fraction(funded[i], 10, 100), g());
                    emit(clk.at(2, 20 + static_cast<std::int64_t>(i)) + jitter(), m[1], m[i], fraction(funded[i], 5, 100), g());
                }
                break;
            }
            case Pattern::Airdrop: break;
        }
    }

    const ScenarioSpec& spec_;
    Rng rng_;
    Address token_;
    Address mint_{"0x0000000000000000000000000000000000000000"};
    Address pool_, hot_wallet_, project_, multisend_;
    std::int64_t end_ = 0;
    std::uint64_t tx_counter_ = 0;
    std::vector<Address> retail_;
    std::vector<Transfer> transfers_;
    std::vector<AddressLabel> labels_;
    std::map<Address, TokenAmount> balances_;
};

}  // namespace detail

/// Generate a token dataset with planted entities and their ground truth.
///
/// Retail addresses swap with a labeled pool; a share of them make one
/// transfer to another retail address (never to a planted entity). Entity
/// patterns are assigned round-robin over the enabled patterns, each entity
/// acting in its own hour of the day. Entity sizes come from
/// entity_size_range clamped to what the pattern needs (fanout >= 5 for
/// diffusion/collector, cycles of at most 5). Airdrop campaigns send
/// near-identical amounts from a project address in one transaction and
/// through a multi-send contract.
inline Scenario generate_scenario(const ScenarioSpec& spec) {
    spec.validate();
    detail::ScenarioBuilder b(spec);
    return b.build();
}

inline void write_scenario(const std::filesystem::path& dir, const Scenario& sc) {
    std::filesystem::create_directories(dir);
    write_bundle(dir, sc.bundle);
    detail::write_file(dir / "ground_truth.json", groupset_to_json(sc.ground_truth).dump(2) + "\n");
}

}  // namespace ell
