#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ell/error.hpp"
#include "ell/ingest.hpp"
#include "ell/model.hpp"

namespace ell {

struct CleanConfig {
    double similarity_tolerance = 0.05;  // relative to the reference amount
    std::size_t min_recipients = 5;

    void validate() const {
        if (!(similarity_tolerance > 0.0 && similarity_tolerance <= 1.0))
            throw Error(ErrorCode::InvalidConfig, "similarity_tolerance must be in (0,1]");
        if (min_recipients == 0) throw Error(ErrorCode::InvalidConfig, "min_recipients must be positive");
    }
};

struct CleaningReport {
    std::size_t input_transfers = 0;
    std::size_t removed_public_tx = 0;
    std::size_t removed_airdrop_tx = 0;
    std::vector<Address> airdrop_addresses;  // sorted
    std::size_t surviving_transfers = 0;
    std::size_t surviving_addresses = 0;
};

inline bool is_public_category(LabelCategory c) {
    return c == LabelCategory::SmartContract || c == LabelCategory::HotWallet || c == LabelCategory::Exchange;
}

inline bool is_public(const LabelIndex& labels, const Address& a) {
    const auto* cats = labels.categories(a);
    if (!cats) return false;
    return std::any_of(cats->begin(), cats->end(), is_public_category);
}

struct PublicFilterResult {
    std::vector<Transfer> kept;
    std::size_t removed = 0;
};

/// Drop every transfer with a shared, publicly identifiable counterparty
/// (smart contract, hot wallet, exchange). Order is preserved.
inline PublicFilterResult filter_public_addresses(std::span<const Transfer> transfers, std::span<const AddressLabel> labels) {
    const LabelIndex index(labels);
    PublicFilterResult r;
    r.kept.reserve(transfers.size());
    for (const auto& t : transfers) {
        if (is_public(index, t.from) || is_public(index, t.to)) ++r.removed;
        else r.kept.push_back(t);
    }
    return r;
}

struct AirdropResult {
    std::vector<std::size_t> transfer_ids;  // indices into the input, ascending
    std::vector<Address> recipients;        // sorted, unique
};

namespace detail {

// Largest number of amounts lying within `tolerance` (relative) of a common
// reference amount, the reference ranging over the amounts themselves.
// Adding amounts never lowers the count, so the rule is stable under
// removal of already-flagged batches.
inline std::size_t largest_similar_cluster(std::vector<TokenAmount> amounts, double tolerance) {
    std::sort(amounts.begin(), amounts.end());
    std::size_t best = 0;
    std::size_t lo = 0, hi = 0;
    for (std::size_t c = 0; c < amounts.size(); ++c) {
        const long double ref = amounts[c].to_long_double();
        const long double band = ref * static_cast<long double>(tolerance);
        while (amounts[lo].to_long_double() < ref - band) ++lo;
        if (hi < c) hi = c;
        while (hi + 1 < amounts.size() && amounts[hi + 1].to_long_double() <= ref + band) ++hi;
        best = std::max(best, hi - lo + 1);
    }
    return best;
}

}  // namespace detail

/// Airdrop transfers: (1) a project-labeled sender whose outgoing batch in a
/// single tx_hash holds at least `min_recipients` similar amounts; every
/// transfer of that batch is flagged; (2) any transfer sent by a
/// multi-send contract.
inline AirdropResult detect_airdrops(std::span<const Transfer> transfers, std::span<const AddressLabel> labels,
                                     const CleanConfig& config) {
    config.validate();
    const LabelIndex index(labels);
    std::map<std::pair<std::string, Address>, std::vector<std::size_t>> batches;
    std::vector<char> flagged(transfers.size(), 0);
    for (std::size_t i = 0; i < transfers.size(); ++i) {
        const auto& t = transfers[i];
        if (index.has(t.from, LabelCategory::MultiSendContract)) flagged[i] = 1;
        if (index.has(t.from, LabelCategory::Project)) batches[{t.tx_hash, t.from}].push_back(i);
    }
    for (const auto& [key, ids] : batches) {
        if (ids.size() < config.min_recipients) continue;
        std::vector<TokenAmount> amounts;
        amounts.reserve(ids.size());
        for (auto i : ids) amounts.push_back(transfers[i].raw_amount);
        if (detail::largest_similar_cluster(std::move(amounts), config.similarity_tolerance) >= config.min_recipients)
            for (auto i : ids) flagged[i] = 1;
    }
    AirdropResult r;
    for (std::size_t i = 0; i < transfers.size(); ++i) {
        if (!flagged[i]) continue;
        r.transfer_ids.push_back(i);
        r.recipients.push_back(transfers[i].to);
    }
    std::sort(r.recipients.begin(), r.recipients.end());
    r.recipients.erase(std::unique(r.recipients.begin(), r.recipients.end()), r.recipients.end());
    return r;
}

inline std::size_t count_addresses(std::span<const Transfer> transfers) {
    std::vector<Address> a;
    a.reserve(transfers.size() * 2);
    for (const auto& t : transfers) {
        a.push_back(t.from);
        a.push_back(t.to);
    }
    std::sort(a.begin(), a.end());
    return static_cast<std::size_t>(std::unique(a.begin(), a.end()) - a.begin());
}

/// Remove public-address and airdrop transfers.
///
/// Airdrop batches are identified on the full input so that public-address
/// labels cannot break a batch apart; a transfer matching both rules is
/// counted once, as public. Snapshots and labels pass through unchanged.
inline std::pair<DatasetBundle, CleaningReport> clean_dataset(const DatasetBundle& bundle, const CleanConfig& config) {
    const LabelIndex index(bundle.labels);
    const auto airdrops = detect_airdrops(bundle.transfers, bundle.labels, config);
    std::vector<char> is_airdrop(bundle.transfers.size(), 0);
    for (auto i : airdrops.transfer_ids) is_airdrop[i] = 1;

    CleaningReport report;
    report.input_transfers = bundle.transfers.size();
    DatasetBundle cleaned;
    cleaned.labels = bundle.labels;
    cleaned.pool = bundle.pool;
    cleaned.market = bundle.market;
    cleaned.transfers.reserve(bundle.transfers.size());
    std::set<Address> airdrop_recipients;
    for (std::size_t i = 0; i < bundle.transfers.size(); ++i) {
        const auto& t = bundle.transfers[i];
        if (is_public(index, t.from) || is_public(index, t.to)) {
            ++report.removed_public_tx;
        } else if (is_airdrop[i]) {
            ++report.removed_airdrop_tx;
            airdrop_recipients.insert(t.to);
        } else {
            cleaned.transfers.push_back(t);
        }
    }
    report.airdrop_addresses.assign(airdrop_recipients.begin(), airdrop_recipients.end());
    report.surviving_transfers = cleaned.transfers.size();
    report.surviving_addresses = count_addresses(cleaned.transfers);
    return {std::move(cleaned), std::move(report)};
}

inline nlohmann::ordered_json to_json(const CleaningReport& r) {
    nlohmann::ordered_json addrs = nlohmann::ordered_json::array();
    for (const auto& a : r.airdrop_addresses) addrs.push_back(a.str());
    return {{"input_transfers", r.input_transfers},
            {"removed_public_tx", r.removed_public_tx},
            {"removed_airdrop_tx", r.removed_airdrop_tx},
            {"airdrop_address_count", r.airdrop_addresses.size()},
            {"airdrop_addresses", std::move(addrs)},
            {"surviving_transfers", r.surviving_transfers},
            {"surviving_addresses", r.surviving_addresses}};
}

}  // namespace ell
