#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

#include "ell/ell.hpp"

namespace testing {

inline ell::Address addr(const std::string& s) { return ell::Address(s); }

inline ell::Transfer tx(const std::string& from, const std::string& to, double usd, std::int64_t ts = 1700000000,
                        std::uint64_t amount = 0, const std::string& hash = "") {
    static std::atomic<std::uint64_t> counter{0};
    ell::Transfer t;
    t.tx_hash = hash.empty() ? "0xh" + std::to_string(counter++) : hash;
    t.block_number = 33000000 + static_cast<std::uint64_t>((ts - 1699920000) / 3);
    t.timestamp = ts;
    t.from = ell::Address(from);
    t.to = ell::Address(to);
    t.token = "0xtoken";
    t.raw_amount = ell::TokenAmount(amount ? amount : static_cast<std::uint64_t>(usd * 1e6));
    t.usd_value = usd;
    return t;
}

inline ell::AddressLabel label(const std::string& a, ell::LabelCategory c) { return {ell::Address(a), c, "test"}; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> n{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ell_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline std::vector<std::string> members_of(const ell::EntityGroup& g) {
    std::vector<std::string> out;
    for (const auto& m : g.members) out.push_back(m.str());
    return out;
}

// Pairwise recall / precision of a predicted GroupSet against ground truth.
struct PairScore {
    double recall = 0.0;
    double precision = 0.0;
    std::size_t true_pairs = 0;
    std::size_t predicted_pairs = 0;
    std::size_t hits = 0;
};

inline PairScore pairwise_score(const ell::GroupSet& truth, const ell::GroupSet& predicted) {
    PairScore s;
    auto count_pairs = [](std::size_t k) { return k * (k - 1) / 2; };
    for (const auto& g : truth.groups()) s.true_pairs += count_pairs(g.members.size());
    for (const auto& g : predicted.groups()) {
        s.predicted_pairs += count_pairs(g.members.size());
        std::map<std::size_t, std::size_t> by_truth;
        for (const auto& m : g.members)
            if (auto t = truth.group_of(m)) ++by_truth[*t];
        for (const auto& [t, k] : by_truth) s.hits += count_pairs(k);
    }
    s.recall = s.true_pairs ? static_cast<double>(s.hits) / static_cast<double>(s.true_pairs) : 1.0;
    s.precision = s.predicted_pairs ? static_cast<double>(s.hits) / static_cast<double>(s.predicted_pairs) : 1.0;
    return s;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace testing
