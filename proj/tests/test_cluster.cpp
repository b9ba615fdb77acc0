#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace ell;
using testing::members_of;
using testing::tx;

namespace {

constexpr std::int64_t D = 1699920000;  // UTC midnight

EntityGroup group(std::initializer_list<const char*> members, std::string_view detector = kDetectorSourceOfFunds, double weight = 1.0) {
    EntityGroup g;
    for (const char* m : members) g.members.emplace_back(m);
    g.evidence.push_back({std::string(detector), "test", weight});
    g.normalize();
    return g;
}

// 40 retail traders with varied sizes and hours, plus a funder f and nine
// wallets w1..w9 that all trade the same size at hour 10.
std::vector<Transfer> planted_world() {
    std::vector<Transfer> ts;
    Rng rng(11);
    for (int r = 0; r < 40; ++r) {
        const auto name = "r" + std::to_string(r);
        const int n = 1 + static_cast<int>(rng.index(6));
        for (int k = 0; k < n; ++k) {
            const auto t = D + static_cast<std::int64_t>(rng.index(20)) * 86400 + static_cast<std::int64_t>(rng.index(86400));
            if (rng.bernoulli(0.5)) ts.push_back(tx(name, "pool", rng.uniform(10, 5000), t));
            else ts.push_back(tx("pool", name, rng.uniform(10, 5000), t));
        }
    }
    for (int i = 1; i <= 9; ++i) {
        const auto w = "w" + std::to_string(i);
        ts.push_back(tx("f", w, 200, D + 10 * 3600 + i));
        for (int d = 1; d <= 3; ++d) ts.push_back(tx(w, "pool", 150, D + d * 86400 + 10 * 3600 + i * 10));
    }
    for (int d = 0; d < 3; ++d) ts.push_back(tx("f", "pool", 150, D + d * 86400 + 10 * 3600 + 500));
    return ts;
}

}  // namespace

TEST_CASE("linkage combination") {
    CHECK(LinkageScores{1, 1, 1, 1}.combine() == 1.0);
    CHECK(LinkageScores{0, 0, 0, 0}.combine() == 0.0);
    CHECK(LinkageScores{1, 0.8, 1, 0.6}.combine() == Catch::Approx(0.25 * 1 + 0.25 * 0.8 + 0.25 * 1 + 0.25 * 0.6));
    CHECK(LinkageScores{1, 0.8, 1, 0.6}.combine() == Catch::Approx(0.85));
    CHECK(LinkageScores{1, 0, 0, 0}.combine({0.7, 0.1, 0.1, 0.1}) == Catch::Approx(0.7));
}

TEST_CASE("groups sharing an address merge") {
    std::vector<EntityGroup> gs = {group({"a", "b"}), group({"b", "c"}), group({"x", "y"})};
    auto m = merge_groups(gs);
    REQUIRE(m.size() == 2);
    CHECK(m[0] == std::vector<Address>{Address("a"), Address("b"), Address("c")});
    CHECK(m[1] == std::vector<Address>{Address("x"), Address("y")});
}

TEST_CASE("merge is independent of input order and idempotent") {
    Rng rng(6);
    for (int t = 0; t < 50; ++t) {
        std::vector<EntityGroup> gs;
        for (int k = 0; k < 12; ++k) {
            EntityGroup g;
            const auto sz = 2 + rng.index(3);
            for (std::size_t i = 0; i < sz; ++i) g.members.emplace_back("n" + std::to_string(rng.index(30)));
            g.normalize();
            if (g.members.size() >= 2) gs.push_back(g);
        }
        auto base = merge_groups(gs);
        rng.shuffle(gs);
        CHECK(merge_groups(gs) == base);
        std::vector<EntityGroup> again;
        for (const auto& m : base) {
            EntityGroup g;
            g.members = m;
            again.push_back(g);
        }
        CHECK(merge_groups(again) == base);
        // disjoint super-groups covering every input member
        std::set<Address> seen;
        std::size_t total = 0;
        for (const auto& m : base) {
            total += m.size();
            seen.insert(m.begin(), m.end());
        }
        CHECK(seen.size() == total);
        for (const auto& g : gs)
            for (const auto& a : g.members) CHECK(seen.contains(a));
    }
}

TEST_CASE("linkage needs two members") {
    TransactionGraph g({tx("a", "b", 20, D)});
    auto ft = extract_features(g, {}, {});
    std::vector<Address> one = {Address("a")};
    CHECK_THROWS_MATCHES(linkage_scores(one, ft, g, {}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::SingletonGroup; }));
}

TEST_CASE("linkage sub-scores on a funded group") {
    auto ts = planted_world();
    TransactionGraph g(ts);
    std::vector<EntityGroup> det = {group({"f", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9"})};
    auto ft = extract_features(g, replay_balances(ts), {}, merge_groups(det));
    auto s = linkage_scores(det[0].members, ft, g, det);
    CHECK(s.pattern == 1.0);
    CHECK(s.flow == 1.0);
    CHECK(s.temporal == Catch::Approx(1.0));
    CHECK(s.similarity >= 0.0);
    CHECK(s.similarity <= 1.0);

    // two members with no shared evidence and no path
    std::vector<Address> apart = {Address("r0"), Address("w1")};
    auto s2 = linkage_scores(apart, ft, g, det);
    CHECK(s2.pattern == 0.0);
    CHECK(s2.flow == 0.0);
}

TEST_CASE("planted entity of 10 plus an injected address refines to the 10") {
    auto ts = planted_world();
    // x trades with retail at hour 3 with large sizes and never touches the entity
    for (int k = 0; k < 30; ++k) ts.push_back(tx("x", "r" + std::to_string(k % 40), 40000 + 100 * k, D + k * 86400 / 2 + 3 * 3600));
    TransactionGraph g(ts);
    std::vector<EntityGroup> det = {group({"f", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9"}),
                                    group({"w1", "x"}, kDetectorBehavioral, 0.5)};
    auto res = cluster_groups(det, g, replay_balances(ts), {});
    REQUIRE(res.groups.groups().size() == 1);
    const auto& out = res.groups.groups()[0];
    CHECK(out.members.size() == 10);
    CHECK(!res.groups.group_of(Address("x")));
    CHECK(out.linkage_probability >= 0.7);
    CHECK(res.stats.super_groups == 1);
    CHECK(res.stats.detector_addresses == 11);
    CHECK(res.stats.final_addresses == 10);
}

TEST_CASE("refinement invariants and threshold monotonicity on synthetic data") {
    ScenarioSpec spec;
    spec.n_retail = 400;
    spec.n_entities = 12;
    spec.seed = 21;
    auto sc = generate_scenario(spec);
    auto [clean, report] = clean_dataset(sc.bundle, {});
    TransactionGraph g(clean.transfers);
    auto det = run_detectors(g, clean.labels, {}, 21).all();
    auto balances = replay_balances(clean.transfers);

    std::vector<GroupSet> by_threshold;
    for (double th : {0.0, 0.5, 0.7, 0.9, 1.0}) {
        ClusterConfig cfg;
        cfg.probability_threshold = th;
        auto res = cluster_groups(det, g, balances, clean.labels, cfg, 21);
        std::set<Address> seen;
        for (const auto& grp : res.groups.groups()) {
            CHECK(grp.members.size() >= 2);
            CHECK(grp.linkage_probability >= th);
            CHECK(grp.linkage_probability <= 1.0);
            CHECK(!grp.evidence.empty());
            for (const auto& m : grp.members) CHECK(seen.insert(m).second);
        }
        CHECK(res.stats.final_groups + res.stats.rejected_size + res.stats.rejected_probability == res.stats.super_groups);
        by_threshold.push_back(std::move(res.groups));
    }
    // a group kept at a higher threshold is kept, identically, at every lower one
    for (std::size_t i = 1; i < by_threshold.size(); ++i)
        for (const auto& grp : by_threshold[i].groups()) {
            auto j = by_threshold[i - 1].group_of(grp.members.front());
            REQUIRE(j);
            CHECK(by_threshold[i - 1].groups()[*j].members == grp.members);
        }
    CHECK(by_threshold.front().groups().size() >= by_threshold.back().groups().size());
}

TEST_CASE("refinement is deterministic and job-count independent") {
    ScenarioSpec spec;
    spec.n_retail = 300;
    spec.n_entities = 8;
    spec.seed = 5;
    auto sc = generate_scenario(spec);
    TransactionGraph g(sc.bundle.transfers);
    auto det = run_detectors(g, sc.bundle.labels, {}, 5).all();
    auto balances = replay_balances(sc.bundle.transfers);
    auto a = cluster_groups(det, g, balances, sc.bundle.labels, {}, 5, 1);
    auto b = cluster_groups(det, g, balances, sc.bundle.labels, {}, 5, 4);
    CHECK(groupset_to_json(a.groups).dump() == groupset_to_json(b.groups).dump());
}

TEST_CASE("market maker flag") {
    std::vector<Transfer> ts;
    for (int i = 0; i < 30; ++i) ts.push_back(tx(i % 2 ? "m1" : "m2", i % 2 ? "m2" : "m1", 100, D + i * 3600));
    ts.push_back(tx("r", "pool", 50, D + 5));
    TransactionGraph g(ts);
    std::vector<EntityGroup> det = {group({"m1", "m2"}, kDetectorAnomalous)};
    ClusterConfig cfg;
    cfg.market_maker_min_transfers = 20;
    cfg.probability_threshold = 0.0;
    auto res = cluster_groups(det, g, replay_balances(ts), {}, cfg);
    REQUIRE(res.groups.groups().size() == 1);
    CHECK(res.groups.groups()[0].flags == std::vector<std::string>{std::string(kFlagSuspectedMarketMaker)});
    cfg.market_maker_min_transfers = 31;
    CHECK(cluster_groups(det, g, replay_balances(ts), {}, cfg).groups.groups()[0].flags.empty());
}

TEST_CASE("groupset JSON round trip and config validation") {
    GroupSet gs({group({"a", "b"})}, {Address("a"), Address("b"), Address("c")});
    auto back = groupset_from_json(nlohmann::json::parse(groupset_to_json(gs).dump()), {Address("c")});
    CHECK(groupset_fingerprint(back) == groupset_fingerprint(gs));
    CHECK(back.universe().size() == 3);
    ClusterConfig bad;
    bad.weights.flow = 0.5;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = {};
    bad.contamination = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}
