// Acceptance criteria, one PASS/FAIL line each. Exit status is the number
// of failed criteria.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace ell;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double time_limit, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = testing::seconds_since(t0);
    if (time_limit > 0 && secs >= time_limit) {
        o.pass = false;
        o.detail += " (over the " + std::to_string(static_cast<int>(time_limit)) + " s limit)";
    }
    if (!o.pass) ++failures;
    std::printf("%s  %2d  %-34s %8.2f s  %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
}

double rel_err(double got, double want) {
    if (got == want) return 0.0;
    return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::vector<double> random_balances(Rng& rng, std::size_t n) {
    std::vector<double> b(n);
    const int shape = static_cast<int>(rng.index(3));
    for (auto& x : b) {
        if (shape == 0) x = rng.uniform(0, 1000);
        else if (shape == 1) x = std::exp(rng.uniform(-10, 25));  // heavy tail
        else x = rng.bernoulli(0.3) ? 0.0 : std::round(rng.uniform(1, 1e6));
    }
    if (std::all_of(b.begin(), b.end(), [](double v) { return v == 0.0; })) b[0] = 1.0;
    return b;
}

HolderDistribution to_dist(const std::vector<double>& b) {
    std::vector<Holder> h;
    h.reserve(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) h.push_back({"h" + std::to_string(i), b[i]});
    return make_distribution(std::move(h));
}

ScenarioSpec scenario(std::size_t retail, std::size_t entities, std::uint64_t seed) {
    ScenarioSpec s;
    s.n_retail = retail;
    s.n_entities = entities;
    s.seed = seed;
    return s;
}

Outcome formula_oracles() {
    Rng rng(1001);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const auto b = random_balances(rng, 1 + rng.index(500));
        const auto d = to_dist(b);
        worst = std::max(worst, rel_err(hhi(d), oracle::hhi(b)));
        worst = std::max(worst, rel_err(top10_position(d), oracle::top10(b)));
        const double v = rng.uniform(0, 1e9), mc = rng.uniform(1, 1e10), liq = rng.uniform(1, 1e8);
        worst = std::max(worst, rel_err(vmtv(v, mc), oracle::ratio(v, mc)));
        worst = std::max(worst, rel_err(volatility(v, liq), oracle::ratio(v, liq)));
        const double qa = rng.uniform(0, 1e12), qb = rng.uniform(0, 1e6), pa = rng.uniform(0, 1e-3), pb = rng.uniform(0, 1e3);
        worst = std::max(worst, rel_err(pool_value(LiquiditySnapshot{qa, qb, pa, pb, 0}), oracle::pool_value(qa, qb, pa, pb)));
        if (holders(d) != oracle::holders(b)) return {false, "holders mismatch on distribution " + std::to_string(t)};
    }
    return {worst <= 1e-12, "max relative error " + fmt("%.3g", worst) + " over 1000 distributions"};
}

Outcome merge_monotonicity() {
    Rng rng(2002);
    std::size_t violations = 0;
    constexpr std::int64_t T0 = 1700000000;
    for (int t = 0; t < 500; ++t) {
        const auto n = 2 + rng.index(200);
        const auto b = random_balances(rng, n);
        std::map<Address, double> balances;
        std::vector<Address> addrs;
        for (std::size_t i = 0; i < n; ++i) {
            addrs.emplace_back("a" + std::to_string(i));
            balances[addrs.back()] = b[i];
        }
        std::vector<Address> shuffled = addrs;
        rng.shuffle(shuffled);
        std::vector<EntityGroup> groups;
        for (std::size_t i = 0; i + 1 < shuffled.size() && groups.size() < 1 + n / 4;) {
            const auto k = std::min<std::size_t>(2 + rng.index(6), shuffled.size() - i);
            EntityGroup g;
            g.group_id = static_cast<std::int64_t>(groups.size());
            g.members.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(i), shuffled.begin() + static_cast<std::ptrdiff_t>(i + k));
            g.evidence.push_back({"test", "random", 1.0});
            groups.push_back(std::move(g));
            i += k + rng.index(3);
        }
        GroupSet gs(std::move(groups), addrs);
        std::vector<Transfer> ts;
        for (int k = 0; k < 100; ++k)
            ts.push_back(testing::tx(addrs[rng.index(n)].str(), addrs[rng.index(n)].str(), rng.uniform(0, 1000), T0 + k));
        const auto raw = address_distribution(balances), adj = entity_balances(balances, gs);
        violations += hhi(adj) < hhi(raw) * (1 - 1e-12);
        violations += top10_position(adj) < top10_position(raw) * (1 - 1e-12);
        violations += holders(adj) > holders(raw);
        violations += adjusted_volume(ts, gs, T0, T0 + 100) > adjusted_volume(ts, GroupSet({}, {}), T0, T0 + 100);
    }
    return {violations == 0, std::to_string(violations) + " violations over 500 pairs x 4 properties"};
}

Outcome dbscan_oracle() {
    Rng rng(3003);
    int mismatches = 0;
    for (int t = 0; t < 200; ++t) {
        const auto n = 1 + rng.index(50);
        const auto dim = 2 + rng.index(7);
        const auto blobs = 1 + rng.index(4);
        std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
        for (auto& p : pts) {
            const double off = 2.0 * static_cast<double>(rng.index(blobs));
            for (auto& x : p) x = off + rng.uniform(-0.7, 0.7);
        }
        const double eps = rng.uniform(0.2, 1.5);
        const auto min_pts = 1 + rng.index(7);
        mismatches += !oracle::same_partition(dbscan(pts, eps, min_pts), oracle::dbscan(pts, eps, min_pts));
    }
    return {mismatches == 0, std::to_string(200 - mismatches) + "/200 point sets match the oracle"};
}

Outcome louvain_sanity() {
    std::vector<WeightedEdge> edges;
    for (std::uint32_t c = 0; c < 2; ++c)
        for (std::uint32_t i = 0; i < 8; ++i)
            for (std::uint32_t j = i + 1; j < 8; ++j) edges.push_back({c * 8 + i, c * 8 + j, 1.0});
    edges.push_back({7, 8, 1.0});
    const WeightedGraph cliques(16, edges);
    int exact = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto p = louvain_communities(cliques, 1.0, seed);
        bool ok = true;
        for (std::uint32_t i = 0; i < 16; ++i) ok = ok && (p[i] == p[0]) == (i < 8);
        exact += ok;
    }
    Rng rng(4004);
    int below = 0;
    const int graphs = 300;
    for (int t = 0; t < graphs; ++t) {
        const auto n = 2 + rng.index(120);
        const double prob = rng.uniform(0.01, 0.5);
        std::vector<WeightedEdge> es;
        for (std::uint32_t i = 0; i < n; ++i)
            for (std::uint32_t j = i + 1; j < n; ++j)
                if (rng.bernoulli(prob)) es.push_back({i, j, rng.bernoulli(0.5) ? 1.0 : rng.uniform(0.01, 5.0)});
        if (rng.bernoulli(0.1)) es.push_back({0, 0, 1.0});
        const WeightedGraph g(n, es);
        std::vector<std::uint32_t> singletons(n);
        std::iota(singletons.begin(), singletons.end(), 0u);
        below += modularity(g, louvain_communities(g, 1.0, static_cast<std::uint64_t>(t))) < modularity(g, singletons) - 1e-12;
    }
    return {exact == 100 && below == 0, "8-cliques split exactly on " + std::to_string(exact) + "/100 seeds; " + std::to_string(below) + "/" +
                                            std::to_string(graphs) + " random graphs below singleton modularity"};
}

Outcome isolation_forest_check() {
    int top = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed * 7919 + 1);
        std::vector<std::vector<double>> pts;
        while (pts.size() < 99) {
            std::vector<double> p(3);
            double r = 0;
            for (auto& x : p) {
                x = rng.uniform(-1, 1);
                r += x * x;
            }
            if (r <= 1.0) pts.push_back(p);
        }
        pts.push_back({100.0, 0.0, 0.0});
        const auto s = isolation_forest_scores(pts, 100, seed);
        top += std::max_element(s.begin(), s.end()) - s.begin() == 99;
    }
    Rng rng(5005);
    int wrong_count = 0;
    for (std::size_t n = 2; n <= 300; ++n) {
        std::vector<std::vector<double>> pts(n, std::vector<double>(2));
        for (auto& p : pts)
            for (auto& x : p) x = rng.uniform();
        const auto kept = isolation_forest_filter(pts, 0.1, 20, n);
        const auto removed = n - kept.size();
        wrong_count += removed != static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n) - 1e-9));
    }
    return {top >= 99 && wrong_count == 0, "far point ranked first in " + std::to_string(top) + "/100 runs; removal count wrong for " +
                                               std::to_string(wrong_count) + " of n=2..300"};
}

Outcome recall_precision() {
    testing::TempDir data("acc6_data"), out("acc6_out");
    const auto sc = generate_scenario(scenario(5000, 50, 6));
    write_scenario(data.path(), sc);
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = run_pipeline(PipelineConfig{}, data.path(), out.path());
    const double secs = testing::seconds_since(t0);
    const auto s = testing::pairwise_score(sc.ground_truth, res.groups);
    return {s.recall >= 0.9 && s.precision >= 0.9 && secs < 60.0,
            "recall " + fmt("%.4f", s.recall) + " precision " + fmt("%.4f", s.precision) + " (" + std::to_string(sc.bundle.transfers.size()) +
                " transfers, " + std::to_string(res.groups.groups().size()) + " groups, pipeline " + fmt("%.2f", secs) + " s)"};
}

Outcome cycle_oracle() {
    Rng rng(7007);
    DetectorConfig cfg;
    int agree = 0;
    constexpr std::int64_t T0 = 1700000000;
    for (int t = 0; t < 100; ++t) {
        const auto n = 2 + rng.index(11);
        std::vector<Transfer> ts;
        const auto m = n * (1 + rng.index(4));
        for (std::size_t i = 0; i < m; ++i) {
            const auto a = rng.index(n), b = rng.index(n);
            const std::uint64_t amount = rng.bernoulli(0.5) ? 1000 : 900 + rng.index(200);
            ts.push_back(testing::tx("v" + std::to_string(10 + a), "v" + std::to_string(10 + b), rng.bernoulli(0.9) ? 20 : 2,
                                     T0 + static_cast<std::int64_t>(i), amount));
        }
        const TransactionGraph g(ts);
        const auto k = g.node_count();
        std::vector<std::vector<long double>> w(k, std::vector<long double>(k, -1));
        for (const auto& tr : ts) {
            if (tr.usd_value < cfg.anomaly_min_amount_usd || tr.from == tr.to) continue;
            auto& x = w[*g.find(tr.from)][*g.find(tr.to)];
            x = (x < 0 ? 0 : x) + tr.raw_amount.to_long_double();
        }
        agree += find_circular_cycles(g, cfg) ==
                 oracle::simple_cycles(w, cfg.max_cycle_length, static_cast<long double>(cfg.circular_return_fraction));
    }
    return {agree == 100, std::to_string(agree) + "/100 graphs agree with brute-force cycle enumeration"};
}

Outcome wash_directions() {
    ScenarioSpec spec = scenario(1500, 30, 8);
    spec.patterns = {Pattern::WashPair, Pattern::Circular};
    testing::TempDir data("acc8_data"), out("acc8_out");
    write_scenario(data.path(), generate_scenario(spec));
    const auto res = run_pipeline(PipelineConfig{}, data.path(), out.path());
    const auto& r = *res.report;
    const bool ok = r.adjusted.top10_position > r.raw.top10_position && r.adjusted.hhi > r.raw.hhi && r.adjusted.vmtv < r.raw.vmtv &&
                    r.adjusted.volatility < r.raw.volatility && r.adjusted.holders < r.raw.holders &&
                    r.adjusted.pool_liquidity == r.raw.pool_liquidity;
    std::string d = "top10 " + fmt("%.4f", r.raw.top10_position) + "->" + fmt("%.4f", r.adjusted.top10_position) + ", hhi " +
                    fmt("%.5f", r.raw.hhi) + "->" + fmt("%.5f", r.adjusted.hhi) + ", vmtv " + fmt("%.4f", r.raw.vmtv) + "->" +
                    fmt("%.4f", r.adjusted.vmtv) + ", volatility " + fmt("%.4f", r.raw.volatility) + "->" + fmt("%.4f", r.adjusted.volatility) +
                    ", holders " + std::to_string(r.raw.holders) + "->" + std::to_string(r.adjusted.holders) + ", liquidity unchanged " +
                    (r.adjusted.pool_liquidity == r.raw.pool_liquidity ? "yes" : "no");
    return {ok, d};
}

Outcome determinism() {
    testing::TempDir data("acc9_data"), a("acc9_a"), b("acc9_b");
    write_scenario(data.path(), generate_scenario(scenario(2000, 20, 9)));
    PipelineConfig cfg;
    cfg.seed = 99;
    run_pipeline(cfg, data.path(), a.path());
    run_pipeline(cfg, data.path(), b.path());
    std::size_t files = 0, same = 0;
    for (const auto& e : fs::directory_iterator(a.path())) {
        ++files;
        const auto other = b / e.path().filename().string();
        same += fs::exists(other) && detail::read_file(e.path()) == detail::read_file(other);
    }
    return {files == 7 && same == files, std::to_string(same) + "/" + std::to_string(files) + " artifacts byte-identical"};
}

Outcome scale() {
    ScenarioSpec spec = scenario(19600, 100, 10);
    spec.retail_tx_mean = 10.2;
    testing::TempDir data("acc10_data"), out("acc10_out");
    const auto sc = generate_scenario(spec);
    write_scenario(data.path(), sc);
    const auto addresses = count_addresses(sc.bundle.transfers);
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = run_pipeline(PipelineConfig{}, data.path(), out.path());
    const double secs = testing::seconds_since(t0);
    const bool big_enough = sc.bundle.transfers.size() >= 200000 && addresses >= 20000;
    return {big_enough && secs < 600.0, std::to_string(sc.bundle.transfers.size()) + " transfers, " + std::to_string(addresses) +
                                            " addresses, " + std::to_string(res.groups.groups().size()) + " groups, pipeline " +
                                            fmt("%.1f", secs) + " s"};
}

}  // namespace

int main() {
    criterion(1, "formula oracles", 5, formula_oracles);
    criterion(2, "merge monotonicity", 10, merge_monotonicity);
    criterion(3, "dbscan oracle equivalence", 0, dbscan_oracle);
    criterion(4, "louvain sanity", 0, louvain_sanity);
    criterion(5, "isolation forest", 0, isolation_forest_check);
    criterion(6, "detector recall/precision", 0, recall_precision);
    criterion(7, "circular trading vs cycle oracle", 0, cycle_oracle);
    criterion(8, "wash-trading indicator directions", 0, wash_directions);
    criterion(9, "end-to-end determinism", 0, determinism);
    criterion(10, "200k-transfer runtime", 0, scale);
    std::printf("%d/10 criteria passed\n", 10 - failures);
    return failures;
}
