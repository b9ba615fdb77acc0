#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace ell;
using testing::TempDir;

namespace {

const char* kHeader = "tx_hash,block_number,timestamp,from,to,token,raw_amount,usd_value,gas_fee\n";

std::vector<Transfer> random_transfers(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Transfer> out;
    out.reserve(n);
    std::uint64_t block = 33000000;
    std::int64_t ts = 1699920000;
    for (std::size_t i = 0; i < n; ++i) {
        if (rng.bernoulli(0.3)) {
            block += 1 + rng.index(3);
            ts += static_cast<std::int64_t>(rng.index(9));
        }
        Transfer t;
        t.tx_hash = "0x" + hex64(rng.next());
        t.block_number = block;
        t.timestamp = ts;
        t.from = Address("0x" + hex64(rng.index(5000)));
        t.to = Address("0x" + hex64(rng.index(5000)));
        t.token = "0xtoken";
        t.raw_amount = TokenAmount((static_cast<TokenAmount::value_type>(rng.next()) << 20) + rng.next());
        t.usd_value = rng.uniform(0, 1e6);
        t.gas_fee = rng.bernoulli(0.5) ? rng.uniform(0, 0.01) : 0.0;
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

TEST_CASE("three-row csv loads in block order") {
    std::string csv = kHeader;
    csv += "0xc,102,1700000200,0xA,0xB,0xT,300,3.5,0.001\n";
    csv += "0xa,100,1700000000,0xA,0xB,0xT,100,1.5,0\n";
    csv += "0xb,101,2023-11-14T22:16:40Z,0xB,0xC,0xT,200,2,0\n";
    auto ts = parse_transfers_csv(csv);
    REQUIRE(ts.size() == 3);
    CHECK(ts[0].tx_hash == "0xa");
    CHECK(ts[1].tx_hash == "0xb");
    CHECK(ts[1].timestamp == 1700000200);  // ISO-8601 normalized to unix seconds
    CHECK(ts[2].tx_hash == "0xc");
    CHECK(ts[0].from.str() == "0xa");
    CHECK(ts[2].raw_amount.value() == 300);
    CHECK(ts[2].gas_fee == 0.001);
}

TEST_CASE("rows in one block keep input order") {
    std::string csv = kHeader;
    csv += "0x2,100,1700000000,0xa,0xb,0xt,1,1,0\n";
    csv += "0x1,99,1699999990,0xa,0xb,0xt,1,1,0\n";
    csv += "0x3,100,1700000000,0xa,0xb,0xt,1,1,0\n";
    auto ts = parse_transfers_csv(csv);
    CHECK(ts[0].tx_hash == "0x1");
    CHECK(ts[1].tx_hash == "0x2");
    CHECK(ts[2].tx_hash == "0x3");
}

TEST_CASE("negative raw amount is a malformed row at its index") {
    std::string csv = kHeader;
    csv += "0xa,100,1700000000,0xa,0xb,0xt,100,1,0\n";
    csv += "0xb,101,1700000003,0xa,0xb,0xt,-5,1,0\n";
    try {
        parse_transfers_csv(csv);
        FAIL("expected MalformedRow");
    } catch (const MalformedRow& e) {
        CHECK(e.row() == 1);
        CHECK(e.code() == ErrorCode::MalformedRow);
    }
}

TEST_CASE("schema and emptiness errors") {
    CHECK_THROWS_MATCHES(parse_transfers_csv("tx_hash,block_number\n0x1,2\n"), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::SchemaMismatch; }));
    CHECK_THROWS_MATCHES(parse_transfers_csv(kHeader), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::EmptyDataset; }));
    std::string bad_ts = std::string(kHeader) + "0xa,100,yesterday,0xa,0xb,0xt,1,1,0\n";
    CHECK_THROWS_AS(parse_transfers_csv(bad_ts), MalformedRow);
    std::string neg_usd = std::string(kHeader) + "0xa,100,1700000000,0xa,0xb,0xt,1,-1,0\n";
    CHECK_THROWS_AS(parse_transfers_csv(neg_usd), MalformedRow);
    std::string backwards = std::string(kHeader) + "0xa,100,1700000000,0xa,0xb,0xt,1,1,0\n0xb,101,1699999999,0xa,0xb,0xt,1,1,0\n";
    CHECK_THROWS_AS(parse_transfers_csv(backwards), MalformedRow);
}

TEST_CASE("missing usd value is valued zero") {
    std::string csv = std::string(kHeader) + "0xa,100,1700000000,0xa,0xb,0xt,1,,\n";
    auto ts = parse_transfers_csv(csv);
    CHECK(ts[0].usd_value == 0.0);
    CHECK(ts[0].gas_fee == 0.0);
}

TEST_CASE("jsonl parses the same rows as csv") {
    auto ts = random_transfers(200, 3);
    detail::finalize_transfers(ts, std::vector<std::size_t>(ts.size(), 0));
    CHECK(parse_transfers_jsonl(format_transfers_jsonl(ts)) == ts);
    CHECK(parse_transfers_csv(format_transfers_csv(ts)) == ts);
}

TEST_CASE("275,956-row csv round-trips exactly") {
    auto ts = random_transfers(275956, 11);
    TempDir dir("ingest");
    write_transfers(dir / "t.csv", ts, TransferFormat::Csv);
    auto back = parse_transfers(dir / "t.csv", TransferFormat::Csv);
    REQUIRE(back.size() == 275956);
    CHECK(back == ts);
}

TEST_CASE("labels parse and reject unknown categories") {
    TempDir dir("labels");
    detail::write_file(dir / "one.json", R"([{"address":"0xAA","category":"hot_wallet","source":"arkham"}])");
    auto one = parse_labels(dir / "one.json");
    REQUIRE(one.size() == 1);
    CHECK(one[0].address.str() == "0xaa");
    CHECK(one[0].category == LabelCategory::HotWallet);
    CHECK(one[0].source == "arkham");

    detail::write_file(dir / "bad.json", R"([{"address":"0xAA","category":"bridge","source":"x"}])");
    CHECK_THROWS_MATCHES(parse_labels(dir / "bad.json"), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::UnknownCategory; }));

    detail::write_file(dir / "malformed.json", R"([{"address":"0xAA"}])");
    CHECK_THROWS_AS(parse_labels(dir / "malformed.json"), Error);
}

TEST_CASE("43 smart contract and 10 hot wallet labels yield 53 labels") {
    std::vector<AddressLabel> labels;
    for (int i = 0; i < 43; ++i) labels.push_back(testing::label("0xsc" + std::to_string(i), LabelCategory::SmartContract));
    for (int i = 0; i < 10; ++i) labels.push_back(testing::label("0xhw" + std::to_string(i), LabelCategory::HotWallet));
    TempDir dir("labels53");
    write_labels(dir / "labels.json", labels);
    auto back = parse_labels(dir / "labels.json");
    CHECK(back.size() == 53);
    CHECK(back == labels);
    CHECK(std::count_if(back.begin(), back.end(), [](auto& l) { return l.category == LabelCategory::SmartContract; }) == 43);
}

TEST_CASE("snapshots accept string decimals and round-trip") {
    auto pool = pool_from_json(nlohmann::json::parse(R"({"q_a":"1000","q_b":"2.5","p_a":"0.5","p_b":"4","timestamp":17})"));
    CHECK(pool.q_a == 1000);
    CHECK(pool.q_b == 2.5);
    CHECK(pool.timestamp == 17);
    auto market = market_from_json(
        nlohmann::json::parse(R"({"volume_24h":"100.5","market_cap":"1e6","balances":{"0xAB":"3","0xcd":"4.25"},"timestamp":9})"));
    CHECK(market.volume_24h == 100.5);
    CHECK(market.balances.at(Address("0xab")) == 3);
    auto again = market_from_json(nlohmann::json::parse(market_to_json(market).dump()));
    CHECK(again.balances == market.balances);
    CHECK(again.market_cap == market.market_cap);
    CHECK_THROWS_AS(pool_from_json(nlohmann::json::parse(R"({"q_a":"x","q_b":"1","p_a":"1","p_b":"1","timestamp":0})")), Error);
    CHECK_THROWS_AS(market_from_json(nlohmann::json::parse(R"({"volume_24h":"-1","market_cap":"1","balances":{},"timestamp":0})")), Error);
}

TEST_CASE("bundle directory round-trips") {
    TempDir dir("bundle");
    DatasetBundle b;
    b.transfers = parse_transfers_csv(std::string(kHeader) + "0xa,100,1700000000,0xa,0xb,0xt,100,1.5,0\n");
    b.labels = {testing::label("0xa", LabelCategory::Project)};
    b.pool = LiquiditySnapshot{1, 2, 3, 4, 5};
    write_bundle(dir.path(), b);
    auto back = load_bundle(dir.path());
    CHECK(back.transfers == b.transfers);
    CHECK(back.labels == b.labels);
    REQUIRE(back.pool);
    CHECK(back.pool->q_b == 2);
    CHECK_FALSE(back.market);
    TempDir empty("empty");
    CHECK_THROWS_AS(load_bundle(empty.path()), Error);
}
