#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ell/error.hpp"
#include "ell/model.hpp"

namespace ell {

enum class TransferFormat { Csv, Jsonl };

inline constexpr std::array<std::string_view, 9> kTransferColumns{
    "tx_hash", "block_number", "timestamp", "from", "to", "token", "raw_amount", "usd_value", "gas_fee"};

struct DatasetBundle {
    std::vector<Transfer> transfers;
    std::vector<AddressLabel> labels;
    std::optional<LiquiditySnapshot> pool;
    std::optional<MarketSnapshot> market;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
    if (s.empty()) return std::nullopt;
    Int v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// Unix seconds; epoch milliseconds (> 1e12) and ISO-8601 with Z or +hh:mm
// offset are normalized to UTC seconds.
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
    if (auto v = parse_int<std::int64_t>(s)) {
        if (*v < 0) return std::nullopt;
        return *v > 1'000'000'000'000LL ? *v / 1000 : *v;
    }
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':')
        return std::nullopt;
    auto num = [&](std::size_t pos, std::size_t len, int& out) {
        auto v = parse_int<int>(s.substr(pos, len));
        if (v) out = *v;
        return v.has_value();
    };
    if (!num(0, 4, y) || !num(5, 2, mo) || !num(8, 2, d) || !num(11, 2, h) || !num(14, 2, mi) || !num(17, 2, sec))
        return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
    std::int64_t t = sys_days{ymd}.time_since_epoch().count() * 86400LL + h * 3600LL + mi * 60LL + sec;
    std::string_view rest = s.substr(19);
    if (!rest.empty() && rest.front() == '.') {
        rest.remove_prefix(1);
        while (!rest.empty() && std::isdigit(static_cast<unsigned char>(rest.front()))) rest.remove_prefix(1);
    }
    if (rest.empty() || rest == "Z") return t;
    if (rest.size() == 6 && (rest[0] == '+' || rest[0] == '-') && rest[3] == ':') {
        int oh = 0, om = 0;
        auto oh_v = parse_int<int>(rest.substr(1, 2));
        auto om_v = parse_int<int>(rest.substr(4, 2));
        if (!oh_v || !om_v) return std::nullopt;
        oh = *oh_v;
        om = *om_v;
        const std::int64_t offset = oh * 3600LL + om * 60LL;
        return rest[0] == '+' ? t - offset : t + offset;
    }
    return std::nullopt;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            std::string_view field = line.substr(start, i - start);
            if (field.size() >= 2 && field.front() == '"' && field.back() == '"') field = field.substr(1, field.size() - 2);
            out.push_back(field);
            start = i + 1;
        }
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline Transfer make_transfer(std::size_t row, std::string_view tx_hash, std::string_view block, std::string_view ts,
                              std::string_view from, std::string_view to, std::string_view token,
                              std::string_view amount, std::string_view usd, std::string_view gas) {
    Transfer t;
    if (tx_hash.empty()) throw MalformedRow(row, "empty tx_hash");
    t.tx_hash = std::string(tx_hash);
    auto b = parse_int<std::uint64_t>(block);
    if (!b) throw MalformedRow(row, "block_number is not a non-negative integer");
    t.block_number = *b;
    auto tsv = parse_timestamp(ts);
    if (!tsv) throw MalformedRow(row, "unparseable timestamp '" + std::string(ts) + "'");
    t.timestamp = *tsv;
    if (from.empty() || to.empty()) throw MalformedRow(row, "empty address");
    t.from = Address(from);
    t.to = Address(to);
    t.token = std::string(token);
    auto amt = TokenAmount::parse(amount);
    if (!amt) throw MalformedRow(row, "raw_amount must be a non-negative integer, got '" + std::string(amount) + "'");
    t.raw_amount = *amt;
    // Missing valuation is valued 0; detector USD floors then exclude the row.
    if (usd.empty()) {
        t.usd_value = 0.0;
    } else {
        auto u = parse_double(usd);
        if (!u || *u < 0) throw MalformedRow(row, "usd_value must be a non-negative decimal");
        t.usd_value = *u;
    }
    if (gas.empty()) {
        t.gas_fee = 0.0;
    } else {
        auto g = parse_double(gas);
        if (!g || *g < 0) throw MalformedRow(row, "gas_fee must be a non-negative decimal");
        t.gas_fee = *g;
    }
    return t;
}

inline std::string json_field(const nlohmann::json& obj, std::string_view key, std::size_t row) {
    auto it = obj.find(std::string(key));
    if (it == obj.end()) throw Error(ErrorCode::SchemaMismatch, "row " + std::to_string(row) + " lacks column " + std::string(key));
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_unsigned()) return std::to_string(it->get<std::uint64_t>());
    if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
    if (it->is_number_float()) return format_double(it->get<double>());
    if (it->is_null()) return {};
    throw MalformedRow(row, "column " + std::string(key) + " has unsupported type");
}

// Stable sort by block, then verify timestamps never decrease with block.
inline void finalize_transfers(std::vector<Transfer>& transfers, std::vector<std::size_t> rows) {
    std::vector<std::size_t> order(transfers.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return transfers[a].block_number < transfers[b].block_number; });
    std::vector<Transfer> sorted;
    sorted.reserve(transfers.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& t = transfers[order[k]];
        if (!sorted.empty() && t.block_number > sorted.back().block_number && t.timestamp < sorted.back().timestamp)
            throw MalformedRow(rows[order[k]], "timestamp decreases while block_number increases");
        sorted.push_back(std::move(transfers[order[k]]));
    }
    transfers = std::move(sorted);
}

inline double decimal_field(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw Error(ErrorCode::SchemaMismatch, std::string("missing field ") + key);
    std::optional<double> v;
    if (it->is_string()) v = parse_double(it->get<std::string>());
    else if (it->is_number()) v = it->get<double>();
    if (!v) throw Error(ErrorCode::SchemaMismatch, std::string("field ") + key + " is not a decimal");
    return *v;
}

inline std::int64_t timestamp_field(const nlohmann::json& obj) {
    auto it = obj.find("timestamp");
    if (it == obj.end()) throw Error(ErrorCode::SchemaMismatch, "missing field timestamp");
    if (it->is_number_integer()) return it->get<std::int64_t>();
    if (it->is_string())
        if (auto t = parse_timestamp(it->get<std::string>())) return *t;
    throw Error(ErrorCode::SchemaMismatch, "field timestamp is not a timestamp");
}

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
    }
}

}  // namespace detail

inline std::vector<Transfer> parse_transfers_csv(std::string_view content) {
    std::vector<Transfer> out;
    std::vector<std::size_t> rows;
    std::size_t pos = 0;
    bool header_seen = false;
    std::size_t row = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        std::string_view line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? content.size() : nl + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (!header_seen) {
            header_seen = true;
            for (std::size_t i = 0; i < kTransferColumns.size(); ++i) {
                if (i >= fields.size() || fields[i] != kTransferColumns[i]) {
                    auto missing = std::find(fields.begin(), fields.end(), kTransferColumns[i]) == fields.end();
                    throw Error(ErrorCode::SchemaMismatch,
                                missing ? "missing column " + std::string(kTransferColumns[i])
                                        : "column " + std::to_string(i) + " must be " + std::string(kTransferColumns[i]));
                }
            }
            if (fields.size() != kTransferColumns.size())
                throw Error(ErrorCode::SchemaMismatch, "expected exactly 9 columns");
            continue;
        }
        if (fields.size() != kTransferColumns.size())
            throw MalformedRow(row, "expected 9 fields, got " + std::to_string(fields.size()));
        out.push_back(detail::make_transfer(row, fields[0], fields[1], fields[2], fields[3], fields[4], fields[5],
                                            fields[6], fields[7], fields[8]));
        rows.push_back(row);
        ++row;
    }
    if (!header_seen) throw Error(ErrorCode::SchemaMismatch, "missing header");
    if (out.empty()) throw Error(ErrorCode::EmptyDataset, "no transfer rows");
    detail::finalize_transfers(out, std::move(rows));
    return out;
}

inline std::vector<Transfer> parse_transfers_jsonl(std::string_view content) {
    std::vector<Transfer> out;
    std::vector<std::size_t> rows;
    std::size_t pos = 0;
    std::size_t row = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        std::string_view line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? content.size() : nl + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw MalformedRow(row, std::string("invalid JSON: ") + e.what());
        }
        if (!obj.is_object()) throw MalformedRow(row, "expected a JSON object");
        std::array<std::string, 9> f;
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = detail::json_field(obj, kTransferColumns[i], row);
        if (!f[6].empty() && f[6].front() == '-') throw MalformedRow(row, "raw_amount must be non-negative");
        out.push_back(detail::make_transfer(row, f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]));
        rows.push_back(row);
        ++row;
    }
    if (out.empty()) throw Error(ErrorCode::EmptyDataset, "no transfer rows");
    detail::finalize_transfers(out, std::move(rows));
    return out;
}

/// Load a transfer dump. Rows come back sorted by (block_number, row order).
inline std::vector<Transfer> parse_transfers(const std::filesystem::path& path, TransferFormat format) {
    const auto content = detail::read_file(path);
    return format == TransferFormat::Csv ? parse_transfers_csv(content) : parse_transfers_jsonl(content);
}

inline std::string format_transfers_csv(std::span<const Transfer> transfers) {
    std::string out;
    out.reserve(transfers.size() * 200 + 100);
    for (std::size_t i = 0; i < kTransferColumns.size(); ++i) {
        if (i) out += ',';
        out += kTransferColumns[i];
    }
    out += '\n';
    for (const auto& t : transfers) {
        out += t.tx_hash;
        out += ',';
        out += std::to_string(t.block_number);
        out += ',';
        out += std::to_string(t.timestamp);
        out += ',';
        out += t.from.str();
        out += ',';
        out += t.to.str();
        out += ',';
        out += t.token;
        out += ',';
        out += t.raw_amount.to_string();
        out += ',';
        out += detail::format_double(t.usd_value);
        out += ',';
        out += detail::format_double(t.gas_fee);
        out += '\n';
    }
    return out;
}

inline std::string format_transfers_jsonl(std::span<const Transfer> transfers) {
    std::string out;
    for (const auto& t : transfers) {
        nlohmann::ordered_json j;
        j["tx_hash"] = t.tx_hash;
        j["block_number"] = t.block_number;
        j["timestamp"] = t.timestamp;
        j["from"] = t.from.str();
        j["to"] = t.to.str();
        j["token"] = t.token;
        j["raw_amount"] = t.raw_amount.to_string();
        j["usd_value"] = detail::format_double(t.usd_value);
        j["gas_fee"] = detail::format_double(t.gas_fee);
        out += j.dump();
        out += '\n';
    }
    return out;
}

inline void write_transfers(const std::filesystem::path& path, std::span<const Transfer> transfers,
                            TransferFormat format = TransferFormat::Csv) {
    detail::write_file(path, format == TransferFormat::Csv ? format_transfers_csv(transfers) : format_transfers_jsonl(transfers));
}

inline std::vector<AddressLabel> labels_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw Error(ErrorCode::SchemaMismatch, "labels must be a JSON array");
    std::vector<AddressLabel> out;
    out.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& e = doc[i];
        if (!e.is_object()) throw MalformedRow(i, "label entry must be an object");
        for (const char* key : {"address", "category", "source"})
            if (!e.contains(key) || !e[key].is_string()) throw MalformedRow(i, std::string("missing string field ") + key);
        const auto category = e["category"].get<std::string>();
        auto cat = parse_category(category);
        if (!cat) throw Error(ErrorCode::UnknownCategory, "entry " + std::to_string(i) + ": '" + category + "'");
        const auto addr = e["address"].get<std::string>();
        if (addr.find_first_not_of(" \t") == std::string::npos) throw MalformedRow(i, "empty address");
        out.push_back({Address(addr), *cat, e["source"].get<std::string>()});
    }
    return out;
}

inline nlohmann::ordered_json labels_to_json(std::span<const AddressLabel> labels) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& l : labels)
        arr.push_back({{"address", l.address.str()}, {"category", std::string(to_string(l.category))}, {"source", l.source}});
    return arr;
}

inline std::vector<AddressLabel> parse_labels(const std::filesystem::path& path) {
    return labels_from_json(detail::parse_json_file(path));
}

inline void write_labels(const std::filesystem::path& path, std::span<const AddressLabel> labels) {
    detail::write_file(path, labels_to_json(labels).dump(2) + "\n");
}

inline LiquiditySnapshot pool_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::SchemaMismatch, "pool snapshot must be an object");
    LiquiditySnapshot s{detail::decimal_field(j, "q_a"), detail::decimal_field(j, "q_b"), detail::decimal_field(j, "p_a"),
                        detail::decimal_field(j, "p_b"), detail::timestamp_field(j)};
    s.validate();
    return s;
}

inline nlohmann::ordered_json pool_to_json(const LiquiditySnapshot& s) {
    return {{"q_a", detail::format_double(s.q_a)},
            {"q_b", detail::format_double(s.q_b)},
            {"p_a", detail::format_double(s.p_a)},
            {"p_b", detail::format_double(s.p_b)},
            {"timestamp", s.timestamp}};
}

inline MarketSnapshot market_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::SchemaMismatch, "market snapshot must be an object");
    MarketSnapshot m;
    m.volume_24h = detail::decimal_field(j, "volume_24h");
    m.market_cap = detail::decimal_field(j, "market_cap");
    m.timestamp = detail::timestamp_field(j);
    if (auto it = j.find("balances"); it != j.end()) {
        if (!it->is_object()) throw Error(ErrorCode::SchemaMismatch, "balances must be an object");
        for (auto& [addr, val] : it->items()) {
            std::optional<double> v;
            if (val.is_string()) v = detail::parse_double(val.get<std::string>());
            else if (val.is_number()) v = val.get<double>();
            if (!v) throw Error(ErrorCode::SchemaMismatch, "balance for " + addr + " is not a decimal");
            m.balances[Address(addr)] += *v;
        }
    }
    m.validate();
    return m;
}

inline nlohmann::ordered_json market_to_json(const MarketSnapshot& m) {
    nlohmann::ordered_json balances = nlohmann::ordered_json::object();
    for (const auto& [a, b] : m.balances) balances[a.str()] = detail::format_double(b);
    return {{"volume_24h", detail::format_double(m.volume_24h)},
            {"market_cap", detail::format_double(m.market_cap)},
            {"balances", std::move(balances)},
            {"timestamp", m.timestamp}};
}

inline LiquiditySnapshot parse_pool(const std::filesystem::path& path) { return pool_from_json(detail::parse_json_file(path)); }
inline MarketSnapshot parse_market(const std::filesystem::path& path) { return market_from_json(detail::parse_json_file(path)); }

inline void write_pool(const std::filesystem::path& path, const LiquiditySnapshot& s) {
    detail::write_file(path, pool_to_json(s).dump(2) + "\n");
}
inline void write_market(const std::filesystem::path& path, const MarketSnapshot& m) {
    detail::write_file(path, market_to_json(m).dump(2) + "\n");
}

/// Load a dataset directory: transfers.csv (or transfers.jsonl), plus
/// optional labels.json, pool.json and market.json.
inline DatasetBundle load_bundle(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    DatasetBundle b;
    if (fs::exists(dir / "transfers.csv")) b.transfers = parse_transfers(dir / "transfers.csv", TransferFormat::Csv);
    else if (fs::exists(dir / "transfers.jsonl")) b.transfers = parse_transfers(dir / "transfers.jsonl", TransferFormat::Jsonl);
    else throw Error(ErrorCode::Io, "no transfers.csv or transfers.jsonl in " + dir.string());
    if (fs::exists(dir / "labels.json")) b.labels = parse_labels(dir / "labels.json");
    if (fs::exists(dir / "pool.json")) b.pool = parse_pool(dir / "pool.json");
    if (fs::exists(dir / "market.json")) b.market = parse_market(dir / "market.json");
    return b;
}

inline void write_bundle(const std::filesystem::path& dir, const DatasetBundle& b) {
    write_transfers(dir / "transfers.csv", b.transfers);
    write_labels(dir / "labels.json", b.labels);
    if (b.pool) write_pool(dir / "pool.json", *b.pool);
    if (b.market) write_market(dir / "market.json", *b.market);
}

}  // namespace ell
