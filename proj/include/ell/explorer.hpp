#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ell/error.hpp"
#include "ell/ingest.hpp"
#include "ell/model.hpp"
#include "ell/random.hpp"

namespace ell {

inline constexpr const char* kExplorerApiKeyEnv = "ELL_EXPLORER_API_KEY";

struct ExplorerOptions {
    std::filesystem::path cache_dir = ".ell_cache";
    int page_size = 100;
    double requests_per_second = 5.0;
    int max_retries = 5;
    std::chrono::milliseconds base_backoff{250};
    std::chrono::milliseconds max_backoff{8000};
    int max_pages = 100000;
};

struct FetchStats {
    std::size_t http_requests = 0;
    std::size_t cache_hits = 0;
    std::size_t pages = 0;
};

inline std::string explorer_api_key_from_env() {
    const char* key = std::getenv(kExplorerApiKeyEnv);
    return key ? std::string(key) : std::string();
}

namespace detail {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

inline SplitUrl split_url(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw Error(ErrorCode::InvalidConfig, "endpoint must be an absolute URL: " + url);
    auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

// Explorer (etherscan-style tokentx) row to Transfer. The explorer does not
// value transfers; rows may carry an optional usdValue column.
inline Transfer transfer_from_explorer_row(const nlohmann::json& row, std::size_t index) {
    auto get = [&](const char* key) -> std::string {
        auto it = row.find(key);
        if (it == row.end() || it->is_null()) return {};
        if (it->is_string()) return it->get<std::string>();
        return it->dump();
    };
    std::string usd = get("usdValue");
    if (usd.empty()) usd = get("usd_value");
    double gas_fee = 0.0;
    auto gas_used = parse_double(get("gasUsed"));
    auto gas_price = parse_double(get("gasPrice"));
    if (gas_used && gas_price) gas_fee = *gas_used * *gas_price / 1e18;
    return make_transfer(index, get("hash"), get("blockNumber"), get("timeStamp"), get("from"), get("to"),
                         get("contractAddress"), get("value"), usd, format_double(gas_fee));
}

class ExplorerCache {
public:
    explicit ExplorerCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        const auto manifest = dir_ / "index.json";
        if (std::filesystem::exists(manifest)) {
            try {
                index_ = nlohmann::json::parse(read_file(manifest));
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorCode::CacheCorrupt, "manifest unreadable: " + std::string(e.what()));
            }
            if (!index_.is_object() || !index_.contains("pages") || !index_.contains("complete"))
                throw Error(ErrorCode::CacheCorrupt, "manifest lacks pages/complete sections");
        } else {
            index_ = {{"pages", nlohmann::json::object()}, {"complete", nlohmann::json::object()}};
        }
    }

    static std::string series_key(const std::string& endpoint, const std::string& token, int page_size) {
        return hex64(fnv1a64(endpoint + "\n" + token + "\n" + std::to_string(page_size)));
    }

    static std::string page_key(const std::string& endpoint, const std::string& token, int page_size, int page) {
        return hex64(fnv1a64(endpoint + "\n" + token + "\n" + std::to_string(page_size) + "\n" + std::to_string(page)));
    }

    std::optional<int> completed_pages(const std::string& series) const {
        auto it = index_["complete"].find(series);
        if (it == index_["complete"].end()) return std::nullopt;
        return it->get<int>();
    }

    std::optional<nlohmann::json> load(const std::string& key) const {
        auto it = index_["pages"].find(key);
        if (it == index_["pages"].end()) return std::nullopt;
        const auto file = dir_ / (*it)["file"].get<std::string>();
        if (!std::filesystem::exists(file)) throw Error(ErrorCode::CacheCorrupt, "missing page file " + file.string());
        try {
            return nlohmann::json::parse(read_file(file));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::CacheCorrupt, file.string() + ": " + e.what());
        }
    }

    void store(const std::string& key, const std::string& endpoint, const std::string& token, int page, const std::string& body) {
        const std::string rel = key.substr(0, 2) + "/" + key + ".json";
        write_file(dir_ / rel, body);
        index_["pages"][key] = {{"endpoint", endpoint}, {"token", token}, {"page", page}, {"file", rel}};
        flush();
    }

    void mark_complete(const std::string& series, int pages) {
        index_["complete"][series] = pages;
        flush();
    }

    std::size_t page_files() const { return index_["pages"].size(); }

private:
    void flush() const { write_file(dir_ / "index.json", index_.dump(2) + "\n"); }

    std::filesystem::path dir_;
    nlohmann::json index_;
};

}  // namespace detail

/// Paginated token-transfer download from an etherscan-style explorer API.
///
/// Each page is cached on disk (content-addressed by endpoint, token, page
/// size and page number) and the manifest records when a series has been
/// read to exhaustion, so a repeated call is served without any request.
/// HTTP 429 responses (and in-body rate-limit notices) are retried with
/// exponential backoff up to `max_retries`, then surfaced as RateLimited.
inline std::vector<Transfer> fetch_explorer(const std::string& token, const std::string& endpoint, const std::string& api_key,
                                            const ExplorerOptions& opts = {}, FetchStats* stats = nullptr) {
    if (opts.page_size <= 0) throw Error(ErrorCode::InvalidConfig, "page_size must be positive");
    FetchStats local;
    FetchStats& st = stats ? *stats : local;
    detail::ExplorerCache cache(opts.cache_dir);
    const auto series = detail::ExplorerCache::series_key(endpoint, token, opts.page_size);
    const auto done = cache.completed_pages(series);

    const auto url = detail::split_url(endpoint);
    std::optional<httplib::Client> client;
    const auto min_interval = std::chrono::duration<double>(opts.requests_per_second > 0 ? 1.0 / opts.requests_per_second : 0.0);
    std::optional<std::chrono::steady_clock::time_point> last_request;

    auto request_page = [&](int page) -> std::string {
        if (!client) {
            client.emplace(url.origin);
            client->set_connection_timeout(std::chrono::seconds(10));
            client->set_read_timeout(std::chrono::seconds(30));
        }
        httplib::Params params{{"module", "account"},     {"action", "tokentx"},
                               {"contractaddress", token}, {"page", std::to_string(page)},
                               {"offset", std::to_string(opts.page_size)}, {"sort", "asc"},
                               {"apikey", api_key}};
        for (int attempt = 0;; ++attempt) {
            if (last_request) {
                const auto wait = *last_request + std::chrono::duration_cast<std::chrono::steady_clock::duration>(min_interval) -
                                  std::chrono::steady_clock::now();
                if (wait.count() > 0) std::this_thread::sleep_for(wait);
            }
            last_request = std::chrono::steady_clock::now();
            ++st.http_requests;
            auto res = client->Get(url.path, params, httplib::Headers{});
            if (!res) throw HttpError(0, "transport failure: " + httplib::to_string(res.error()));
            bool limited = res->status == 429;
            if (res->status == 200 && res->body.find("rate limit") != std::string::npos) limited = true;
            if (limited) {
                if (attempt >= opts.max_retries)
                    throw Error(ErrorCode::RateLimited, "page " + std::to_string(page) + " still rate limited after " +
                                                            std::to_string(attempt) + " retries");
                auto delay = opts.base_backoff * (1LL << std::min(attempt, 30));
                std::this_thread::sleep_for(std::min<std::chrono::milliseconds>(delay, opts.max_backoff));
                continue;
            }
            if (res->status != 200) throw HttpError(res->status, res->body.substr(0, 200));
            return res->body;
        }
    };

    auto rows_of = [](const nlohmann::json& doc) -> const nlohmann::json& {
        static const nlohmann::json empty = nlohmann::json::array();
        if (!doc.is_object() || !doc.contains("result")) throw Error(ErrorCode::SchemaMismatch, "response lacks result");
        const auto& r = doc["result"];
        if (r.is_array()) return r;
        if (doc.value("status", "1") == "0") return empty;  // "No transactions found"
        throw Error(ErrorCode::SchemaMismatch, "result is not an array");
    };

    std::vector<Transfer> out;
    std::vector<std::size_t> rows;
    for (int page = 1; page <= opts.max_pages; ++page) {
        if (done && page > *done) break;
        const auto key = detail::ExplorerCache::page_key(endpoint, token, opts.page_size, page);
        nlohmann::json doc;
        if (auto cached = cache.load(key)) {
            doc = std::move(*cached);
            ++st.cache_hits;
        } else {
            if (done) throw Error(ErrorCode::CacheCorrupt, "series marked complete but page " + std::to_string(page) + " missing");
            const auto body = request_page(page);
            try {
                doc = nlohmann::json::parse(body);
            } catch (const nlohmann::json::exception&) {
                throw HttpError(200, "non-JSON body: " + body.substr(0, 200));
            }
            if (!rows_of(doc).empty()) cache.store(key, endpoint, token, page, body);
        }
        const auto& result = rows_of(doc);
        for (const auto& r : result) {
            out.push_back(detail::transfer_from_explorer_row(r, out.size()));
            rows.push_back(rows.size());
        }
        if (!result.empty()) ++st.pages;
        if (static_cast<int>(result.size()) < opts.page_size) {
            if (!done) cache.mark_complete(series, result.empty() ? page - 1 : page);
            break;
        }
    }
    if (!out.empty()) detail::finalize_transfers(out, std::move(rows));
    return out;
}

}  // namespace ell
