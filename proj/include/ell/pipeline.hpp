#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ell/cluster.hpp"
#include "ell/detect.hpp"
#include "ell/error.hpp"
#include "ell/ingest.hpp"
#include "ell/metrics.hpp"
#include "ell/preprocess.hpp"
#include "ell/report.hpp"

namespace ell {

enum class Stage { Ingest, Clean, Detect, Cluster, Metrics, Report };

inline constexpr std::array<Stage, 6> kStages{Stage::Ingest, Stage::Clean, Stage::Detect, Stage::Cluster, Stage::Metrics, Stage::Report};

inline std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::Ingest: return "ingest";
        case Stage::Clean: return "clean";
        case Stage::Detect: return "detect";
        case Stage::Cluster: return "cluster";
        case Stage::Metrics: return "metrics";
        case Stage::Report: return "report";
    }
    return "";
}

struct PipelineConfig {
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    CleanConfig clean;
    DetectorConfig detect;
    ClusterConfig cluster;
    MetricsConfig metrics;

    void validate() const {
        if (jobs == 0) throw Error(ErrorCode::InvalidConfig, "jobs must be >= 1");
        clean.validate();
        detect.validate();
        cluster.validate();
        metrics.validate();
    }
};

namespace detail {

// Reads `key` into `out` when present; rejects keys not in `allowed`.
class ConfigReader {
public:
    ConfigReader(const nlohmann::json& j, std::string section) : j_(j), section_(std::move(section)) {
        if (!j_.is_object()) throw Error(ErrorCode::InvalidConfig, "config section '" + section_ + "' must be an object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorCode::InvalidConfig, "config key " + section_ + "." + key + " has the wrong type");
        }
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.contains(k)) throw Error(ErrorCode::InvalidConfig, "unknown config key " + section_ + "." + k);
    }

private:
    const nlohmann::json& j_;
    std::string section_;
    std::set<std::string> seen_;
};

}  // namespace detail

/// Missing keys keep their defaults; unknown keys are rejected.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    detail::ConfigReader top(j, "config");
    top.read("seed", c.seed);
    top.read("jobs", c.jobs);
    nlohmann::json clean = nlohmann::json::object(), detect = nlohmann::json::object(), cluster = nlohmann::json::object(),
                   metrics = nlohmann::json::object();
    top.read("clean", clean);
    top.read("detect", detect);
    top.read("cluster", cluster);
    top.read("metrics", metrics);
    top.finish();

    detail::ConfigReader cr(clean, "clean");
    cr.read("similarity_tolerance", c.clean.similarity_tolerance);
    cr.read("min_recipients", c.clean.min_recipients);
    cr.finish();

    auto& d = c.detect;
    detail::ConfigReader dr(detect, "detect");
    dr.read("min_fanout", d.min_fanout);
    dr.read("min_amount_usd", d.min_amount_usd);
    dr.read("anomaly_min_tx", d.anomaly_min_tx);
    dr.read("anomaly_min_amount_usd", d.anomaly_min_amount_usd);
    dr.read("amount_identity_tolerance", d.amount_identity_tolerance);
    dr.read("chain_forward_fraction", d.chain_forward_fraction);
    dr.read("chain_window_seconds", d.chain_window_seconds);
    dr.read("max_cycle_length", d.max_cycle_length);
    dr.read("circular_return_fraction", d.circular_return_fraction);
    dr.read("similarity_edge_threshold", d.similarity_edge_threshold);
    dr.read("weight_direct", d.weight_direct);
    dr.read("weight_temporal", d.weight_temporal);
    dr.read("weight_contract", d.weight_contract);
    dr.read("direct_saturation", d.direct_saturation);
    dr.read("louvain_resolution", d.louvain_resolution);
    dr.finish();

    auto& k = c.cluster;
    detail::ConfigReader kr(cluster, "cluster");
    kr.read("dbscan_eps", k.dbscan_eps);
    kr.read("dbscan_min_pts", k.dbscan_min_pts);
    kr.read("contamination", k.contamination);
    kr.read("isolation_trees", k.isolation_trees);
    kr.read("probability_threshold", k.probability_threshold);
    kr.read("weight_pattern", k.weights.pattern);
    kr.read("weight_similarity", k.weights.similarity);
    kr.read("weight_flow", k.weights.flow);
    kr.read("weight_temporal", k.weights.temporal);
    kr.read("market_maker_min_transfers", k.market_maker_min_transfers);
    kr.read("market_maker_lifetime_fraction", k.market_maker_lifetime_fraction);
    kr.read("betweenness_samples", k.betweenness_samples);
    kr.read("max_scored_pairs", k.max_scored_pairs);
    kr.finish();

    auto& m = c.metrics;
    detail::ConfigReader mr(metrics, "metrics");
    mr.read("vmtv_cap", m.caps.vmtv_cap);
    mr.read("volatility_cap", m.caps.volatility_cap);
    mr.read("liquidity_cap", m.caps.liquidity_cap);
    mr.read("holders_cap", m.caps.holders_cap);
    mr.read("exclude_flags", m.exclude_flags);
    mr.read("volume_window_seconds", m.volume_window_seconds);
    mr.read("token", m.token);
    mr.finish();

    c.validate();
    return c;
}

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
    const auto& d = c.detect;
    const auto& k = c.cluster;
    const auto& m = c.metrics;
    return {{"seed", c.seed},
            {"jobs", c.jobs},
            {"clean", {{"similarity_tolerance", c.clean.similarity_tolerance}, {"min_recipients", c.clean.min_recipients}}},
            {"detect",
             {{"min_fanout", d.min_fanout},
              {"min_amount_usd", d.min_amount_usd},
              {"anomaly_min_tx", d.anomaly_min_tx},
              {"anomaly_min_amount_usd", d.anomaly_min_amount_usd},
              {"amount_identity_tolerance", d.amount_identity_tolerance},
              {"chain_forward_fraction", d.chain_forward_fraction},
              {"chain_window_seconds", d.chain_window_seconds},
              {"max_cycle_length", d.max_cycle_length},
              {"circular_return_fraction", d.circular_return_fraction},
              {"similarity_edge_threshold", d.similarity_edge_threshold},
              {"weight_direct", d.weight_direct},
              {"weight_temporal", d.weight_temporal},
              {"weight_contract", d.weight_contract},
              {"direct_saturation", d.direct_saturation},
              {"louvain_resolution", d.louvain_resolution}}},
            {"cluster",
             {{"dbscan_eps", k.dbscan_eps},
              {"dbscan_min_pts", k.dbscan_min_pts},
              {"contamination", k.contamination},
              {"isolation_trees", k.isolation_trees},
              {"probability_threshold", k.probability_threshold},
              {"weight_pattern", k.weights.pattern},
              {"weight_similarity", k.weights.similarity},
              {"weight_flow", k.weights.flow},
              {"weight_temporal", k.weights.temporal},
              {"market_maker_min_transfers", k.market_maker_min_transfers},
              {"market_maker_lifetime_fraction", k.market_maker_lifetime_fraction},
              {"betweenness_samples", k.betweenness_samples},
              {"max_scored_pairs", k.max_scored_pairs}}},
            {"metrics",
             {{"vmtv_cap", m.caps.vmtv_cap},
              {"volatility_cap", m.caps.volatility_cap},
              {"liquidity_cap", m.caps.liquidity_cap},
              {"holders_cap", m.caps.holders_cap},
              {"exclude_flags", m.exclude_flags},
              {"volume_window_seconds", m.volume_window_seconds},
              {"token", m.token}}}};
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

/// Failure inside a pipeline stage; what() is "[stage] CODE: message".
class StageError : public Error {
public:
    StageError(Stage stage, ErrorCode code, const std::string& message)
        : Error(code, message, "[" + std::string(to_string(stage)) + "] " + std::string(ell::to_string(code)) + ": " + message), stage_(stage) {}

    Stage stage() const { return stage_; }

private:
    Stage stage_;
};

struct PipelineResult {
    CleaningReport cleaning;
    DetectorOutput detectors;
    RefineStats refine;
    GroupSet groups;
    std::optional<IndicatorReport> report;
    std::vector<std::filesystem::path> artifacts;  // final paths
};

using StageLogger = std::function<void(Stage, const std::string&)>;

/// Run ingest through `last` on the dataset in `data_dir`, writing stage
/// artifacts to `out_dir`. Artifacts are written as <name>.partial and
/// renamed once every requested stage has succeeded; after a failure the
/// .partial files of completed stages stay behind and StageError is thrown.
inline PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
                                   Stage last = Stage::Report, const StageLogger& log = {}) {
    namespace fs = std::filesystem;
    PipelineResult res;
    std::vector<fs::path> partials;
    auto note = [&](Stage s, const std::string& msg) {
        if (log) log(s, msg);
    };
    auto write = [&](const std::string& name, const std::string& content) {
        const auto partial = out_dir / (name + ".partial");
        detail::write_file(partial, content);
        partials.push_back(partial);
    };
    auto stage = [&](Stage s, auto&& body) {
        try {
            body();
        } catch (const StageError&) {
            throw;
        } catch (const Error& e) {
            throw StageError(s, e.code(), e.message());
        } catch (const std::exception& e) {
            throw StageError(s, ErrorCode::Io, e.what());
        }
    };
    auto reached = [&](Stage s) { return static_cast<int>(s) <= static_cast<int>(last); };

    stage(Stage::Ingest, [&] { config.validate(); });
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw StageError(Stage::Ingest, ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());

    DatasetBundle bundle;
    stage(Stage::Ingest, [&] {
        bundle = load_bundle(data_dir);
        nlohmann::ordered_json summary = {{"transfers", bundle.transfers.size()},
                                          {"addresses", count_addresses(bundle.transfers)},
                                          {"labels", bundle.labels.size()},
                                          {"pool_snapshot", bundle.pool.has_value()},
                                          {"market_snapshot", bundle.market.has_value()}};
        write("ingest_summary.json", summary.dump(2) + "\n");
        note(Stage::Ingest, "transfers=" + std::to_string(bundle.transfers.size()) + " labels=" + std::to_string(bundle.labels.size()));
    });

    DatasetBundle cleaned;
    if (reached(Stage::Clean)) {
        stage(Stage::Clean, [&] {
            auto [c, report] = clean_dataset(bundle, config.clean);
            cleaned = std::move(c);
            res.cleaning = std::move(report);
            write("cleaning_report.json", to_json(res.cleaning).dump(2) + "\n");
            note(Stage::Clean, "in=" + std::to_string(res.cleaning.input_transfers) + " public=" + std::to_string(res.cleaning.removed_public_tx) +
                                   " airdrop=" + std::to_string(res.cleaning.removed_airdrop_tx) +
                                   " out=" + std::to_string(res.cleaning.surviving_transfers));
        });
    }

    TransactionGraph graph;
    std::vector<EntityGroup> detector_groups;
    if (reached(Stage::Detect)) {
        stage(Stage::Detect, [&] {
            graph = TransactionGraph(cleaned.transfers);
            res.detectors = run_detectors(graph, cleaned.labels, config.detect, config.seed, config.jobs);
            detector_groups = res.detectors.all();
            nlohmann::ordered_json j;
            j["counts"] = {{"source_of_funds", res.detectors.source_of_funds.size()},
                           {"destination_of_funds", res.detectors.destination_of_funds.size()},
                           {"behavioral", res.detectors.behavioral.size()},
                           {"anomalous", res.detectors.anomalous.size()}};
            j["groups"] = groups_to_json(detector_groups);
            write("detector_groups.json", j.dump(2) + "\n");
            note(Stage::Detect, "nodes=" + std::to_string(graph.node_count()) + " edges=" + std::to_string(graph.edges().size()) +
                                    " groups=" + std::to_string(detector_groups.size()) + " (sof=" +
                                    std::to_string(res.detectors.source_of_funds.size()) +
                                    " dof=" + std::to_string(res.detectors.destination_of_funds.size()) +
                                    " behavioral=" + std::to_string(res.detectors.behavioral.size()) +
                                    " anomalous=" + std::to_string(res.detectors.anomalous.size()) + ")");
        });
    }

    if (reached(Stage::Cluster)) {
        stage(Stage::Cluster, [&] {
            std::map<Address, double> balances;
            if (bundle.market && !bundle.market->balances.empty()) balances = bundle.market->balances;
            else balances = replay_balances(bundle.transfers);
            auto refined = cluster_groups(detector_groups, graph, balances, cleaned.labels, config.cluster, config.seed, config.jobs);
            res.groups = std::move(refined.groups);
            res.refine = refined.stats;
            auto j = groupset_to_json(res.groups);
            j["refine_stats"] = to_json(res.refine);
            write("groupset.json", j.dump(2) + "\n");
            note(Stage::Cluster, "super_groups=" + std::to_string(res.refine.super_groups) + " final_groups=" +
                                     std::to_string(res.refine.final_groups) + " addresses=" + std::to_string(res.refine.final_addresses) +
                                     " singletons=" + std::to_string(res.groups.singleton_count()));
        });
    }

    if (reached(Stage::Metrics)) {
        stage(Stage::Metrics, [&] {
            res.report = compute_report(bundle, res.groups, config.metrics);
            write("indicator_report.json", to_json(*res.report).dump(2) + "\n");
            note(Stage::Metrics, "holders raw=" + std::to_string(res.report->raw.holders) +
                                     " adjusted=" + std::to_string(res.report->adjusted.holders) +
                                     " entity_groups=" + std::to_string(res.report->entity_groups));
        });
    }

    if (reached(Stage::Report)) {
        stage(Stage::Report, [&] {
            const auto& r = *res.report;
            check_complete(r);
            auto j = radar_payload(r);
            j["token"] = r.token;
            j["raw_area"] = radar_area(r.positive_raw);
            j["adjusted_area"] = radar_area(r.positive_adjusted);
            write("radar.json", j.dump(2) + "\n");
            write("radar.svg", radar_svg(r));
            note(Stage::Report, "raw_area=" + detail::format_double(radar_area(r.positive_raw)) +
                                    " adjusted_area=" + detail::format_double(radar_area(r.positive_adjusted)));
        });
    }

    for (const auto& p : partials) {
        auto final_path = p;
        final_path.replace_extension();
        fs::rename(p, final_path, ec);
        if (ec) throw StageError(last, ErrorCode::Io, "cannot rename " + p.string() + ": " + ec.message());
        res.artifacts.push_back(final_path);
    }
    return res;
}

}  // namespace ell
