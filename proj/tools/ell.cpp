#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

#include "ell/ell.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
    std::string config_path;
    std::string data_dir = ".";
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    std::vector<std::string> exclude_flags;
    std::string token;
};

void add_common(CLI::App* app, CommonOptions& o, bool data = true) {
    app->add_option("--config", o.config_path, "Pipeline config (JSON); defaults are used for missing keys")->check(CLI::ExistingFile);
    if (data) app->add_option("--data-dir", o.data_dir, "Dataset directory (transfers.csv|jsonl, labels.json, pool.json, market.json)");
    app->add_option("--out-dir", o.out_dir, "Artifact directory");
    app->add_option("--seed", o.seed, "Seed for every randomized step");
    app->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
    app->add_option("--exclude-flags", o.exclude_flags, "Drop groups carrying these flags from entity-adjusted metrics")
        ->delimiter(',');
    app->add_option("--token", o.token, "Token contract address");
}

ell::PipelineConfig resolve_config(const CommonOptions& o) {
    ell::PipelineConfig c = o.config_path.empty() ? ell::PipelineConfig{} : ell::load_config(o.config_path);
    if (o.seed) c.seed = *o.seed;
    if (o.jobs) c.jobs = *o.jobs;
    for (const auto& f : o.exclude_flags) c.metrics.exclude_flags.insert(f);
    if (!o.token.empty()) c.metrics.token = o.token;
    c.validate();
    return c;
}

void log_stage(ell::Stage s, const std::string& msg) { std::cerr << "[" << ell::to_string(s) << "] " << msg << "\n"; }

int run_stage(const CommonOptions& o, ell::Stage last) {
    const auto config = resolve_config(o);
    const auto res = ell::run_pipeline(config, o.data_dir, o.out_dir, last, log_stage);
    for (const auto& a : res.artifacts) std::cout << a.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entity-linked address detection and meme-token liquidity indicators"};
    app.require_subcommand(1);

    CommonOptions common;
    std::vector<std::pair<CLI::App*, ell::Stage>> stage_cmds;
    auto add_stage = [&](const char* name, const char* help, ell::Stage s) {
        auto* cmd = app.add_subcommand(name, help);
        add_common(cmd, common);
        stage_cmds.emplace_back(cmd, s);
        return cmd;
    };

    auto* ingest = add_stage("ingest", "Load and validate a dataset, or download transfers from an explorer API", ell::Stage::Ingest);
    std::string endpoint, cache_dir = ".ell_cache";
    int page_size = 100;
    double rps = 5.0;
    ingest->add_option("--endpoint", endpoint, "Explorer API URL; with --token, fetch transfers into --out-dir");
    ingest->add_option("--cache-dir", cache_dir, "Explorer page cache");
    ingest->add_option("--page-size", page_size, "Rows per explorer page")->check(CLI::PositiveNumber);
    ingest->add_option("--rps", rps, "Explorer requests per second")->check(CLI::PositiveNumber);

    add_stage("clean", "Run ingest and preprocessing; writes cleaning_report.json", ell::Stage::Clean);
    add_stage("detect", "Run through the four detectors; writes detector_groups.json", ell::Stage::Detect);
    add_stage("cluster", "Run through clustering and refinement; writes groupset.json", ell::Stage::Cluster);
    add_stage("metrics", "Run through the liquidity indicators; writes indicator_report.json", ell::Stage::Metrics);
    add_stage("report", "Run the full pipeline; writes radar.json and radar.svg", ell::Stage::Report);
    add_stage("run", "Run the full pipeline", ell::Stage::Report);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with ground truth");
    std::string spec_path, out_dir = "synthetic";
    ell::ScenarioSpec spec;
    std::vector<std::string> patterns;
    std::vector<std::size_t> size_range;
    synth->add_option("--spec", spec_path, "Scenario spec (JSON); flags override it")->check(CLI::ExistingFile);
    synth->add_option("--out-dir", out_dir, "Output dataset directory");
    auto* o_seed = synth->add_option("--seed", spec.seed, "Generator seed");
    auto* o_retail = synth->add_option("--n-retail", spec.n_retail, "Retail addresses");
    auto* o_entities = synth->add_option("--n-entities", spec.n_entities, "Planted entities");
    auto* o_range = synth->add_option("--entity-size-range", size_range, "Entity size min,max")->delimiter(',')->expected(2);
    auto* o_patterns = synth->add_option("--patterns", patterns, "Comma-separated patterns")->delimiter(',');
    auto* o_scale = synth->add_option("--volume-scale", spec.volume_scale, "Typical entity transfer size in USD");
    auto* o_days = synth->add_option("--duration-days", spec.duration_days, "Dataset length in days");
    auto* o_retail_tx = synth->add_option("--retail-tx-mean", spec.retail_tx_mean, "Mean pool swaps per retail address");

    auto* compare = app.add_subcommand("compare", "Compare indicator reports of several tokens");
    std::vector<std::string> report_paths;
    std::string compare_out;
    compare->add_option("reports", report_paths, "indicator_report.json files")->required()->check(CLI::ExistingFile);
    compare->add_option("--out-dir", compare_out, "Write comparison.csv, comparison.txt and comparison.json here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (ingest->parsed() && !endpoint.empty()) {
            if (common.token.empty()) {
                std::cerr << "[ingest] --endpoint requires --token\n";
                return 2;
            }
            ell::ExplorerOptions eo;
            eo.cache_dir = cache_dir;
            eo.page_size = page_size;
            eo.requests_per_second = rps;
            ell::FetchStats stats;
            auto transfers = ell::fetch_explorer(common.token, endpoint, ell::explorer_api_key_from_env(), eo, &stats);
            fs::create_directories(common.out_dir);
            const auto path = fs::path(common.out_dir) / "transfers.csv";
            ell::write_transfers(path.string() + ".partial", transfers, ell::TransferFormat::Csv);
            fs::rename(path.string() + ".partial", path);
            std::cerr << "[ingest] transfers=" << transfers.size() << " pages=" << stats.pages << " requests=" << stats.http_requests
                      << " cache_hits=" << stats.cache_hits << "\n";
            std::cout << path.string() << "\n";
            return 0;
        }
        for (const auto& [cmd, stage] : stage_cmds)
            if (cmd->parsed()) return run_stage(common, stage);

        if (synth->parsed()) {
            ell::ScenarioSpec merged = spec;
            if (!spec_path.empty()) {
                merged = ell::scenario_from_json(nlohmann::json::parse(ell::detail::read_file(spec_path)));
                if (o_seed->count()) merged.seed = spec.seed;
                if (o_retail->count()) merged.n_retail = spec.n_retail;
                if (o_entities->count()) merged.n_entities = spec.n_entities;
                if (o_scale->count()) merged.volume_scale = spec.volume_scale;
                if (o_days->count()) merged.duration_days = spec.duration_days;
                if (o_retail_tx->count()) merged.retail_tx_mean = spec.retail_tx_mean;
            }
            if (o_range->count()) {
                merged.entity_size_min = size_range[0];
                merged.entity_size_max = size_range[1];
            }
            if (o_patterns->count()) {
                merged.patterns.clear();
                for (const auto& p : patterns) {
                    auto parsed = ell::parse_pattern(p);
                    if (!parsed) throw ell::Error(ell::ErrorCode::InvalidSpec, "unknown pattern: " + p);
                    merged.patterns.insert(*parsed);
                }
            }
            const auto sc = ell::generate_scenario(merged);
            const fs::path tmp = out_dir + ".partial";
            fs::remove_all(tmp);
            ell::write_scenario(tmp, sc);
            ell::detail::write_file(tmp / "scenario.json", ell::to_json(merged).dump(2) + "\n");
            fs::remove_all(out_dir);
            fs::rename(tmp, out_dir);
            std::cerr << "[synth] transfers=" << sc.bundle.transfers.size() << " entities=" << sc.ground_truth.groups().size()
                      << " entity_addresses=" << sc.ground_truth.grouped_address_count() << "\n";
            std::cout << out_dir << "\n";
            return 0;
        }

        if (compare->parsed()) {
            std::vector<ell::IndicatorReport> reports;
            for (const auto& p : report_paths) reports.push_back(ell::indicator_report_from_json(nlohmann::json::parse(ell::detail::read_file(p))));
            const auto cmp = ell::compare_tokens(reports);
            std::cout << ell::comparison_text(cmp);
            if (!compare_out.empty()) {
                fs::create_directories(compare_out);
                const fs::path dir = compare_out;
                ell::detail::write_file(dir / "comparison.csv", ell::comparison_csv(cmp));
                ell::detail::write_file(dir / "comparison.txt", ell::comparison_text(cmp));
                ell::detail::write_file(dir / "comparison.json", ell::to_json(cmp).dump(2) + "\n");
            }
            return 0;
        }
    } catch (const ell::StageError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const ell::Error& e) {
        const char* tag = synth->parsed() ? "synth" : compare->parsed() ? "compare" : "config";
        std::cerr << "[" << tag << "] " << e.what() << "\n";
        return std::string_view(tag) == "config" ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
