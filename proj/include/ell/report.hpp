#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ell/error.hpp"
#include "ell/ingest.hpp"
#include "ell/metrics.hpp"
#include "ell/model.hpp"

namespace ell {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Radar vertices on a unit-radius chart: axis i points at angle
/// 90deg - i * 60deg (first axis straight up, clockwise), vertex i at
/// values[i] along it.
inline std::array<Point, 6> radar_vertices(const std::array<double, 6>& values) {
    std::array<Point, 6> pts{};
    for (std::size_t i = 0; i < 6; ++i) {
        const double theta = std::numbers::pi / 2.0 - 2.0 * std::numbers::pi * static_cast<double>(i) / 6.0;
        pts[i] = {values[i] * std::cos(theta), values[i] * std::sin(theta)};
    }
    return pts;
}

inline double shoelace_area(std::span<const Point> poly) {
    double s = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % poly.size()];
        s += a.x * b.y - b.x * a.y;
    }
    return std::abs(s) / 2.0;
}

inline double radar_area(const std::array<double, 6>& values) {
    const auto v = radar_vertices(values);
    return shoelace_area(v);
}

inline void check_complete(const IndicatorReport& r) {
    if (r.token.empty()) throw Error(ErrorCode::IncompleteReport, "report has no token");
    for (const auto* arr : {&r.positive_raw, &r.positive_adjusted})
        for (double v : *arr)
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                throw Error(ErrorCode::IncompleteReport, "report for " + r.token + " has a positive value outside [0,1]");
}

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", std::abs(v) < 5e-4 ? 0.0 : v);
    return buf;
}

inline std::string svg_points(const std::array<double, 6>& values, double cx, double cy, double radius) {
    std::string out;
    for (const auto& p : radar_vertices(values)) {
        if (!out.empty()) out += ' ';
        out += svg_num(cx + radius * p.x) + "," + svg_num(cy - radius * p.y);
    }
    return out;
}

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

/// SVG 1.1 radar chart with the raw and entity-adjusted polygons.
inline std::string radar_svg(const IndicatorReport& r) {
    check_complete(r);
    constexpr double cx = 250, cy = 250, radius = 180;
    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"500\" height=\"520\" viewBox=\"0 0 500 520\">\n";
    s += "  <title>" + detail::xml_escape(r.token) + " liquidity radar</title>\n";
    for (double level : {0.25, 0.5, 0.75, 1.0}) {
        std::array<double, 6> ring;
        ring.fill(level);
        s += "  <polygon points=\"" + detail::svg_points(ring, cx, cy, radius) + "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
    }
    std::array<double, 6> unit;
    unit.fill(1.0);
    const auto tips = radar_vertices(unit);
    for (std::size_t i = 0; i < 6; ++i) {
        const double x = cx + radius * tips[i].x, y = cy - radius * tips[i].y;
        s += "  <line x1=\"" + detail::svg_num(cx) + "\" y1=\"" + detail::svg_num(cy) + "\" x2=\"" + detail::svg_num(x) + "\" y2=\"" +
             detail::svg_num(y) + "\" stroke=\"#cccccc\"/>\n";
        const double lx = cx + (radius + 22) * tips[i].x, ly = cy - (radius + 22) * tips[i].y + 4;
        s += "  <text x=\"" + detail::svg_num(lx) + "\" y=\"" + detail::svg_num(ly) +
             "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" + std::string(positive_axis_name(kIndicators[i])) +
             "</text>\n";
    }
    s += "  <polygon id=\"raw\" points=\"" + detail::svg_points(r.positive_raw, cx, cy, radius) +
         "\" fill=\"#1f77b4\" fill-opacity=\"0.25\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
    s += "  <polygon id=\"adjusted\" points=\"" + detail::svg_points(r.positive_adjusted, cx, cy, radius) +
         "\" fill=\"#d62728\" fill-opacity=\"0.25\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    s += "  <text x=\"20\" y=\"500\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#1f77b4\">raw area " +
         detail::svg_num(radar_area(r.positive_raw)) + "</text>\n";
    s += "  <text x=\"260\" y=\"500\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#d62728\">adjusted area " +
         detail::svg_num(radar_area(r.positive_adjusted)) + "</text>\n";
    s += "</svg>\n";
    return s;
}

/// Write the radar payload to `json_path` and, when `svg_path` is non-empty,
/// the SVG rendering.
inline void emit_radar(const IndicatorReport& r, const std::filesystem::path& json_path, const std::filesystem::path& svg_path = {}) {
    check_complete(r);
    auto j = radar_payload(r);
    j["token"] = r.token;
    j["raw_area"] = radar_area(r.positive_raw);
    j["adjusted_area"] = radar_area(r.positive_adjusted);
    detail::write_file(json_path, j.dump(2) + "\n");
    if (!svg_path.empty()) detail::write_file(svg_path, radar_svg(r));
}

struct TokenComparison {
    std::string token;
    IndicatorValues raw;
    IndicatorValues adjusted;
    std::array<double, 6> positive_raw{};
    std::array<double, 6> positive_adjusted{};
    double raw_area = 0.0;
    double adjusted_area = 0.0;
};

struct Comparison {
    PositiveCaps caps;
    std::vector<TokenComparison> tokens;  // input order
};

/// Put several token reports on shared positive-transform caps and compute
/// each token's radar areas. Liquidity and holders caps left at <= 0 become
/// the maximum raw value over the compared tokens; the vmtv and volatility
/// caps must agree across reports.
inline Comparison compare_tokens(std::span<const IndicatorReport> reports, PositiveCaps caps = {}) {
    if (reports.size() < 2) throw Error(ErrorCode::InvalidConfig, "compare needs at least two reports");
    for (const auto& r : reports) {
        if (r.caps.vmtv_cap != reports.front().caps.vmtv_cap || r.caps.volatility_cap != reports.front().caps.volatility_cap)
            throw Error(ErrorCode::MismatchedAxes, "reports use different vmtv/volatility caps: " + reports.front().token + " vs " + r.token);
    }
    caps.vmtv_cap = reports.front().caps.vmtv_cap;
    caps.volatility_cap = reports.front().caps.volatility_cap;
    if (caps.liquidity_cap <= 0)
        for (const auto& r : reports) caps.liquidity_cap = std::max(caps.liquidity_cap, r.raw.pool_liquidity);
    if (caps.holders_cap <= 0)
        for (const auto& r : reports) caps.holders_cap = std::max(caps.holders_cap, static_cast<double>(r.raw.holders));
    Comparison c;
    c.caps = caps;
    for (auto r : reports) {
        apply_caps(r, caps);
        check_complete(r);
        c.tokens.push_back({r.token, r.raw, r.adjusted, r.positive_raw, r.positive_adjusted, radar_area(r.positive_raw),
                            radar_area(r.positive_adjusted)});
    }
    return c;
}

namespace detail {

inline std::vector<std::vector<std::string>> comparison_rows(const Comparison& c) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header = {"token", "mode"};
    for (auto i : kIndicators) header.emplace_back(to_string(i));
    for (auto i : kIndicators) header.emplace_back(positive_axis_name(i));
    header.emplace_back("radar_area");
    rows.push_back(std::move(header));
    for (const auto& t : c.tokens) {
        for (int mode = 0; mode < 2; ++mode) {
            const auto& v = mode == 0 ? t.raw : t.adjusted;
            const auto& pos = mode == 0 ? t.positive_raw : t.positive_adjusted;
            std::vector<std::string> row = {t.token, mode == 0 ? "raw" : "adjusted"};
            for (auto i : kIndicators)
                row.push_back(i == Indicator::Holders ? std::to_string(v.holders) : format_double(v.get(i)));
            for (double p : pos) row.push_back(format_double(p));
            row.push_back(format_double(mode == 0 ? t.raw_area : t.adjusted_area));
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace detail

inline std::string comparison_csv(const Comparison& c) {
    std::string out;
    for (const auto& row : detail::comparison_rows(c)) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            const bool quote = row[i].find_first_of(",\"\n") != std::string::npos;
            if (!quote) {
                out += row[i];
                continue;
            }
            out += '"';
            for (char ch : row[i]) {
                if (ch == '"') out += '"';
                out += ch;
            }
            out += '"';
        }
        out += '\n';
    }
    return out;
}

inline std::string comparison_text(const Comparison& c) {
    auto rows = detail::comparison_rows(c);
    for (std::size_t r = 1; r < rows.size(); ++r)
        for (std::size_t i = 2; i < rows[r].size(); ++i) {
            char buf[32];
            if (i == 2 + 5) continue;  // holders: integer
            std::snprintf(buf, sizeof buf, "%.6g", std::stod(rows[r][i]));
            rows[r][i] = buf;
        }
    std::vector<std::size_t> width(rows.front().size(), 0);
    for (const auto& row : rows)
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    std::string out;
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) line += "  ";
            const auto pad = width[i] - row[i].size();
            if (i < 2) line += row[i] + std::string(pad, ' ');
            else line += std::string(pad, ' ') + row[i];
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + '\n';
    }
    return out;
}

inline nlohmann::ordered_json to_json(const Comparison& c) {
    auto tokens = nlohmann::ordered_json::array();
    for (const auto& t : c.tokens) {
        auto axes = nlohmann::ordered_json::array();
        for (auto i : kIndicators) axes.push_back(positive_axis_name(i));
        tokens.push_back({{"token", t.token},
                          {"raw_area", t.raw_area},
                          {"adjusted_area", t.adjusted_area},
                          {"radar", {{"axes", std::move(axes)}, {"raw", t.positive_raw}, {"adjusted", t.positive_adjusted}}}});
    }
    return {{"caps",
             {{"vmtv_cap", c.caps.vmtv_cap},
              {"volatility_cap", c.caps.volatility_cap},
              {"liquidity_cap", c.caps.liquidity_cap},
              {"holders_cap", c.caps.holders_cap}}},
            {"tokens", std::move(tokens)}};
}

}  // namespace ell
