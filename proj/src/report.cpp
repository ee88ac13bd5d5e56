// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "ftsmoe/error.hpp"

namespace ftsmoe {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 450.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 160.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

const char* const kPalette[] = {"#1f77b4", "#2ca02c", "#d62728", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s) {
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

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void settle() {
        if (!std::isfinite(lo)) lo = hi = 0.0;
        if (hi == lo) {
            lo -= 1.0;
            hi += 1.0;
        }
    }
    double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

std::string frame(const std::string& title, const std::string& y_label, const std::string& x_label, const Range& y) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
                    "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" + escape(title) + "</text>\n";
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y0) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y1) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = y.lo + (y.hi - y.lo) * i / 4.0;
        const double py = y.map(v, y0, y1);
        s += "<text x=\"" + num(x0 - 6) + "\" y=\"" + num(py + 4) + "\" text-anchor=\"end\" font-size=\"11\">" + tick(v) +
             "</text>\n";
    }
    s += "<text x=\"16\" y=\"" + num((y0 + y1) / 2) + "\" font-size=\"12\" transform=\"rotate(-90 16 " +
         num((y0 + y1) / 2) + ")\" text-anchor=\"middle\">" + escape(y_label) + "</text>\n";
    if (!x_label.empty()) {
        s += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(kHeight - 14) + "\" text-anchor=\"middle\" font-size=\"12\">" +
             escape(x_label) + "</text>\n";
    }
    return s;
}

std::string legend(const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double y = kTop + 16.0 * static_cast<double>(i);
        const char* color = kPalette[i % std::size(kPalette)];
        s += "<rect x=\"" + num(kWidth - kRight + 12) + "\" y=\"" + num(y) + "\" width=\"10\" height=\"10\" fill=\"" + color +
             "\"/>\n";
        s += "<text x=\"" + num(kWidth - kRight + 28) + "\" y=\"" + num(y + 9) + "\" font-size=\"11\">" + escape(names[i]) +
             "</text>\n";
    }
    return s;
}

Vector numbers(const nlohmann::json& j) {
    Vector out;
    for (const auto& v : j) out.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    return out;
}

}  // namespace

std::string render_svg(const LineChart& chart) {
    Range x, y;
    for (const auto& s : chart.series) {
        for (double v : s.x) x.add(v);
        for (double v : s.y) y.add(v);
    }
    x.settle();
    y.settle();
    std::string svg = frame(chart.title, chart.y_label, chart.x_label, y);
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < chart.series.size(); ++i) {
        const auto& s = chart.series[i];
        names.push_back(s.name);
        std::string pts;
        for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
            if (!std::isfinite(s.y[k])) continue;
            if (!pts.empty()) pts += ' ';
            pts += num(x.map(s.x[k], x0, x1)) + "," + num(y.map(s.y[k], y0, y1));
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(kPalette[i % std::size(kPalette)]) +
               "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    }
    svg += legend(names);
    svg += "</svg>\n";
    return svg;
}

std::string render_svg(const BarChart& chart) {
    Range y;
    y.add(0.0);
    for (const auto& g : chart.groups) {
        for (double v : g.values) y.add(v);
    }
    y.settle();
    std::string svg = frame(chart.title, chart.y_label, "", y);
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    const std::size_t nc = std::max<std::size_t>(1, chart.categories.size());
    const std::size_t ng = std::max<std::size_t>(1, chart.groups.size());
    const double slot = (x1 - x0) / static_cast<double>(nc);
    const double bar = slot * 0.8 / static_cast<double>(ng);
    const double base = y.map(0.0, y0, y1);
    std::vector<std::string> names;
    for (std::size_t g = 0; g < chart.groups.size(); ++g) {
        names.push_back(chart.groups[g].name);
        const char* color = kPalette[g % std::size(kPalette)];
        for (std::size_t c = 0; c < std::min(chart.categories.size(), chart.groups[g].values.size()); ++c) {
            const double v = y.map(chart.groups[g].values[c], y0, y1);
            const double left = x0 + slot * static_cast<double>(c) + slot * 0.1 + bar * static_cast<double>(g);
            svg += "<rect x=\"" + num(left) + "\" y=\"" + num(std::min(v, base)) + "\" width=\"" + num(bar) +
                   "\" height=\"" + num(std::abs(v - base)) + "\" fill=\"" + color + "\"/>\n";
        }
    }
    for (std::size_t c = 0; c < chart.categories.size(); ++c) {
        const double cx = x0 + slot * (static_cast<double>(c) + 0.5);
        svg += "<text x=\"" + num(cx) + "\" y=\"" + num(y0 + 16) + "\" text-anchor=\"middle\" font-size=\"11\">" +
               escape(chart.categories[c]) + "</text>\n";
    }
    svg += legend(names);
    svg += "</svg>\n";
    return svg;
}

nlohmann::json chart_data(const LineChart& chart) {
    nlohmann::json series = nlohmann::json::array();
    for (const auto& s : chart.series) series.push_back({{"name", s.name}, {"x", s.x}, {"y", s.y}});
    return {{"kind", "line"}, {"title", chart.title}, {"series", series}};
}

nlohmann::json chart_data(const BarChart& chart) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : chart.groups) groups.push_back({{"name", g.name}, {"values", g.values}});
    return {{"kind", "bar"}, {"title", chart.title}, {"categories", chart.categories}, {"groups", groups}};
}

std::vector<ChartFile> backtest_charts(const nlohmann::json& report) {
    std::vector<ChartFile> out;
    try {
        const std::string strategy = report.at("strategy").get<std::string>();

        const Vector r = numbers(report.at("daily_returns").at("r"));
        if (r.empty()) throw Error(ErrorCode::EmptyInput, "backtest report has no returns");
        LineChart cum{"Cumulative return (" + strategy + ")", "trading day", "sum of daily returns", {}};
        LineSeries line{strategy, {}, {}};
        double acc = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            acc += r[i];
            line.x.push_back(static_cast<double>(i + 1));
            line.y.push_back(acc);
        }
        cum.series.push_back(line);
        out.push_back({"cumulative_return", render_svg(cum), chart_data(cum)});

        BarChart attr{"Return attribution (" + strategy + ")", "contribution", {}, {{"contribution", {}}}};
        for (const char* side : {"gainers", "losers"}) {
            for (const auto& e : report.at("per_stock_attribution").at(side)) {
                attr.categories.push_back(e.at("symbol").get<std::string>());
                attr.groups[0].values.push_back(e.at("contribution").get<double>());
            }
        }
        out.push_back({"attribution", render_svg(attr), chart_data(attr)});

        BarChart vol{"Volatility by sector", "sigma", {}, {}};
        std::vector<std::string> periods;
        for (const auto& [sector, row] : report.at("volatility_by_sector").items()) {
            vol.categories.push_back(sector);
            for (const auto& [p, sigma] : row.items()) {
                if (std::find(periods.begin(), periods.end(), p) == periods.end()) periods.push_back(p);
            }
        }
        std::sort(periods.begin(), periods.end(), [](const std::string& a, const std::string& b) { return std::stoul(a) < std::stoul(b); });
        for (const auto& p : periods) {
            BarGroup g{"P=" + p, {}};
            for (const auto& sector : vol.categories) {
                const auto& row = report.at("volatility_by_sector").at(sector);
                g.values.push_back(row.contains(p) ? row.at(p).get<double>() : 0.0);
            }
            vol.groups.push_back(std::move(g));
        }
        out.push_back({"volatility_by_sector", render_svg(vol), chart_data(vol)});
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedLine, std::string("malformed backtest report: ") + e.what());
    }
    return out;
}

std::vector<ChartFile> forecast_charts(const nlohmann::json& forecast) {
    try {
        const Vector hist = numbers(forecast.at("history").at("values"));
        const Vector pred = numbers(forecast.at("values"));
        if (hist.empty() && pred.empty()) throw Error(ErrorCode::EmptyInput, "forecast file has no values");
        const std::string symbol = forecast.value("symbol", std::string("series"));
        LineChart chart{"Forecast " + symbol, "step", "price", {}};
        LineSeries h{"history", {}, hist};
        for (std::size_t i = 0; i < hist.size(); ++i) h.x.push_back(static_cast<double>(i));
        LineSeries f{"forecast", {}, pred};
        for (std::size_t i = 0; i < pred.size(); ++i) f.x.push_back(static_cast<double>(hist.size() + i));
        chart.series = {h, f};
        if (forecast.contains("truth")) {
            LineSeries t{"ground truth", f.x, numbers(forecast.at("truth"))};
            t.x.resize(t.y.size());
            chart.series.push_back(t);
        }
        return {{"forecast_" + symbol, render_svg(chart), chart_data(chart)}};
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedLine, std::string("malformed forecast file: ") + e.what());
    }
}

}  // namespace ftsmoe
