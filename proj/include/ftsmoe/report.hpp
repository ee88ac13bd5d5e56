// SPDX-License-Identifier: Apache-2.0
//
// Static SVG charts. Every chart also has a data table (JSON) holding the
// exact plotted numbers so a chart can be checked against its source.
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ftsmoe/linalg.hpp"

namespace ftsmoe {

struct LineSeries {
    std::string name;
    Vector x;
    Vector y;
};

struct LineChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<LineSeries> series;
};

struct BarGroup {
    std::string name;  // legend entry
    Vector values;     // one per category
};

struct BarChart {
    std::string title;
    std::string y_label;
    std::vector<std::string> categories;
    std::vector<BarGroup> groups;
};

std::string render_svg(const LineChart& chart);
std::string render_svg(const BarChart& chart);

nlohmann::json chart_data(const LineChart& chart);
nlohmann::json chart_data(const BarChart& chart);

struct ChartFile {
    std::string stem;  // file name without extension
    std::string svg;
    nlohmann::json data;
};

/// Charts for a backtest report: cumulative return, attribution, sector volatility.
std::vector<ChartFile> backtest_charts(const nlohmann::json& report);
/// History plus forecast line chart for a forecast file.
std::vector<ChartFile> forecast_charts(const nlohmann::json& forecast);

}  // namespace ftsmoe
