// SPDX-License-Identifier: Apache-2.0
//
// Accuracy metrics, volatility, daily-rebalanced long-only portfolios and
// return attribution.
#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ftsmoe/date.hpp"
#include "ftsmoe/linalg.hpp"

namespace ftsmoe {

double mse(std::span<const double> truth, std::span<const double> pred);
double mae(std::span<const double> truth, std::span<const double> pred);

/// Population std of the P-lag differences y[i+P] - y[i].
double volatility(std::span<const double> series, std::size_t period);

struct ReturnSeries {
    std::vector<Date> dates;  // date each return is realised on (may be empty)
    Vector r;
};

/// Simple returns (p[i+1] - p[i]) / p[i].
Vector daily_returns(std::span<const double> prices);

/// Sum of returns, not compounded.
double overall(std::span<const double> r);
/// Sample (n - 1) standard deviation.
double std_dev(std::span<const double> r);

enum class Strategy { OneOverN, PositivePrediction };

std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view text);

struct PortfolioConfig {
    Strategy strategy = Strategy::OneOverN;
    double risk_free_rate = 0.0;  // daily
    double annualization = 252.0;
};

double sharpe(std::span<const double> r, const PortfolioConfig& cfg);

/// One stock over the evaluation window. forecasts[i] is the price predicted
/// for dates[i + 1] using information up to dates[i].
struct StockPanel {
    std::string symbol;
    std::string sector;
    std::vector<Date> dates;
    Vector prices;
    Vector forecasts;
};

struct PortfolioResult {
    ReturnSeries returns;
    std::vector<Vector> contributions;  // [stock][day] weight * stock return
};

PortfolioResult simulate_portfolio(std::span<const StockPanel> stocks, const PortfolioConfig& cfg);

struct AttributionEntry {
    std::string symbol;
    double contribution = 0.0;
    double proportion = 0.0;
};

struct Attribution {
    std::vector<AttributionEntry> gainers;  // largest contribution first
    std::vector<AttributionEntry> losers;   // most negative first
};

/// Top `top_n` positive and negative contributors; proportions are taken over
/// the listed entries of each side, so each side sums to 1.
Attribution attribution(std::span<const std::pair<std::string, double>> per_stock, std::size_t top_n = 5);

struct BacktestReport {
    Strategy strategy = Strategy::OneOverN;
    double overall = 0.0;
    double std_dev = 0.0;
    std::optional<double> sharpe;  // absent when the returns have zero spread
    Attribution per_stock_attribution;
    std::map<std::string, std::map<std::size_t, double>> volatility_by_sector;  // sector -> P -> sigma
    ReturnSeries returns;
};

/// Mean over member stocks of sigma_P on their price series, for every P.
std::map<std::string, std::map<std::size_t, double>> volatility_by_sector(std::span<const StockPanel> stocks,
                                                                         std::span<const std::size_t> periods);

BacktestReport run_backtest(std::span<const StockPanel> stocks, const PortfolioConfig& cfg,
                            std::span<const std::size_t> periods = std::array<std::size_t, 3>{1, 7, 30},
                            std::size_t top_n = 5);

nlohmann::json to_json(const BacktestReport& report);

}  // namespace ftsmoe
