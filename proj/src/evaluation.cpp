// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "ftsmoe/error.hpp"

namespace ftsmoe {

namespace {

void check_pair(std::span<const double> truth, std::span<const double> pred) {
    if (truth.size() != pred.size()) {
        throw Error(ErrorCode::LengthMismatch, "truth has " + std::to_string(truth.size()) + " values, prediction " +
                                                   std::to_string(pred.size()));
    }
    if (truth.empty()) throw Error(ErrorCode::EmptyInput, "metric needs at least one value");
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

double mse(std::span<const double> truth, std::span<const double> pred) {
    check_pair(truth, pred);
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) s += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    return s / static_cast<double>(truth.size());
}

double mae(std::span<const double> truth, std::span<const double> pred) {
    check_pair(truth, pred);
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) s += std::abs(truth[i] - pred[i]);
    return s / static_cast<double>(truth.size());
}

double volatility(std::span<const double> series, std::size_t period) {
    if (period == 0) throw Error(ErrorCode::InvalidConfig, "sampling period must be >= 1");
    if (series.size() <= period) {
        throw Error(ErrorCode::SeriesTooShort, "series of length " + std::to_string(series.size()) +
                                                   " is too short for period " + std::to_string(period));
    }
    Vector v(series.size() - period);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = series[i + period] - series[i];
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

Vector daily_returns(std::span<const double> prices) {
    if (prices.size() < 2) throw Error(ErrorCode::TooFewReturns, "need at least two prices for a return");
    for (std::size_t i = 0; i < prices.size(); ++i) {
        if (!(prices[i] > 0.0)) {
            throw Error(ErrorCode::NonPositivePrice, "price at index " + std::to_string(i) + " is not positive");
        }
    }
    Vector r(prices.size() - 1);
    for (std::size_t i = 0; i + 1 < prices.size(); ++i) r[i] = (prices[i + 1] - prices[i]) / prices[i];
    return r;
}

double overall(std::span<const double> r) {
    double s = 0.0;
    for (double x : r) s += x;
    return s;
}

double std_dev(std::span<const double> r) {
    if (r.size() < 2) throw Error(ErrorCode::TooFewReturns, "standard deviation needs at least two returns");
    if (std::all_of(r.begin(), r.end(), [&](double x) { return x == r.front(); })) return 0.0;
    const double m = mean(r);
    double s = 0.0;
    for (double x : r) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(r.size() - 1));
}

std::string_view to_string(Strategy s) noexcept {
    return s == Strategy::OneOverN ? "one_over_n" : "positive_prediction";
}

Strategy parse_strategy(std::string_view text) {
    if (text == "one_over_n") return Strategy::OneOverN;
    if (text == "positive_prediction") return Strategy::PositivePrediction;
    throw Error(ErrorCode::InvalidConfig, "unknown strategy '" + std::string(text) + "'", std::string(text));
}

double sharpe(std::span<const double> r, const PortfolioConfig& cfg) {
    const double sigma = std_dev(r);
    if (!(sigma > 0.0)) throw Error(ErrorCode::ZeroVolatility, "returns have zero standard deviation");
    return (mean(r) - cfg.risk_free_rate) / sigma * std::sqrt(cfg.annualization);
}

PortfolioResult simulate_portfolio(std::span<const StockPanel> stocks, const PortfolioConfig& cfg) {
    if (stocks.empty()) throw Error(ErrorCode::EmptyInput, "portfolio needs at least one stock");
    const auto& ref = stocks.front();
    if (ref.prices.size() < 2) throw Error(ErrorCode::TooFewReturns, "evaluation window needs two or more days");
    for (const auto& s : stocks) {
        if (s.prices.size() != ref.prices.size() || s.dates != ref.dates) {
            throw Error(ErrorCode::DateMismatch, "stock '" + s.symbol + "' does not share the evaluation dates", s.symbol);
        }
        if (!s.dates.empty() && s.dates.size() != s.prices.size()) {
            throw Error(ErrorCode::DateMismatch, "stock '" + s.symbol + "' has dates and prices of different length",
                        s.symbol);
        }
        if (cfg.strategy == Strategy::PositivePrediction && s.forecasts.size() != s.prices.size() - 1) {
            throw Error(ErrorCode::LengthMismatch, "stock '" + s.symbol + "' needs one forecast per trading day",
                        s.symbol);
        }
    }

    std::vector<Vector> stock_returns;
    for (const auto& s : stocks) stock_returns.push_back(daily_returns(s.prices));

    const std::size_t days = ref.prices.size() - 1;
    PortfolioResult out;
    out.returns.r.assign(days, 0.0);
    out.contributions.assign(stocks.size(), Vector(days, 0.0));
    if (!ref.dates.empty()) out.returns.dates.assign(ref.dates.begin() + 1, ref.dates.end());

    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < days; ++i) {
        picked.clear();
        for (std::size_t s = 0; s < stocks.size(); ++s) {
            if (cfg.strategy == Strategy::OneOverN) {
                picked.push_back(s);
            } else {
                const double predicted = (stocks[s].forecasts[i] - stocks[s].prices[i]) / stocks[s].prices[i];
                if (predicted > 0.0) picked.push_back(s);
            }
        }
        if (picked.empty()) continue;  // cash
        const double w = 1.0 / static_cast<double>(picked.size());
        double day = 0.0;
        for (std::size_t s : picked) {
            out.contributions[s][i] = w * stock_returns[s][i];
            day += out.contributions[s][i];
        }
        out.returns.r[i] = day;
    }
    return out;
}

Attribution attribution(std::span<const std::pair<std::string, double>> per_stock, std::size_t top_n) {
    Attribution out;
    for (const auto& [symbol, c] : per_stock) {
        if (c > 0.0) out.gainers.push_back({symbol, c, 0.0});
        if (c < 0.0) out.losers.push_back({symbol, c, 0.0});
    }
    std::stable_sort(out.gainers.begin(), out.gainers.end(),
                     [](const auto& a, const auto& b) { return a.contribution > b.contribution; });
    std::stable_sort(out.losers.begin(), out.losers.end(),
                     [](const auto& a, const auto& b) { return a.contribution < b.contribution; });
    if (out.gainers.size() > top_n) out.gainers.resize(top_n);
    if (out.losers.size() > top_n) out.losers.resize(top_n);
    for (auto* side : {&out.gainers, &out.losers}) {
        double total = 0.0;
        for (const auto& e : *side) total += e.contribution;
        for (auto& e : *side) e.proportion = e.contribution / total;
    }
    return out;
}

std::map<std::string, std::map<std::size_t, double>> volatility_by_sector(std::span<const StockPanel> stocks,
                                                                         std::span<const std::size_t> periods) {
    std::map<std::string, std::map<std::size_t, double>> out;
    std::map<std::string, std::size_t> members;
    for (const auto& s : stocks) {
        auto& row = out[s.sector];
        for (std::size_t p : periods) row[p] += volatility(s.prices, p);
        ++members[s.sector];
    }
    for (auto& [sector, row] : out) {
        for (auto& [p, sigma] : row) sigma /= static_cast<double>(members[sector]);
    }
    return out;
}

BacktestReport run_backtest(std::span<const StockPanel> stocks, const PortfolioConfig& cfg,
                            std::span<const std::size_t> periods, std::size_t top_n) {
    const PortfolioResult sim = simulate_portfolio(stocks, cfg);
    BacktestReport rep;
    rep.strategy = cfg.strategy;
    rep.returns = sim.returns;
    rep.overall = overall(sim.returns.r);
    rep.std_dev = sim.returns.r.size() >= 2 ? std_dev(sim.returns.r) : 0.0;
    if (rep.std_dev > 0.0) rep.sharpe = sharpe(sim.returns.r, cfg);

    std::vector<std::pair<std::string, double>> per_stock;
    for (std::size_t s = 0; s < stocks.size(); ++s) per_stock.emplace_back(stocks[s].symbol, overall(sim.contributions[s]));
    rep.per_stock_attribution = attribution(per_stock, top_n);

    std::vector<std::size_t> usable;
    for (std::size_t p : periods) {
        if (stocks.front().prices.size() > p) usable.push_back(p);
    }
    rep.volatility_by_sector = volatility_by_sector(stocks, usable);
    return rep;
}

nlohmann::json to_json(const BacktestReport& report) {
    const auto entries = [](const std::vector<AttributionEntry>& side) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& e : side) a.push_back({{"symbol", e.symbol}, {"contribution", e.contribution}, {"proportion", e.proportion}});
        return a;
    };
    nlohmann::json vol = nlohmann::json::object();
    for (const auto& [sector, row] : report.volatility_by_sector) {
        nlohmann::json r = nlohmann::json::object();
        for (const auto& [p, sigma] : row) r[std::to_string(p)] = sigma;
        vol[sector] = r;
    }
    nlohmann::json dates = nlohmann::json::array();
    for (const auto& d : report.returns.dates) dates.push_back(d.iso());
    return {{"strategy", std::string(to_string(report.strategy))},
            {"overall", report.overall},
            {"std_dev", report.std_dev},
            {"sharpe", report.sharpe ? nlohmann::json(*report.sharpe) : nlohmann::json(nullptr)},
            {"per_stock_attribution", {{"gainers", entries(report.per_stock_attribution.gainers)},
                                       {"losers", entries(report.per_stock_attribution.losers)}}},
            {"volatility_by_sector", vol},
            {"daily_returns", {{"dates", dates}, {"r", report.returns.r}}}};
}

}  // namespace ftsmoe
