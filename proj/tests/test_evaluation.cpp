// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "ftsmoe/error.hpp"
#include "ftsmoe/evaluation.hpp"
#include "support.hpp"

using namespace ftsmoe;
using namespace ftsmoe::testing;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::Usage;
}

// ---- brute-force oracles, written without the library helpers --------------

double o_mean(const std::vector<double>& v) {
    long double s = 0;
    for (double x : v) s += x;
    return static_cast<double>(s / v.size());
}

double o_vol(const std::vector<double>& y, std::size_t p) {
    std::vector<double> d;
    for (std::size_t i = 0; i + p < y.size(); ++i) d.push_back(y[i + p] - y[i]);
    const double m = o_mean(d);
    long double ss = 0;
    for (double x : d) ss += (x - m) * (x - m);
    return std::sqrt(static_cast<double>(ss / d.size()));
}

double o_sd(const std::vector<double>& r) {
    const double m = o_mean(r);
    long double ss = 0;
    for (double x : r) ss += (x - m) * (x - m);
    return std::sqrt(static_cast<double>(ss / (r.size() - 1)));
}

std::vector<StockPanel> random_panel(std::mt19937_64& rng, std::size_t stocks, std::size_t days, bool foresight) {
    std::vector<StockPanel> out;
    Date d0 = Date::from_ymd(2022, 3, 1);
    for (std::size_t s = 0; s < stocks; ++s) {
        StockPanel p;
        p.symbol = "S" + std::to_string(s);
        p.sector = s % 2 ? "Tech" : "Energy";
        double price = 50.0 + 50.0 * uniform(rng, 0.0, 1.0);
        for (std::size_t i = 0; i < days; ++i) {
            p.dates.push_back(d0 + static_cast<int>(i));
            p.prices.push_back(price);
            price *= 1.0 + 0.03 * uniform(rng);
        }
        for (std::size_t i = 0; i + 1 < days; ++i) {
            p.forecasts.push_back(foresight ? p.prices[i + 1] : p.prices[i] * (1.0 + 0.02 * uniform(rng)));
        }
        out.push_back(std::move(p));
    }
    return out;
}

/// Day-by-day weights recomputed from scratch.
std::vector<double> portfolio_oracle(const std::vector<StockPanel>& panel, bool positive_only) {
    std::vector<double> r;
    for (std::size_t i = 0; i + 1 < panel[0].prices.size(); ++i) {
        double sum = 0;
        int held = 0;
        for (const auto& s : panel) {
            if (positive_only && !(s.forecasts[i] > s.prices[i])) continue;
            sum += s.prices[i + 1] / s.prices[i] - 1.0;
            ++held;
        }
        r.push_back(held ? sum / held : 0.0);
    }
    return r;
}

}  // namespace

TEST_CASE("mse and mae") {
    const Vector a{1.5, -2.0, 3.0};
    CHECK(mse(a, a) == 0.0);
    CHECK(mae(a, a) == 0.0);
    CHECK(mse(Vector{0, 0}, Vector{1, -1}) == 1.0);
    CHECK(mae(Vector{0, 0}, Vector{1, -1}) == 1.0);
    CHECK(code_of([] { mse(Vector{1}, Vector{1, 2}); }) == ErrorCode::LengthMismatch);
    CHECK(code_of([] { mae(Vector{}, Vector{}); }) == ErrorCode::EmptyInput);

    std::mt19937_64 rng(50);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng() % 300;
        const Vector t = random_vector(rng, n, 10.0), p = random_vector(rng, n, 10.0);
        long double se = 0, ae = 0;
        for (std::size_t i = 0; i < n; ++i) {
            se += (t[i] - p[i]) * (t[i] - p[i]);
            ae += std::abs(t[i] - p[i]);
        }
        CHECK(std::abs(mse(t, p) - static_cast<double>(se / n)) < 1e-12);
        CHECK(std::abs(mae(t, p) - static_cast<double>(ae / n)) < 1e-12);
    }
}

TEST_CASE("volatility") {
    Vector line(50);
    for (std::size_t i = 0; i < line.size(); ++i) line[i] = static_cast<double>(i);
    CHECK(volatility(line, 1) == 0.0);
    for (std::size_t p : {1UL, 7UL, 30UL}) CHECK(volatility(Vector(40, 3.0), p) == 0.0);
    CHECK(code_of([] { volatility(Vector(7, 1.0), 7); }) == ErrorCode::SeriesTooShort);

    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector y = random_vector(rng, 200, 20.0);
        for (std::size_t p : {1UL, 7UL, 30UL}) {
            CHECK(std::abs(volatility(y, p) - o_vol(y, p)) < 1e-10);
            Vector shifted = y;
            for (auto& v : shifted) v += 1234.5;
            CHECK(std::abs(volatility(shifted, p) - volatility(y, p)) < 1e-9);
        }
    }
}

TEST_CASE("daily returns, overall and std dev") {
    const Vector up = daily_returns(Vector{100, 110});
    REQUIRE(up.size() == 1);
    CHECK(up[0] == doctest::Approx(0.10).epsilon(1e-15));
    CHECK(daily_returns(Vector{5, 5, 5}) == Vector{0, 0});
    CHECK(code_of([] { daily_returns(Vector{1, 0, 2}); }) == ErrorCode::NonPositivePrice);
    CHECK(code_of([] { daily_returns(Vector{1}); }) == ErrorCode::TooFewReturns);

    CHECK(overall(Vector{0.1, -0.1}) == 0.0);
    CHECK(overall(Vector{}) == 0.0);
    CHECK(std_dev(Vector{1, 1}) == 0.0);
    CHECK(std_dev(Vector(9, 0.37)) == 0.0);
    CHECK(std_dev(Vector{0, 2}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(code_of([] { std_dev(Vector{1}); }) == ErrorCode::TooFewReturns);

    std::mt19937_64 rng(52);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector a = random_vector(rng, 100, 0.05), b = random_vector(rng, 37, 0.05);
        Vector ab = a;
        ab.insert(ab.end(), b.begin(), b.end());
        CHECK(std::abs(overall(ab) - (overall(a) + overall(b))) < 1e-14);
        long double s = 0;
        for (double v : a) s += v;
        CHECK(std::abs(overall(a) - static_cast<double>(s)) < 1e-12);
        CHECK(std::abs(std_dev(a) - o_sd(a)) < 1e-12);

        Vector prices{100.0};
        for (int i = 0; i < 60; ++i) prices.push_back(prices.back() * (1.0 + 0.02 * uniform(rng)));
        const Vector r = daily_returns(prices);
        for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(r[i] - (prices[i + 1] / prices[i] - 1.0)) < 1e-14);
    }
}

TEST_CASE("sharpe") {
    PortfolioConfig cfg;
    const double s = sharpe(Vector{0.01, 0.03}, cfg);
    CHECK(s == doctest::Approx(0.02 / std::sqrt(0.0002) * std::sqrt(252.0)).epsilon(1e-12));
    CHECK(s == doctest::Approx(22.45).epsilon(1e-3));

    cfg.risk_free_rate = 0.02;
    CHECK(std::abs(sharpe(Vector{0.01, 0.03}, cfg)) < 1e-15);
    CHECK(code_of([&] { sharpe(Vector(10, 0.004), cfg); }) == ErrorCode::ZeroVolatility);

    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector r = random_vector(rng, 80, 0.03);
        PortfolioConfig base;
        base.risk_free_rate = 0.0001;
        Vector shifted = r;
        for (auto& v : shifted) v += 0.004;
        PortfolioConfig moved = base;
        moved.risk_free_rate += 0.004;
        CHECK(std::abs(sharpe(shifted, moved) - sharpe(r, base)) < 1e-9);
        const double want = (o_mean(r) - base.risk_free_rate) / o_sd(r) * std::sqrt(252.0);
        CHECK(std::abs(sharpe(r, base) - want) < 1e-10);
    }
}

TEST_CASE("strategy names") {
    CHECK(to_string(Strategy::OneOverN) == "one_over_n");
    CHECK(parse_strategy("positive_prediction") == Strategy::PositivePrediction);
    CHECK(code_of([] { parse_strategy("momentum"); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("hand-built three stock portfolio") {
    const Date d0 = Date::from_ymd(2023, 5, 1);
    std::vector<Date> dates;
    for (int i = 0; i < 5; ++i) dates.push_back(d0 + i);
    // A rises 10% a day, B falls 10% a day, C is flat
    std::vector<StockPanel> panel{
        {"A", "X", dates, {100, 110, 121, 133.1, 146.41}, {105, 100, 130, 140}},
        {"B", "X", dates, {100, 90, 81, 72.9, 65.61}, {101, 95, 70, 60}},
        {"C", "Y", dates, {10, 10, 10, 10, 10}, {11, 9, 9, 9}},
    };
    const auto one = simulate_portfolio(panel, PortfolioConfig{Strategy::OneOverN});
    REQUIRE(one.returns.r.size() == 4);
    for (double r : one.returns.r) CHECK(r == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(one.returns.dates.front() == dates[1]);

    const auto pos = simulate_portfolio(panel, PortfolioConfig{Strategy::PositivePrediction});
    // day 0: A, B, C predicted up -> (0.1 - 0.1 + 0) / 3
    // day 1: A down, B up, C down -> B alone, -0.1
    // day 2: A up only -> 0.1
    // day 3: A up only -> 0.1
    CHECK(pos.returns.r[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(pos.returns.r[1] == doctest::Approx(-0.1).epsilon(1e-12));
    CHECK(pos.returns.r[2] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(pos.returns.r[3] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(pos.contributions[1][1] == doctest::Approx(-0.1).epsilon(1e-12));
    CHECK(pos.contributions[0][1] == 0.0);

    // nobody predicted up: exactly zero
    for (auto& s : panel) {
        for (std::size_t i = 0; i < s.forecasts.size(); ++i) s.forecasts[i] = s.prices[i] * 0.5;
    }
    for (double r : simulate_portfolio(panel, PortfolioConfig{Strategy::PositivePrediction}).returns.r) CHECK(r == 0.0);

    // all predicted up: identical to 1/N
    for (auto& s : panel) {
        for (std::size_t i = 0; i < s.forecasts.size(); ++i) s.forecasts[i] = s.prices[i] * 2.0;
    }
    CHECK(simulate_portfolio(panel, PortfolioConfig{Strategy::PositivePrediction}).returns.r == one.returns.r);

    auto shifted = panel;
    shifted[2].dates[3] = shifted[2].dates[3] + 1;
    CHECK(code_of([&] { simulate_portfolio(shifted, PortfolioConfig{}); }) == ErrorCode::DateMismatch);
    auto short_fc = panel;
    short_fc[0].forecasts.pop_back();
    CHECK(code_of([&] { simulate_portfolio(short_fc, PortfolioConfig{Strategy::PositivePrediction}); }) ==
          ErrorCode::LengthMismatch);
}

TEST_CASE("attribution") {
    const std::vector<std::pair<std::string, double>> single{{"A", 0.2}};
    const Attribution a = attribution(single);
    REQUIRE(a.gainers.size() == 1);
    CHECK(a.gainers[0].proportion == 1.0);
    CHECK(a.losers.empty());

    const std::vector<std::pair<std::string, double>> pair{{"U", 0.05}, {"D", -0.05}};
    const Attribution b = attribution(pair);
    CHECK(b.gainers[0].proportion == 1.0);
    CHECK(b.losers[0].proportion == 1.0);

    std::mt19937_64 rng(54);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::pair<std::string, double>> per;
        for (int s = 0; s < 15; ++s) per.emplace_back("S" + std::to_string(s), uniform(rng) * 0.1);
        const Attribution r = attribution(per, 5);
        CHECK(r.gainers.size() <= 5);
        CHECK(r.losers.size() <= 5);
        std::vector<double> pos, neg;
        for (const auto& [name, c] : per) (c > 0 ? pos : neg).push_back(c);
        std::sort(pos.rbegin(), pos.rend());
        std::sort(neg.begin(), neg.end());
        pos.resize(std::min<std::size_t>(5, pos.size()));
        neg.resize(std::min<std::size_t>(5, neg.size()));
        double ps = 0, ns = 0;
        for (double v : pos) ps += v;
        for (double v : neg) ns += v;
        for (std::size_t i = 0; i < pos.size(); ++i) {
            CHECK(r.gainers[i].contribution == pos[i]);
            CHECK(std::abs(r.gainers[i].proportion - pos[i] / ps) < 1e-12);
        }
        for (std::size_t i = 0; i < neg.size(); ++i) {
            CHECK(r.losers[i].contribution == neg[i]);
            CHECK(std::abs(r.losers[i].proportion - neg[i] / ns) < 1e-12);
        }
    }
}

TEST_CASE("200-day panel against brute-force recomputation") {
    std::mt19937_64 rng(55);
    const auto panel = random_panel(rng, 6, 200, false);
    for (bool positive : {false, true}) {
        PortfolioConfig cfg{positive ? Strategy::PositivePrediction : Strategy::OneOverN, 0.0001, 252.0};
        const BacktestReport rep = run_backtest(panel, cfg);
        const auto r = portfolio_oracle(panel, positive);
        REQUIRE(rep.returns.r.size() == r.size());
        for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(rep.returns.r[i] - r[i]) < 1e-10);
        long double sum = 0;
        for (double v : r) sum += v;
        CHECK(std::abs(rep.overall - static_cast<double>(sum)) < 1e-10);
        CHECK(std::abs(rep.std_dev - o_sd(r)) < 1e-10);
        REQUIRE(rep.sharpe.has_value());
        CHECK(std::abs(*rep.sharpe - (o_mean(r) - 0.0001) / o_sd(r) * std::sqrt(252.0)) < 1e-10);
    }
    const auto vol = volatility_by_sector(panel, std::vector<std::size_t>{1, 7, 30});
    for (const char* sector : {"Tech", "Energy"}) {
        for (std::size_t p : {1UL, 7UL, 30UL}) {
            double sum = 0;
            int n = 0;
            for (const auto& s : panel) {
                if (s.sector != sector) continue;
                sum += o_vol(s.prices, p);
                ++n;
            }
            CHECK(std::abs(vol.at(sector).at(p) - sum / n) < 1e-10);
        }
    }
    const auto mse_v = mse(panel[0].prices, panel[1].prices);
    double se = 0;
    for (std::size_t i = 0; i < 200; ++i) se += (panel[0].prices[i] - panel[1].prices[i]) * (panel[0].prices[i] - panel[1].prices[i]);
    CHECK(std::abs(mse_v - se / 200) < 1e-10);
}

TEST_CASE("perfect foresight weakly dominates equal weighting") {
    std::mt19937_64 rng(56);
    for (int trial = 0; trial < 50; ++trial) {
        const auto panel = random_panel(rng, 3, 40, true);
        const auto pos = simulate_portfolio(panel, PortfolioConfig{Strategy::PositivePrediction});
        const auto one = simulate_portfolio(panel, PortfolioConfig{Strategy::OneOverN});
        CHECK(overall(pos.returns.r) >= overall(one.returns.r));
        for (std::size_t i = 0; i < pos.returns.r.size(); ++i) {
            bool any_up = false;
            for (const auto& s : panel) any_up = any_up || s.prices[i + 1] > s.prices[i];
            if (!any_up) CHECK(pos.returns.r[i] == 0.0);
        }
    }
}

TEST_CASE("backtest report json") {
    std::mt19937_64 rng(57);
    const auto panel = random_panel(rng, 4, 60, false);
    const auto rep = run_backtest(panel, PortfolioConfig{Strategy::PositivePrediction});
    const auto j = to_json(rep);
    for (const char* key : {"strategy", "overall", "std_dev", "sharpe", "per_stock_attribution", "volatility_by_sector"}) {
        CHECK(j.contains(key));
    }
    CHECK(j.at("strategy") == "positive_prediction");
    CHECK(j.at("overall").get<double>() == rep.overall);

    std::vector<StockPanel> flat(2);
    for (std::size_t s = 0; s < 2; ++s) {
        flat[s] = panel[s];
        flat[s].prices.assign(60, 10.0);
    }
    const auto still = run_backtest(flat, PortfolioConfig{});
    CHECK_FALSE(still.sharpe.has_value());
    CHECK(to_json(still).at("sharpe").is_null());
}
