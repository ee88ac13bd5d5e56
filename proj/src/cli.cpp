// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ftsmoe/checkpoint.hpp"
#include "ftsmoe/config_json.hpp"
#include "ftsmoe/error.hpp"
#include "ftsmoe/inference.hpp"
#include "ftsmoe/model.hpp"
#include "ftsmoe/report.hpp"

namespace ftsmoe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad_key(const std::string& key, const std::string& what) {
    throw Error(ErrorCode::InvalidConfig, "config key '" + key + "': " + what, key);
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

json data_json(const DataConfig& d) {
    return {{"prices_dir", d.prices_dir.string()},
            {"embeddings_dir", d.embeddings_dir.string()},
            {"sectors", d.sectors},
            {"missing_text", d.missing_text == MissingTextPolicy::Bypass ? "bypass" : "zero_fill"}};
}

json eval_json(const EvalConfig& e) {
    return {{"strategy", std::string(to_string(e.portfolio.strategy))},
            {"risk_free_rate", e.portfolio.risk_free_rate},
            {"annualization", e.portfolio.annualization},
            {"context_len", e.context_len},
            {"eval_days", e.eval_days},
            {"universe", e.universe},
            {"periods", e.periods}};
}

template <typename T>
T typed(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        bad_key(key, "wrong type");
    }
}

std::size_t count(const json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<long long>() < 0) bad_key(key, "expected a non-negative integer");
    return v.get<std::size_t>();
}

void apply_data(const json& j, DataConfig& d) {
    if (!j.is_object()) bad_key("data", "expected an object");
    for (const auto& [k, v] : j.items()) {
        const std::string key = "data." + k;
        if (k == "prices_dir") {
            d.prices_dir = typed<std::string>(v, key);
        } else if (k == "embeddings_dir") {
            d.embeddings_dir = typed<std::string>(v, key);
        } else if (k == "sectors") {
            d.sectors = typed<std::map<std::string, std::string>>(v, key);
        } else if (k == "missing_text") {
            const auto s = typed<std::string>(v, key);
            if (s == "bypass") {
                d.missing_text = MissingTextPolicy::Bypass;
            } else if (s == "zero_fill") {
                d.missing_text = MissingTextPolicy::ZeroFill;
            } else {
                bad_key(key, "expected 'bypass' or 'zero_fill'");
            }
        } else {
            bad_key(key, "unknown key");
        }
    }
}

void apply_eval(const json& j, EvalConfig& e) {
    if (!j.is_object()) bad_key("eval", "expected an object");
    for (const auto& [k, v] : j.items()) {
        const std::string key = "eval." + k;
        if (k == "strategy") {
            e.portfolio.strategy = parse_strategy(typed<std::string>(v, key));
        } else if (k == "risk_free_rate") {
            if (!v.is_number()) bad_key(key, "expected a number");
            e.portfolio.risk_free_rate = v.get<double>();
        } else if (k == "annualization") {
            if (!v.is_number() || !(v.get<double>() > 0.0)) bad_key(key, "expected a positive number");
            e.portfolio.annualization = v.get<double>();
        } else if (k == "context_len") {
            e.context_len = count(v, key);
            if (e.context_len == 0) bad_key(key, "must be >= 1");
        } else if (k == "eval_days") {
            e.eval_days = count(v, key);
        } else if (k == "universe") {
            e.universe = typed<std::vector<std::string>>(v, key);
        } else if (k == "periods") {
            if (!v.is_array()) bad_key(key, "expected a list of integers");
            e.periods.clear();
            for (const auto& p : v) e.periods.push_back(count(p, key));
        } else {
            bad_key(key, "unknown key");
        }
    }
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open file", path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedLine, std::string("invalid JSON: ") + e.what(), path.string());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open output file", path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "failed writing output file", path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---- data -----------------------------------------------------------------

struct SymbolData {
    PriceSeries prices;
    AlignedDataset aligned;
    std::size_t text_days = 0;
};

std::vector<SymbolData> load_universe(const RunConfig& cfg, bool require_text_width) {
    const auto& d = cfg.data;
    if (d.prices_dir.empty()) throw Error(ErrorCode::InvalidConfig, "data.prices_dir is not set", "data.prices_dir");
    if (!fs::is_directory(d.prices_dir)) throw Error(ErrorCode::IoError, "prices directory not found", d.prices_dir.string());
    if (!d.embeddings_dir.empty() && !fs::is_directory(d.embeddings_dir)) {
        throw Error(ErrorCode::IoError, "embeddings directory not found", d.embeddings_dir.string());
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(d.prices_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorCode::EmptyInput, "no price CSV files found", d.prices_dir.string());

    std::vector<SymbolData> out;
    for (const auto& f : files) {
        const std::string symbol = f.stem().string();
        if (!cfg.eval.universe.empty() &&
            std::find(cfg.eval.universe.begin(), cfg.eval.universe.end(), symbol) == cfg.eval.universe.end()) {
            continue;
        }
        const auto sector = d.sectors.find(symbol);
        SymbolData s;
        s.prices = load_price_csv(f, symbol, sector == d.sectors.end() ? "Unknown" : sector->second);
        std::vector<TextEmbeddingRecord> texts;
        if (!d.embeddings_dir.empty()) {
            const fs::path emb = d.embeddings_dir / (symbol + ".jsonl");
            if (fs::exists(emb)) texts = load_embedding_jsonl(emb);
        }
        const std::size_t width = embedding_width(texts);
        if (require_text_width && width != 0 && width != cfg.model.d_text) {
            throw Error(ErrorCode::WidthMismatch,
                        "embeddings for " + symbol + " have width " + std::to_string(width) + ", model expects d_text " +
                            std::to_string(cfg.model.d_text),
                        symbol);
        }
        const AlignedDataset observed = align(s.prices, texts, MissingTextPolicy::Bypass);
        for (const auto& step : observed.steps) s.text_days += step.text.has_value() ? 1 : 0;
        s.aligned = d.missing_text == MissingTextPolicy::Bypass ? observed : align(s.prices, texts, d.missing_text);
        out.push_back(std::move(s));
    }
    for (const auto& sym : cfg.eval.universe) {
        if (std::none_of(out.begin(), out.end(), [&](const SymbolData& s) { return s.prices.symbol == sym; })) {
            throw Error(ErrorCode::IoError, "no price file for symbol in universe", sym);
        }
    }
    return out;
}

ForecastRequest request_from(const AlignedDataset& ds, std::size_t end, std::size_t context_len, std::size_t horizon) {
    ForecastRequest req;
    req.horizon = horizon;
    const std::size_t begin = end > context_len ? end - context_len : 0;
    for (std::size_t i = begin; i < end; ++i) {
        req.values.push_back(ds.steps[i].value);
        req.texts.push_back(ds.steps[i].text);
    }
    return req;
}

fs::path checkpoint_path(const RunConfig& cfg, const std::string& flag) {
    return flag.empty() ? cfg.out_dir / "model.ckpt" : fs::path(flag);
}

// ---- commands ---------------------------------------------------------------

json cmd_prepare(const RunConfig& cfg) {
    const auto universe = load_universe(cfg, false);
    json symbols = json::array();
    std::size_t total = 0, with_text = 0;
    for (const auto& s : universe) {
        std::string lines;
        for (const auto& step : s.aligned.steps) {
            json row{{"date", step.date.iso()}, {"value", step.value}};
            row["text"] = step.text ? json(*step.text) : json(nullptr);
            lines += row.dump() + "\n";
        }
        write_text(cfg.out_dir / "prepared" / (s.prices.symbol + ".jsonl"), lines);
        const double coverage = s.prices.values.empty() ? 0.0 : static_cast<double>(s.text_days) / static_cast<double>(s.prices.values.size());
        symbols.push_back({{"symbol", s.prices.symbol},
                           {"sector", s.prices.sector},
                           {"total_days", s.prices.total_days()},
                           {"calendar_days", calendar_span_days(s.prices)},
                           {"first_date", s.prices.dates.front().iso()},
                           {"last_date", s.prices.dates.back().iso()},
                           {"text_days", s.text_days},
                           {"text_coverage", coverage}});
        total += s.prices.total_days();
        with_text += s.text_days;
    }
    const json summary{{"seed", cfg.seed},
                       {"symbols", symbols},
                       {"total_days", total},
                       {"text_days", with_text},
                       {"text_coverage", total == 0 ? 0.0 : static_cast<double>(with_text) / static_cast<double>(total)}};
    write_json(cfg.out_dir / "prepare_summary.json", summary);
    return summary;
}

json cmd_train(const RunConfig& cfg) {
    const auto universe = load_universe(cfg, true);
    std::vector<AlignedDataset> train_sets;
    for (const auto& s : universe) {
        AlignedDataset ds = s.aligned;
        const std::size_t keep = ds.size() > cfg.eval.eval_days ? ds.size() - cfg.eval.eval_days : 0;
        ds.steps.resize(keep);
        if (ds.size() >= 2) train_sets.push_back(std::move(ds));
    }
    if (train_sets.empty()) throw Error(ErrorCode::SeriesTooShort, "no series has training days left after the held-out window");

    const auto packed = pack_sequences(train_sets, std::min(cfg.train.max_seq_len, cfg.model.max_seq_len));
    Model model = init_model(cfg.model, cfg.seed);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const TrainingLog log = train(model, packed, tc, cfg.loss);

    json symbols = json::array();
    for (const auto& s : train_sets) symbols.push_back(s.symbol);
    json meta{{"seed", cfg.seed}, {"steps", tc.steps}, {"symbols", symbols}, {"train", to_json(tc)}, {"loss", to_json(cfg.loss)}};
    if (!log.records.empty()) {
        meta["util_histogram"] = log.records.back().util_histogram;
        meta["final_loss"] = log.records.back().loss;
    }
    const fs::path ckpt = cfg.out_dir / "model.ckpt";
    fs::create_directories(cfg.out_dir);
    save_checkpoint(model, ckpt, meta);
    write_text(cfg.out_dir / "train_log.jsonl", log.to_jsonl());

    json summary{{"seed", cfg.seed}, {"checkpoint", ckpt.string()}, {"steps", tc.steps}, {"rows", packed.size()}};
    if (!log.records.empty()) {
        summary["first_loss"] = log.records.front().loss;
        summary["final_loss"] = log.records.back().loss;
    }
    return summary;
}

json cmd_forecast(const RunConfig& cfg, const std::string& symbol, std::size_t horizon, const std::string& ckpt_flag) {
    if (horizon == 0) throw Error(ErrorCode::Usage, "forecast horizon must be >= 1", "--horizon");
    if (symbol.empty()) throw Error(ErrorCode::Usage, "forecast needs --symbol", "--symbol");
    const Model model = load_checkpoint(checkpoint_path(cfg, ckpt_flag));
    RunConfig scoped = cfg;
    scoped.eval.universe = {symbol};
    const auto universe = load_universe(scoped, false);
    const auto& ds = universe.front().aligned;

    const Forecast fc = forecast(model, request_from(ds, ds.size(), cfg.eval.context_len, horizon));
    json dates = json::array();
    Date d = ds.steps.back().date;
    for (std::size_t i = 0; i < horizon; ++i) {
        do {
            d = d + 1;
        } while (d.weekday() >= 5);
        dates.push_back(d.iso());
    }
    json hist_dates = json::array(), hist_values = json::array();
    const std::size_t begin = ds.size() > cfg.eval.context_len ? ds.size() - cfg.eval.context_len : 0;
    for (std::size_t i = begin; i < ds.size(); ++i) {
        hist_dates.push_back(ds.steps[i].date.iso());
        hist_values.push_back(ds.steps[i].value);
    }
    const json out{{"seed", cfg.seed},
                   {"symbol", symbol},
                   {"horizon", horizon},
                   {"dates", dates},
                   {"values", fc.values},
                   {"schedule", fc.schedule},
                   {"context_stats", {{"mean", fc.stats.mean}, {"std", fc.stats.std}}},
                   {"history", {{"dates", hist_dates}, {"values", hist_values}}}};
    write_json(cfg.out_dir / ("forecast_" + symbol + ".json"), out);
    return out;
}

json cmd_backtest(const RunConfig& cfg, const std::string& ckpt_flag) {
    const Model model = load_checkpoint(checkpoint_path(cfg, ckpt_flag));
    const auto universe = load_universe(cfg, false);
    const std::size_t window = cfg.eval.eval_days + 1;
    if (cfg.eval.eval_days == 0) throw Error(ErrorCode::InvalidConfig, "eval.eval_days must be >= 1", "eval.eval_days");

    std::vector<StockPanel> panels;
    for (const auto& s : universe) {
        const auto& ds = s.aligned;
        if (ds.size() < window + 1) {
            throw Error(ErrorCode::SeriesTooShort, "series too short for the evaluation window", s.prices.symbol);
        }
        StockPanel p;
        p.symbol = s.prices.symbol;
        p.sector = s.prices.sector;
        const std::size_t start = ds.size() - window;
        for (std::size_t i = start; i < ds.size(); ++i) {
            p.dates.push_back(ds.steps[i].date);
            p.prices.push_back(ds.steps[i].value);
        }
        for (std::size_t i = start; i + 1 < ds.size(); ++i) {
            p.forecasts.push_back(forecast(model, request_from(ds, i + 1, cfg.eval.context_len, 1)).values.front());
        }
        panels.push_back(std::move(p));
    }
    const BacktestReport rep = run_backtest(panels, cfg.eval.portfolio, cfg.eval.periods);
    json out = to_json(rep);
    out["seed"] = cfg.seed;
    json fc = json::object();
    for (const auto& p : panels) fc[p.symbol] = p.forecasts;
    out["next_day_forecasts"] = fc;
    write_json(cfg.out_dir / "backtest.json", out);
    return out;
}

json cmd_inspect(const RunConfig& cfg, const std::string& ckpt_flag) {
    const LoadedCheckpoint ck = load_checkpoint_full(checkpoint_path(cfg, ckpt_flag));
    const ParamCount own = count_params(ck.model.config);
    const ParamCount paper = count_params(ModelConfig::paper());
    json out{{"seed", ck.metadata.value("seed", json(nullptr))},
             {"config", to_json(ck.model.config)},
             {"params", {{"total", own.total}, {"active", own.active}}},
             {"paper_config",
              {{"total", paper.total}, {"active", paper.active}, {"claimed_total", "113M"}, {"claimed_active", "50M"}}}};
    json table = json::array();
    if (ck.metadata.contains("util_histogram")) {
        const auto& hist = ck.metadata.at("util_histogram");
        for (std::size_t l = 0; l < hist.size(); ++l) {
            double total = 0.0;
            for (const auto& c : hist[l]) total += c.get<double>();
            json shares = json::array();
            for (const auto& c : hist[l]) shares.push_back(total > 0.0 ? c.get<double>() / total : 0.0);
            table.push_back({{"layer", l}, {"counts", hist[l]}, {"share", shares}});
        }
    }
    out["expert_utilization"] = table;
    return out;
}

json cmd_report(const RunConfig& cfg, const std::vector<std::string>& inputs) {
    if (inputs.empty()) throw Error(ErrorCode::Usage, "report needs at least one input file");
    json written = json::array();
    for (const auto& in : inputs) {
        const json src = read_json_file(in);
        std::vector<ChartFile> charts;
        if (src.contains("strategy")) {
            charts = backtest_charts(src);
        } else if (src.contains("schedule")) {
            charts = forecast_charts(src);
        } else {
            throw Error(ErrorCode::MalformedLine, "input is neither a backtest report nor a forecast file", in);
        }
        for (const auto& c : charts) {
            const fs::path svg = cfg.out_dir / "charts" / (c.stem + ".svg");
            json data = c.data;
            data["seed"] = cfg.seed;
            data["source"] = in;
            write_text(svg, c.svg);
            write_json(cfg.out_dir / "charts" / (c.stem + ".data.json"), data);
            written.push_back(svg.string());
        }
    }
    return {{"seed", cfg.seed}, {"charts", written}};
}

void emit_error(std::ostream& err, const std::string& code, const std::string& message, const std::string& context) {
    err << json{{"code", code}, {"message", message}, {"context", context}}.dump() << "\n";
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

json to_json(const RunConfig& cfg) {
    return {{"data", data_json(cfg.data)},   {"model", to_json(cfg.model)},       {"train", to_json(cfg.train)},
            {"loss", to_json(cfg.loss)},     {"eval", eval_json(cfg.eval)},       {"out_dir", cfg.out_dir.string()},
            {"seed", cfg.seed}};
}

RunConfig resolve_config(const std::optional<fs::path>& file, const EnvLookup& env) {
    RunConfig cfg;
    json j = json::object();
    if (file) {
        j = read_json_file(*file);
        if (!j.is_object()) bad_key("<root>", "config file must hold an object");
    }

    // environment overrides, one variable per known key
    const json defaults = to_json(cfg);
    for (const auto& [section, body] : defaults.items()) {
        if (body.is_object()) {
            for (const auto& [key, unused] : body.items()) {
                const auto v = env("FTSMOE_" + upper(section) + "_" + upper(key));
                if (!v) continue;
                json parsed = json::parse(*v, nullptr, false);
                if (parsed.is_discarded()) parsed = *v;
                if (!j.contains(section)) j[section] = json::object();
                j[section][key] = parsed;
            }
        } else if (const auto v = env("FTSMOE_" + upper(section))) {
            json parsed = json::parse(*v, nullptr, false);
            j[section] = parsed.is_discarded() ? json(*v) : parsed;
        }
    }

    for (const auto& [k, v] : j.items()) {
        if (k == "data") {
            apply_data(v, cfg.data);
        } else if (k == "model") {
            apply_json(v, cfg.model);
        } else if (k == "train") {
            apply_json(v, cfg.train);
        } else if (k == "loss") {
            apply_json(v, cfg.loss);
        } else if (k == "eval") {
            apply_eval(v, cfg.eval);
        } else if (k == "out_dir") {
            cfg.out_dir = typed<std::string>(v, k);
        } else if (k == "seed") {
            cfg.seed = count(v, k);
        } else {
            bad_key(k, "unknown key");
        }
    }
    // relative data paths are taken relative to the config file
    if (file) {
        const fs::path base = file->parent_path();
        for (fs::path* p : {&cfg.data.prices_dir, &cfg.data.embeddings_dir}) {
            if (!p->empty() && p->is_relative()) *p = base / *p;
        }
    }
    return cfg;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
    CLI::App app{"Text-fused mixture-of-experts forecaster", "ftsmoe"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "Seed for initialisation and batch sampling");
    app.add_option("--out", out_dir, "Output directory");

    std::string symbol, checkpoint, strategy;
    std::size_t horizon = 1;
    std::vector<std::string> inputs;

    auto* prepare = app.add_subcommand("prepare", "Align prices with text embeddings and summarise coverage");
    auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
    auto* forecast_cmd = app.add_subcommand("forecast", "Forecast the next N steps for one symbol");
    forecast_cmd->add_option("--symbol", symbol, "Symbol to forecast")->required();
    forecast_cmd->add_option("--horizon,-N", horizon, "Number of steps to forecast")->required();
    forecast_cmd->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/model.ckpt)");
    auto* backtest = app.add_subcommand("backtest", "Simulate the configured portfolio over the held-out window");
    backtest->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/model.ckpt)");
    backtest->add_option("--strategy", strategy, "one_over_n or positive_prediction");
    auto* inspect = app.add_subcommand("inspect", "Print parameter counts, config and expert utilisation");
    inspect->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/model.ckpt)");
    auto* report = app.add_subcommand("report", "Render SVG charts from backtest or forecast files");
    report->add_option("inputs", inputs, "Backtest report or forecast JSON files");

    std::vector<std::string> argv_store = args;
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        emit_error(err, "Usage", e.what(), "");
        return 2;
    }

    try {
        RunConfig cfg = resolve_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path), env);
        if (seed) cfg.seed = *seed;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!strategy.empty()) cfg.eval.portfolio.strategy = parse_strategy(strategy);

        json result;
        if (*prepare) {
            result = cmd_prepare(cfg);
        } else if (*train_cmd) {
            result = cmd_train(cfg);
        } else if (*forecast_cmd) {
            result = cmd_forecast(cfg, symbol, horizon, checkpoint);
        } else if (*backtest) {
            result = cmd_backtest(cfg, checkpoint);
        } else if (*inspect) {
            result = cmd_inspect(cfg, checkpoint);
        } else if (*report) {
            result = cmd_report(cfg, inputs);
        }
        out << result.dump(2) << "\n";
        return 0;
    } catch (const Error& e) {
        emit_error(err, std::string(to_string(e.code())), e.what(), e.context());
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        emit_error(err, "IoError", e.what(), e.path1().string());
        return exit_code_for(ErrorCode::IoError);
    }
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace ftsmoe
