// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: prepare, train, forecast, backtest, inspect, report.
//
// Settings resolve in four layers, later ones winning: built-in defaults, the
// JSON config file (--config), environment variables named
// FTSMOE_<SECTION>_<KEY> (for example FTSMOE_TRAIN_STEPS=200, plus FTSMOE_SEED
// and FTSMOE_OUT_DIR), and finally --seed / --out on the command line.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ftsmoe/data_model.hpp"
#include "ftsmoe/evaluation.hpp"
#include "ftsmoe/heads_loss.hpp"
#include "ftsmoe/moe_transformer.hpp"
#include "ftsmoe/training.hpp"

namespace ftsmoe {

struct DataConfig {
    std::filesystem::path prices_dir;
    std::filesystem::path embeddings_dir;  // optional; <SYMBOL>.jsonl per symbol
    std::map<std::string, std::string> sectors;
    MissingTextPolicy missing_text = MissingTextPolicy::Bypass;
};

struct EvalConfig {
    PortfolioConfig portfolio;
    std::size_t context_len = 64;
    std::size_t eval_days = 60;          // held out from training, used by backtest
    std::vector<std::string> universe;   // empty = every loaded symbol
    std::vector<std::size_t> periods{1, 7, 30};
};

struct RunConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    LossConfig loss;
    EvalConfig eval;
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 0;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Default layers + file + environment. Throws InvalidConfig.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env);
nlohmann::json to_json(const RunConfig& cfg);

std::optional<std::string> process_env(const std::string& name);

int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env);

}  // namespace ftsmoe
