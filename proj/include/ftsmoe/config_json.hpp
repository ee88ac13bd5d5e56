// SPDX-License-Identifier: Apache-2.0
//
// JSON mapping for the configuration structs. Reading starts from the
// defaults and overrides only the keys present; unknown keys and wrongly typed
// values throw InvalidConfig naming the offending key.
#pragma once

#include <json.hpp>

#include "ftsmoe/heads_loss.hpp"
#include "ftsmoe/moe_transformer.hpp"
#include "ftsmoe/training.hpp"

namespace ftsmoe {

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const LossConfig& c);

void apply_json(const nlohmann::json& j, ModelConfig& c, const std::string& where = "model");
void apply_json(const nlohmann::json& j, TrainConfig& c, const std::string& where = "train");
void apply_json(const nlohmann::json& j, LossConfig& c, const std::string& where = "loss");

}  // namespace ftsmoe
