// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/config_json.hpp"

#include <functional>
#include <map>
#include <string>

#include "ftsmoe/error.hpp"

namespace ftsmoe {

namespace {

using Setter = std::function<void(const nlohmann::json&)>;

[[noreturn]] void bad(const std::string& key, const std::string& what) {
    throw Error(ErrorCode::InvalidConfig, "config key '" + key + "': " + what, key);
}

std::size_t as_count(const nlohmann::json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<long long>() < 0) bad(key, "expected a non-negative integer");
    return v.get<std::size_t>();
}

double as_real(const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) bad(key, "expected a number");
    return v.get<double>();
}

void apply(const nlohmann::json& j, const std::string& where, const std::map<std::string, Setter>& fields) {
    if (!j.is_object()) bad(where, "expected an object");
    for (const auto& [key, value] : j.items()) {
        const auto it = fields.find(key);
        if (it == fields.end()) bad(where + "." + key, "unknown key");
        it->second(value);
    }
}

}  // namespace

nlohmann::json to_json(const ModelConfig& c) {
    return {{"n_layers", c.n_layers}, {"n_heads", c.n_heads},     {"d_model", c.d_model},
            {"d_ff", c.d_ff},         {"n_experts", c.n_experts}, {"top_k", c.top_k},
            {"d_expert", c.d_expert}, {"horizons", c.horizons},   {"rope_base", c.rope_base},
            {"norm_eps", c.norm_eps}, {"d_text", c.d_text},       {"max_seq_len", c.max_seq_len}};
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"steps", c.steps},
            {"batch_size", c.batch_size},
            {"max_seq_len", c.max_seq_len},
            {"warmup_steps", c.warmup_steps},
            {"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps},
            {"max_grad_norm", c.max_grad_norm},
            {"seed", c.seed},
            {"threads", c.threads}};
}

nlohmann::json to_json(const LossConfig& c) { return {{"delta", c.delta}, {"alpha", c.alpha}}; }

void apply_json(const nlohmann::json& j, ModelConfig& c, const std::string& where) {
    const auto count = [&](std::size_t& field, const char* key) {
        return std::pair<const std::string, Setter>{key, [&field, k = where + "." + key](const nlohmann::json& v) {
                                                        field = as_count(v, k);
                                                    }};
    };
    const auto real = [&](double& field, const char* key) {
        return std::pair<const std::string, Setter>{key, [&field, k = where + "." + key](const nlohmann::json& v) {
                                                        field = as_real(v, k);
                                                    }};
    };
    apply(j, where,
          {count(c.n_layers, "n_layers"), count(c.n_heads, "n_heads"), count(c.d_model, "d_model"),
           count(c.d_ff, "d_ff"), count(c.n_experts, "n_experts"), count(c.top_k, "top_k"),
           count(c.d_expert, "d_expert"), real(c.rope_base, "rope_base"), real(c.norm_eps, "norm_eps"),
           count(c.d_text, "d_text"), count(c.max_seq_len, "max_seq_len"),
           {"horizons", [&](const nlohmann::json& v) {
                const std::string k = where + ".horizons";
                if (!v.is_array()) bad(k, "expected a list of integers");
                c.horizons.clear();
                for (const auto& h : v) c.horizons.push_back(as_count(h, k));
            }}});
}

void apply_json(const nlohmann::json& j, TrainConfig& c, const std::string& where) {
    const auto count = [&](std::size_t& field, const char* key) {
        return std::pair<const std::string, Setter>{key, [&field, k = where + "." + key](const nlohmann::json& v) {
                                                        field = as_count(v, k);
                                                    }};
    };
    const auto real = [&](double& field, const char* key) {
        return std::pair<const std::string, Setter>{key, [&field, k = where + "." + key](const nlohmann::json& v) {
                                                        field = as_real(v, k);
                                                    }};
    };
    apply(j, where,
          {count(c.steps, "steps"), count(c.batch_size, "batch_size"), count(c.max_seq_len, "max_seq_len"),
           count(c.warmup_steps, "warmup_steps"), real(c.lr, "lr"), real(c.weight_decay, "weight_decay"),
           real(c.beta1, "beta1"), real(c.beta2, "beta2"), real(c.eps, "eps"), real(c.max_grad_norm, "max_grad_norm"),
           count(c.threads, "threads"),
           {"seed", [&](const nlohmann::json& v) { c.seed = as_count(v, where + ".seed"); }}});
    // warmup follows a new step count unless it was given too
    if (j.contains("steps") && !j.contains("warmup_steps")) c.warmup_steps = c.steps / 10;
}

void apply_json(const nlohmann::json& j, LossConfig& c, const std::string& where) {
    apply(j, where,
          {{"delta", [&](const nlohmann::json& v) { c.delta = as_real(v, where + ".delta"); }},
           {"alpha", [&](const nlohmann::json& v) { c.alpha = as_real(v, where + ".alpha"); }}});
}

}  // namespace ftsmoe
