// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/inference.hpp"

#include <algorithm>
#include <string>

#include "ftsmoe/error.hpp"

namespace ftsmoe {

std::vector<std::size_t> greedy_schedule(std::size_t n, std::span<const std::size_t> horizons) {
    std::vector<std::size_t> sorted(horizons.begin(), horizons.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    if (n > 0 && std::find(sorted.begin(), sorted.end(), 1) == sorted.end()) {
        throw Error(ErrorCode::InvalidConfig, "horizon set needs a 1-step head to cover every length");
    }
    std::vector<std::size_t> out;
    std::size_t remaining = n;
    while (remaining > 0) {
        const auto it = std::find_if(sorted.begin(), sorted.end(), [&](std::size_t h) { return h >= 1 && h <= remaining; });
        out.push_back(*it);
        remaining -= *it;
    }
    return out;
}

Forecast forecast(const Model& model, const ForecastRequest& req) {
    if (req.values.empty()) throw Error(ErrorCode::ShapeMismatch, "forecast context is empty");
    if (!req.texts.empty() && req.texts.size() != req.values.size()) {
        throw Error(ErrorCode::ShapeMismatch, "context has " + std::to_string(req.values.size()) + " values but " +
                                                  std::to_string(req.texts.size()) + " text slots");
    }
    if (req.horizon == 0) throw Error(ErrorCode::InvalidConfig, "forecast horizon must be >= 1");

    Forecast out;
    out.schedule = greedy_schedule(req.horizon, model.config.horizons);
    const NormalizedWindow norm = normalize_context(req.values);
    out.stats = norm.stats;

    Vector ctx = norm.values;
    std::vector<std::optional<Vector>> texts = req.texts;
    if (texts.empty()) texts.resize(ctx.size());
    const std::size_t cap = std::max<std::size_t>(1, model.config.max_seq_len);
    const std::size_t boundary[] = {0};

    for (std::size_t p : out.schedule) {
        if (ctx.size() > cap) {
            const auto drop = static_cast<std::ptrdiff_t>(ctx.size() - cap);
            ctx.erase(ctx.begin(), ctx.begin() + drop);
            texts.erase(texts.begin(), texts.begin() + drop);
        }
        const Matrix tokens = embed_tokens(model, ctx, texts);
        const Matrix hidden = model_forward(model, tokens, boundary);
        const Vector pred = head_forward(hidden.row(hidden.rows - 1), model.params.heads, model.params.heads.index_of(p));
        for (double v : pred) {
            ctx.push_back(v);
            texts.emplace_back();
            out.normalized.push_back(v);
        }
    }
    out.values = denormalize(out.normalized, out.stats);
    return out;
}

}  // namespace ftsmoe
