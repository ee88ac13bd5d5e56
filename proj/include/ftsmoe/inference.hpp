// SPDX-License-Identifier: Apache-2.0
//
// Arbitrary-horizon forecasting by chaining the multi-resolution heads.
#pragma once

#include <optional>
#include <vector>

#include "ftsmoe/data_model.hpp"
#include "ftsmoe/model.hpp"

namespace ftsmoe {

/// Largest horizon <= remaining, repeated until N is covered. Throws
/// InvalidConfig when `horizons` has no 1-step head (and N > 0).
std::vector<std::size_t> greedy_schedule(std::size_t n, std::span<const std::size_t> horizons);

struct ForecastRequest {
    Vector values;                             // raw context, price units
    std::vector<std::optional<Vector>> texts;  // empty, or one entry per value
    std::size_t horizon = 1;
};

struct Forecast {
    Vector values;      // price units
    Vector normalized;  // same forecast in context-normalized units
    std::vector<std::size_t> schedule;
    NormStats stats;
};

/// The context is z-scored once; each chunk's predictions are appended as
/// text-absent tokens in normalized space. When the running context exceeds
/// max_seq_len the oldest tokens are dropped.
Forecast forecast(const Model& model, const ForecastRequest& req);

}  // namespace ftsmoe
