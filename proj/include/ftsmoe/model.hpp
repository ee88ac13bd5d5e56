// SPDX-License-Identifier: Apache-2.0
//
// The full forecaster: point embedding + text projection, decoder stack and
// multi-resolution heads, with a canonical tensor ordering shared by the
// optimizer and the checkpoint format.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ftsmoe/embedding.hpp"
#include "ftsmoe/heads_loss.hpp"
#include "ftsmoe/moe_transformer.hpp"

namespace ftsmoe {

struct ModelParams {
    TimeEmbedParams time;
    TextProjection text;
    std::vector<LayerParams> layers;
    MultiResHeads heads;
};

struct Model {
    ModelConfig config;
    ModelParams params;
};

/// Fan-based uniform init (bound sqrt(6 / (fan_in + fan_out))) for matrices,
/// zero biases, unit norm gains.
Model init_model(const ModelConfig& config, std::uint64_t seed);

/// Same layout as `like`, every entry zero.
ModelParams zeros_like(const ModelParams& like);

template <typename T>
struct TensorView {
    std::string name;
    std::vector<std::size_t> shape;
    std::span<T> values;
    bool decay = false;  // matrices decay, biases and norm gains do not
};

/// All learnable tensors in canonical order.
std::vector<TensorView<double>> tensors(ModelParams& params);
std::vector<TensorView<const double>> tensors(const ModelParams& params);

/// Throws ShapeMismatch if any tensor disagrees with the config.
void check_shapes(const Model& model);

/// Embeds and fuses one sequence. `texts` is either empty (no text anywhere)
/// or aligned one-to-one with `values`.
Matrix embed_tokens(const Model& model, std::span<const double> values, std::span<const std::optional<Vector>> texts);

/// Runs the decoder stack over already-fused tokens.
Matrix model_forward(const Model& model, const Matrix& tokens, std::span<const std::size_t> boundaries,
                     std::vector<RoutingStats>* stats = nullptr);

}  // namespace ftsmoe
