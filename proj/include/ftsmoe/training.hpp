// SPDX-License-Identifier: Apache-2.0
//
// Loss/gradient evaluation over packed rows, AdamW with warmup + cosine
// schedule, and the training loop.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ftsmoe/data_model.hpp"
#include "ftsmoe/heads_loss.hpp"
#include "ftsmoe/model.hpp"

namespace ftsmoe {

struct TrainConfig {
    std::size_t steps = 10000;
    std::size_t batch_size = 64;
    std::size_t max_seq_len = 1024;
    std::size_t warmup_steps = 1000;  // 10% of steps
    double lr = 5e-5;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double max_grad_norm = 0.0;  // 0 disables clipping
    std::uint64_t seed = 0;
    std::size_t threads = 1;     // results do not depend on this

    void validate() const;
};

/// Linear warmup 0 -> lr over warmup_steps, then cosine decay to 0 at `steps`.
double lr_at(std::size_t step, const TrainConfig& cfg);

struct OptimizerState {
    std::vector<Vector> m;
    std::vector<Vector> v;
    std::size_t step = 0;
};

struct ParamSlot {
    std::string name;
    std::span<double> value;
    std::span<const double> grad;
    bool decay = true;
};

/// Bias-corrected Adam moments with decoupled weight decay. Rejects the whole
/// step (parameters untouched) if any gradient is non-finite.
void adamw_step(std::span<const ParamSlot> slots, OptimizerState& state, double lr_t, const TrainConfig& cfg);
void adamw_step(Model& model, const ModelParams& grads, OptimizerState& state, double lr_t, const TrainConfig& cfg);

/// A packed row ready for the model: every segment z-scored on its own values.
struct TrainingRow {
    Vector values;
    std::vector<std::optional<Vector>> texts;
    std::vector<std::size_t> boundaries;
};

TrainingRow make_training_row(const PackedBatch& batch);

/// Target of a p-step head at position t: the next p values of t's own
/// segment, cut short at the segment end.
Vector target_window(std::span<const double> values, std::span<const std::size_t> boundaries, std::size_t t,
                     std::size_t p);

struct LossBreakdown {
    double loss = 0.0;
    double ar = 0.0;
    double aux = 0.0;
    std::vector<RoutingStats> layer_stats;
    std::uint64_t routing_signature = 0;  // hash of every top-K selection
};

/// Composite objective over a batch of rows. Each head j at position t
/// targets the next p_j values of its own segment; near a segment end only the
/// available prefix counts. The load-balancing term is computed per layer
/// over all batch tokens and averaged across layers. When `grads` is given it
/// receives dLoss/dparams (overwritten, same layout as the model).
LossBreakdown evaluate_loss(const Model& model, std::span<const TrainingRow> rows, const LossConfig& loss,
                            ModelParams* grads = nullptr, std::size_t threads = 1);

struct StepRecord {
    std::size_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
    double ar = 0.0;
    double aux = 0.0;
    std::size_t tokens = 0;
    std::vector<std::vector<std::size_t>> util_histogram;  // [layer][expert]
};

struct TrainingLog {
    std::vector<StepRecord> records;
    std::string to_jsonl() const;
};

TrainingLog train(Model& model, std::span<const PackedBatch> data, const TrainConfig& cfg, const LossConfig& loss);

}  // namespace ftsmoe
