// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <random>
#include <thread>

#include <json.hpp>

#include "ftsmoe/error.hpp"

namespace ftsmoe {

void TrainConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
    if (batch_size == 0) fail("batch_size must be >= 1");
    if (max_seq_len == 0) fail("max_seq_len must be >= 1");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) fail("betas must lie in (0, 1)");
    if (warmup_steps > steps) fail("warmup_steps must not exceed steps");
    if (!(lr >= 0.0) || !(weight_decay >= 0.0) || !(eps > 0.0)) fail("lr, weight_decay and eps out of range");
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
        return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    }
    if (cfg.steps <= cfg.warmup_steps) return cfg.lr;
    const double span = static_cast<double>(cfg.steps - cfg.warmup_steps);
    const double progress = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / span);
    return 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_step(std::span<const ParamSlot> slots, OptimizerState& state, double lr_t, const TrainConfig& cfg) {
    for (const auto& slot : slots) {
        for (double g : slot.grad) {
            if (!std::isfinite(g)) {
                throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient in tensor '" + slot.name + "'", slot.name);
            }
        }
    }
    if (state.m.size() != slots.size()) {
        state.m.clear();
        state.v.clear();
        for (const auto& slot : slots) {
            state.m.emplace_back(slot.value.size(), 0.0);
            state.v.emplace_back(slot.value.size(), 0.0);
        }
    }

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t s = 0; s < slots.size(); ++s) {
        const auto& slot = slots[s];
        auto& m = state.m[s];
        auto& v = state.v[s];
        const double shrink = slot.decay ? lr_t * cfg.weight_decay : 0.0;
        for (std::size_t i = 0; i < slot.value.size(); ++i) {
            const double g = slot.grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            double& p = slot.value[i];
            p -= shrink * p;
            p -= lr_t * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

void adamw_step(Model& model, const ModelParams& grads, OptimizerState& state, double lr_t, const TrainConfig& cfg) {
    auto values = tensors(model.params);
    const auto g = tensors(grads);
    std::vector<ParamSlot> slots;
    slots.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        slots.push_back({values[i].name, values[i].values, g[i].values, values[i].decay});
    }
    adamw_step(slots, state, lr_t, cfg);
}

TrainingRow make_training_row(const PackedBatch& batch) {
    TrainingRow row;
    const std::size_t n = batch.tokens.size();
    row.values.resize(n);
    row.texts.resize(n);
    row.boundaries = batch.boundaries;
    if (row.boundaries.empty() || row.boundaries.front() != 0) row.boundaries.insert(row.boundaries.begin(), 0);
    std::sort(row.boundaries.begin(), row.boundaries.end());
    row.boundaries.erase(std::unique(row.boundaries.begin(), row.boundaries.end()), row.boundaries.end());

    for (std::size_t b = 0; b < row.boundaries.size(); ++b) {
        const std::size_t start = row.boundaries[b];
        const std::size_t end = b + 1 < row.boundaries.size() ? row.boundaries[b + 1] : n;
        Vector raw;
        raw.reserve(end - start);
        for (std::size_t t = start; t < end; ++t) raw.push_back(batch.tokens[t].value);
        const auto norm = normalize_context(raw);
        std::copy(norm.values.begin(), norm.values.end(), row.values.begin() + static_cast<std::ptrdiff_t>(start));
    }
    for (std::size_t t = 0; t < n; ++t) row.texts[t] = batch.tokens[t].text;
    return row;
}

Vector target_window(std::span<const double> values, std::span<const std::size_t> boundaries, std::size_t t,
                     std::size_t p) {
    const auto start = segment_starts(values.size(), boundaries);
    Vector out;
    for (std::size_t i = t + 1; i <= t + p && i < values.size() && start[i] == start[t]; ++i) out.push_back(values[i]);
    return out;
}

namespace {

struct RowPass {
    std::vector<LayerCache> caches;
    Matrix hidden;
    std::vector<std::vector<Vector>> preds;  // [head][t]
    std::vector<RoutingStats> stats;
    Vector ar_sum;
    std::vector<std::size_t> ar_count;
    std::uint64_t signature = 1469598103934665603ULL;
};

std::vector<std::size_t> segment_ends(std::size_t n, std::span<const std::size_t> boundaries) {
    const auto start = segment_starts(n, boundaries);
    std::vector<std::size_t> end(n, n);
    for (std::size_t t = n; t-- > 0;) {
        end[t] = t + 1 < n && start[t + 1] == start[t] ? end[t + 1] : t + 1;
    }
    return end;
}

RowPass forward_row(const Model& model, const TrainingRow& row, double delta) {
    const auto& cfg = model.config;
    const std::size_t n = row.values.size();
    RowPass pass;
    const Matrix tokens = embed_tokens(model, row.values, row.texts);
    pass.hidden = decoder_stack(tokens, row.boundaries, model.params.layers, cfg, &pass.stats, &pass.caches);

    for (const auto& layer : pass.caches) {
        for (const auto& mix : layer.mix) {
            for (std::size_t i : mix.selected) {
                pass.signature ^= i + 1;
                pass.signature *= 1099511628211ULL;
            }
        }
    }

    const std::size_t n_heads = model.params.heads.size();
    const auto end = segment_ends(n, row.boundaries);
    pass.preds.assign(n_heads, {});
    pass.ar_sum.assign(n_heads, 0.0);
    pass.ar_count.assign(n_heads, 0);
    for (std::size_t j = 0; j < n_heads; ++j) {
        const std::size_t p = model.params.heads.heads[j].horizon;
        pass.preds[j].resize(n);
        for (std::size_t t = 0; t < n; ++t) {
            pass.preds[j][t] = head_forward(pass.hidden.row(t), model.params.heads, j);
            const std::size_t avail = std::min(p, end[t] - t - 1);
            for (std::size_t o = 0; o < avail; ++o) pass.ar_sum[j] += huber(row.values[t + 1 + o], pass.preds[j][t][o], delta);
            pass.ar_count[j] += avail;
        }
    }
    return pass;
}

void backward_row(const Model& model, const TrainingRow& row, const RowPass& pass, std::span<const double> head_scale,
                  std::span<const Vector> score_grad, double delta, ModelParams& grad) {
    const auto& cfg = model.config;
    const std::size_t n = row.values.size();
    const std::size_t d = cfg.d_model;
    const auto end = segment_ends(n, row.boundaries);

    Matrix dh(n, d);
    Vector dpred;
    for (std::size_t j = 0; j < model.params.heads.size(); ++j) {
        if (head_scale[j] == 0.0) continue;
        const HeadParams& head = model.params.heads.heads[j];
        HeadParams& ghead = grad.heads.heads[j];
        for (std::size_t t = 0; t < n; ++t) {
            const std::size_t avail = std::min(head.horizon, end[t] - t - 1);
            if (avail == 0) continue;
            dpred.assign(head.horizon, 0.0);
            for (std::size_t o = 0; o < avail; ++o) {
                dpred[o] = head_scale[j] * huber_grad(row.values[t + 1 + o], pass.preds[j][t][o], delta);
            }
            outer_acc(ghead.proj, dpred, pass.hidden.row(t));
            axpy(1.0, dpred, ghead.bias);
            matvec_t_acc(head.proj, dpred, dh.row(t));
        }
    }

    for (std::size_t l = cfg.n_layers; l-- > 0;) {
        Matrix dprev(n, d);
        decoder_layer_backward(pass.caches[l], model.params.layers[l], cfg, dh, score_grad[l], grad.layers[l], dprev);
        dh = std::move(dprev);
    }

    Vector scaled(d);
    for (std::size_t t = 0; t < n; ++t) {
        const bool has_text = !row.texts.empty() && row.texts[t].has_value();
        const double c = has_text ? 0.5 : 1.0;
        for (std::size_t k = 0; k < d; ++k) scaled[k] = c * dh(t, k);
        swiglu_embed_backward(row.values[t], model.params.time, scaled, grad.time);
        if (has_text && grad.text.proj) outer_acc(*grad.text.proj, scaled, *row.texts[t]);
    }
}

void add_into(ModelParams& acc, const ModelParams& g) {
    auto a = tensors(acc);
    const auto b = tensors(g);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t k = 0; k < a[i].values.size(); ++k) a[i].values[k] += b[i].values[k];
    }
}

/// Runs `fn(i)` for i in [0, count) in waves of `threads`; exceptions propagate.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    for (std::size_t base = 0; base < count; base += threads) {
        std::vector<std::thread> pool;
        for (std::size_t i = base; i < std::min(count, base + threads); ++i) {
            pool.emplace_back([&, i] {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

LossBreakdown evaluate_loss(const Model& model, std::span<const TrainingRow> rows, const LossConfig& loss,
                            ModelParams* grads, std::size_t threads) {
    const auto& cfg = model.config;
    const std::size_t n_heads = model.params.heads.size();
    std::vector<RowPass> passes(rows.size());
    parallel_for(rows.size(), threads, [&](std::size_t r) { passes[r] = forward_row(model, rows[r], loss.delta); });

    LossBreakdown out;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) out.layer_stats.emplace_back(cfg.n_experts);
    Vector ar_sum(n_heads, 0.0);
    std::vector<std::size_t> ar_count(n_heads, 0);
    out.routing_signature = 1469598103934665603ULL;
    for (const auto& pass : passes) {
        for (std::size_t l = 0; l < cfg.n_layers; ++l) out.layer_stats[l].merge(pass.stats[l]);
        for (std::size_t j = 0; j < n_heads; ++j) {
            ar_sum[j] += pass.ar_sum[j];
            ar_count[j] += pass.ar_count[j];
        }
        out.routing_signature = (out.routing_signature ^ pass.signature) * 1099511628211ULL;
    }

    std::size_t used_heads = 0;
    for (std::size_t j = 0; j < n_heads; ++j) {
        if (ar_count[j] == 0) continue;
        out.ar += ar_sum[j] / static_cast<double>(ar_count[j]);
        ++used_heads;
    }
    if (used_heads > 0) out.ar /= static_cast<double>(used_heads);

    if (cfg.n_layers > 0 && out.layer_stats.front().tokens > 0) {
        for (const auto& s : out.layer_stats) out.aux += aux_loss(s, cfg.n_experts, cfg.top_k);
        out.aux /= static_cast<double>(cfg.n_layers);
    }
    out.loss = composite_loss(out.ar, out.aux, loss.alpha);

    if (!grads) return out;

    // dL/d pred = huber' / (count_j * heads used); dL/ds_{i,t} = alpha/L * N f_i / T per layer.
    Vector head_scale(n_heads, 0.0);
    for (std::size_t j = 0; j < n_heads; ++j) {
        if (ar_count[j] > 0) head_scale[j] = 1.0 / (static_cast<double>(ar_count[j]) * static_cast<double>(used_heads));
    }
    std::vector<Vector> score_grad(cfg.n_layers);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const auto& s = out.layer_stats[l];
        if (loss.alpha == 0.0 || s.tokens == 0) continue;
        const double t = static_cast<double>(s.tokens);
        score_grad[l].resize(cfg.n_experts);
        for (std::size_t i = 0; i < cfg.n_experts; ++i) {
            const double f = static_cast<double>(s.select_counts[i]) / (static_cast<double>(cfg.top_k) * t);
            score_grad[l][i] = loss.alpha / static_cast<double>(cfg.n_layers) * static_cast<double>(cfg.n_experts) * f / t;
        }
    }

    *grads = zeros_like(model.params);
    const std::size_t wave = std::max<std::size_t>(1, threads);
    std::vector<ModelParams> partial(std::min(wave, std::max<std::size_t>(rows.size(), 1)), zeros_like(model.params));
    for (std::size_t base = 0; base < rows.size(); base += wave) {
        const std::size_t count = std::min(wave, rows.size() - base);
        parallel_for(count, wave, [&](std::size_t k) {
            auto& g = partial[k];
            for (auto& t : tensors(g)) std::fill(t.values.begin(), t.values.end(), 0.0);
            backward_row(model, rows[base + k], passes[base + k], head_scale, score_grad, loss.delta, g);
        });
        // fixed row order keeps the sum independent of the thread count
        for (std::size_t k = 0; k < count; ++k) add_into(*grads, partial[k]);
        for (std::size_t k = 0; k < count; ++k) passes[base + k] = RowPass{};
    }
    return out;
}

std::string TrainingLog::to_jsonl() const {
    std::string out;
    for (const auto& r : records) {
        nlohmann::json j;
        j["step"] = r.step;
        j["lr"] = r.lr;
        j["loss"] = r.loss;
        j["ar"] = r.ar;
        j["aux"] = r.aux;
        j["tokens"] = r.tokens;
        j["util_histogram"] = r.util_histogram;
        out += j.dump();
        out += '\n';
    }
    return out;
}

TrainingLog train(Model& model, std::span<const PackedBatch> data, const TrainConfig& cfg, const LossConfig& loss) {
    TrainingLog log;
    if (cfg.steps == 0) return log;
    cfg.validate();
    if (data.empty()) throw Error(ErrorCode::EmptyInput, "training needs at least one packed row");

    std::vector<TrainingRow> rows;
    rows.reserve(data.size());
    for (const auto& b : data) rows.push_back(make_training_row(b));

    std::mt19937_64 rng(cfg.seed);
    OptimizerState state;
    ModelParams grads;
    std::vector<TrainingRow> batch(cfg.batch_size);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        for (auto& slot : batch) slot = rows[rng() % rows.size()];
        const LossBreakdown lb = evaluate_loss(model, batch, loss, &grads, cfg.threads);

        if (cfg.max_grad_norm > 0.0) {
            double sq = 0.0;
            for (const auto& t : tensors(std::as_const(grads))) {
                for (double g : t.values) sq += g * g;
            }
            const double norm = std::sqrt(sq);
            if (norm > cfg.max_grad_norm) {
                const double scale = cfg.max_grad_norm / norm;
                for (auto& t : tensors(grads)) {
                    for (double& g : t.values) g *= scale;
                }
            }
        }

        const double lr = lr_at(step + 1, cfg);
        adamw_step(model, grads, state, lr, cfg);

        StepRecord rec;
        rec.step = step;
        rec.lr = lr;
        rec.loss = lb.loss;
        rec.ar = lb.ar;
        rec.aux = lb.aux;
        rec.tokens = lb.layer_stats.empty() ? 0 : lb.layer_stats.front().tokens;
        for (const auto& s : lb.layer_stats) rec.util_histogram.push_back(s.select_counts);
        log.records.push_back(std::move(rec));
    }
    return log;
}

}  // namespace ftsmoe
