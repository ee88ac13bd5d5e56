// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit and acceptance tests.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ftsmoe/model.hpp"
#include "ftsmoe/training.hpp"

namespace ftsmoe::testing {

inline double uniform(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline Vector random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (auto& x : v) x = uniform(rng) * scale;
    return v;
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix m(r, c);
    for (auto& x : m.data) x = uniform(rng) * scale;
    return m;
}

/// D=4, one layer, one head, two experts top-1.
inline ModelConfig tiny_config() {
    ModelConfig c;
    c.n_layers = 1;
    c.n_heads = 1;
    c.d_model = 4;
    c.d_ff = 4;
    c.n_experts = 2;
    c.top_k = 1;
    c.d_expert = 2;
    c.horizons = {1};
    c.d_text = 4;
    c.max_seq_len = 64;
    return c;
}

/// L=1, D=8, H=2, four experts top-2, three-wide text vectors.
inline ModelConfig gradcheck_config() {
    ModelConfig c;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_model = 8;
    c.d_ff = 8;
    c.n_experts = 4;
    c.top_k = 2;
    c.d_expert = 4;
    c.horizons = {1, 2};
    c.d_text = 3;
    c.max_seq_len = 64;
    return c;
}

/// Fills every tensor (biases and gains included) with random values so no
/// gradient path is trivially zero.
inline void randomize(ModelParams& p, std::mt19937_64& rng, double scale = 0.5) {
    for (auto& t : tensors(p)) {
        for (auto& x : t.values) x = uniform(rng) * scale;
    }
    for (auto& layer : p.layers) {
        for (auto& g : layer.attn_norm) g = 1.0 + 0.2 * uniform(rng);
        for (auto& g : layer.mix_norm) g = 1.0 + 0.2 * uniform(rng);
    }
}

inline TrainingRow random_row(std::mt19937_64& rng, std::size_t n, std::vector<std::size_t> boundaries,
                              std::size_t d_text, double text_rate = 0.5) {
    TrainingRow row;
    row.values = random_vector(rng, n, 1.5);
    row.boundaries = std::move(boundaries);
    row.texts.resize(n);
    for (auto& t : row.texts) {
        if (uniform(rng, 0.0, 1.0) < text_rate) t = random_vector(rng, d_text);
    }
    return row;
}

struct TensorGradError {
    std::string name;
    double rel_err = 0.0;
};

struct GradAudit {
    std::vector<TensorGradError> tensors;
    std::size_t resamples = 0;
    bool ok = false;  // a clean trial was found
};

/// Central differences on every parameter of the composite loss versus the
/// analytic gradient. A trial whose perturbations flip any top-K selection is
/// discarded and a fresh model/input is drawn.
inline GradAudit gradient_audit(const ModelConfig& cfg, const LossConfig& loss, std::uint64_t seed, double h = 1e-5,
                                std::size_t max_trials = 25) {
    GradAudit audit;
    for (std::size_t trial = 0; trial < max_trials; ++trial) {
        std::mt19937_64 rng(seed + 7919 * trial);
        Model model = init_model(cfg, seed + trial);
        randomize(model.params, rng);
        std::vector<TrainingRow> rows;
        rows.push_back(random_row(rng, 7, {0, 4}, cfg.d_text));
        rows.push_back(random_row(rng, 5, {0}, cfg.d_text));

        ModelParams grads;
        const LossBreakdown base = evaluate_loss(model, rows, loss, &grads);
        const auto analytic = tensors(std::as_const(grads));
        auto values = tensors(model.params);

        bool flipped = false;
        std::vector<TensorGradError> errs;
        for (std::size_t t = 0; t < values.size() && !flipped; ++t) {
            double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
            for (std::size_t i = 0; i < values[t].values.size(); ++i) {
                double& x = values[t].values[i];
                const double saved = x;
                x = saved + h;
                const LossBreakdown up = evaluate_loss(model, rows, loss);
                x = saved - h;
                const LossBreakdown down = evaluate_loss(model, rows, loss);
                x = saved;
                if (up.routing_signature != base.routing_signature || down.routing_signature != base.routing_signature) {
                    flipped = true;
                    break;
                }
                const double numeric = (up.loss - down.loss) / (2.0 * h);
                const double a = analytic[t].values[i];
                diff2 += (a - numeric) * (a - numeric);
                a2 += a * a;
                n2 += numeric * numeric;
            }
            const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
            errs.push_back({values[t].name, denom < 1e-12 ? std::sqrt(diff2) : std::sqrt(diff2) / denom});
        }
        if (flipped) {
            ++audit.resamples;
            continue;
        }
        audit.tensors = std::move(errs);
        audit.ok = true;
        return audit;
    }
    return audit;
}

inline std::filesystem::path fixture_dir() { return std::filesystem::path(FTSMOE_FIXTURE_DIR); }

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("ftsmoe_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace ftsmoe::testing
