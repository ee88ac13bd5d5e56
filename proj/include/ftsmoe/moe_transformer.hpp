// SPDX-License-Identifier: Apache-2.0
//
// Decoder stack: pre-norm causal self-attention with rotary positions (bias on
// Q/K/V only), followed by a sparse mixture of SwiGLU experts with one
// sigmoid-gated shared expert.
//
// Every forward op takes an optional cache pointer. When a cache is supplied
// the op records what its backward pass needs; the arithmetic is identical
// either way, so inference and training see bitwise-equal activations.
#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ftsmoe/linalg.hpp"

namespace ftsmoe {

struct ModelConfig {
    std::size_t n_layers = 12;
    std::size_t n_heads = 12;
    std::size_t d_model = 384;
    std::size_t d_ff = 1536;      // shared expert hidden width
    std::size_t n_experts = 8;    // routed experts per layer
    std::size_t top_k = 2;
    std::size_t d_expert = 192;   // routed expert hidden width
    std::vector<std::size_t> horizons{1, 8, 32, 64};
    double rope_base = 10000.0;
    double norm_eps = 1e-6;
    std::size_t d_text = 384;     // text vector width; == d_model means identity projection
    std::size_t max_seq_len = 1024;

    std::size_t d_head() const { return d_model / n_heads; }
    /// Throws InvalidConfig when any invariant is broken.
    void validate() const;

    /// 12 layers, 12 heads, 8 experts top-2, D=384, d_ff=1536, d_expert=192.
    static ModelConfig paper();

    bool operator==(const ModelConfig&) const = default;
};

struct AttentionParams {
    Matrix wq, wk, wv, wo;  // D x D
    Vector bq, bk, bv;      // Wo carries no bias
};

/// SwiGLU feed-forward: down (swish(gate x) * (up x)).
struct FfnParams {
    Matrix gate;  // hidden x D
    Matrix up;    // hidden x D
    Matrix down;  // D x hidden
};

struct ExpertParams {
    std::vector<FfnParams> routed;
    FfnParams shared;
};

struct GateParams {
    Matrix router;       // n_experts x D
    Vector shared_gate;  // 1 x D
};

struct LayerParams {
    Vector attn_norm;
    AttentionParams attn;
    Vector mix_norm;
    GateParams gate;
    ExpertParams experts;
};

struct TokenRoute {
    std::vector<std::size_t> selected;
    Vector scores;
};

/// Per-layer routing counters. `select_counts` sums to top_k * tokens.
struct RoutingStats {
    std::size_t tokens = 0;
    std::vector<std::size_t> select_counts;
    Vector prob_sums;
    std::size_t routed_evaluations = 0;
    std::size_t shared_evaluations = 0;
    bool keep_log = false;
    std::vector<TokenRoute> log;

    RoutingStats() = default;
    explicit RoutingStats(std::size_t n_experts) : select_counts(n_experts, 0), prob_sums(n_experts, 0.0) {}

    /// Associative merge; logs are concatenated in call order.
    void merge(const RoutingStats& other);
};

// ---- caches -------------------------------------------------------------

struct AttentionCache {
    Matrix input;
    Matrix q, k, v;  // q and k after rotation
    Matrix concat;   // per-head outputs before Wo
    std::vector<std::size_t> seg_start;
    std::vector<Vector> probs;  // [head * n + i] -> weights over keys seg_start[i]..i
};

struct FfnCache {
    Vector h_gate, h_up, act;
};

struct MixtureCache {
    Vector input;
    Vector scores;
    std::vector<std::size_t> selected;
    double shared_gate = 0.0;
    FfnCache shared;
    Vector shared_out;
    std::vector<FfnCache> routed;
    std::vector<Vector> routed_out;
};

struct LayerCache {
    Matrix input;
    Matrix norm1;
    AttentionCache attn;
    Matrix resid;
    Matrix norm2;
    std::vector<MixtureCache> mix;
};

// ---- ops ----------------------------------------------------------------

/// gain * x / sqrt(mean(x^2) + eps)
Vector rms_norm(std::span<const double> x, std::span<const double> gain, double eps = 1e-6);
void rms_norm_backward(std::span<const double> x, std::span<const double> gain, std::span<const double> dy,
                       double eps, std::span<double> dx, std::span<double> dgain);

/// Rotates consecutive pairs (2j, 2j+1) by pos * base^(-2j/d). Throws OddHeadWidth.
void rope_apply(std::span<double> v, long pos, double base);
void rope_apply_inverse(std::span<double> v, long pos, double base);
std::pair<Vector, Vector> rope_rotate(std::span<const double> q, std::span<const double> k, long pos_q, long pos_k,
                                      double base = 10000.0);

/// Segment start for every position; positions before the first boundary belong to a segment starting at 0.
std::vector<std::size_t> segment_starts(std::size_t n, std::span<const std::size_t> boundaries);

Matrix causal_attention(const Matrix& tokens, std::span<const std::size_t> boundaries, const AttentionParams& params,
                        const ModelConfig& config, AttentionCache* cache = nullptr);
/// Accumulates into `grad` and `dx` (dx must be pre-sized n x D).
void causal_attention_backward(const AttentionCache& cache, const AttentionParams& params, const ModelConfig& config,
                               const Matrix& dout, AttentionParams& grad, Matrix& dx);

/// Softmax over router logits.
Vector router_scores(std::span<const double> x, const GateParams& gate);
/// Indices of the K largest scores in ascending index order; ties go to the lower index.
std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k);
/// Scores at the top-K positions, zero elsewhere (no renormalisation).
Vector topk_gate(std::span<const double> scores, std::size_t k);

Vector ffn_forward(const FfnParams& params, std::span<const double> x, FfnCache* cache = nullptr);
void ffn_backward(const FfnParams& params, std::span<const double> x, const FfnCache& cache,
                  std::span<const double> dy, FfnParams& grad, std::span<double> dx);

/// Shared expert plus the K selected routed experts; the others are never evaluated.
Vector mixture_forward(std::span<const double> x, const ExpertParams& experts, const GateParams& gate, std::size_t top_k,
                       RoutingStats& stats, MixtureCache* cache = nullptr);
/// `score_grad` is an extra dL/ds_i added for every expert (the load-balancing term).
void mixture_backward(const MixtureCache& cache, const ExpertParams& experts, const GateParams& gate,
                      std::span<const double> dout, std::span<const double> score_grad, ExpertParams& gexp,
                      GateParams& ggate, std::span<double> dx);

Matrix decoder_layer(const Matrix& x, std::span<const std::size_t> boundaries, const LayerParams& params,
                     const ModelConfig& config, RoutingStats& stats, LayerCache* cache = nullptr);
void decoder_layer_backward(const LayerCache& cache, const LayerParams& params, const ModelConfig& config,
                            const Matrix& dout, std::span<const double> score_grad, LayerParams& grad, Matrix& dx);

/// Applies the layers in order. `stats`, when given, is resized to one entry per layer.
Matrix decoder_stack(const Matrix& tokens, std::span<const std::size_t> boundaries,
                     std::span<const LayerParams> layers, const ModelConfig& config,
                     std::vector<RoutingStats>* stats = nullptr, std::vector<LayerCache>* caches = nullptr);

struct ParamCount {
    std::size_t total = 0;
    std::size_t active = 0;
};

/// Learnable scalars stored vs touched per token (K routed experts per layer).
ParamCount count_params(const ModelConfig& config);

}  // namespace ftsmoe
