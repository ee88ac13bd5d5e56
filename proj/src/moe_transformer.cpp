// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/moe_transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ftsmoe/error.hpp"

namespace ftsmoe {

void ModelConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
    if (n_heads == 0 || d_model == 0 || d_ff == 0 || n_experts == 0 || d_expert == 0 || d_text == 0 ||
        max_seq_len == 0) {
        fail("model dimensions must all be >= 1");
    }
    if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
    if (d_head() % 2 != 0) throw Error(ErrorCode::OddHeadWidth, "rotary embedding needs an even head width");
    if (top_k < 1 || top_k > n_experts) fail("top_k must satisfy 1 <= top_k <= n_experts");
    if (horizons.empty() || horizons.front() != 1) fail("horizons must start at 1");
    for (std::size_t i = 1; i < horizons.size(); ++i) {
        if (horizons[i] <= horizons[i - 1]) fail("horizons must be strictly increasing");
    }
    if (!(rope_base > 0.0) || !(norm_eps > 0.0)) fail("rope_base and norm_eps must be positive");
}

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

void RoutingStats::merge(const RoutingStats& other) {
    if (select_counts.empty()) {
        select_counts.assign(other.select_counts.size(), 0);
        prob_sums.assign(other.prob_sums.size(), 0.0);
    }
    tokens += other.tokens;
    for (std::size_t i = 0; i < select_counts.size(); ++i) {
        select_counts[i] += other.select_counts[i];
        prob_sums[i] += other.prob_sums[i];
    }
    routed_evaluations += other.routed_evaluations;
    shared_evaluations += other.shared_evaluations;
    if (keep_log) log.insert(log.end(), other.log.begin(), other.log.end());
}

// ---- RMSNorm ------------------------------------------------------------

Vector rms_norm(std::span<const double> x, std::span<const double> gain, double eps) {
    double ss = 0.0;
    for (double v : x) ss += v * v;
    const double r = std::sqrt(ss / static_cast<double>(x.size()) + eps);
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = gain[i] * x[i] / r;
    return out;
}

void rms_norm_backward(std::span<const double> x, std::span<const double> gain, std::span<const double> dy,
                       double eps, std::span<double> dx, std::span<double> dgain) {
    const std::size_t d = x.size();
    double ss = 0.0;
    for (double v : x) ss += v * v;
    const double r = std::sqrt(ss / static_cast<double>(d) + eps);
    double proj = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        proj += gain[i] * dy[i] * x[i];
        dgain[i] += dy[i] * x[i] / r;
    }
    const double k = proj / (static_cast<double>(d) * r * r * r);
    for (std::size_t i = 0; i < d; ++i) dx[i] += gain[i] * dy[i] / r - x[i] * k;
}

// ---- rotary -------------------------------------------------------------

namespace {

double rope_theta(std::size_t j, std::size_t d, double base) {
    return std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(d));
}

void check_even(std::size_t d) {
    if (d % 2 != 0) throw Error(ErrorCode::OddHeadWidth, "rotary embedding needs an even width, got " + std::to_string(d));
}

/// cos/sin of pos * theta_j for pos in [0, n), j in [0, d/2).
struct RopeTable {
    std::size_t half = 0;
    Vector cos, sin;

    RopeTable(std::size_t n, std::size_t d, double base) : half(d / 2), cos(n * (d / 2)), sin(n * (d / 2)) {
        for (std::size_t j = 0; j < half; ++j) {
            const double theta = rope_theta(j, d, base);
            for (std::size_t p = 0; p < n; ++p) {
                const double angle = static_cast<double>(p) * theta;
                cos[p * half + j] = std::cos(angle);
                sin[p * half + j] = std::sin(angle);
            }
        }
    }

    void rotate(double* v, std::size_t pos, bool inverse) const {
        for (std::size_t j = 0; j < half; ++j) {
            const double c = cos[pos * half + j];
            const double s = inverse ? -sin[pos * half + j] : sin[pos * half + j];
            const double a = v[2 * j];
            const double b = v[2 * j + 1];
            v[2 * j] = a * c - b * s;
            v[2 * j + 1] = a * s + b * c;
        }
    }
};

void rope_impl(std::span<double> v, long pos, double base, bool inverse) {
    check_even(v.size());
    const std::size_t d = v.size();
    for (std::size_t j = 0; j < d / 2; ++j) {
        const double angle = static_cast<double>(pos) * rope_theta(j, d, base);
        const double c = std::cos(angle);
        const double s = inverse ? -std::sin(angle) : std::sin(angle);
        const double a = v[2 * j];
        const double b = v[2 * j + 1];
        v[2 * j] = a * c - b * s;
        v[2 * j + 1] = a * s + b * c;
    }
}

}  // namespace

void rope_apply(std::span<double> v, long pos, double base) { rope_impl(v, pos, base, false); }
void rope_apply_inverse(std::span<double> v, long pos, double base) { rope_impl(v, pos, base, true); }

std::pair<Vector, Vector> rope_rotate(std::span<const double> q, std::span<const double> k, long pos_q, long pos_k,
                                      double base) {
    Vector qr(q.begin(), q.end());
    Vector kr(k.begin(), k.end());
    rope_apply(qr, pos_q, base);
    rope_apply(kr, pos_k, base);
    return {std::move(qr), std::move(kr)};
}

// ---- attention ----------------------------------------------------------

std::vector<std::size_t> segment_starts(std::size_t n, std::span<const std::size_t> boundaries) {
    std::vector<std::size_t> sorted(boundaries.begin(), boundaries.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> start(n, 0);
    std::size_t b = 0;
    std::size_t current = 0;
    for (std::size_t t = 0; t < n; ++t) {
        while (b < sorted.size() && sorted[b] <= t) current = sorted[b++];
        start[t] = current;
    }
    return start;
}

Matrix causal_attention(const Matrix& x, std::span<const std::size_t> boundaries, const AttentionParams& p,
                        const ModelConfig& config, AttentionCache* cache) {
    const std::size_t n = x.rows;
    const std::size_t d = config.d_model;
    const std::size_t heads = config.n_heads;
    const std::size_t dh = config.d_head();
    check_even(dh);
    if (x.cols != d) throw Error(ErrorCode::ShapeMismatch, "attention input width differs from d_model");

    const auto seg = segment_starts(n, boundaries);
    Matrix q(n, d), k(n, d), v(n, d);
    for (std::size_t t = 0; t < n; ++t) {
        matvec(p.wq, x.row(t), q.row(t));
        matvec(p.wk, x.row(t), k.row(t));
        matvec(p.wv, x.row(t), v.row(t));
        for (std::size_t c = 0; c < d; ++c) {
            q(t, c) += p.bq[c];
            k(t, c) += p.bk[c];
            v(t, c) += p.bv[c];
        }
    }

    const RopeTable rope(n, dh, config.rope_base);
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t pos = t - seg[t];
        for (std::size_t h = 0; h < heads; ++h) {
            rope.rotate(&q(t, h * dh), pos, false);
            rope.rotate(&k(t, h * dh), pos, false);
        }
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix concat(n, d);
    if (cache) cache->probs.assign(heads * n, {});
    Vector w;
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j0 = seg[i];
            const std::size_t len = i - j0 + 1;
            w.resize(len);
            double mx = -INFINITY;
            for (std::size_t j = 0; j < len; ++j) {
                w[j] = dot({&q(i, off), dh}, {&k(j0 + j, off), dh}) * scale;
                mx = std::max(mx, w[j]);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                w[j] = std::exp(w[j] - mx);
                sum += w[j];
            }
            double* o = &concat(i, off);
            for (std::size_t j = 0; j < len; ++j) {
                w[j] /= sum;
                const double* vj = &v(j0 + j, off);
                for (std::size_t c = 0; c < dh; ++c) o[c] += w[j] * vj[c];
            }
            if (cache) cache->probs[h * n + i] = w;
        }
    }

    Matrix out(n, d);
    for (std::size_t t = 0; t < n; ++t) matvec(p.wo, concat.row(t), out.row(t));

    if (cache) {
        cache->input = x;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->concat = std::move(concat);
        cache->seg_start = seg;
    }
    return out;
}

void causal_attention_backward(const AttentionCache& cache, const AttentionParams& p, const ModelConfig& config,
                               const Matrix& dout, AttentionParams& grad, Matrix& dx) {
    const std::size_t n = cache.input.rows;
    const std::size_t d = config.d_model;
    const std::size_t heads = config.n_heads;
    const std::size_t dh = config.d_head();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix dconcat(n, d);
    for (std::size_t t = 0; t < n; ++t) {
        outer_acc(grad.wo, dout.row(t), cache.concat.row(t));
        matvec_t_acc(p.wo, dout.row(t), dconcat.row(t));
    }

    Matrix dq(n, d), dk(n, d), dv(n, d);
    Vector dp;
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j0 = cache.seg_start[i];
            const Vector& w = cache.probs[h * n + i];
            const std::size_t len = w.size();
            const double* g = &dconcat(i, off);
            dp.resize(len);
            double wdp = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                dp[j] = dot({g, dh}, {&cache.v(j0 + j, off), dh});
                wdp += w[j] * dp[j];
                double* dvj = &dv(j0 + j, off);
                for (std::size_t c = 0; c < dh; ++c) dvj[c] += w[j] * g[c];
            }
            double* dqi = &dq(i, off);
            for (std::size_t j = 0; j < len; ++j) {
                const double ds = w[j] * (dp[j] - wdp) * scale;
                if (ds == 0.0) continue;
                const double* kj = &cache.k(j0 + j, off);
                const double* qi = &cache.q(i, off);
                double* dkj = &dk(j0 + j, off);
                for (std::size_t c = 0; c < dh; ++c) {
                    dqi[c] += ds * kj[c];
                    dkj[c] += ds * qi[c];
                }
            }
        }
    }

    const RopeTable rope(n, dh, config.rope_base);
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t pos = t - cache.seg_start[t];
        for (std::size_t h = 0; h < heads; ++h) {
            rope.rotate(&dq(t, h * dh), pos, true);
            rope.rotate(&dk(t, h * dh), pos, true);
        }
    }

    for (std::size_t t = 0; t < n; ++t) {
        const auto xt = cache.input.row(t);
        outer_acc(grad.wq, dq.row(t), xt);
        outer_acc(grad.wk, dk.row(t), xt);
        outer_acc(grad.wv, dv.row(t), xt);
        axpy(1.0, dq.row(t), grad.bq);
        axpy(1.0, dk.row(t), grad.bk);
        axpy(1.0, dv.row(t), grad.bv);
        matvec_t_acc(p.wq, dq.row(t), dx.row(t));
        matvec_t_acc(p.wk, dk.row(t), dx.row(t));
        matvec_t_acc(p.wv, dv.row(t), dx.row(t));
    }
}

// ---- routing ------------------------------------------------------------

Vector router_scores(std::span<const double> x, const GateParams& gate) {
    Vector s = matvec(gate.router, x);
    const double mx = *std::max_element(s.begin(), s.end());
    double sum = 0.0;
    for (auto& v : s) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : s) v /= sum;
    return s;
}

std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(std::min(k, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

Vector topk_gate(std::span<const double> scores, std::size_t k) {
    Vector g(scores.size(), 0.0);
    for (std::size_t i : topk_indices(scores, k)) g[i] = scores[i];
    return g;
}

// ---- experts ------------------------------------------------------------

Vector ffn_forward(const FfnParams& p, std::span<const double> x, FfnCache* cache) {
    const std::size_t hidden = p.gate.rows;
    Vector hg = matvec(p.gate, x);
    Vector hu = matvec(p.up, x);
    Vector act(hidden);
    for (std::size_t i = 0; i < hidden; ++i) act[i] = swish(hg[i]) * hu[i];
    Vector y = matvec(p.down, act);
    if (cache) {
        cache->h_gate = std::move(hg);
        cache->h_up = std::move(hu);
        cache->act = std::move(act);
    }
    return y;
}

void ffn_backward(const FfnParams& p, std::span<const double> x, const FfnCache& cache, std::span<const double> dy,
                  FfnParams& grad, std::span<double> dx) {
    const std::size_t hidden = p.gate.rows;
    outer_acc(grad.down, dy, cache.act);
    Vector dact(hidden, 0.0);
    matvec_t_acc(p.down, dy, dact);
    Vector dg(hidden), du(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
        dg[i] = dact[i] * cache.h_up[i] * swish_grad(cache.h_gate[i]);
        du[i] = dact[i] * swish(cache.h_gate[i]);
    }
    outer_acc(grad.gate, dg, x);
    outer_acc(grad.up, du, x);
    matvec_t_acc(p.gate, dg, dx);
    matvec_t_acc(p.up, du, dx);
}

Vector mixture_forward(std::span<const double> x, const ExpertParams& experts, const GateParams& gate,
                       std::size_t top_k, RoutingStats& stats, MixtureCache* cache) {
    const std::size_t n_experts = gate.router.rows;
    if (stats.select_counts.size() != n_experts) {
        stats.select_counts.assign(n_experts, 0);
        stats.prob_sums.assign(n_experts, 0.0);
    }

    Vector scores = router_scores(x, gate);
    const auto selected = topk_indices(scores, top_k);
    const double shared_gate = sigmoid(dot(gate.shared_gate, x));

    FfnCache shared_cache;
    Vector shared_out = ffn_forward(experts.shared, x, cache ? &shared_cache : nullptr);
    Vector out(x.size());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = shared_gate * shared_out[c];

    std::vector<FfnCache> routed_cache(cache ? selected.size() : 0);
    std::vector<Vector> routed_out;
    for (std::size_t r = 0; r < selected.size(); ++r) {
        const std::size_t i = selected[r];
        Vector y = ffn_forward(experts.routed[i], x, cache ? &routed_cache[r] : nullptr);
        axpy(scores[i], y, out);
        if (cache) routed_out.push_back(std::move(y));
    }

    stats.tokens += 1;
    stats.shared_evaluations += 1;
    stats.routed_evaluations += selected.size();
    for (std::size_t i : selected) stats.select_counts[i] += 1;
    for (std::size_t i = 0; i < n_experts; ++i) stats.prob_sums[i] += scores[i];
    if (stats.keep_log) stats.log.push_back({selected, scores});

    if (cache) {
        cache->input.assign(x.begin(), x.end());
        cache->scores = std::move(scores);
        cache->selected = selected;
        cache->shared_gate = shared_gate;
        cache->shared = std::move(shared_cache);
        cache->shared_out = std::move(shared_out);
        cache->routed = std::move(routed_cache);
        cache->routed_out = std::move(routed_out);
    }
    return out;
}

void mixture_backward(const MixtureCache& cache, const ExpertParams& experts, const GateParams& gate,
                      std::span<const double> dout, std::span<const double> score_grad, ExpertParams& gexp,
                      GateParams& ggate, std::span<double> dx) {
    const std::size_t n_experts = gate.router.rows;
    const std::span<const double> x = cache.input;

    // shared expert and its sigmoid gate
    const double g = cache.shared_gate;
    const double dlogit = dot(dout, cache.shared_out) * g * (1.0 - g);
    axpy(dlogit, x, ggate.shared_gate);
    axpy(dlogit, gate.shared_gate, dx);
    Vector dy(dout.size());
    for (std::size_t c = 0; c < dy.size(); ++c) dy[c] = g * dout[c];
    ffn_backward(experts.shared, x, cache.shared, dy, gexp.shared, dx);

    // selected routed experts; the top-K mask is treated as constant
    Vector ds(n_experts, 0.0);
    if (!score_grad.empty()) {
        for (std::size_t i = 0; i < n_experts; ++i) ds[i] = score_grad[i];
    }
    for (std::size_t r = 0; r < cache.selected.size(); ++r) {
        const std::size_t i = cache.selected[r];
        ds[i] += dot(dout, cache.routed_out[r]);
        const double s = cache.scores[i];
        for (std::size_t c = 0; c < dy.size(); ++c) dy[c] = s * dout[c];
        ffn_backward(experts.routed[i], x, cache.routed[r], dy, gexp.routed[i], dx);
    }

    // softmax
    double sds = 0.0;
    for (std::size_t i = 0; i < n_experts; ++i) sds += cache.scores[i] * ds[i];
    Vector dz(n_experts);
    for (std::size_t i = 0; i < n_experts; ++i) dz[i] = cache.scores[i] * (ds[i] - sds);
    outer_acc(ggate.router, dz, x);
    matvec_t_acc(gate.router, dz, dx);
}

// ---- layer --------------------------------------------------------------

Matrix decoder_layer(const Matrix& x, std::span<const std::size_t> boundaries, const LayerParams& p,
                     const ModelConfig& config, RoutingStats& stats, LayerCache* cache) {
    const std::size_t n = x.rows;
    const std::size_t d = x.cols;

    Matrix norm1(n, d);
    for (std::size_t t = 0; t < n; ++t) {
        const Vector y = rms_norm(x.row(t), p.attn_norm, config.norm_eps);
        std::copy(y.begin(), y.end(), norm1.row(t).begin());
    }
    Matrix attn = causal_attention(norm1, boundaries, p.attn, config, cache ? &cache->attn : nullptr);

    Matrix resid = x;
    for (std::size_t i = 0; i < resid.data.size(); ++i) resid.data[i] += attn.data[i];

    Matrix norm2(n, d);
    Matrix out = resid;
    if (cache) cache->mix.assign(n, {});
    for (std::size_t t = 0; t < n; ++t) {
        const Vector a_bar = rms_norm(resid.row(t), p.mix_norm, config.norm_eps);
        std::copy(a_bar.begin(), a_bar.end(), norm2.row(t).begin());
        const Vector m = mixture_forward(a_bar, p.experts, p.gate, config.top_k, stats, cache ? &cache->mix[t] : nullptr);
        axpy(1.0, m, out.row(t));
    }

    if (cache) {
        cache->input = x;
        cache->norm1 = std::move(norm1);
        cache->resid = std::move(resid);
        cache->norm2 = std::move(norm2);
    }
    return out;
}

void decoder_layer_backward(const LayerCache& cache, const LayerParams& p, const ModelConfig& config,
                            const Matrix& dout, std::span<const double> score_grad, LayerParams& grad, Matrix& dx) {
    const std::size_t n = dout.rows;
    const std::size_t d = dout.cols;

    Matrix dresid = dout;
    Vector dnorm(d);
    for (std::size_t t = 0; t < n; ++t) {
        std::fill(dnorm.begin(), dnorm.end(), 0.0);
        mixture_backward(cache.mix[t], p.experts, p.gate, dout.row(t), score_grad, grad.experts, grad.gate, dnorm);
        rms_norm_backward(cache.resid.row(t), p.mix_norm, dnorm, config.norm_eps, dresid.row(t), grad.mix_norm);
    }

    Matrix dnorm1(n, d);
    causal_attention_backward(cache.attn, p.attn, config, dresid, grad.attn, dnorm1);
    for (std::size_t t = 0; t < n; ++t) {
        axpy(1.0, dresid.row(t), dx.row(t));
        rms_norm_backward(cache.input.row(t), p.attn_norm, dnorm1.row(t), config.norm_eps, dx.row(t), grad.attn_norm);
    }
}

Matrix decoder_stack(const Matrix& tokens, std::span<const std::size_t> boundaries,
                     std::span<const LayerParams> layers, const ModelConfig& config,
                     std::vector<RoutingStats>* stats, std::vector<LayerCache>* caches) {
    if (stats) {
        stats->clear();
        for (std::size_t l = 0; l < layers.size(); ++l) stats->emplace_back(config.n_experts);
    }
    if (caches) caches->assign(layers.size(), {});
    Matrix h = tokens;
    RoutingStats scratch(config.n_experts);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        RoutingStats& s = stats ? (*stats)[l] : scratch;
        h = decoder_layer(h, boundaries, layers[l], config, s, caches ? &(*caches)[l] : nullptr);
    }
    return h;
}

ParamCount count_params(const ModelConfig& c) {
    const std::size_t d = c.d_model;
    const std::size_t embed = 2 * d + (c.d_text != d ? d * c.d_text : 0);
    const std::size_t routed_one = 3 * d * c.d_expert;
    const std::size_t per_layer_dense = 2 * d                 // norm gains
                                        + 4 * d * d + 3 * d   // attention
                                        + c.n_experts * d + d // router + shared gate
                                        + 3 * d * c.d_ff;     // shared expert
    std::size_t heads = 0;
    for (std::size_t p : c.horizons) heads += p * (d + 1);

    ParamCount out;
    out.total = embed + heads + c.n_layers * (per_layer_dense + c.n_experts * routed_one);
    out.active = embed + heads + c.n_layers * (per_layer_dense + c.top_k * routed_one);
    return out;
}

}  // namespace ftsmoe
