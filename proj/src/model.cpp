// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/model.hpp"

#include <cmath>
#include <random>

#include "ftsmoe/error.hpp"

namespace ftsmoe {

namespace {

class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    Matrix matrix(std::size_t rows, std::size_t cols) {
        Matrix m(rows, cols);
        const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
        fill(m.data, bound);
        return m;
    }

    Vector column(std::size_t rows) {
        Vector v(rows);
        fill(v, std::sqrt(6.0 / static_cast<double>(rows + 1)));
        return v;
    }

    FfnParams ffn(std::size_t d, std::size_t hidden) { return {matrix(hidden, d), matrix(hidden, d), matrix(d, hidden)}; }

private:
    void fill(std::vector<double>& values, double bound) {
        // 53-bit uniform in [-bound, bound) built from raw engine output so the
        // stream does not depend on the standard library's distribution code.
        for (auto& x : values) {
            const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
            x = (2.0 * u - 1.0) * bound;
        }
    }

    std::mt19937_64 rng_;
};

template <typename P, typename T>
std::vector<TensorView<T>> collect(P& p) {
    std::vector<TensorView<T>> out;
    const auto mat = [&](std::string name, auto& m) {
        out.push_back({std::move(name), {m.rows, m.cols}, std::span<T>(m.data), true});
    };
    const auto vec = [&](std::string name, auto& v, bool decay = false) {
        out.push_back({std::move(name), {v.size()}, std::span<T>(v), decay});
    };

    out.push_back({"embed.time.w", {p.time.w.size(), 1}, std::span<T>(p.time.w), true});
    out.push_back({"embed.time.v", {p.time.v.size(), 1}, std::span<T>(p.time.v), true});
    if (p.text.proj) mat("embed.text.proj", *p.text.proj);

    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& layer = p.layers[l];
        const std::string pre = "layers." + std::to_string(l) + ".";
        vec(pre + "attn_norm", layer.attn_norm);
        mat(pre + "attn.wq", layer.attn.wq);
        vec(pre + "attn.bq", layer.attn.bq);
        mat(pre + "attn.wk", layer.attn.wk);
        vec(pre + "attn.bk", layer.attn.bk);
        mat(pre + "attn.wv", layer.attn.wv);
        vec(pre + "attn.bv", layer.attn.bv);
        mat(pre + "attn.wo", layer.attn.wo);
        vec(pre + "mix_norm", layer.mix_norm);
        mat(pre + "gate.router", layer.gate.router);
        out.push_back({pre + "gate.shared", {1, layer.gate.shared_gate.size()}, std::span<T>(layer.gate.shared_gate), true});
        for (std::size_t e = 0; e < layer.experts.routed.size(); ++e) {
            auto& f = layer.experts.routed[e];
            const std::string ep = pre + "experts." + std::to_string(e) + ".";
            mat(ep + "gate", f.gate);
            mat(ep + "up", f.up);
            mat(ep + "down", f.down);
        }
        mat(pre + "shared_expert.gate", layer.experts.shared.gate);
        mat(pre + "shared_expert.up", layer.experts.shared.up);
        mat(pre + "shared_expert.down", layer.experts.shared.down);
    }

    for (std::size_t j = 0; j < p.heads.heads.size(); ++j) {
        auto& h = p.heads.heads[j];
        const std::string hp = "heads." + std::to_string(j) + ".";
        mat(hp + "proj", h.proj);
        vec(hp + "bias", h.bias);
    }
    return out;
}

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Initializer init(seed);
    const std::size_t d = config.d_model;

    Model model;
    model.config = config;
    auto& p = model.params;
    p.time.w = init.column(d);
    p.time.v = init.column(d);
    p.text.d_text = config.d_text;
    if (config.d_text != d) p.text.proj = init.matrix(d, config.d_text);

    p.layers.resize(config.n_layers);
    for (auto& layer : p.layers) {
        layer.attn_norm.assign(d, 1.0);
        layer.attn.wq = init.matrix(d, d);
        layer.attn.wk = init.matrix(d, d);
        layer.attn.wv = init.matrix(d, d);
        layer.attn.wo = init.matrix(d, d);
        layer.attn.bq.assign(d, 0.0);
        layer.attn.bk.assign(d, 0.0);
        layer.attn.bv.assign(d, 0.0);
        layer.mix_norm.assign(d, 1.0);
        layer.gate.router = init.matrix(config.n_experts, d);
        layer.gate.shared_gate = init.matrix(1, d).data;
        layer.experts.routed.reserve(config.n_experts);
        for (std::size_t e = 0; e < config.n_experts; ++e) layer.experts.routed.push_back(init.ffn(d, config.d_expert));
        layer.experts.shared = init.ffn(d, config.d_ff);
    }

    for (std::size_t h : config.horizons) {
        HeadParams head;
        head.horizon = h;
        head.proj = init.matrix(h, d);
        head.bias.assign(h, 0.0);
        p.heads.heads.push_back(std::move(head));
    }
    return model;
}

ModelParams zeros_like(const ModelParams& like) {
    ModelParams z = like;
    for (auto& t : tensors(z)) std::fill(t.values.begin(), t.values.end(), 0.0);
    return z;
}

std::vector<TensorView<double>> tensors(ModelParams& params) { return collect<ModelParams, double>(params); }

std::vector<TensorView<const double>> tensors(const ModelParams& params) {
    return collect<const ModelParams, const double>(params);
}

void check_shapes(const Model& model) {
    const auto& c = model.config;
    const auto& p = model.params;
    const std::size_t d = c.d_model;
    const auto fail = [](const std::string& what) { throw Error(ErrorCode::ShapeMismatch, "shape mismatch: " + what); };
    const auto mat = [&](const Matrix& m, std::size_t r, std::size_t cols, const std::string& what) {
        if (m.rows != r || m.cols != cols || m.data.size() != r * cols) fail(what);
    };
    const auto vec = [&](const Vector& v, std::size_t n, const std::string& what) {
        if (v.size() != n) fail(what);
    };

    vec(p.time.w, d, "embed.time.w");
    vec(p.time.v, d, "embed.time.v");
    if (p.text.d_text != c.d_text) fail("text projection width");
    if ((c.d_text != d) != p.text.proj.has_value()) fail("text projection presence");
    if (p.text.proj) mat(*p.text.proj, d, c.d_text, "embed.text.proj");
    if (p.layers.size() != c.n_layers) fail("layer count");
    for (const auto& layer : p.layers) {
        vec(layer.attn_norm, d, "attn_norm");
        for (const Matrix* m : {&layer.attn.wq, &layer.attn.wk, &layer.attn.wv, &layer.attn.wo}) mat(*m, d, d, "attn");
        vec(layer.attn.bq, d, "bq");
        vec(layer.attn.bk, d, "bk");
        vec(layer.attn.bv, d, "bv");
        vec(layer.mix_norm, d, "mix_norm");
        mat(layer.gate.router, c.n_experts, d, "router");
        vec(layer.gate.shared_gate, d, "shared gate");
        if (layer.experts.routed.size() != c.n_experts) fail("expert count");
        for (const auto& f : layer.experts.routed) {
            mat(f.gate, c.d_expert, d, "expert gate");
            mat(f.up, c.d_expert, d, "expert up");
            mat(f.down, d, c.d_expert, "expert down");
        }
        mat(layer.experts.shared.gate, c.d_ff, d, "shared expert gate");
        mat(layer.experts.shared.up, c.d_ff, d, "shared expert up");
        mat(layer.experts.shared.down, d, c.d_ff, "shared expert down");
    }
    if (p.heads.horizons() != c.horizons) fail("head horizons");
    for (const auto& h : p.heads.heads) {
        mat(h.proj, h.horizon, d, "head projection");
        vec(h.bias, h.horizon, "head bias");
    }
}

Matrix embed_tokens(const Model& model, std::span<const double> values, std::span<const std::optional<Vector>> texts) {
    if (!texts.empty() && texts.size() != values.size()) {
        throw Error(ErrorCode::ShapeMismatch, "text list length differs from value count");
    }
    const std::size_t d = model.config.d_model;
    Matrix out(values.size(), d);
    for (std::size_t t = 0; t < values.size(); ++t) {
        const Vector time = swiglu_embed(values[t], model.params.time);
        std::optional<Vector> text;
        if (!texts.empty() && texts[t]) text = project_text(*texts[t], model.params.text);
        const FusedToken tok = fuse(time, text);
        std::copy(tok.vector.begin(), tok.vector.end(), out.row(t).begin());
    }
    return out;
}

Matrix model_forward(const Model& model, const Matrix& tokens, std::span<const std::size_t> boundaries,
                     std::vector<RoutingStats>* stats) {
    if (tokens.cols != model.config.d_model) throw Error(ErrorCode::ShapeMismatch, "token width differs from d_model");
    if (model.params.layers.size() != model.config.n_layers) {
        throw Error(ErrorCode::ShapeMismatch, "parameter layer count differs from config");
    }
    return decoder_stack(tokens, boundaries, model.params.layers, model.config, stats);
}

}  // namespace ftsmoe
