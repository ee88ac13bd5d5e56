// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/embedding.hpp"

#include "ftsmoe/error.hpp"

namespace ftsmoe {

Vector swiglu_embed(double x, const TimeEmbedParams& params) {
    Vector out(params.w.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = swish(params.w[i] * x) * (params.v[i] * x);
    return out;
}

double swiglu_embed_backward(double x, const TimeEmbedParams& params, std::span<const double> dout,
                             TimeEmbedParams& grad) {
    double dx = 0.0;
    for (std::size_t i = 0; i < dout.size(); ++i) {
        const double z = params.w[i] * x;
        const double u = params.v[i] * x;
        const double sw = swish(z);
        const double dz = dout[i] * swish_grad(z) * u;
        const double du = dout[i] * sw;
        grad.w[i] += dz * x;
        grad.v[i] += du * x;
        dx += dz * params.w[i] + du * params.v[i];
    }
    return dx;
}

Vector project_text(std::span<const double> raw, const TextProjection& proj) {
    if (raw.size() != proj.d_text) {
        throw Error(ErrorCode::WidthMismatch, "text vector width " + std::to_string(raw.size()) +
                                                  " does not match projection width " + std::to_string(proj.d_text));
    }
    if (proj.is_identity()) return Vector(raw.begin(), raw.end());
    return matvec(*proj.proj, raw);
}

FusedToken fuse(std::span<const double> time_emb, const std::optional<Vector>& text_emb) {
    FusedToken tok;
    if (!text_emb) {
        tok.vector.assign(time_emb.begin(), time_emb.end());
        return tok;
    }
    if (text_emb->size() != time_emb.size()) {
        throw Error(ErrorCode::WidthMismatch, "text and time embeddings differ in width");
    }
    tok.has_text = true;
    tok.vector.resize(time_emb.size());
    for (std::size_t i = 0; i < time_emb.size(); ++i) tok.vector[i] = 0.5 * (time_emb[i] + (*text_emb)[i]);
    return tok;
}

}  // namespace ftsmoe
