// SPDX-License-Identifier: Apache-2.0
//
// Point embedding of scalar observations and fusion with per-step text vectors.
#pragma once

#include <optional>
#include <span>

#include "ftsmoe/linalg.hpp"

namespace ftsmoe {

/// SwiGLU point embedding weights; both are D x 1 and stored as length-D vectors.
struct TimeEmbedParams {
    Vector w;
    Vector v;
};

/// Maps a d_text-wide text vector into model width. Identity (no weights)
/// when d_text == D.
struct TextProjection {
    std::size_t d_text = 0;
    std::optional<Matrix> proj;  // D x d_text

    bool is_identity() const { return !proj.has_value(); }
    std::size_t output_width() const { return proj ? proj->rows : d_text; }
};

struct FusedToken {
    Vector vector;
    bool has_text = false;
};

/// out[i] = swish(w[i] x) * (v[i] x)
Vector swiglu_embed(double x, const TimeEmbedParams& params);

/// Accumulates d(out)/d(params) and returns d(out)/dx, given upstream grad `dout`.
double swiglu_embed_backward(double x, const TimeEmbedParams& params, std::span<const double> dout,
                             TimeEmbedParams& grad);

Vector project_text(std::span<const double> raw, const TextProjection& proj);

/// Mean-pools the two modalities when text is present; passes the time
/// embedding through unchanged otherwise.
FusedToken fuse(std::span<const double> time_emb, const std::optional<Vector>& text_emb);

}  // namespace ftsmoe
