// SPDX-License-Identifier: Apache-2.0
#include "ftsmoe/heads_loss.hpp"

#include <cmath>
#include <string>

#include "ftsmoe/error.hpp"

namespace ftsmoe {

std::vector<std::size_t> MultiResHeads::horizons() const {
    std::vector<std::size_t> out;
    out.reserve(heads.size());
    for (const auto& h : heads) out.push_back(h.horizon);
    return out;
}

std::size_t MultiResHeads::index_of(std::size_t horizon) const {
    for (std::size_t j = 0; j < heads.size(); ++j) {
        if (heads[j].horizon == horizon) return j;
    }
    throw Error(ErrorCode::IndexOutOfRange, "no head for horizon " + std::to_string(horizon));
}

Vector head_forward(std::span<const double> hidden, const MultiResHeads& heads, std::size_t j) {
    if (j >= heads.size()) {
        throw Error(ErrorCode::IndexOutOfRange,
                    "head index " + std::to_string(j) + " out of range (" + std::to_string(heads.size()) + " heads)");
    }
    const HeadParams& h = heads.heads[j];
    if (hidden.size() != h.proj.cols) throw Error(ErrorCode::ShapeMismatch, "hidden width differs from head input");
    Vector out = matvec(h.proj, hidden);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += h.bias[i];
    return out;
}

double huber(double a, double a_hat, double delta) {
    const double e = std::abs(a - a_hat);
    if (e <= delta) return 0.5 * e * e;
    return delta * (e - 0.5 * delta);
}

double huber_grad(double a, double a_hat, double delta) {
    const double e = a - a_hat;
    if (std::abs(e) <= delta) return -e;
    return e > 0.0 ? -delta : delta;
}

double aux_loss(const RoutingStats& stats, std::size_t n_experts, std::size_t top_k) {
    if (stats.tokens == 0) throw Error(ErrorCode::EmptyStats, "aux loss needs at least one routed token");
    if (stats.select_counts.size() != n_experts || stats.prob_sums.size() != n_experts) {
        throw Error(ErrorCode::ShapeMismatch, "routing stats do not match the expert count");
    }
    const double t = static_cast<double>(stats.tokens);
    double acc = 0.0;
    for (std::size_t i = 0; i < n_experts; ++i) {
        const double f = static_cast<double>(stats.select_counts[i]) / (static_cast<double>(top_k) * t);
        const double r = stats.prob_sums[i] / t;
        acc += f * r;
    }
    return static_cast<double>(n_experts) * acc;
}

double ar_loss(std::span<const HeadWindows> truth, std::span<const HeadWindows> preds, double delta) {
    if (truth.size() != preds.size()) throw Error(ErrorCode::ShapeMismatch, "truth and predictions differ in head count");
    double total = 0.0;
    std::size_t used_heads = 0;
    for (std::size_t j = 0; j < truth.size(); ++j) {
        const auto& tw = truth[j].windows;
        const auto& pw = preds[j].windows;
        if (tw.size() != pw.size()) {
            throw Error(ErrorCode::ShapeMismatch, "head " + std::to_string(j) + " has mismatched position counts");
        }
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t pos = 0; pos < tw.size(); ++pos) {
            if (pw[pos].size() < tw[pos].size()) {
                throw Error(ErrorCode::ShapeMismatch, "prediction window shorter than target window");
            }
            for (std::size_t o = 0; o < tw[pos].size(); ++o) sum += huber(tw[pos][o], pw[pos][o], delta);
            count += tw[pos].size();
        }
        if (count == 0) continue;
        total += sum / static_cast<double>(count);
        ++used_heads;
    }
    return used_heads == 0 ? 0.0 : total / static_cast<double>(used_heads);
}

double composite_loss(double ar, double aux, double alpha) { return ar + alpha * aux; }

}  // namespace ftsmoe
