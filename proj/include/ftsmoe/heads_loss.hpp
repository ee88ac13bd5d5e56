// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ftsmoe/linalg.hpp"
#include "ftsmoe/moe_transformer.hpp"

namespace ftsmoe {

/// One output projection predicting `horizon` future steps from a hidden state.
struct HeadParams {
    std::size_t horizon = 1;
    Matrix proj;  // horizon x D
    Vector bias;  // horizon
};

struct MultiResHeads {
    std::vector<HeadParams> heads;

    std::size_t size() const { return heads.size(); }
    std::vector<std::size_t> horizons() const;
    /// Index of the head predicting exactly `horizon` steps; throws IndexOutOfRange.
    std::size_t index_of(std::size_t horizon) const;
};

struct LossConfig {
    double delta = 1.0;   // Huber knee, in normalised units
    double alpha = 0.02;  // load-balancing coefficient
};

Vector head_forward(std::span<const double> hidden, const MultiResHeads& heads, std::size_t j);

/// 0.5 e^2 for |e| <= delta, delta (|e| - delta/2) beyond, with e = a - a_hat.
double huber(double a, double a_hat, double delta);
/// d huber / d a_hat
double huber_grad(double a, double a_hat, double delta);

/// N * sum_i f_i r_i with f_i = count_i / (K T) and r_i = prob_sum_i / T. Throws EmptyStats when T == 0.
double aux_loss(const RoutingStats& stats, std::size_t n_experts, std::size_t top_k);

/// Per-head window lists: windows[pos] holds the (possibly truncated) target
/// window for one position. Predictions must be at least as long as targets.
struct HeadWindows {
    std::vector<Vector> windows;
};

/// Mean Huber over every (position, offset) pair within a head, then the
/// unweighted mean over heads. Heads without any target pair are skipped.
double ar_loss(std::span<const HeadWindows> truth, std::span<const HeadWindows> preds, double delta);

double composite_loss(double ar, double aux, double alpha);

}  // namespace ftsmoe
