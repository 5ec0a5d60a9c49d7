#pragma once

#include <span>

#include "dfsp/autodiff.hpp"

namespace dfsp {

struct LossWeights {
    double alpha = 0.01;  // decomposed state/object term
    double beta = 0.1;    // prompt-branch pair term
};

struct LossBreakdown {
    double l_dfm = 0.0;
    double l_st_obj = 0.0;
    double l_spm = 0.0;
    double total = 0.0;
};

/// Pair cross-entropy of the prompt branch: logits f_v . f_t^T / temperature.
Var loss_spm(Var f_v, Var f_t, std::span<const std::size_t> labels, double temperature);

/// State cross-entropy over the n decomposed state rows plus object
/// cross-entropy over the m object rows, each batch-averaged.
Var loss_st_obj(Var f_v, Var f_s, Var f_o, std::span<const std::size_t> state_labels,
                std::span<const std::size_t> object_labels, double temperature);

/// Cross-entropy over precomputed fused pair logits.
Var loss_dfm(Var dfm_logits, std::span<const std::size_t> labels);

struct LossParts {
    Var l_dfm;
    Var l_st_obj;
    Var l_spm;
};

/// l_dfm + alpha * l_st_obj + beta * l_spm. Zero-weight terms are dropped
/// from the graph entirely, so alpha = beta = 0 is exactly the DFM loss.
Var total_loss(const LossParts& parts, const LossWeights& w);

LossBreakdown total_loss(double l_dfm, double l_st_obj, double l_spm, const LossWeights& w);

}  // namespace dfsp
