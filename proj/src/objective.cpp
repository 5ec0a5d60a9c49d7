#include "dfsp/objective.hpp"

#include <cmath>

#include "dfsp/errors.hpp"

namespace dfsp {

namespace {

Var scaled_similarity(Var a, Var b, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    return scale(matmul(a, transpose(b)), 1.0 / temperature);
}

}  // namespace

Var loss_spm(Var f_v, Var f_t, std::span<const std::size_t> labels, double temperature) {
    return cross_entropy(scaled_similarity(f_v, f_t, temperature), labels);
}

Var loss_st_obj(Var f_v, Var f_s, Var f_o, std::span<const std::size_t> state_labels,
                std::span<const std::size_t> object_labels, double temperature) {
    return add(cross_entropy(scaled_similarity(f_v, f_s, temperature), state_labels),
               cross_entropy(scaled_similarity(f_v, f_o, temperature), object_labels));
}

Var loss_dfm(Var dfm_logits, std::span<const std::size_t> labels) {
    return cross_entropy(dfm_logits, labels);
}

Var total_loss(const LossParts& parts, const LossWeights& w) {
    if (!(w.alpha >= 0.0 && w.beta >= 0.0) || !std::isfinite(w.alpha) || !std::isfinite(w.beta)) {
        throw std::invalid_argument("loss weights must be finite and non-negative");
    }
    Var total = parts.l_dfm;
    if (w.alpha != 0.0) total = add(total, scale(parts.l_st_obj, w.alpha));
    if (w.beta != 0.0) total = add(total, scale(parts.l_spm, w.beta));
    return total;
}

LossBreakdown total_loss(double l_dfm, double l_st_obj, double l_spm, const LossWeights& w) {
    LossBreakdown b{l_dfm, l_st_obj, l_spm, l_dfm};
    if (w.alpha != 0.0) b.total += w.alpha * l_st_obj;
    if (w.beta != 0.0) b.total += w.beta * l_spm;
    return b;
}

}  // namespace dfsp
