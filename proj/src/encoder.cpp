#include "dfsp/encoder.hpp"

#include <cmath>

#include "dfsp/errors.hpp"
#include "dfsp/random.hpp"

namespace dfsp {

namespace {

void normalize_row(std::span<double> row) {
    const double n = norm(row);
    if (!(n > kNormEpsilon)) throw NumericError("image encoder produced a zero-norm feature");
    for (double& v : row) v /= n;
}

}  // namespace

TextEncoder::TextEncoder(std::size_t d, std::size_t d_f, std::uint64_t seed) {
    Rng rng = make_rng(seed, 0x74657874ULL);
    weight_ = Parameter("encoder.text.weight",
                        gaussian_matrix(d, d_f, 1.0 / std::sqrt(static_cast<double>(d)), rng),
                        /*trainable=*/false);
}

TextEncoder::TextEncoder(Matrix weight)
    : weight_("encoder.text.weight", std::move(weight), /*trainable=*/false) {}

Var TextEncoder::encode(Tape& tape, const PromptBatch& prompts) const {
    if (prompts.length() == 0) throw ShapeError("encode_text: empty prompt sequence");
    Var pooled = prompts.positions[0];
    for (std::size_t j = 1; j < prompts.length(); ++j) pooled = add(pooled, prompts.positions[j]);
    pooled = scale(pooled, 1.0 / static_cast<double>(prompts.length()));
    if (pooled.cols() != input_dim()) {
        throw ShapeError("encode_text: prompt dim " + std::to_string(pooled.cols()) +
                         " vs encoder input " + std::to_string(input_dim()));
    }
    return l2_normalize_rows(matmul(pooled, tape.constant(weight_.value)));
}

EncodedImages EncodedImages::subset(std::span<const std::size_t> rows) const {
    EncodedImages out;
    out.global = Matrix(rows.size(), global.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = global.row(rows[i]);
        std::copy(src.begin(), src.end(), out.global.row(i).begin());
        out.tokens.push_back(tokens[rows[i]]);
    }
    return out;
}

ImageEncoder::ImageEncoder(std::size_t input_dim, std::size_t d_f, std::size_t num_tokens,
                           std::uint64_t seed) {
    if (num_tokens == 0) throw std::invalid_argument("image encoder needs at least one token head");
    Rng rng = make_rng(seed, 0x696d616765ULL);
    const double sd = 1.0 / std::sqrt(static_cast<double>(input_dim));
    for (std::size_t l = 0; l < num_tokens; ++l) {
        heads_.emplace_back("encoder.image.head" + std::to_string(l),
                            gaussian_matrix(input_dim, d_f, sd, rng), /*trainable=*/false);
    }
}

ImageEncoder::ImageEncoder(std::vector<Matrix> heads) {
    for (std::size_t l = 0; l < heads.size(); ++l) {
        heads_.emplace_back("encoder.image.head" + std::to_string(l), std::move(heads[l]), false);
    }
}

EncodedImages ImageEncoder::encode(const Matrix& raw) const {
    if (raw.cols() != input_dim()) {
        throw ShapeError("encode_image: input dim " + std::to_string(raw.cols()) + " vs " +
                         std::to_string(input_dim()));
    }
    const std::size_t d_f = output_dim();
    EncodedImages out;
    out.global = Matrix(raw.rows(), d_f);
    out.tokens.reserve(raw.rows());
    std::vector<Matrix> per_head;
    per_head.reserve(heads_.size());
    for (const Parameter& h : heads_) per_head.push_back(matmul(raw, h.value));

    for (std::size_t b = 0; b < raw.rows(); ++b) {
        Matrix tokens(heads_.size(), d_f);
        auto global = out.global.row(b);
        for (std::size_t l = 0; l < heads_.size(); ++l) {
            auto tok = tokens.row(l);
            auto src = per_head[l].row(b);
            std::copy(src.begin(), src.end(), tok.begin());
            normalize_row(tok);
            for (std::size_t c = 0; c < d_f; ++c) global[c] += tok[c];
        }
        for (double& v : global) v /= static_cast<double>(heads_.size());
        normalize_row(global);
        out.tokens.push_back(std::move(tokens));
    }
    return out;
}

}  // namespace dfsp
