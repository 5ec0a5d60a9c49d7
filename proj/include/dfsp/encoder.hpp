#pragma once

#include <cstdint>
#include <vector>

#include "dfsp/autodiff.hpp"
#include "dfsp/prompt.hpp"

namespace dfsp {

/// Frozen text tower: mean-pool the prompt sequence, project d -> d_f,
/// L2-normalize. Gradients pass through to the prompt embeddings only.
class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(std::size_t d, std::size_t d_f, std::uint64_t seed);
    explicit TextEncoder(Matrix weight);

    Var encode(Tape& tape, const PromptBatch& prompts) const;

    const Parameter& weight() const { return weight_; }
    Parameter& weight() { return weight_; }
    std::size_t input_dim() const { return weight_.value.rows(); }
    std::size_t output_dim() const { return weight_.value.cols(); }

private:
    Parameter weight_;
};

/// Image features after the frozen image tower.
struct EncodedImages {
    Matrix global;               // B x d_f, unit rows
    std::vector<Matrix> tokens;  // B entries of L_v x d_f, unit rows

    std::size_t size() const { return global.rows(); }
    EncodedImages subset(std::span<const std::size_t> rows) const;
};

/// Frozen image tower: L_v linear heads map a raw feature vector to L_v
/// unit-norm tokens; the global feature is the normalized token mean.
/// With L_v = 1 the single token equals the global feature.
class ImageEncoder {
public:
    ImageEncoder() = default;
    ImageEncoder(std::size_t input_dim, std::size_t d_f, std::size_t num_tokens,
                 std::uint64_t seed);
    explicit ImageEncoder(std::vector<Matrix> heads);

    // raw: B x input_dim
    EncodedImages encode(const Matrix& raw) const;

    const std::vector<Parameter>& heads() const { return heads_; }
    std::vector<Parameter>& heads() { return heads_; }
    std::size_t input_dim() const { return heads_.empty() ? 0 : heads_[0].value.rows(); }
    std::size_t output_dim() const { return heads_.empty() ? 0 : heads_[0].value.cols(); }
    std::size_t num_tokens() const { return heads_.size(); }

private:
    std::vector<Parameter> heads_;
};

}  // namespace dfsp
