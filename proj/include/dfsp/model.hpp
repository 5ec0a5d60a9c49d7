#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dfsp/composition_space.hpp"
#include "dfsp/dfm.hpp"
#include "dfsp/encoder.hpp"
#include "dfsp/objective.hpp"
#include "dfsp/prompt.hpp"

namespace dfsp {

struct ModelConfig {
    std::size_t prompt_dim = 16;     // d
    std::size_t feature_dim = 16;    // d_f
    std::size_t prefix_length = 3;   // "[v1][v2][v3]"
    std::size_t image_tokens = 4;    // L_v
    std::size_t input_dim = 16;      // raw image feature width
    std::size_t fusion_blocks = 1;   // K
    FusionVariant variant = FusionVariant::t2i;
    double temperature = 0.01;
    // false: prompt branch only (no decomposition, no fusion).
    bool use_dfm = true;
};

/// Prompt table, frozen encoders and fusion weights for one composition
/// space. Only the prompt table and fusion weights are trainable.
struct DfspModel {
    ModelConfig config;
    std::size_t num_states = 0;
    std::size_t num_objects = 0;
    PromptTable prompts;
    TextEncoder text_encoder;
    ImageEncoder image_encoder;
    FusionParams fusion;

    static DfspModel create(const CompositionSpace& space, const ModelConfig& config,
                            std::uint64_t seed);
    static DfspModel create(std::size_t num_states, std::size_t num_objects,
                            const ModelConfig& config, std::uint64_t seed);

    std::vector<Parameter*> trainable_parameters();
    std::vector<const Parameter*> frozen_parameters() const;
    // Trainable then frozen, in a fixed order; used for serialization.
    std::vector<Parameter*> all_parameters();
    std::size_t trainable_count();
    std::size_t dfm_parameter_count() const { return fusion.parameter_count(); }

    EncodedImages encode_images(const Matrix& raw) const { return image_encoder.encode(raw); }

    /// Records the three loss terms for a batch whose labels are seen pairs.
    /// l_dfm and l_st_obj are left unset when the DFM is disabled.
    LossParts forward_losses(Tape& tape, const CompositionSpace& space, const EncodedImages& batch,
                             std::span<const Pair> labels);

    /// Objective actually optimized: the weighted sum, or l_spm alone when
    /// the DFM is disabled.
    Var objective(const LossParts& parts, const LossWeights& weights) const;

    /// Inference logits, one row per image and one column per pair.
    Matrix score(const CompositionSpace& space, const EncodedImages& images,
                 std::span<const Pair> pairs);
};

}  // namespace dfsp
