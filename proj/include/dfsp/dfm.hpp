#pragma once

// Decomposed fusion: split pair text features into per-state and
// per-object features, fuse them with image tokens through cross- and
// self-attention, recompose pair features and score them.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfsp/autodiff.hpp"
#include "dfsp/composition_space.hpp"

namespace dfsp {

enum class FusionVariant { t2i, i2t, bif };

const char* to_string(FusionVariant v);
FusionVariant parse_fusion_variant(const std::string& s);

inline bool fuses_image(FusionVariant v) { return v != FusionVariant::i2t; }
inline bool fuses_text(FusionVariant v) { return v != FusionVariant::t2i; }

struct LinearParams {
    Parameter weight;  // d_in x d_out
    Parameter bias;    // 1 x d_out
};

struct AttentionParams {
    Parameter wq, wk, wv;  // d_f x d_f each
};

struct FusionBlockParams {
    AttentionParams cross;
    AttentionParams self;
};

/// One fusion direction: a cross-modal projection of the source modality
/// followed by K cross+self attention blocks on the target modality.
struct FusionBranch {
    LinearParams project;
    std::vector<FusionBlockParams> blocks;
};

struct MlpParams {
    Parameter w1, b1, w2, b2;
};

/// Trainable DFM weights. image_branch fuses decomposed text into image
/// tokens (t2i, BiF); text_branch fuses image tokens into decomposed text
/// (i2t, BiF) and needs the recompose MLP. Size depends on d_f and K only.
struct FusionParams {
    FusionVariant variant = FusionVariant::t2i;
    std::optional<FusionBranch> image_branch;
    std::optional<FusionBranch> text_branch;
    std::optional<MlpParams> recompose;

    std::vector<Parameter*> parameters();
    std::size_t parameter_count() const;
};

FusionParams init_fusion(FusionVariant variant, std::size_t d_f, std::size_t num_blocks,
                         std::uint64_t seed);

// ---- tape bindings -----------------------------------------------------------

struct LinearVars {
    Var weight, bias;
};
struct AttentionVars {
    Var wq, wk, wv;
};
struct BlockVars {
    AttentionVars cross, self;
};
struct BranchVars {
    LinearVars project;
    std::vector<BlockVars> blocks;
};
struct FusionVars {
    FusionVariant variant = FusionVariant::t2i;
    std::optional<BranchVars> image_branch;
    std::optional<BranchVars> text_branch;
    std::optional<MlpVars> recompose;
};

FusionVars bind(Tape& tape, FusionParams& params);

// ---- operations ------------------------------------------------------------

Var linear(Var x, const LinearVars& p);

/// Rows 0..n-1: mean of f_t over seen pairs with that state.
/// Rows n..n+m-1: mean of f_t over seen pairs with that object.
Var decompose(Var f_t, const PairIndex& index, std::size_t n, std::size_t m);

/// For each (s, o): MLP(state_row[s] * object_row[o]) where state rows are
/// the first n rows of `split` and object rows the rest.
Var recompose(Var split, std::span<const Pair> pairs, std::size_t n, const MlpVars& mlp);

/// softmax(scale * (S2 Wq)(S1 Wk)^T): one row per S2 token, one column per S1 token.
Var attention_weights(Var s1, Var s2, const AttentionVars& w, double scale);

/// Fusion from S1 into S2: attention_weights(...) * (S1 Wv). Output has |S2| rows.
Var cross_attend(Var s1, Var s2, const AttentionVars& w, double scale);

inline double default_attention_scale(std::size_t d_f) {
    return 1.0 / std::sqrt(static_cast<double>(d_f));
}

struct FusionOutputs {
    std::vector<Var> image_tokens;  // per sample, L_v x d_f (image branch)
    std::vector<Var> text;          // per sample, (n+m) x d_f (text branch)
};

/// Runs K blocks per active branch. Each block cross-attends from the
/// projected source to the target, then self-attends the fused target;
/// both attention outputs are added back onto their input (residual).
/// Sources are projected once and reused by every block.
FusionOutputs fuse(Var text_plus, std::span<const Var> image_tokens, const FusionVars& vars,
                   double attention_scale);

struct ScoringInputs {
    Var pair_text;  // P x d_f unit rows from the prompt branch (t2i)
    Var image;      // B x d_f unit rows, global image features (i2t)
    std::span<const Pair> pairs;
    std::size_t num_states = 0;
    double temperature = 0.01;
};

/// B x P logits, dot products of unit vectors divided by the temperature.
///   t2i: pooled fused image . pair_text
///   i2t: image . recomposed fused text
///   BiF: pooled fused image . recomposed fused text
Var pair_scores(const FusionOutputs& fused, const ScoringInputs& in, const FusionVars& vars);

// Mean of the tokens then L2 normalization; 1 x d_f.
Var pool_tokens(Var tokens);

}  // namespace dfsp
