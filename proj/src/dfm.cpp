#include "dfsp/dfm.hpp"

#include <cmath>

#include "dfsp/errors.hpp"
#include "dfsp/random.hpp"

namespace dfsp {

const char* to_string(FusionVariant v) {
    switch (v) {
        case FusionVariant::t2i: return "t2i";
        case FusionVariant::i2t: return "i2t";
        case FusionVariant::bif: return "BiF";
    }
    return "?";
}

FusionVariant parse_fusion_variant(const std::string& s) {
    if (s == "t2i") return FusionVariant::t2i;
    if (s == "i2t") return FusionVariant::i2t;
    if (s == "BiF" || s == "bif") return FusionVariant::bif;
    throw std::invalid_argument("unknown fusion variant '" + s + "' (expected t2i|i2t|BiF)");
}

namespace {

// Identity plus small noise: attention starts as similarity matching and
// the value path starts as a pass-through.
Matrix near_identity(std::size_t d, double noise, Rng& rng) {
    Matrix m = gaussian_matrix(d, d, noise, rng);
    for (std::size_t i = 0; i < d; ++i) m(i, i) += 1.0;
    return m;
}

FusionBranch init_branch(const std::string& prefix, const std::string& proj_name,
                         std::size_t d_f, std::size_t num_blocks, Rng& rng) {
    const double noise = 0.02;
    FusionBranch b;
    b.project.weight = Parameter(proj_name + ".weight", Matrix::identity(d_f));
    b.project.bias = Parameter(proj_name + ".bias", Matrix(1, d_f));
    for (std::size_t k = 0; k < num_blocks; ++k) {
        const std::string base = prefix + ".block" + std::to_string(k);
        auto att = [&](const std::string& kind) {
            return AttentionParams{
                Parameter(base + "." + kind + ".wq", near_identity(d_f, noise, rng)),
                Parameter(base + "." + kind + ".wk", near_identity(d_f, noise, rng)),
                Parameter(base + "." + kind + ".wv", near_identity(d_f, noise, rng))};
        };
        FusionBlockParams blk;
        blk.cross = att("cross");
        blk.self = att("self");
        b.blocks.push_back(std::move(blk));
    }
    return b;
}

void collect(FusionBranch& b, std::vector<Parameter*>& out) {
    out.push_back(&b.project.weight);
    out.push_back(&b.project.bias);
    for (auto& blk : b.blocks) {
        for (AttentionParams* a : {&blk.cross, &blk.self}) {
            out.push_back(&a->wq);
            out.push_back(&a->wk);
            out.push_back(&a->wv);
        }
    }
}

BranchVars bind_branch(Tape& tape, FusionBranch& b) {
    BranchVars v;
    v.project = {tape.leaf(b.project.weight), tape.leaf(b.project.bias)};
    for (auto& blk : b.blocks) {
        v.blocks.push_back(
            {{tape.leaf(blk.cross.wq), tape.leaf(blk.cross.wk), tape.leaf(blk.cross.wv)},
             {tape.leaf(blk.self.wq), tape.leaf(blk.self.wk), tape.leaf(blk.self.wv)}});
    }
    return v;
}

}  // namespace

FusionParams init_fusion(FusionVariant variant, std::size_t d_f, std::size_t num_blocks,
                         std::uint64_t seed) {
    if (num_blocks == 0) throw std::invalid_argument("fusion needs K >= 1 blocks");
    Rng rng = make_rng(seed, 0x667573696f6eULL);
    FusionParams p;
    p.variant = variant;
    if (fuses_image(variant)) {
        p.image_branch = init_branch("fusion.image", "fusion.txt2img", d_f, num_blocks, rng);
    }
    if (fuses_text(variant)) {
        p.text_branch = init_branch("fusion.text", "fusion.img2txt", d_f, num_blocks, rng);
        p.recompose = MlpParams{
            Parameter("fusion.recompose.w1",
                      gaussian_matrix(d_f, d_f, 1.0 / std::sqrt(static_cast<double>(d_f)), rng)),
            Parameter("fusion.recompose.b1", Matrix(1, d_f)),
            Parameter("fusion.recompose.w2", Matrix(d_f, d_f)),
            Parameter("fusion.recompose.b2", Matrix(1, d_f))};
    }
    return p;
}

std::vector<Parameter*> FusionParams::parameters() {
    std::vector<Parameter*> out;
    if (image_branch) collect(*image_branch, out);
    if (text_branch) collect(*text_branch, out);
    if (recompose) {
        out.insert(out.end(), {&recompose->w1, &recompose->b1, &recompose->w2, &recompose->b2});
    }
    return out;
}

std::size_t FusionParams::parameter_count() const {
    FusionParams copy = *this;
    std::size_t total = 0;
    for (const Parameter* p : copy.parameters()) total += p->value.size();
    return total;
}

FusionVars bind(Tape& tape, FusionParams& params) {
    FusionVars v;
    v.variant = params.variant;
    if (params.image_branch) v.image_branch = bind_branch(tape, *params.image_branch);
    if (params.text_branch) v.text_branch = bind_branch(tape, *params.text_branch);
    if (params.recompose) {
        v.recompose = MlpVars{tape.leaf(params.recompose->w1), tape.leaf(params.recompose->b1),
                              tape.leaf(params.recompose->w2), tape.leaf(params.recompose->b2)};
    }
    return v;
}

Var linear(Var x, const LinearVars& p) { return add_row(matmul(x, p.weight), p.bias); }

Var decompose(Var f_t, const PairIndex& index, std::size_t n, std::size_t m) {
    if (f_t.rows() != index.att_idx.size() || index.att_idx.size() != index.obj_idx.size()) {
        throw ShapeError("decompose: " + std::to_string(f_t.rows()) + " feature rows for " +
                         std::to_string(index.att_idx.size()) + " seen pairs");
    }
    Var parts[] = {mean_rows_by_group(f_t, index.att_idx, n),
                   mean_rows_by_group(f_t, index.obj_idx, m)};
    return concat_rows(parts);
}

Var recompose(Var split, std::span<const Pair> pairs, std::size_t n, const MlpVars& mlp) {
    const std::size_t m = split.rows() - n;
    std::vector<std::size_t> s_idx, o_idx;
    s_idx.reserve(pairs.size());
    o_idx.reserve(pairs.size());
    for (Pair p : pairs) {
        if (p.state >= n || p.object >= m) {
            throw ShapeError("recompose: pair (" + std::to_string(p.state) + ", " +
                             std::to_string(p.object) + ") out of range");
        }
        s_idx.push_back(p.state);
        o_idx.push_back(n + p.object);
    }
    return mlp_apply(mul(select_rows(split, s_idx), select_rows(split, o_idx)), mlp);
}

Var attention_weights(Var s1, Var s2, const AttentionVars& w, double scale_factor) {
    if (s1.rows() == 0 || s2.rows() == 0) throw ShapeError("cross_attend: empty token set");
    Var q = matmul(s2, w.wq);
    Var k = matmul(s1, w.wk);
    return softmax_rows(scale(matmul(q, transpose(k)), scale_factor));
}

Var cross_attend(Var s1, Var s2, const AttentionVars& w, double scale_factor) {
    return matmul(attention_weights(s1, s2, w, scale_factor), matmul(s1, w.wv));
}

FusionOutputs fuse(Var text_plus, std::span<const Var> image_tokens, const FusionVars& vars,
                   double attention_scale) {
    FusionOutputs out;
    if (vars.image_branch) {
        const BranchVars& br = *vars.image_branch;
        Var source = linear(text_plus, br.project);
        for (Var tokens : image_tokens) {
            Var v = tokens;
            for (const BlockVars& blk : br.blocks) {
                v = add(v, cross_attend(source, v, blk.cross, attention_scale));
                v = add(v, cross_attend(v, v, blk.self, attention_scale));
            }
            out.image_tokens.push_back(v);
        }
    }
    if (vars.text_branch) {
        const BranchVars& br = *vars.text_branch;
        for (Var tokens : image_tokens) {
            Var source = linear(tokens, br.project);
            Var t = text_plus;
            for (const BlockVars& blk : br.blocks) {
                t = add(t, cross_attend(source, t, blk.cross, attention_scale));
                t = add(t, cross_attend(t, t, blk.self, attention_scale));
            }
            out.text.push_back(t);
        }
    }
    return out;
}

Var pool_tokens(Var tokens) { return l2_normalize_rows(mean_rows(tokens)); }

Var pair_scores(const FusionOutputs& fused, const ScoringInputs& in, const FusionVars& vars) {
    const double inv_t = 1.0 / in.temperature;
    switch (vars.variant) {
        case FusionVariant::t2i: {
            if (fused.image_tokens.empty()) throw ShapeError("pair_scores: no fused image tokens");
            std::vector<Var> pooled;
            pooled.reserve(fused.image_tokens.size());
            for (Var tok : fused.image_tokens) pooled.push_back(pool_tokens(tok));
            Var img = concat_rows(pooled);
            if (in.pair_text.rows() != in.pairs.size()) {
                throw ShapeError("pair_scores: pair feature rows do not match pair list");
            }
            return scale(matmul(img, transpose(in.pair_text)), inv_t);
        }
        case FusionVariant::i2t:
        case FusionVariant::bif: {
            if (!vars.recompose) throw ShapeError("pair_scores: recompose MLP missing");
            const bool bif = vars.variant == FusionVariant::bif;
            if (fused.text.empty() || (bif && fused.image_tokens.size() != fused.text.size())) {
                throw ShapeError("pair_scores: fused outputs missing for variant");
            }
            std::vector<Var> rows;
            rows.reserve(fused.text.size());
            for (std::size_t b = 0; b < fused.text.size(); ++b) {
                Var pair_feats =
                    l2_normalize_rows(recompose(fused.text[b], in.pairs, in.num_states, *vars.recompose));
                const std::size_t sel[] = {b};
                Var img = bif ? pool_tokens(fused.image_tokens[b]) : select_rows(in.image, sel);
                rows.push_back(matmul(img, transpose(pair_feats)));
            }
            return scale(concat_rows(rows), inv_t);
        }
    }
    throw std::logic_error("unreachable");
}

}  // namespace dfsp
