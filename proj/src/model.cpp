#include "dfsp/model.hpp"

#include "dfsp/errors.hpp"

namespace dfsp {

DfspModel DfspModel::create(const CompositionSpace& space, const ModelConfig& config,
                            std::uint64_t seed) {
    return create(space.num_states(), space.num_objects(), config, seed);
}

DfspModel DfspModel::create(std::size_t num_states, std::size_t num_objects,
                            const ModelConfig& config, std::uint64_t seed) {
    if (!(config.temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    DfspModel model;
    model.config = config;
    model.num_states = num_states;
    model.num_objects = num_objects;
    model.prompts =
        init_table(num_states, num_objects, config.prompt_dim, config.prefix_length, seed);
    model.text_encoder = TextEncoder(config.prompt_dim, config.feature_dim, seed);
    model.image_encoder =
        ImageEncoder(config.input_dim, config.feature_dim, config.image_tokens, seed);
    if (config.use_dfm) {
        model.fusion = init_fusion(config.variant, config.feature_dim, config.fusion_blocks, seed);
    } else {
        model.fusion.variant = config.variant;
    }
    return model;
}

std::vector<Parameter*> DfspModel::trainable_parameters() {
    std::vector<Parameter*> out = prompts.parameters();
    for (Parameter* p : fusion.parameters()) out.push_back(p);
    return out;
}

std::vector<const Parameter*> DfspModel::frozen_parameters() const {
    std::vector<const Parameter*> out{&text_encoder.weight()};
    for (const Parameter& h : image_encoder.heads()) out.push_back(&h);
    return out;
}

std::vector<Parameter*> DfspModel::all_parameters() {
    std::vector<Parameter*> out = trainable_parameters();
    out.push_back(&text_encoder.weight());
    for (Parameter& h : image_encoder.heads()) out.push_back(&h);
    return out;
}

std::size_t DfspModel::trainable_count() {
    std::size_t total = 0;
    for (Parameter* p : trainable_parameters()) total += p->value.size();
    return total;
}

namespace {

void check_space(const DfspModel& m, const CompositionSpace& space) {
    if (space.num_states() != m.num_states || space.num_objects() != m.num_objects) {
        throw DataError("model built for " + std::to_string(m.num_states) + " states x " +
                        std::to_string(m.num_objects) + " objects, space has " +
                        std::to_string(space.num_states()) + " x " +
                        std::to_string(space.num_objects()));
    }
}

std::vector<Var> token_constants(Tape& tape, const EncodedImages& images) {
    std::vector<Var> out;
    out.reserve(images.size());
    for (const Matrix& t : images.tokens) out.push_back(tape.constant(t));
    return out;
}

}  // namespace

LossParts DfspModel::forward_losses(Tape& tape, const CompositionSpace& space,
                                    const EncodedImages& batch, std::span<const Pair> labels) {
    check_space(*this, space);
    if (labels.size() != batch.size()) throw ShapeError("forward: one label per image required");
    std::vector<std::size_t> pair_labels, state_labels, object_labels;
    for (Pair p : labels) {
        const std::size_t k = space.seen_position(p);
        if (k == CompositionSpace::npos) {
            throw DataError("training label (" + std::to_string(p.state) + ", " +
                            std::to_string(p.object) + ") is not a seen pair");
        }
        pair_labels.push_back(k);
        state_labels.push_back(p.state);
        object_labels.push_back(p.object);
    }

    const double tau = config.temperature;
    PromptVars pv = bind(tape, prompts);
    Var f_t = text_encoder.encode(tape, build_prompts(pv, space.seen_pairs()));
    Var f_v = tape.constant(batch.global);

    LossParts parts;
    parts.l_spm = loss_spm(f_v, f_t, pair_labels, tau);
    if (!config.use_dfm) return parts;

    const std::size_t n = num_states, m = num_objects;
    Var plus = decompose(f_t, pair_index(space), n, m);
    parts.l_st_obj = loss_st_obj(f_v, slice_rows(plus, 0, n), slice_rows(plus, n, m),
                                 state_labels, object_labels, tau);

    FusionVars fv = bind(tape, fusion);
    std::vector<Var> tokens = token_constants(tape, batch);
    FusionOutputs fused = fuse(plus, tokens, fv, default_attention_scale(config.feature_dim));
    ScoringInputs in{f_t, f_v, space.seen_pairs(), n, tau};
    parts.l_dfm = loss_dfm(pair_scores(fused, in, fv), pair_labels);
    return parts;
}

Var DfspModel::objective(const LossParts& parts, const LossWeights& weights) const {
    if (!config.use_dfm) return parts.l_spm;
    return total_loss(parts, weights);
}

Matrix DfspModel::score(const CompositionSpace& space, const EncodedImages& images,
                        std::span<const Pair> pairs) {
    check_space(*this, space);
    Tape tape;
    const double tau = config.temperature;
    PromptVars pv = bind(tape, prompts);
    Var f_t_pairs = text_encoder.encode(tape, build_prompts(pv, pairs));
    Var f_v = tape.constant(images.global);
    if (!config.use_dfm) {
        return scale(matmul(f_v, transpose(f_t_pairs)), 1.0 / tau).value();
    }
    Var f_t_seen = text_encoder.encode(tape, build_prompts(pv, space.seen_pairs()));
    Var plus = decompose(f_t_seen, pair_index(space), num_states, num_objects);
    FusionVars fv = bind(tape, fusion);
    std::vector<Var> tokens = token_constants(tape, images);
    FusionOutputs fused = fuse(plus, tokens, fv, default_attention_scale(config.feature_dim));
    ScoringInputs in{f_t_pairs, f_v, pairs, num_states, tau};
    return pair_scores(fused, in, fv).value();
}

}  // namespace dfsp
