#include "dfsp/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "dfsp/errors.hpp"

namespace dfsp {

PrimitiveEmbeddings prompt_embeddings(const DfspModel& model) {
    return {model.prompts.states.value, model.prompts.objects.value};
}

PrimitiveEmbeddings load_embeddings(const std::filesystem::path& file,
                                    const std::vector<std::string>& states,
                                    const std::vector<std::string>& objects) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open embedding file " + file.string());
    std::map<std::string, std::vector<double>> rows;
    std::size_t dim = 0;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        std::istringstream ls(line);
        std::string name;
        if (!(ls >> name)) continue;
        std::vector<double> v;
        std::string tok;
        while (ls >> tok) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw DataError(file.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
            }
        }
        const std::string where = file.string() + ":" + std::to_string(lineno) + ": ";
        if (v.empty()) throw DataError(where + "no values for '" + name + "'");
        if (dim == 0) dim = v.size();
        if (v.size() != dim) {
            throw DataError(where + "expected " + std::to_string(dim) + " values, found " +
                            std::to_string(v.size()));
        }
        if (!rows.emplace(name, std::move(v)).second) throw DataError(where + "duplicate name '" + name + "'");
    }
    auto stack = [&](const std::vector<std::string>& names, const char* kind) {
        Matrix m(names.size(), dim);
        for (std::size_t i = 0; i < names.size(); ++i) {
            auto it = rows.find(names[i]);
            if (it == rows.end()) {
                throw DataError(file.string() + ": no embedding for " + kind + " '" + names[i] + "'");
            }
            std::copy(it->second.begin(), it->second.end(), m.row(i).begin());
        }
        return m;
    };
    return {stack(states, "state"), stack(objects, "object")};
}

namespace {

CompositionSpace space_for(const Dataset& data, Split split, WorldMode world) {
    return split == Split::test ? data.test_space(world) : data.val_space(world);
}

Matrix score_batched(DfspModel& model, const CompositionSpace& space, const EncodedImages& images,
                     std::span<const Pair> columns, std::size_t batch_size) {
    Matrix out(images.size(), columns.size());
    for (std::size_t start = 0; start < images.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, images.size() - start);
        std::vector<std::size_t> rows(count);
        std::iota(rows.begin(), rows.end(), start);
        const Matrix s = model.score(space, images.subset(rows), columns);
        for (std::size_t i = 0; i < count; ++i) {
            std::copy(s.row(i).begin(), s.row(i).end(), out.row(start + i).begin());
        }
    }
    return out;
}

void check_compatible(const DfspModel& model, const Dataset& data) {
    if (model.num_states != data.states.size() || model.num_objects != data.objects.size()) {
        throw DataError("model was built for " + std::to_string(model.num_states) + " states x " +
                        std::to_string(model.num_objects) + " objects, data has " +
                        std::to_string(data.states.size()) + " x " + std::to_string(data.objects.size()));
    }
    if (model.config.input_dim != data.samples.dim()) {
        throw DataError("model expects " + std::to_string(model.config.input_dim) +
                        "-dimensional features, data has " + std::to_string(data.samples.dim()));
    }
}

}  // namespace

Prediction predict(DfspModel& model, const Dataset& data, const EvalOptions& options,
                   std::optional<FeasibilityResult>* feasibility) {
    check_compatible(model, data);
    if (options.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    const CompositionSpace space = space_for(data, options.split, options.world);

    Prediction p;
    if (options.world == WorldMode::open) {
        const PrimitiveEmbeddings emb = options.embeddings ? *options.embeddings : prompt_embeddings(model);
        FeasibilityResult f = feasibility_filter(space, emb.states, emb.objects, options.threshold);
        p.columns = f.retained;
        if (feasibility) *feasibility = std::move(f);
    } else {
        p.columns = space.test_pairs();
    }

    const std::vector<std::size_t> ids = data.samples.select(options.split);
    if (ids.empty()) throw DataError(std::string("split '") + to_string(options.split) + "' has no samples");
    const EncodedImages images = model.encode_images(data.samples.gather(ids));
    p.truth = data.samples.labels(ids);
    p.scores = score_batched(model, space, images, p.columns, options.batch_size);
    p.argmax = argmax_rows(p.scores);
    return p;
}

EvalResult evaluate(DfspModel& model, const Dataset& data, const EvalOptions& options) {
    EvalResult r;
    r.prediction = predict(model, data, options, &r.feasibility);
    const CompositionSpace space = space_for(data, options.split, options.world);
    const ScoredSet set = make_scored_set(r.prediction.scores, space, r.prediction.columns, r.prediction.truth);
    r.report = bias_sweep(set);
    r.report.world = options.world;
    return r;
}

double seen_accuracy(DfspModel& model, const Dataset& data, Split split) {
    check_compatible(model, data);
    const CompositionSpace space = space_for(data, split, WorldMode::closed);
    std::vector<std::size_t> ids;
    for (std::size_t i : data.samples.select(split)) {
        if (space.is_seen(data.samples.records()[i].pair)) ids.push_back(i);
    }
    if (ids.empty()) throw DataError("no seen-pair samples to score");
    const EncodedImages images = model.encode_images(data.samples.gather(ids));
    const std::vector<Pair> truth = data.samples.labels(ids);
    const std::vector<Pair>& columns = space.seen_pairs();
    const Matrix scores = score_batched(model, space, images, columns, 256);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) ok += columns[argmax_row(scores, i)] == truth[i];
    return static_cast<double>(ok) / static_cast<double>(ids.size());
}

GradCheckReport model_grad_check(const GradCheckSetup& setup, const GradCheckOptions& options,
                                 const std::string& corrupt_group) {
    SyntheticSpec spec;
    spec.num_states = setup.num_states;
    spec.num_objects = setup.num_objects;
    spec.dim = setup.feature_dim;
    spec.samples_per_pair = 10;
    spec.seed = setup.seed;
    const SyntheticData syn = generate_synthetic(spec);
    const CompositionSpace space = syn.data.val_space();

    ModelConfig cfg = setup.model;
    cfg.prompt_dim = cfg.feature_dim = cfg.input_dim = setup.feature_dim;
    DfspModel model = DfspModel::create(space, cfg, setup.seed);

    std::vector<std::size_t> ids = syn.data.samples.select(Split::train);
    if (ids.size() > setup.batch) ids.resize(setup.batch);
    const EncodedImages images = model.encode_images(syn.data.samples.gather(ids));
    const std::vector<Pair> labels = syn.data.samples.labels(ids);

    std::vector<Parameter*> params = model.trainable_parameters();
    if (!corrupt_group.empty() &&
        std::none_of(params.begin(), params.end(), [&](Parameter* p) { return p->name == corrupt_group; })) {
        throw std::invalid_argument("unknown parameter group '" + corrupt_group + "'");
    }
    auto loss = [&](Tape& tape) {
        return model.objective(model.forward_losses(tape, space, images, labels), setup.weights);
    };
    GradientHook hook;
    if (!corrupt_group.empty()) {
        hook = [&corrupt_group](std::span<Parameter* const> ps) {
            for (Parameter* p : ps) {
                if (p->name == corrupt_group) p->grad[0] += 1.0;
            }
        };
    }
    return grad_check(loss, params, options, hook);
}

}  // namespace dfsp
