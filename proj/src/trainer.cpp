#include "dfsp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "dfsp/errors.hpp"
#include "dfsp/random.hpp"

namespace dfsp {

using nlohmann::json;
using nlohmann::ordered_json;

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& c) {
    if (state.first.size() != params.size()) {
        state.first.clear();
        state.second.clear();
        for (Parameter* p : params) {
            state.first.emplace_back(p->value.rows(), p->value.cols());
            state.second.emplace_back(p->value.rows(), p->value.cols());
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        if (!p.trainable) continue;
        Matrix& m = state.first[k];
        Matrix& v = state.second[k];
        if (!p.grad.same_shape(p.value) || !m.same_shape(p.value)) {
            throw ShapeError("adam_step: gradient/moment shape mismatch for " + p.name);
        }
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p.value[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(adam.learning_rate >= 0.0) || !std::isfinite(adam.learning_rate)) {
        throw std::invalid_argument("learning_rate must be finite and >= 0");
    }
    if (!(weights.alpha >= 0.0 && weights.beta >= 0.0)) {
        throw std::invalid_argument("alpha and beta must be >= 0");
    }
    if (model.fusion_blocks < 1) throw std::invalid_argument("K must be >= 1");
    if (!(model.temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
    if (model.prompt_dim < 1 || model.feature_dim < 1 || model.image_tokens < 1 ||
        model.input_dim < 1) {
        throw std::invalid_argument("model dimensions must be >= 1");
    }
}

ordered_json to_json(const TrainConfig& c) {
    ordered_json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.adam.learning_rate;
    j["adam_beta1"] = c.adam.beta1;
    j["adam_beta2"] = c.adam.beta2;
    j["adam_epsilon"] = c.adam.epsilon;
    j["seed"] = c.seed;
    j["alpha"] = c.weights.alpha;
    j["beta"] = c.weights.beta;
    j["K"] = c.model.fusion_blocks;
    j["variant"] = to_string(c.model.variant);
    j["temperature"] = c.model.temperature;
    j["d"] = c.model.prompt_dim;
    j["d_f"] = c.model.feature_dim;
    j["p"] = c.model.prefix_length;
    j["L_v"] = c.model.image_tokens;
    j["input_dim"] = c.model.input_dim;
    j["use_dfm"] = c.model.use_dfm;
    return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("learning_rate", c.adam.learning_rate);
    get("adam_beta1", c.adam.beta1);
    get("adam_beta2", c.adam.beta2);
    get("adam_epsilon", c.adam.epsilon);
    get("seed", c.seed);
    get("alpha", c.weights.alpha);
    get("beta", c.weights.beta);
    get("K", c.model.fusion_blocks);
    if (j.contains("variant")) c.model.variant = parse_fusion_variant(j.at("variant").get<std::string>());
    get("temperature", c.model.temperature);
    get("d", c.model.prompt_dim);
    get("d_f", c.model.feature_dim);
    get("p", c.model.prefix_length);
    get("L_v", c.model.image_tokens);
    get("input_dim", c.model.input_dim);
    get("use_dfm", c.model.use_dfm);
    return c;
}

std::string to_json_line(const EpochLog& e) {
    ordered_json j;
    j["epoch"] = e.epoch;
    j["l_dfm"] = e.train.l_dfm;
    j["l_st_obj"] = e.train.l_st_obj;
    j["l_spm"] = e.train.l_spm;
    j["total"] = e.train.total;
    j["val_total"] = e.val_total;
    return j.dump();
}

// ---- checkpoints -------------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "dfsp-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

std::string checkpoint_to_string(const Checkpoint& ckpt) {
    ordered_json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["config"] = to_json(ckpt.config);
    j["states"] = ckpt.states;
    j["objects"] = ckpt.objects;
    j["split_hash"] = ckpt.split_hash;
    j["epoch"] = ckpt.epoch;
    j["val_loss"] = ckpt.val_loss;
    ordered_json params = ordered_json::array();
    DfspModel model = ckpt.model;
    for (const Parameter* p : model.all_parameters()) {
        ordered_json e;
        e["name"] = p->name;
        e["trainable"] = p->trainable;
        e["rows"] = p->value.rows();
        e["cols"] = p->value.cols();
        e["data"] = p->value.data();
        params.push_back(std::move(e));
    }
    j["parameters"] = std::move(params);
    return j.dump(1) + "\n";
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + file.string());
    out << checkpoint_to_string(ckpt);
    if (!out) throw DataError("failed writing checkpoint " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open checkpoint " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + file.string() + ": " + e.what());
    }
    try {
        if (j.at("format") != kCheckpointFormat || j.at("version") != kCheckpointVersion) {
            throw DataError("checkpoint " + file.string() + ": unsupported format/version");
        }
        Checkpoint c;
        c.config = train_config_from_json(j.at("config"));
        c.states = j.at("states").get<std::vector<std::string>>();
        c.objects = j.at("objects").get<std::vector<std::string>>();
        c.split_hash = j.at("split_hash").get<std::string>();
        c.epoch = j.at("epoch").get<std::size_t>();
        c.val_loss = j.at("val_loss").get<double>();
        c.model = DfspModel::create(c.states.size(), c.objects.size(), c.config.model, c.config.seed);

        std::vector<Parameter*> params = c.model.all_parameters();
        const json& stored = j.at("parameters");
        if (stored.size() != params.size()) {
            throw DataError("checkpoint " + file.string() + ": expected " +
                            std::to_string(params.size()) + " parameter arrays, found " +
                            std::to_string(stored.size()));
        }
        for (std::size_t k = 0; k < params.size(); ++k) {
            const json& e = stored[k];
            Parameter& p = *params[k];
            if (e.at("name") != p.name) {
                throw DataError("checkpoint " + file.string() + ": expected parameter '" + p.name +
                                "', found '" + e.at("name").get<std::string>() + "'");
            }
            Matrix value(e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>(),
                         e.at("data").get<std::vector<double>>());
            if (!value.same_shape(p.value)) {
                throw DataError("checkpoint " + file.string() + ": parameter '" + p.name +
                                "' has shape " + value.shape_str() + ", model expects " +
                                p.value.shape_str());
            }
            p.value = std::move(value);
            p.zero_grad();
        }
        return c;
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + file.string() + ": " + e.what());
    } catch (const ShapeError& e) {
        throw DataError("checkpoint " + file.string() + ": " + e.what());
    }
}

// ---- training ------------------------------------------------------------------

LossBreakdown evaluate_loss(DfspModel& model, const CompositionSpace& space,
                            const EncodedImages& images, std::span<const Pair> labels,
                            const LossWeights& weights, std::size_t batch_size) {
    if (images.size() == 0) throw DataError("evaluate_loss: no samples");
    LossBreakdown acc;
    for (std::size_t start = 0; start < images.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, images.size() - start);
        std::vector<std::size_t> rows(count);
        std::iota(rows.begin(), rows.end(), start);
        Tape tape;
        LossParts parts = model.forward_losses(tape, space, images.subset(rows), labels.subspan(start, count));
        const double w = static_cast<double>(count);
        Var total = model.objective(parts, weights);
        acc.total += w * total.value()[0];
        acc.l_spm += w * parts.l_spm.value()[0];
        if (parts.l_dfm.valid()) acc.l_dfm += w * parts.l_dfm.value()[0];
        if (parts.l_st_obj.valid()) acc.l_st_obj += w * parts.l_st_obj.value()[0];
    }
    const double inv = 1.0 / static_cast<double>(images.size());
    acc.total *= inv;
    acc.l_spm *= inv;
    acc.l_dfm *= inv;
    acc.l_st_obj *= inv;
    return acc;
}

namespace {

struct Split_ {
    EncodedImages images;
    std::vector<Pair> labels;
};

Split_ encode_split(const DfspModel& model, const Dataset& data, Split split,
                    const CompositionSpace& space, bool seen_only) {
    std::vector<std::size_t> ids;
    for (std::size_t i : data.samples.select(split)) {
        if (!seen_only || space.is_seen(data.samples.records()[i].pair)) ids.push_back(i);
    }
    Split_ out;
    if (ids.empty()) return out;
    out.images = model.encode_images(data.samples.gather(ids));
    out.labels = data.samples.labels(ids);
    return out;
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    config.validate();
    const CompositionSpace space = data.val_space(WorldMode::closed);
    if (data.samples.dim() != config.model.input_dim) {
        throw DataError("dataset feature dimension " + std::to_string(data.samples.dim()) +
                        " does not match model input_dim " + std::to_string(config.model.input_dim));
    }

    DfspModel model = DfspModel::create(space, config.model, config.seed);
    const Split_ train_set = encode_split(model, data, Split::train, space, false);
    if (train_set.labels.empty()) throw DataError("training split is empty");
    const Split_ val_set = encode_split(model, data, Split::val, space, true);
    if (val_set.labels.empty()) throw DataError("validation split has no seen-pair samples");

    std::vector<Parameter*> params = model.trainable_parameters();
    AdamState adam;
    Rng shuffle_rng = make_rng(config.seed, 0x73687566ULL);
    std::vector<std::size_t> order(train_set.labels.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochLog entry;
        entry.epoch = epoch;
        try {
            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                const std::size_t count = std::min(config.batch_size, order.size() - start);
                std::span<const std::size_t> rows(order.data() + start, count);
                std::vector<Pair> labels;
                for (std::size_t r : rows) labels.push_back(train_set.labels[r]);

                Tape tape;
                LossParts parts = model.forward_losses(tape, space, train_set.images.subset(rows), labels);
                Var total = model.objective(parts, config.weights);
                for (Parameter* p : params) p->zero_grad();
                tape.backward(total);
                adam_step(params, adam, config.adam);

                const double w = static_cast<double>(count);
                entry.train.total += w * total.value()[0];
                entry.train.l_spm += w * parts.l_spm.value()[0];
                if (parts.l_dfm.valid()) entry.train.l_dfm += w * parts.l_dfm.value()[0];
                if (parts.l_st_obj.valid()) entry.train.l_st_obj += w * parts.l_st_obj.value()[0];
            }
            const double inv = 1.0 / static_cast<double>(order.size());
            entry.train.total *= inv;
            entry.train.l_spm *= inv;
            entry.train.l_dfm *= inv;
            entry.train.l_st_obj *= inv;
            entry.val_total = evaluate_loss(model, space, val_set.images, val_set.labels,
                                            config.weights, config.batch_size)
                                  .total;
        } catch (const NumericError& e) {
            throw NumericError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
        }
        if (!std::isfinite(entry.val_total) || !std::isfinite(entry.train.total)) {
            throw NumericError("training diverged in epoch " + std::to_string(epoch));
        }
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
        if (entry.val_total < best_val) {
            best_val = entry.val_total;
            result.best.epoch = epoch;
            result.best.val_loss = entry.val_total;
            result.best.model = model;
        }
    }
    result.best.config = config;
    result.best.states = data.states;
    result.best.objects = data.objects;
    result.best.split_hash = data.split_hash();
    return result;
}

}  // namespace dfsp
