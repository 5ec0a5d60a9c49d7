#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfsp/dataio.hpp"
#include "dfsp/model.hpp"
#include "dfsp/objective.hpp"

namespace dfsp {

struct AdamConfig {
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Matrix> first;
    std::vector<Matrix> second;
    std::size_t step = 0;
};

/// One bias-corrected Adam update of every trainable parameter from its grad.
/// Increments state.step before use, so the first call runs with t = 1.
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& config);

struct TrainConfig {
    ModelConfig model;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    AdamConfig adam;
    LossWeights weights;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochLog {
    std::size_t epoch = 0;
    LossBreakdown train;
    double val_total = 0.0;
};

std::string to_json_line(const EpochLog& e);

struct Checkpoint {
    TrainConfig config;
    std::vector<std::string> states;
    std::vector<std::string> objects;
    std::string split_hash;
    std::size_t epoch = 0;
    double val_loss = 0.0;
    DfspModel model;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);
std::string checkpoint_to_string(const Checkpoint& ckpt);

struct TrainResult {
    Checkpoint best;
    std::vector<EpochLog> log;
};

/// Mean loss breakdown over the given samples, evaluated in batches.
LossBreakdown evaluate_loss(DfspModel& model, const CompositionSpace& space,
                            const EncodedImages& images, std::span<const Pair> labels,
                            const LossWeights& weights, std::size_t batch_size);

/// Adam over the prompt table and fusion weights. After every epoch the
/// loss on seen-pair validation samples is measured; the returned
/// checkpoint is the epoch with the lowest validation loss (earliest on ties).
TrainResult train(const Dataset& data, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace dfsp
