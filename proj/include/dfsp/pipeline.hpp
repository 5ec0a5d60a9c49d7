#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfsp/dataio.hpp"
#include "dfsp/evaluator.hpp"
#include "dfsp/model.hpp"

namespace dfsp {

/// One embedding row per state and per object, used by the open-world filter.
struct PrimitiveEmbeddings {
    Matrix states;
    Matrix objects;
};

// The learned state/object rows of the prompt table.
PrimitiveEmbeddings prompt_embeddings(const DfspModel& model);

/// Text file with one "name v1 v2 ..." line per primitive. Every state and
/// every object must appear exactly once; a name shared by a state and an
/// object supplies both.
PrimitiveEmbeddings load_embeddings(const std::filesystem::path& file,
                                    const std::vector<std::string>& states,
                                    const std::vector<std::string>& objects);

struct Prediction {
    std::vector<Pair> columns;
    Matrix scores;                     // samples x columns
    std::vector<std::size_t> argmax;  // column index per sample
    std::vector<Pair> truth;
};

struct EvalOptions {
    Split split = Split::test;
    WorldMode world = WorldMode::closed;
    double threshold = 0.4;
    std::optional<PrimitiveEmbeddings> embeddings;  // defaults to prompt rows
    std::size_t batch_size = 256;
};

struct EvalResult {
    MetricsReport report;
    Prediction prediction;
    std::optional<FeasibilityResult> feasibility;  // open world only
};

/// Scores every sample of the split against the candidate columns: the
/// split's seen and unseen pairs in the closed world, the feasible subset of
/// all state-object pairs in the open world.
Prediction predict(DfspModel& model, const Dataset& data, const EvalOptions& options,
                   std::optional<FeasibilityResult>* feasibility = nullptr);

EvalResult evaluate(DfspModel& model, const Dataset& data, const EvalOptions& options);

/// Fraction of samples of `split` (seen pairs only) whose argmax over the
/// seen pairs is the true pair.
double seen_accuracy(DfspModel& model, const Dataset& data, Split split);

/// Desk-scale setup for checking gradients of the full training objective.
struct GradCheckSetup {
    std::size_t num_states = 3;
    std::size_t num_objects = 3;
    std::size_t feature_dim = 8;  // also used for d and the raw input width
    std::size_t batch = 6;
    ModelConfig model;            // dims above override the model's
    LossWeights weights;
    std::uint64_t seed = 0;
};

/// Gradient check of the objective w.r.t. every trainable parameter on a
/// small synthetic batch. A non-empty `corrupt_group` adds 1 to the first
/// analytic gradient entry of that parameter (negative-test fixture).
GradCheckReport model_grad_check(const GradCheckSetup& setup, const GradCheckOptions& options = {},
                                 const std::string& corrupt_group = "");

}  // namespace dfsp
