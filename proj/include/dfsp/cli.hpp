#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfsp/dataio.hpp"
#include "dfsp/trainer.hpp"

namespace dfsp {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

/// Everything a run needs: training config plus data source, evaluation
/// world and output location. Exactly one of `synthetic` / `data_dir` is set.
struct RunConfig {
    TrainConfig train;
    std::optional<SyntheticSpec> synthetic;
    std::optional<std::filesystem::path> data_dir;
    WorldMode world = WorldMode::closed;
    double threshold = 0.4;
    std::optional<std::filesystem::path> embeddings;
    std::filesystem::path output;

    void validate() const;
    Dataset load_data() const;
};

nlohmann::ordered_json to_json(const RunConfig& c);
// Keys absent from `j` keep the value in `base`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

/// $DFSP_OUTPUT_ROOT/<command>, or runs/<command> when the variable is unset.
std::filesystem::path default_output_dir(const std::string& command);

/// Entry point behind the `dfsp` binary. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dfsp
