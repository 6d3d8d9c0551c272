#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "cts/corpus.hpp"
#include "cts/eval.hpp"
#include "cts/models.hpp"
#include "cts/simulator.hpp"

namespace cts {

/// Everything a command needs besides file paths given on the command line.
/// Keys (all optional, unknown keys rejected):
///   seed                 master seed for simulator and models
///   simulator.*          SimConfig fields
///   split.cutoff         "YYYY-MM-DD"; train strictly before, test on/after
///   model.*              ModelConfig fields (variant, window, dims, train, crf, ...)
///   eval.resamples       bootstrap resamples for significance
///   ablation.variants / contexts / columns
///   paths.train / test / out / report   defaults for the matching flags
struct RunConfig {
    std::uint64_t seed = 42;
    SimConfig simulator;
    Date split_cutoff{std::chrono::year{2018}, std::chrono::month{8}, std::chrono::day{11}};
    ModelConfig model;
    int resamples = 10000;
    std::vector<Variant> ablation_variants{Variant::CtsRnn};
    std::vector<int> ablation_contexts{1, 3, 5};
    std::vector<std::string> ablation_columns{"none", "topical", "user-profile", "all", "+cf"};
    std::string train_path, test_path, out_path, report_path;

    /// Copies the master seed into the simulator and model sections.
    void apply_seed(std::uint64_t s);
};

nlohmann::json to_json(const RunConfig& c);
nlohmann::json to_json(const SimConfig& c);

/// Throws std::invalid_argument naming the first unknown or invalid key.
RunConfig run_config_from_json(const nlohmann::json& j);
SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base = {});
RunConfig load_run_config(const std::string& path);

AblationRequest ablation_request(const RunConfig& c);

}  // namespace cts
