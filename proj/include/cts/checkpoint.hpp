#pragma once

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <stdexcept>
#include <string>

#include "cts/models.hpp"

namespace cts {

inline constexpr const char* kCheckpointFormat = "cts-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Manifest {
    std::string variant;
    std::uint64_t seed = 0;
    std::string config_hash;           // SHA-256 of the canonical config JSON
    int fv_layout_version = 0;
    std::string fv_layout;             // fv_layout::describe()
    std::string training_corpus_hash;  // SHA-256 of the training split
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string config_hash(const ModelConfig& config);
Manifest manifest_of(const Model& m);

// Container: {format, version, manifest, config, payload...}. Popularity has
// no payload. Loading checks the format, version, fv layout and config hash,
// and throws CheckpointError on any mismatch.
nlohmann::json checkpoint_to_json(const Model& m);
Model checkpoint_from_json(const nlohmann::json& j);
Manifest read_manifest(const nlohmann::json& j);

void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path);

}  // namespace cts
