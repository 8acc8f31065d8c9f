#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "moodcast/model.hpp"

namespace moodcast {

// Provenance stored beside the parameters so eval can rebuild the exact
// input pipeline.
struct CheckpointMeta {
    std::string provider;
    int provider_dimension = 0;
    std::uint64_t seed = 0;
    int l_months = 0;
    int m_months = 0;
    int max_len = 0;
};

// Self-describing container: magic line, JSON header (config + meta + block
// manifest), then raw doubles in parameter-view order. load(save(m))
// reproduces eval outputs bit-exactly.
void save_checkpoint(const Model<double>& model, const CheckpointMeta& meta,
                     const std::string& path);

struct LoadedCheckpoint {
    Model<double> model;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Flat JSON form of ModelConfig; unknown keys raise ValidationError.
nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& obj);

}  // namespace moodcast
