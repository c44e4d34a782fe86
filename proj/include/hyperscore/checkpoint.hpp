#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "hyperscore/model.hpp"

namespace hyperscore {

nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// HSC1 checkpoint: magic, u32 length + JSON header {"model": config, "meta": ...},
// u32 tensor count, then per tensor: u32 length + name, u32 ndim, u32 dims,
// row-major little-endian f32 values. Frozen meta tokens are included.
void save_checkpoint(const HyperScoreModel<float>& model, const std::filesystem::path& path,
                     const nlohmann::ordered_json& meta = nlohmann::ordered_json::object());

struct LoadedCheckpoint {
  HyperScoreModel<float> model;
  nlohmann::json meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hyperscore
