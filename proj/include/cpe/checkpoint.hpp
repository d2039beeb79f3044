#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "cpe/diff/fdcheck.hpp"

namespace cpe {

// Checkpoints are JSON documents:
//   {"format": "cpe-checkpoint", "version": 1,
//    "tensors": [{"name": ..., "shape": [...], "data": [...]}, ...],
//    "metadata": {...}}
inline constexpr int kCheckpointVersion = 1;

nlohmann::json tensors_to_json(const std::vector<diff::NamedTensor>& tensors,
                               const nlohmann::json& metadata = nlohmann::json::object());
std::vector<diff::NamedTensor> tensors_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const std::vector<diff::NamedTensor>& tensors,
                     const nlohmann::json& metadata = nlohmann::json::object());
std::vector<diff::NamedTensor> load_checkpoint(const std::filesystem::path& path,
                                               nlohmann::json* metadata = nullptr);

}  // namespace cpe
