#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "segnn/autodiff.hpp"

namespace segnn {

// Checkpoint layout: magic "SEGNN1", u32 LE header length, UTF-8 JSON header,
// then each parameter's values as f64 LE in declaration order (row-major).
// The header lists every block's name and shape under "parameters".
std::vector<std::uint8_t> checkpoint_bytes(const nlohmann::json& header,
                                           std::span<const Parameter* const> params);

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                     std::span<const Parameter* const> params);

struct CheckpointData {
  nlohmann::json header;
  std::vector<Parameter> blocks;
};

CheckpointData parse_checkpoint(std::span<const std::uint8_t> bytes);
CheckpointData load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint blocks into params, matching by position, name and shape.
void restore_parameters(const CheckpointData& data, std::span<Parameter* const> params);

}  // namespace segnn
