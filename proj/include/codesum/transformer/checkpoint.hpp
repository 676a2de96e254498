#pragma once

#include <filesystem>

#include "codesum/transformer/model.hpp"
#include "json.hpp"

namespace codesum {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes parameters, their Adam moments and step counts, the model config
/// and caller metadata. Layout: "CSUMCKPT", u32 version, config JSON, u64
/// config hash, metadata JSON, records (name, rank, u64 dims, little-endian
/// f32 values), u64 FNV-1a checksum of all preceding bytes. The file is
/// written beside the target and renamed into place. Models in verify64
/// precision are rejected, since their values do not fit binary32.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& metadata = {});

/// Config stored in a checkpoint; FormatError on a damaged file.
ModelConfig read_checkpoint_config(const std::filesystem::path& path);

/// Restores every parameter and optimizer moment into `model`, whose config
/// must hash to the stored one (ConfigError naming both hashes otherwise).
/// Returns the stored metadata.
nlohmann::json load_checkpoint(const std::filesystem::path& path, Model& model);

} // namespace codesum
